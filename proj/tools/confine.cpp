#include <filesystem>
#include <fstream>
#include <iostream>
#include <regex>

#include "CLI11.hpp"

#include "confine/confine.hpp"

namespace fs = std::filesystem;
using namespace confine;

namespace {

/// "2MiB", "100KB", "512" (bytes). KB/MB/GB are read as binary units.
std::uint64_t parse_size(const std::string& text) {
    static const std::regex re(R"(^\s*(\d+(?:\.\d+)?)\s*([kKmMgG]?)(i?[bB])?\s*$)");
    std::smatch m;
    if (!std::regex_match(text, m, re)) {
        throw CLI::ValidationError("size", "cannot parse '" + text + "'");
    }
    double v = std::stod(m[1]);
    switch (m[2].str().empty() ? ' ' : std::tolower(m[2].str()[0])) {
        case 'k':
            v *= KiB;
            break;
        case 'm':
            v *= MiB;
            break;
        case 'g':
            v *= 1024.0 * MiB;
            break;
        default:
            break;
    }
    return static_cast<std::uint64_t>(v);
}

void write_file(const fs::path& path, const std::string& content) {
    if (path.has_parent_path()) {
        fs::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error("cannot write '" + path.string() + "'");
    }
    out << content;
}

std::shared_ptr<const EnclaveIdentity> load_identity(const std::string& manifest) {
    return std::make_shared<const EnclaveIdentity>(EnclaveIdentity::create(read_file(manifest)));
}

ActivityOrgMap load_map(const std::string& path) {
    auto j = nlohmann::json::parse(read_file(path));
    return j.get<ActivityOrgMap>();
}

void write_map(const fs::path& path, const ActivityOrgMap& m) { write_file(path, nlohmann::ordered_json(m).dump(2) + "\n"); }

std::pair<BatchMode, std::size_t> parse_mode(const std::string& s) {
    if (s == "single") {
        return {BatchMode::single_batch, 0};
    }
    if (s.rfind("incremental:", 0) == 0) {
        return {BatchMode::incremental, std::stoul(s.substr(12))};
    }
    throw CLI::ValidationError("--mode", "expected single or incremental:N");
}

struct ScenarioFlags {
    ScenarioParams p;

    void add(CLI::App* app) {
        app->add_option("--cases", p.cases, "number of cases")->capture_default_str();
        app->add_option("--specialized-care-prob", p.specialized_care_prob)->capture_default_str();
        app->add_option("--x-loop", p.x_loop, "loop iterations of the specialized-care path")->capture_default_str();
        app->add_option("--orgs", p.org_count, "organizations (1-8)")->capture_default_str();
        app->add_option("--seed", p.seed)->capture_default_str();
    }
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Confidential inter-organizational process mining toolchain"};
    app.require_subcommand(1);

    std::string manifest = CONFINE_DEFAULT_MANIFEST;

    // measure / registry
    auto* measure = app.add_subcommand("measure", "print the measurement of a code manifest");
    measure->add_option("--manifest", manifest)->capture_default_str();

    std::vector<std::string> reg_manifests;
    std::string reg_out = "registry.json";
    auto* registry = app.add_subcommand("registry", "write a reference registry accepting the given manifests");
    registry->add_option("--manifest", reg_manifests)->required();
    registry->add_option("--out", reg_out)->capture_default_str();

    // provisioner
    std::string org, log_path, listen = "127.0.0.1:8080", registry_path;
    std::vector<std::string> allow;
    int retries = 3;
    auto* prov = app.add_subcommand("provisioner", "serve one organization's event log");
    prov->add_option("--org", org)->required();
    prov->add_option("--log", log_path, "CSV or XES event log")->required()->check(CLI::ExistingFile);
    prov->add_option("--listen", listen)->capture_default_str();
    prov->add_option("--registry", registry_path)->required()->check(CLI::ExistingFile);
    prov->add_option("--allow", allow, "miner ids allowed to request case references")->required();
    prov->add_option("--retries", retries)->capture_default_str();

    // miner
    std::string providers_path, seg_size_s = "2MiB", mode_s = "single", budget_s = "128MiB";
    std::string out_path = "net.json", metrics_path = "metrics.csv", dot_path;
    std::string callback_listen = "127.0.0.1:0", callback_url, miner_id = "miner1";
    double timeout_s = 30;
    bool no_compute = false;
    auto* miner = app.add_subcommand("miner", "run a secure miner session against provisioners");
    miner->add_option("--providers", providers_path, "JSON array of provisioner base URLs")
        ->required()
        ->check(CLI::ExistingFile);
    miner->add_option("--seg-size", seg_size_s)->capture_default_str();
    miner->add_option("--mode", mode_s, "single | incremental:N")->capture_default_str();
    miner->add_option("--budget", budget_s)->capture_default_str();
    miner->add_option("--out", out_path)->capture_default_str();
    miner->add_option("--dot", dot_path, "also write the net as DOT");
    miner->add_option("--metrics", metrics_path)->capture_default_str();
    miner->add_option("--callback-listen", callback_listen)->capture_default_str();
    miner->add_option("--callback-url", callback_url, "URL provisioners push to (default: from --callback-listen)");
    miner->add_option("--miner-id", miner_id)->capture_default_str();
    miner->add_option("--manifest", manifest)->capture_default_str();
    miner->add_option("--timeout", timeout_s, "seconds without progress before giving up")->capture_default_str();
    miner->add_flag("--no-compute", no_compute, "stop after acquisition");

    // gen
    ScenarioFlags gen_flags;
    std::string gen_out = "scenario";
    auto* gen = app.add_subcommand("gen", "generate the synthetic healthcare scenario log");
    gen_flags.add(gen);
    gen->add_option("--out-dir", gen_out)->capture_default_str();

    // converge
    ScenarioFlags conv_flags;
    std::string conv_log, conv_map, conv_transport = "loopback", conv_seg = "2MiB", conv_out = "converge";
    auto* conv = app.add_subcommand("converge", "compare protocol and stand-alone nets");
    conv_flags.add(conv);
    conv->add_option("--log", conv_log, "log to use instead of the generated scenario")->check(CLI::ExistingFile);
    conv->add_option("--map", conv_map, "activity -> org JSON map for --log")->check(CLI::ExistingFile);
    conv->add_option("--transport", conv_transport, "loopback | http")->capture_default_str();
    conv->add_option("--seg-size", conv_seg)->capture_default_str();
    conv->add_option("--out-dir", conv_out)->capture_default_str();
    conv->add_option("--manifest", manifest)->capture_default_str();

    // mem
    ScenarioFlags mem_flags;
    std::string preset_s, mem_out = "mem", mem_seg = "2MiB", mem_budget = "128MiB";
    auto* mem = app.add_subcommand("mem", "memory experiment presets");
    mem_flags.add(mem);
    mem->add_option("--preset", preset_s, "stage_profile | with_without_compute | segsize_sweep | capacity_sweep")
        ->required();
    mem->add_option("--seg-size", mem_seg)->capture_default_str();
    mem->add_option("--budget", mem_budget)->capture_default_str();
    mem->add_option("--out-dir", mem_out)->capture_default_str();
    mem->add_option("--manifest", manifest)->capture_default_str();

    // scale
    ScenarioFlags scale_flags;
    std::string test_s, scale_out = "scale";
    auto* scale = app.add_subcommand("scale", "scalability grid");
    scale_flags.add(scale);
    scale->add_option("--test", test_s, "events | cases | orgs")->required();
    scale->add_option("--out-dir", scale_out)->capture_default_str();
    scale->add_option("--manifest", manifest)->capture_default_str();

    // split
    std::string scheme_s, split_log, split_map, org_attr = "org:group", split_out = "split";
    auto* split = app.add_subcommand("split", "split a real log into per-organization sub-logs");
    split->add_option("--scheme", scheme_s, "sepsis | bpic | custom")->required();
    split->add_option("--log", split_log)->required()->check(CLI::ExistingFile);
    split->add_option("--map", split_map, "activity -> org JSON map (custom scheme)")->check(CLI::ExistingFile);
    split->add_option("--org-attribute", org_attr, "XES event attribute naming the department (bpic scheme)")
        ->capture_default_str();
    split->add_option("--out-dir", split_out)->capture_default_str();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*measure) {
            std::cout << crypto::base64url_encode(compute_measurement(read_file(manifest))) << '\n';
            return 0;
        }

        if (*registry) {
            ReferenceRegistry reg;
            for (const auto& m : reg_manifests) {
                reg.accepted_measurements.insert(compute_measurement(read_file(m)));
            }
            write_file(reg_out, registry_to_json(reg).dump(2) + "\n");
            return 0;
        }

        if (*prov) {
            ProvisionerConfig cfg;
            cfg.org_id = org;
            cfg.log = load_log(log_path, org);
            cfg.registry = load_registry(registry_path);
            cfg.allowed_miners = {allow.begin(), allow.end()};
            cfg.retries = retries;
            ProvisionerService service(std::move(cfg));
            http::ProvisionerServer server(service);
            auto [host, port] = http::parse_listen(listen);
            int bound = server.start(host, port);
            std::cerr << "provisioner " << org << ": " << service.config().log.case_count() << " cases on " << host
                      << ':' << bound << '\n';
            server.wait();
            return 0;
        }

        if (*miner) {
            auto urls = nlohmann::json::parse(read_file(providers_path));
            if (urls.is_object()) {
                urls = urls.at("providers");
            }
            MinerOptions opts;
            opts.miner_id = miner_id;
            opts.seg_size = parse_size(seg_size_s);
            std::tie(opts.mode, opts.batch_cases) = parse_mode(mode_s);
            if (opts.mode == BatchMode::single_batch) {
                opts.batch_cases = 100;
            }
            opts.capacity = parse_size(budget_s);
            opts.compute = !no_compute;
            opts.timeout = std::chrono::milliseconds(static_cast<long>(timeout_s * 1000));

            http::MinerCallbackServer callback;
            auto [host, port] = http::parse_listen(callback_listen);
            int bound = callback.start(host, port);
            opts.callback = callback_url.empty()
                                ? "http://" + (host == "0.0.0.0" ? std::string("127.0.0.1") : host) + ":" +
                                      std::to_string(bound)
                                : callback_url;

            std::vector<std::unique_ptr<ProvisionerLink>> links;
            for (const auto& u : urls) {
                links.push_back(std::make_unique<http::HttpProvisionerLink>(u.get<std::string>()));
            }
            MinerSession session(opts, load_identity(manifest), std::move(links));
            callback.attach(session);
            int rc = 0;
            try {
                session.run_initialization();
                session.run_acquisition();
                if (opts.compute) {
                    const auto& net = session.run_computation();
                    write_file(out_path, serialize_net_json(net));
                    if (!dot_path.empty()) {
                        write_file(dot_path, serialize_net_dot(net));
                    }
                }
                std::cerr << "miner: " << session.eligible_cases() << " cases, peak " << session.budget().peak()
                          << " bytes\n";
            } catch (const EnclaveMemoryExceeded& e) {
                std::cerr << "miner halted: " << e.what() << '\n';
                rc = 3;
            } catch (const IncompleteCasesError& e) {
                std::cerr << "miner: " << e.what() << '\n';
                rc = 4;
            }
            callback.detach();
            write_file(metrics_path, session.export_metrics());
            return rc;
        }

        if (*gen) {
            auto sc = generate_scenario_log(gen_flags.p);
            fs::path dir(gen_out);
            write_file(dir / "scenario.csv", serialize_csv(sc.log));
            write_map(dir / "mapping.json", sc.mapping);
            for (const auto& [o, sub] : partition_by_org(sc.log, sc.mapping)) {
                write_file(dir / (o + ".csv"), serialize_csv(sub));
            }
            std::cout << sc.log.case_count() << " cases, " << sc.log.event_count() << " events written to " << gen_out
                      << '\n';
            return 0;
        }

        if (*conv) {
            EventLog log;
            ActivityOrgMap mapping;
            if (!conv_log.empty()) {
                if (conv_map.empty()) {
                    throw CLI::ValidationError("--map", "required with --log");
                }
                log = load_log(conv_log);
                mapping = load_map(conv_map);
            } else {
                auto sc = generate_scenario_log(conv_flags.p);
                log = std::move(sc.log);
                mapping = std::move(sc.mapping);
            }
            RunOptions o;
            o.miner.seg_size = parse_size(conv_seg);
            if (conv_transport == "http") {
                o.transport = Transport::http;
            } else if (conv_transport != "loopback") {
                throw CLI::ValidationError("--transport", "expected loopback or http");
            }
            auto r = run_convergence(log, mapping, load_identity(manifest), o);
            fs::path dir(conv_out);
            write_file(dir / "standalone.json", serialize_net_json(r.standalone_net));
            write_file(dir / "standalone.dot", serialize_net_dot(r.standalone_net));
            if (r.confine_net) {
                write_file(dir / "confine.json", serialize_net_json(*r.confine_net));
                write_file(dir / "confine.dot", serialize_net_dot(*r.confine_net));
            }
            write_file(dir / "metrics.csv", metrics_to_csv(r.run.samples));
            std::cout << (r.equal ? "converged" : "DIVERGED") << '\n' << r.diff;
            return r.equal ? 0 : 1;
        }

        if (*mem) {
            auto preset = memory_preset_from_string(preset_s);
            if (!preset) {
                throw CLI::ValidationError("--preset", "unknown preset '" + preset_s + "'");
            }
            ExperimentContext ctx;
            ctx.identity = load_identity(manifest);
            ctx.scenario = mem_flags.p;
            ctx.run.miner.seg_size = parse_size(mem_seg);
            ctx.run.miner.capacity = parse_size(mem_budget);
            auto report = run_memory_experiment(*preset, ctx);
            fs::path dir(mem_out);
            for (const auto& r : report.runs) {
                write_file(dir / (r.label + ".csv"), metrics_to_csv(r.result.samples));
            }
            write_file(dir / "summary.csv", report.summary_csv());
            std::cout << report.summary_csv() << "breakpoint_bytes," << report.breakpoint << '\n';
            return 0;
        }

        if (*scale) {
            auto test = scale_test_from_string(test_s);
            if (!test) {
                throw CLI::ValidationError("--test", "expected events, cases or orgs");
            }
            ExperimentContext ctx;
            ctx.identity = load_identity(manifest);
            ctx.scenario = scale_flags.p;
            auto report = run_scalability_suite(*test, ctx, [](const ScaleCell& c) {
                std::cerr << "x=" << c.x << " seg=" << c.seg_size << " peak=" << c.peak
                          << (c.converged ? "" : " DIVERGED") << '\n';
            });
            fs::path dir(scale_out);
            write_file(dir / "cells.csv", report.cells_csv());
            write_file(dir / "summary.json", report.summary_json() + "\n");
            std::cout << report.summary_json() << '\n';
            return report.all_converged() ? 0 : 1;
        }

        if (*split) {
            auto scheme = split_scheme_from_string(scheme_s);
            if (!scheme) {
                throw CLI::ValidationError("--scheme", "expected sepsis, bpic or custom");
            }
            EventLog log;
            if (*scheme == SplitScheme::bpic_departments && format_for_path(split_log) == LogFormat::xes) {
                std::ifstream in(split_log, std::ios::binary);
                log = parse_xes(in, XesOptions{org_attr, std::nullopt});
            } else {
                log = load_log(split_log);
            }
            ActivityOrgMap custom;
            if (*scheme == SplitScheme::custom) {
                if (split_map.empty()) {
                    throw CLI::ValidationError("--map", "required for the custom scheme");
                }
                custom = load_map(split_map);
            }
            auto parts = split_real_log(log, *scheme, custom);
            fs::path dir(split_out);
            for (const auto& [o, sub] : parts) {
                write_file(dir / (o + ".csv"), serialize_csv(sub));
                std::cout << o << ": " << sub.case_count() << " cases, " << sub.event_count() << " events, "
                          << sub.activities().size() << " activities\n";
            }
            return 0;
        }
    } catch (const CLI::Error& e) {
        return app.exit(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}

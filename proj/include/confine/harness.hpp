#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "confine/attest.hpp"
#include "confine/eventlog.hpp"
#include "confine/hminer.hpp"
#include "confine/http.hpp"
#include "confine/miner.hpp"
#include "confine/provisioner.hpp"
#include "confine/regression.hpp"

namespace confine {

// Scenario generator ---------------------------------------------------------------

struct ScenarioParams {
    std::size_t cases = 1000;
    double specialized_care_prob = 1.0 / 3.0;
    int x_loop = 1;
    int org_count = 3;
    std::uint64_t seed = 42;

    void validate() const {
        if (cases == 0) {
            throw ValidationError("cases must be positive");
        }
        if (!(specialized_care_prob >= 0.0 && specialized_care_prob <= 1.0)) {
            throw ValidationError("specialized_care_prob must lie in [0,1]");
        }
        if (x_loop < 1) {
            throw ValidationError("x_loop must be at least 1");
        }
        if (org_count < 1 || org_count > 8) {
            throw ValidationError("org_count must lie in [1,8]");
        }
    }
};

struct ScenarioLog {
    EventLog log;
    ActivityOrgMap mapping;
};

/// Specialized-care path. Loop iterations repeat PH..DPH before the final PCD, DP.
inline std::vector<std::string> scenario_variant_a(int x_loop = 1) {
    static const std::vector<std::string> body{"PH", "COPA", "OD",  "DOR", "PDL", "SD",  "RD",  "AD",
                                               "TP", "PAFH", "PIA", "PT",  "VRT", "TPB", "RPB", "DPH"};
    std::vector<std::string> out;
    for (int i = 0; i < x_loop; ++i) {
        out.insert(out.end(), body.begin(), body.end());
    }
    out.push_back("PCD");
    out.push_back("DP");
    return out;
}

inline std::vector<std::string> scenario_variant_b() {
    return {"PH", "COPA", "OD", "DOR", "PDL", "SD", "RD", "AD", "PRTA", "PCD", "DPH", "DP"};
}

/// The 19 scenario activities in canonical order.
inline std::vector<std::string> scenario_activities() {
    auto acts = scenario_variant_a();
    acts.push_back("PRTA");
    return acts;
}

/// Org names are O1..Ok. With three orgs, O1 is the hospital, O2 the
/// pharmaceutical company and O3 the specialized clinic; otherwise activities
/// are dealt round-robin in canonical order.
inline ActivityOrgMap scenario_org_map(int org_count) {
    if (org_count < 1 || org_count > 8) {
        throw ValidationError("org_count must lie in [1,8]");
    }
    ActivityOrgMap m;
    auto acts = scenario_activities();
    if (org_count == 3) {
        static const std::set<std::string> pharma{"DOR", "PDL", "SD"};
        static const std::set<std::string> clinic{"PAFH", "PIA", "PT", "VRT", "TPB"};
        for (const auto& a : acts) {
            m[a] = pharma.contains(a) ? "O2" : clinic.contains(a) ? "O3" : "O1";
        }
        return m;
    }
    for (std::size_t i = 0; i < acts.size(); ++i) {
        m[acts[i]] = "O" + std::to_string(i % static_cast<std::size_t>(org_count) + 1);
    }
    return m;
}

inline std::string scenario_case_ref(std::size_t i) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%06zu", i);
    return buf;
}

inline ScenarioLog generate_scenario_log(const ScenarioParams& p) {
    p.validate();
    ScenarioLog out;
    out.mapping = scenario_org_map(p.org_count);
    const auto a = scenario_variant_a(p.x_loop);
    const auto b = scenario_variant_b();

    std::mt19937_64 rng(p.seed);
    auto unit = [&] { return static_cast<double>(rng() >> 11) * 0x1.0p-53; };
    auto gap_minutes = [&] { return static_cast<int>(1 + rng() % 180); };

    const Timestamp base = std::chrono::sys_days{std::chrono::year{2022} / 7 / 14} + std::chrono::hours{8};
    std::vector<Event> events;
    std::uint64_t seq = 0;
    for (std::size_t i = 1; i <= p.cases; ++i) {
        const auto& trace = unit() < p.specialized_care_prob ? a : b;
        Timestamp t = base + std::chrono::minutes{static_cast<long>((i - 1) * 7 + rng() % 7)};
        std::string ref = scenario_case_ref(i);
        for (const auto& act : trace) {
            events.push_back(Event{ref, act, t, out.mapping.at(act), seq++});
            t += std::chrono::minutes{gap_minutes()};
        }
    }
    out.log = EventLog(std::move(events));
    return out;
}

// Protocol runs ---------------------------------------------------------------------

enum class Transport { loopback, http };

struct RunOptions {
    MinerOptions miner;
    Transport transport = Transport::loopback;
    std::optional<std::uint64_t> shuffle_seed;
    std::size_t image_bytes = 0;
};

struct RunResult {
    std::optional<HeuristicsNet> net;
    std::vector<MetricSample> samples;
    std::size_t baseline = 0;
    std::size_t after_transmit = 0;
    std::size_t final_in_use = 0;
    std::size_t peak = 0;
    std::size_t eligible = 0;
    std::size_t max_resident_segments = 0;
    bool memory_exceeded = false;
    std::string error;
    std::string merged_fingerprint;
    std::vector<Emission> emissions;
};

namespace detail {

inline ProvisionerConfig provisioner_config(const std::string& org, const EventLog& log,
                                            const EnclaveIdentity& identity, const std::string& miner_id) {
    ProvisionerConfig cfg;
    cfg.org_id = org;
    cfg.log = log;
    cfg.registry.accepted_measurements.insert(identity.measurement());
    cfg.allowed_miners.insert(miner_id);
    return cfg;
}

inline void drive(MinerSession& session, bool compute, RunResult& r) {
    try {
        session.run_initialization();
        r.baseline = session.baseline();
        session.run_acquisition();
        r.after_transmit = session.budget().in_use();
        r.eligible = session.eligible_cases();
        r.merged_fingerprint = session.merged_fingerprint();
    } catch (const EnclaveMemoryExceeded& e) {
        r.memory_exceeded = true;
        r.error = e.what();
    }
    if (r.error.empty() && compute) {
        try {
            r.net = session.run_computation();
        } catch (const EnclaveMemoryExceeded& e) {
            r.memory_exceeded = true;
            r.error = e.what();
        }
    }
    session.export_metrics();
    r.samples = session.budget().samples();
    r.final_in_use = session.budget().in_use();
    r.peak = session.budget().peak();
    r.max_resident_segments = session.max_resident_segments();
    r.emissions = session.emissions();
}

}  // namespace detail

/// Runs provisioners for every sub-log plus one miner session. Memory overflow
/// is reported in the result; every other failure propagates.
inline RunResult run_protocol(const std::map<std::string, EventLog>& parts,
                              std::shared_ptr<const EnclaveIdentity> identity, const RunOptions& opts) {
    std::vector<std::unique_ptr<ProvisionerService>> services;
    for (const auto& [org, log] : parts) {
        services.push_back(std::make_unique<ProvisionerService>(
            detail::provisioner_config(org, log, *identity, opts.miner.miner_id)));
    }
    RunResult result;
    if (opts.transport == Transport::loopback) {
        LoopbackHub hub(opts.shuffle_seed);
        std::vector<std::unique_ptr<ProvisionerLink>> links;
        for (auto& s : services) {
            links.push_back(std::make_unique<LoopbackLink>(*s, hub));
        }
        MinerSession session(opts.miner, identity, std::move(links), opts.image_bytes);
        detail::drive(session, opts.miner.compute, result);
        return result;
    }

    std::vector<std::unique_ptr<http::ProvisionerServer>> servers;
    std::vector<std::unique_ptr<ProvisionerLink>> links;
    for (auto& s : services) {
        servers.push_back(std::make_unique<http::ProvisionerServer>(*s));
        int port = servers.back()->start("127.0.0.1", 0);
        links.push_back(std::make_unique<http::HttpProvisionerLink>("http://127.0.0.1:" + std::to_string(port)));
    }
    http::MinerCallbackServer callback;
    int cb_port = callback.start("127.0.0.1", 0);
    MinerOptions mo = opts.miner;
    mo.callback = "http://127.0.0.1:" + std::to_string(cb_port);
    MinerSession session(mo, identity, std::move(links), opts.image_bytes);
    callback.attach(session);
    detail::drive(session, opts.miner.compute, result);
    callback.detach();
    callback.stop();
    for (auto& s : servers) {
        s->stop();
    }
    return result;
}

inline HeuristicsNet standalone_net(const EventLog& log, const MinerConfig& cfg) {
    DfStats stats;
    for (const auto& [_, c] : log.cases()) {
        add_case(stats, c);
    }
    return build_net(stats, cfg);
}

struct ConvergenceResult {
    std::optional<HeuristicsNet> confine_net;
    HeuristicsNet standalone_net;
    bool equal = false;
    std::string diff;
    RunResult run;
};

inline std::string diff_nets(const HeuristicsNet& confine, const HeuristicsNet& standalone) {
    std::ostringstream out;
    auto a = confine.arc_set();
    auto b = standalone.arc_set();
    for (const auto& arc : a) {
        if (!b.contains(arc)) {
            out << "only in confine: " << arc.first << " -> " << arc.second << '\n';
        }
    }
    for (const auto& arc : b) {
        if (!a.contains(arc)) {
            out << "only in standalone: " << arc.first << " -> " << arc.second << '\n';
        }
    }
    if (out.str().empty() && serialize_net_json(confine) != serialize_net_json(standalone)) {
        out << "same arcs, different counts, measures or bindings\n";
    }
    return out.str();
}

/// Mines the partitioned log through the protocol and the whole log directly,
/// and compares the serialized nets.
inline ConvergenceResult run_convergence(const EventLog& log, const ActivityOrgMap& mapping,
                                         std::shared_ptr<const EnclaveIdentity> identity, const RunOptions& opts) {
    ConvergenceResult r{std::nullopt, standalone_net(log, opts.miner.mining), false, "", {}};
    r.run = run_protocol(partition_by_org(log, mapping), std::move(identity), opts);
    r.confine_net = r.run.net;
    if (!r.confine_net) {
        r.diff = r.run.error.empty() ? "protocol produced no net" : r.run.error;
        return r;
    }
    r.equal = serialize_net_json(*r.confine_net) == serialize_net_json(r.standalone_net);
    if (!r.equal) {
        r.diff = diff_nets(*r.confine_net, r.standalone_net);
    }
    return r;
}

// Memory experiments ----------------------------------------------------------------

enum class MemoryPreset { stage_profile, with_without_compute, segsize_sweep, capacity_sweep };

inline std::optional<MemoryPreset> memory_preset_from_string(std::string_view s) {
    if (s == "stage_profile") return MemoryPreset::stage_profile;
    if (s == "with_without_compute" || s == "with/without_compute") return MemoryPreset::with_without_compute;
    if (s == "segsize_sweep") return MemoryPreset::segsize_sweep;
    if (s == "capacity_sweep") return MemoryPreset::capacity_sweep;
    return std::nullopt;
}

struct ExperimentContext {
    std::shared_ptr<const EnclaveIdentity> identity;
    ScenarioParams scenario;
    RunOptions run;
    std::vector<std::uint64_t> sweep_seg_sizes{16 * KiB,  32 * KiB,  64 * KiB,   128 * KiB,
                                               256 * KiB, 512 * KiB, 1024 * KiB, 2048 * KiB};
};

struct MemoryRun {
    std::string label;
    std::uint64_t seg_size = 0;
    std::size_t capacity = 0;
    bool compute = true;
    RunResult result;
};

struct MemoryReport {
    std::string preset;
    std::vector<MemoryRun> runs;
    /// Largest sub-log payload; segment sizes at or above it yield one segment per org.
    std::size_t breakpoint = 0;

    std::string summary_csv() const {
        std::ostringstream out;
        out << "label,seg_size,capacity,compute,baseline_bytes,peak_bytes,after_transmit_bytes,final_bytes,exceeded\n";
        for (const auto& r : runs) {
            out << r.label << ',' << r.seg_size << ',' << r.capacity << ',' << (r.compute ? 1 : 0) << ','
                << r.result.baseline << ',' << r.result.peak << ',' << r.result.after_transmit << ','
                << r.result.final_in_use << ',' << (r.result.memory_exceeded ? 1 : 0) << '\n';
        }
        return out.str();
    }
};

inline std::size_t partition_payload_bytes(const EventLog& log) {
    std::size_t n = 0;
    for (const auto& [_, c] : log.cases()) {
        n += case_payload_bytes(c);
    }
    return n;
}

inline MemoryReport run_memory_experiment(MemoryPreset preset, const ExperimentContext& ctx) {
    auto scenario = generate_scenario_log(ctx.scenario);
    auto parts = partition_by_org(scenario.log, scenario.mapping);
    MemoryReport report;
    for (const auto& [_, log] : parts) {
        report.breakpoint = std::max(report.breakpoint, partition_payload_bytes(log));
    }

    auto run = [&](std::string label, std::uint64_t seg, std::size_t capacity, bool compute) {
        RunOptions o = ctx.run;
        o.miner.seg_size = seg;
        o.miner.capacity = capacity;
        o.miner.compute = compute;
        report.runs.push_back(MemoryRun{std::move(label), seg, capacity, compute, run_protocol(parts, ctx.identity, o)});
    };

    const auto seg = ctx.run.miner.seg_size;
    const auto cap = ctx.run.miner.capacity;
    switch (preset) {
        case MemoryPreset::stage_profile:
            report.preset = "stage_profile";
            run("stage_profile", seg, cap, true);
            break;
        case MemoryPreset::with_without_compute:
            report.preset = "with_without_compute";
            run("with_compute", seg, cap, true);
            run("without_compute", seg, cap, false);
            break;
        case MemoryPreset::segsize_sweep:
            report.preset = "segsize_sweep";
            for (auto s : ctx.sweep_seg_sizes) {
                run("seg_" + std::to_string(s), s, cap, true);
            }
            break;
        case MemoryPreset::capacity_sweep: {
            report.preset = "capacity_sweep";
            run("unbounded", seg, cap, true);
            const std::size_t peak = report.runs.back().result.peak;
            const std::size_t baseline = report.runs.back().result.baseline;
            for (double f : {0.9, 0.75, 0.5}) {
                run("cap_" + std::to_string(static_cast<int>(f * 100)), seg, static_cast<std::size_t>(peak * f), true);
            }
            // Enough for initialization but less than a single segment.
            std::size_t smallest = std::min<std::size_t>(seg, report.breakpoint);
            run("sub_segment", seg, baseline + smallest / 2, true);
            break;
        }
    }
    return report;
}

// Scalability suite -----------------------------------------------------------------

enum class ScaleTest { events, cases, orgs };

inline std::optional<ScaleTest> scale_test_from_string(std::string_view s) {
    if (s == "events") return ScaleTest::events;
    if (s == "cases") return ScaleTest::cases;
    if (s == "orgs") return ScaleTest::orgs;
    return std::nullopt;
}

inline std::string_view to_string(ScaleTest t) {
    switch (t) {
        case ScaleTest::events:
            return "events";
        case ScaleTest::cases:
            return "cases";
        case ScaleTest::orgs:
            return "orgs";
    }
    return "?";
}

struct ScaleCell {
    double x = 0;
    std::uint64_t seg_size = 0;
    std::size_t cases = 0;
    std::size_t events = 0;
    std::size_t peak = 0;
    bool converged = false;
};

struct ScaleSeries {
    std::uint64_t seg_size = 0;
    RegressionStats stats;
};

struct ScaleReport {
    ScaleTest test = ScaleTest::events;
    std::vector<ScaleCell> cells;
    std::vector<ScaleSeries> series;

    bool all_converged() const {
        return std::all_of(cells.begin(), cells.end(), [](const ScaleCell& c) { return c.converged; });
    }

    std::string cells_csv() const {
        std::ostringstream out;
        out << "test,x,seg_size,cases,events,peak_bytes,converged\n";
        for (const auto& c : cells) {
            out << to_string(test) << ',' << c.x << ',' << c.seg_size << ',' << c.cases << ',' << c.events << ','
                << c.peak << ',' << (c.converged ? 1 : 0) << '\n';
        }
        return out.str();
    }

    std::string summary_json() const {
        nlohmann::ordered_json j;
        j["test"] = to_string(test);
        j["cells"] = cells.size();
        j["all_converged"] = all_converged();
        j["series"] = nlohmann::ordered_json::array();
        for (const auto& s : series) {
            j["series"].push_back({{"seg_size", s.seg_size},
                                   {"r2_lin", s.stats.r2_lin},
                                   {"r2_log", s.stats.r2_log},
                                   {"slope_hat_bytes", s.stats.slope_hat}});
        }
        return j.dump(2);
    }
};

struct ScaleGrid {
    std::vector<int> xs;
    std::vector<std::uint64_t> seg_sizes;
};

/// x_loop 2..16 step 2, 2^7..2^13 cases, 1..8 orgs.
inline ScaleGrid default_scale_grid(ScaleTest t) {
    ScaleGrid g;
    switch (t) {
        case ScaleTest::events:
            g.xs = {2, 4, 6, 8, 10, 12, 14, 16};
            g.seg_sizes = {100 * KiB, 1000 * KiB, 10000 * KiB};
            break;
        case ScaleTest::cases:
            g.xs = {7, 8, 9, 10, 11, 12, 13};
            g.seg_sizes = {100 * KiB, 1000 * KiB, 10000 * KiB};
            break;
        case ScaleTest::orgs:
            g.xs = {1, 2, 3, 4, 5, 6, 7, 8};
            g.seg_sizes = {100 * KiB, 500 * KiB, 1000 * KiB};
            break;
    }
    return g;
}

/// Cell x is x_loop for the events test, the case count (2^k) for the cases
/// test and the org count for the orgs test. Slopes are in bytes per unit x.
inline ScaleReport run_scalability_suite(ScaleTest test, const ExperimentContext& ctx, const ScaleGrid& grid,
                                         const std::function<void(const ScaleCell&)>& progress = {}) {
    ScaleReport report;
    report.test = test;
    for (int x : grid.xs) {
        ScenarioParams p = ctx.scenario;
        double cell_x = x;
        switch (test) {
            case ScaleTest::events:
                p.x_loop = x;
                break;
            case ScaleTest::cases:
                p.cases = std::size_t{1} << x;
                cell_x = static_cast<double>(p.cases);
                break;
            case ScaleTest::orgs:
                p.org_count = x;
                break;
        }
        auto scenario = generate_scenario_log(p);
        auto parts = partition_by_org(scenario.log, scenario.mapping);
        auto expected = serialize_net_json(standalone_net(scenario.log, ctx.run.miner.mining));
        for (auto seg : grid.seg_sizes) {
            RunOptions o = ctx.run;
            o.miner.seg_size = seg;
            auto r = run_protocol(parts, ctx.identity, o);
            ScaleCell cell{cell_x, seg, scenario.log.case_count(), scenario.log.event_count(), r.peak,
                           r.net && serialize_net_json(*r.net) == expected};
            report.cells.push_back(cell);
            if (progress) {
                progress(cell);
            }
        }
    }
    for (auto seg : grid.seg_sizes) {
        std::vector<double> xs, ys;
        for (const auto& c : report.cells) {
            if (c.seg_size == seg) {
                xs.push_back(c.x);
                ys.push_back(static_cast<double>(c.peak));
            }
        }
        if (xs.size() >= 2) {
            report.series.push_back(ScaleSeries{seg, regression_stats(xs, ys)});
        }
    }
    return report;
}

inline ScaleReport run_scalability_suite(ScaleTest test, const ExperimentContext& ctx,
                                         const std::function<void(const ScaleCell&)>& progress = {}) {
    return run_scalability_suite(test, ctx, default_scale_grid(test), progress);
}

// Real-log splits -------------------------------------------------------------------

enum class SplitScheme { sepsis_care_paths, bpic_departments, custom };

inline std::optional<SplitScheme> split_scheme_from_string(std::string_view s) {
    if (s == "sepsis" || s == "sepsis_care_paths") return SplitScheme::sepsis_care_paths;
    if (s == "bpic" || s == "bpic_departments") return SplitScheme::bpic_departments;
    if (s == "custom") return SplitScheme::custom;
    return std::nullopt;
}

/// Sepsis Cases log: intensive-care admission and the IV treatments go to the
/// intensive-care unit, everything else to normal care.
inline ActivityOrgMap sepsis_care_path_map() {
    ActivityOrgMap m;
    for (const char* a : {"ER Registration", "ER Triage", "ER Sepsis Triage", "Leucocytes", "CRP", "LacticAcid",
                          "Admission NC", "Release A", "Release B", "Release C", "Release D", "Release E",
                          "Return ER"}) {
        m[a] = "normal_care";
    }
    for (const char* a : {"Admission IC", "IV Liquid", "IV Antibiotics"}) {
        m[a] = "intensive_care";
    }
    return m;
}

/// Splits a real log into sub-logs. The bpic scheme groups events by their org
/// field, which parse_xes fills from the chosen department attribute.
inline std::map<std::string, EventLog> split_real_log(const EventLog& log, SplitScheme scheme,
                                                      const ActivityOrgMap& custom = {}) {
    switch (scheme) {
        case SplitScheme::custom:
            return partition_by_org(log, custom);
        case SplitScheme::sepsis_care_paths: {
            auto m = sepsis_care_path_map();
            std::set<std::string> unmatched;
            for (const auto& a : log.activities()) {
                if (!m.contains(a)) {
                    unmatched.insert(a);
                }
            }
            if (!unmatched.empty()) {
                std::string msg = "sepsis scheme does not cover activities:";
                for (const auto& a : unmatched) {
                    msg += " '" + a + "'";
                }
                throw PartitionError(msg);
            }
            return partition_by_org(log, m);
        }
        case SplitScheme::bpic_departments: {
            std::map<std::string, std::vector<Event>> grouped;
            std::set<std::string> unmatched;
            for (const auto& e : log.events()) {
                if (e.org.empty()) {
                    unmatched.insert(e.activity);
                } else {
                    grouped[e.org].push_back(e);
                }
            }
            if (!unmatched.empty()) {
                std::string msg = "events without a department attribute for activities:";
                for (const auto& a : unmatched) {
                    msg += " '" + a + "'";
                }
                throw PartitionError(msg);
            }
            std::map<std::string, EventLog> out;
            for (auto& [org, events] : grouped) {
                out.emplace(org, EventLog(std::move(events), org));
            }
            return out;
        }
    }
    return {};
}

}  // namespace confine

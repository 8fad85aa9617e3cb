#pragma once

#include <fstream>
#include <iterator>
#include <optional>
#include <sstream>
#include <string>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>

#include "confine/eventlog.hpp"

namespace confine {

enum class LogFormat { csv, xes };

struct XesOptions {
    /// Event attribute copied into Event::org; when absent the source org is used.
    std::optional<std::string> org_attribute;
    std::optional<std::string> source_org;
};

/// Reads the XES subset: trace/event `concept:name` and event `time:timestamp`.
/// Everything else is ignored, except the optional org attribute.
inline EventLog parse_xes(std::istream& in, const XesOptions& opts = {}) {
    namespace pt = boost::property_tree;
    pt::ptree tree;
    try {
        pt::read_xml(in, tree, pt::xml_parser::trim_whitespace);
    } catch (const pt::xml_parser_error& e) {
        throw ParseError(std::string("XES: ") + e.what());
    }
    auto log_node = tree.get_child_optional("log");
    if (!log_node) {
        throw SchemaError("XES: missing <log> root element");
    }
    auto attr_value = [](const pt::ptree& node, const std::string& key) -> std::optional<std::string> {
        for (const auto& [tag, child] : node) {
            if (tag == "<xmlattr>") {
                continue;
            }
            auto k = child.get_optional<std::string>("<xmlattr>.key");
            if (k && *k == key) {
                auto v = child.get_optional<std::string>("<xmlattr>.value");
                return v ? std::optional<std::string>(*v) : std::nullopt;
            }
        }
        return std::nullopt;
    };

    std::vector<Event> events;
    std::uint64_t seq = 0;
    std::size_t trace_no = 0;
    for (const auto& [tag, trace] : *log_node) {
        if (tag != "trace") {
            continue;
        }
        ++trace_no;
        auto case_ref = attr_value(trace, "concept:name");
        if (!case_ref || case_ref->empty()) {
            throw ParseError("XES: trace #" + std::to_string(trace_no) + " lacks concept:name");
        }
        std::size_t event_no = 0;
        for (const auto& [etag, ev] : trace) {
            if (etag != "event") {
                continue;
            }
            ++event_no;
            std::string where = "XES: trace '" + *case_ref + "' event #" + std::to_string(event_no);
            auto name = attr_value(ev, "concept:name");
            if (!name || name->empty()) {
                throw ParseError(where + " lacks concept:name");
            }
            auto ts_text = attr_value(ev, "time:timestamp");
            if (!ts_text) {
                throw ParseError(where + " lacks time:timestamp");
            }
            auto ts = parse_timestamp(*ts_text);
            if (!ts) {
                throw ParseError(where + " has bad time:timestamp '" + *ts_text + "'");
            }
            Event e;
            e.case_ref = *case_ref;
            e.activity = *name;
            e.timestamp = *ts;
            e.seq_hint = seq++;
            if (opts.org_attribute) {
                auto org = attr_value(ev, *opts.org_attribute);
                if (!org) {
                    throw SchemaError(where + " lacks attribute '" + *opts.org_attribute + "'");
                }
                e.org = *org;
            } else {
                e.org = opts.source_org.value_or("");
            }
            events.push_back(std::move(e));
        }
    }
    return EventLog(std::move(events), opts.source_org);
}

inline EventLog parse_log(std::istream& in, LogFormat format, std::optional<std::string> source_org = std::nullopt) {
    if (format == LogFormat::xes) {
        XesOptions opts;
        opts.source_org = std::move(source_org);
        return parse_xes(in, opts);
    }
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_csv(text, std::move(source_org));
}

inline LogFormat format_for_path(const std::string& path) {
    auto dot = path.rfind('.');
    if (dot != std::string::npos) {
        std::string ext = path.substr(dot + 1);
        for (auto& c : ext) {
            c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        }
        if (ext == "xes" || ext == "xml") {
            return LogFormat::xes;
        }
    }
    return LogFormat::csv;
}

inline EventLog load_log(const std::string& path, std::optional<std::string> source_org = std::nullopt) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error("cannot open log file '" + path + "'");
    }
    return parse_log(in, format_for_path(path), std::move(source_org));
}

inline void save_csv(const EventLog& log, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error("cannot write '" + path + "'");
    }
    out << serialize_csv(log);
}

}  // namespace confine

#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "confine/eventlog.hpp"

namespace confine {

using ActivityPair = std::pair<std::string, std::string>;

/// Directly-follows statistics; additive over disjoint case sets.
struct DfStats {
    std::map<std::string, std::uint64_t> activity_count;
    std::map<ActivityPair, std::uint64_t> df_count;
    std::map<std::string, std::uint64_t> start_count;
    std::map<std::string, std::uint64_t> end_count;
    std::uint64_t case_count = 0;

    std::uint64_t df(const std::string& a, const std::string& b) const {
        auto it = df_count.find({a, b});
        return it == df_count.end() ? 0 : it->second;
    }

    friend bool operator==(const DfStats&, const DfStats&) = default;
};

inline void add_case(DfStats& stats, const CaseView& c) {
    if (c.empty()) {
        throw ValidationError("case '" + c.case_ref() + "' has no events");
    }
    const auto& ev = c.events();
    ++stats.case_count;
    ++stats.start_count[ev.front().activity];
    ++stats.end_count[ev.back().activity];
    for (std::size_t i = 0; i < ev.size(); ++i) {
        ++stats.activity_count[ev[i].activity];
        if (i + 1 < ev.size()) {
            ++stats.df_count[{ev[i].activity, ev[i + 1].activity}];
        }
    }
}

/// Adds a batch of fully merged cases to the running statistics.
template <typename Range>
DfStats accumulate(DfStats stats, const Range& batch) {
    for (const CaseView& c : batch) {
        add_case(stats, c);
    }
    return stats;
}

/// Logical footprint of the statistics tables, used for enclave accounting.
inline std::size_t estimated_bytes(const DfStats& s) {
    constexpr std::size_t counter = sizeof(std::uint64_t);
    std::size_t n = counter;
    for (const auto* m : {&s.activity_count, &s.start_count, &s.end_count}) {
        for (const auto& [k, _] : *m) {
            n += k.size() + counter;
        }
    }
    for (const auto& [k, _] : s.df_count) {
        n += k.first.size() + k.second.size() + counter;
    }
    return n;
}

/// a => b. For a != b: (|a>b| - |b>a|) / (|a>b| + |b>a| + 1); for a == b the
/// length-one-loop form |a>a| / (|a>a| + 1).
inline double dependency_measure(const DfStats& stats, const std::string& a, const std::string& b) {
    const double ab = static_cast<double>(stats.df(a, b));
    if (a == b) {
        return ab / (ab + 1.0);
    }
    const double ba = static_cast<double>(stats.df(b, a));
    return (ab - ba) / (ab + ba + 1.0);
}

struct MinerConfig {
    double dependency_threshold = 0.9;
    double and_threshold = 0.65;
    std::uint64_t min_df_count = 1;
    bool all_activities_connected = true;

    void validate() const {
        if (!(dependency_threshold >= 0.0 && dependency_threshold <= 1.0)) {
            throw ValidationError("dependency_threshold must lie in [0,1]");
        }
        if (!(and_threshold >= 0.0 && and_threshold <= 1.0)) {
            throw ValidationError("and_threshold must lie in [0,1]");
        }
    }
};

struct ArcInfo {
    double dependency = 0.0;
    std::uint64_t frequency = 0;

    friend bool operator==(const ArcInfo&, const ArcInfo&) = default;
};

/// Groups of successors (or predecessors). Members of one group are in an AND
/// relation; distinct groups are exclusive alternatives.
using Bindings = std::vector<std::vector<std::string>>;

struct HeuristicsNet {
    std::map<std::string, std::uint64_t> activities;
    std::set<std::string> start;
    std::set<std::string> end;
    std::uint64_t case_count = 0;
    std::map<ActivityPair, double> dependency;
    std::map<ActivityPair, ArcInfo> arcs;
    std::map<std::string, Bindings> splits;
    std::map<std::string, Bindings> joins;

    bool has_arc(const std::string& a, const std::string& b) const { return arcs.contains({a, b}); }

    std::set<ActivityPair> arc_set() const {
        std::set<ActivityPair> out;
        for (const auto& [k, _] : arcs) {
            out.insert(k);
        }
        return out;
    }

    friend bool operator==(const HeuristicsNet&, const HeuristicsNet&) = default;
};

namespace detail {

/// Union-find over `items` joined by `related`; returns sorted groups.
template <typename Related>
Bindings group_by_relation(const std::vector<std::string>& items, Related related) {
    std::vector<std::size_t> parent(items.size());
    std::iota(parent.begin(), parent.end(), std::size_t{0});
    auto find = [&](std::size_t i) {
        while (parent[i] != i) {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        return i;
    };
    for (std::size_t i = 0; i < items.size(); ++i) {
        for (std::size_t j = i + 1; j < items.size(); ++j) {
            if (related(items[i], items[j])) {
                parent[find(i)] = find(j);
            }
        }
    }
    std::map<std::size_t, std::vector<std::string>> groups;
    for (std::size_t i = 0; i < items.size(); ++i) {
        groups[find(i)].push_back(items[i]);
    }
    Bindings out;
    for (auto& [_, g] : groups) {
        std::sort(g.begin(), g.end());
        out.push_back(std::move(g));
    }
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace detail

inline HeuristicsNet build_net(const DfStats& stats, const MinerConfig& config = {}) {
    config.validate();
    if (stats.case_count == 0) {
        throw ValidationError("cannot build a net from empty statistics");
    }
    HeuristicsNet net;
    net.activities = stats.activity_count;
    net.case_count = stats.case_count;
    for (const auto& [a, n] : stats.start_count) {
        if (n > 0) {
            net.start.insert(a);
        }
    }
    for (const auto& [a, n] : stats.end_count) {
        if (n > 0) {
            net.end.insert(a);
        }
    }
    for (const auto& [pair, n] : stats.df_count) {
        if (n == 0) {
            continue;
        }
        const auto& [a, b] = pair;
        net.dependency[{a, b}] = dependency_measure(stats, a, b);
        if (a != b) {
            net.dependency[{b, a}] = dependency_measure(stats, b, a);
        }
    }

    const std::uint64_t min_df = std::max<std::uint64_t>(config.min_df_count, 1);
    for (const auto& [pair, n] : stats.df_count) {
        double dep = net.dependency.at(pair);
        if (n >= min_df && dep > 0.0 && dep >= config.dependency_threshold) {
            net.arcs[pair] = ArcInfo{dep, n};
        }
    }

    if (config.all_activities_connected) {
        // Best arc per activity: max dependency, then higher frequency, then
        // lexicographically smaller counterpart.
        auto better = [](double dep, std::uint64_t freq, const std::string& other, double best_dep,
                         std::uint64_t best_freq, const std::string& best_other) {
            if (dep != best_dep) {
                return dep > best_dep;
            }
            if (freq != best_freq) {
                return freq > best_freq;
            }
            return other < best_other;
        };
        std::map<std::string, std::pair<ActivityPair, ArcInfo>> best_in, best_out;
        for (const auto& [pair, n] : stats.df_count) {
            const auto& [a, b] = pair;
            if (a == b || n == 0) {
                continue;
            }
            double dep = net.dependency.at(pair);
            auto in = best_in.find(b);
            if (in == best_in.end() ||
                better(dep, n, a, in->second.second.dependency, in->second.second.frequency, in->second.first.first)) {
                best_in[b] = {pair, ArcInfo{dep, n}};
            }
            auto out = best_out.find(a);
            if (out == best_out.end() || better(dep, n, b, out->second.second.dependency,
                                                out->second.second.frequency, out->second.first.second)) {
                best_out[a] = {pair, ArcInfo{dep, n}};
            }
        }
        for (const auto& act : net.activities) {
            const auto& name = act.first;
            if (!net.start.contains(name)) {
                if (auto it = best_in.find(name); it != best_in.end()) {
                    net.arcs.insert(it->second);
                }
            }
            if (!net.end.contains(name)) {
                if (auto it = best_out.find(name); it != best_out.end()) {
                    net.arcs.insert(it->second);
                }
            }
        }
    }

    std::map<std::string, std::vector<std::string>> outs, ins;
    for (const auto& [pair, _] : net.arcs) {
        if (pair.first == pair.second) {
            continue;
        }
        outs[pair.first].push_back(pair.second);
        ins[pair.second].push_back(pair.first);
    }
    for (const auto& [a, succ] : outs) {
        net.splits[a] = detail::group_by_relation(succ, [&](const std::string& b, const std::string& c) {
            double num = static_cast<double>(stats.df(b, c) + stats.df(c, b));
            double den = static_cast<double>(stats.df(a, b) + stats.df(a, c)) + 1.0;
            return num / den >= config.and_threshold;
        });
    }
    for (const auto& [b, pred] : ins) {
        net.joins[b] = detail::group_by_relation(pred, [&](const std::string& a, const std::string& c) {
            double num = static_cast<double>(stats.df(a, c) + stats.df(c, a));
            double den = static_cast<double>(stats.df(a, b) + stats.df(c, b)) + 1.0;
            return num / den >= config.and_threshold;
        });
    }
    return net;
}

// Serialization -------------------------------------------------------------

inline nlohmann::ordered_json net_to_json(const HeuristicsNet& net) {
    nlohmann::ordered_json j;
    j["case_count"] = net.case_count;
    auto& acts = j["activities"] = nlohmann::ordered_json::object();
    for (const auto& [a, n] : net.activities) {
        acts[a] = n;
    }
    j["start"] = net.start;
    j["end"] = net.end;
    auto& arcs = j["arcs"] = nlohmann::ordered_json::array();
    for (const auto& [pair, info] : net.arcs) {
        arcs.push_back({{"from", pair.first}, {"to", pair.second}, {"dependency", info.dependency},
                        {"frequency", info.frequency}});
    }
    auto& dep = j["dependency"] = nlohmann::ordered_json::array();
    for (const auto& [pair, v] : net.dependency) {
        dep.push_back({{"from", pair.first}, {"to", pair.second}, {"value", v}});
    }
    auto bindings = [](const std::map<std::string, Bindings>& m) {
        auto out = nlohmann::ordered_json::object();
        for (const auto& [a, groups] : m) {
            out[a] = groups;
        }
        return out;
    };
    j["splits"] = bindings(net.splits);
    j["joins"] = bindings(net.joins);
    return j;
}

inline std::string serialize_net_json(const HeuristicsNet& net) { return net_to_json(net).dump(2) + "\n"; }

inline HeuristicsNet parse_net_json(std::string_view text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
        HeuristicsNet net;
        net.case_count = j.at("case_count").get<std::uint64_t>();
        for (const auto& [a, n] : j.at("activities").items()) {
            net.activities[a] = n.get<std::uint64_t>();
        }
        net.start = j.at("start").get<std::set<std::string>>();
        net.end = j.at("end").get<std::set<std::string>>();
        for (const auto& arc : j.at("arcs")) {
            net.arcs[{arc.at("from").get<std::string>(), arc.at("to").get<std::string>()}] =
                ArcInfo{arc.at("dependency").get<double>(), arc.at("frequency").get<std::uint64_t>()};
        }
        for (const auto& d : j.at("dependency")) {
            net.dependency[{d.at("from").get<std::string>(), d.at("to").get<std::string>()}] =
                d.at("value").get<double>();
        }
        for (const auto& [a, g] : j.at("splits").items()) {
            net.splits[a] = g.get<Bindings>();
        }
        for (const auto& [a, g] : j.at("joins").items()) {
            net.joins[a] = g.get<Bindings>();
        }
        return net;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("net JSON: ") + e.what());
    }
}

namespace detail {

inline std::string dot_quote(const std::string& s) {
    std::string out = "\"";
    for (char c : s) {
        if (c == '"' || c == '\\') {
            out.push_back('\\');
        }
        out.push_back(c);
    }
    out.push_back('"');
    return out;
}

}  // namespace detail

/// Graphviz rendering: one node line per activity, one edge line per arc.
inline std::string serialize_net_dot(const HeuristicsNet& net) {
    std::ostringstream out;
    out << "digraph heuristics_net {\n";
    out << "  rankdir=LR;\n";
    for (const auto& [a, n] : net.activities) {
        out << "  " << detail::dot_quote(a) << " [label=" << detail::dot_quote(a + "\\n" + std::to_string(n));
        if (net.start.contains(a)) {
            out << ", shape=box, style=bold";
        } else if (net.end.contains(a)) {
            out << ", shape=box, peripheries=2";
        } else {
            out << ", shape=box";
        }
        out << "];\n";
    }
    for (const auto& [pair, info] : net.arcs) {
        char dep[32];
        std::snprintf(dep, sizeof dep, "%.3f", info.dependency);
        out << "  " << detail::dot_quote(pair.first) << " -> " << detail::dot_quote(pair.second)
            << " [label=" << detail::dot_quote(std::string(dep) + " (" + std::to_string(info.frequency) + ")")
            << "];\n";
    }
    out << "}\n";
    return out.str();
}

}  // namespace confine

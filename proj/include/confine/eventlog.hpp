#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <tuple>
#include <utility>
#include <vector>

#include "confine/error.hpp"
#include "confine/timestamp.hpp"

namespace confine {

struct Event {
    std::string case_ref;
    std::string activity;
    Timestamp timestamp{};
    std::string org;
    /// Index of the record within its source file; only used to break ties.
    std::uint64_t seq_hint = 0;

    friend bool operator==(const Event&, const Event&) = default;
};

/// Total order used everywhere events are sorted: (timestamp, org, seq_hint).
struct EventOrder {
    bool operator()(const Event& a, const Event& b) const {
        return std::tie(a.timestamp, a.org, a.seq_hint) < std::tie(b.timestamp, b.org, b.seq_hint);
    }
};

/// All events of one case reference, sorted by EventOrder.
class CaseView {
public:
    CaseView() = default;

    CaseView(std::string case_ref, std::vector<Event> events)
        : case_ref_(std::move(case_ref)), events_(std::move(events)) {
        if (case_ref_.empty()) {
            throw ValidationError("case view with empty case reference");
        }
        for (const auto& e : events_) {
            if (e.case_ref != case_ref_) {
                throw ValidationError("event of case '" + e.case_ref + "' placed in case view '" +
                                      case_ref_ + "'");
            }
        }
        std::stable_sort(events_.begin(), events_.end(), EventOrder{});
    }

    const std::string& case_ref() const noexcept { return case_ref_; }
    const std::vector<Event>& events() const noexcept { return events_; }
    std::size_t size() const noexcept { return events_.size(); }
    bool empty() const noexcept { return events_.empty(); }

    std::vector<std::string> activities() const {
        std::vector<std::string> out;
        out.reserve(events_.size());
        for (const auto& e : events_) {
            out.push_back(e.activity);
        }
        return out;
    }

    friend bool operator==(const CaseView&, const CaseView&) = default;

private:
    std::string case_ref_;
    std::vector<Event> events_;
};

class EventLog {
public:
    EventLog() = default;

    /// Groups events by case reference and sorts each case.
    explicit EventLog(std::vector<Event> events, std::optional<std::string> source_org = std::nullopt)
        : source_org_(std::move(source_org)) {
        std::map<std::string, std::vector<Event>> grouped;
        for (auto& e : events) {
            if (e.case_ref.empty()) {
                throw ValidationError("event with empty case reference");
            }
            if (e.activity.empty()) {
                throw ValidationError("event of case '" + e.case_ref + "' has an empty activity");
            }
            grouped[e.case_ref].push_back(std::move(e));
        }
        for (auto& [ref, evs] : grouped) {
            cases_.emplace(ref, CaseView(ref, std::move(evs)));
        }
    }

    explicit EventLog(std::vector<CaseView> cases, std::optional<std::string> source_org = std::nullopt)
        : source_org_(std::move(source_org)) {
        for (auto& c : cases) {
            std::string ref = c.case_ref();
            if (!cases_.emplace(ref, std::move(c)).second) {
                throw ValidationError("duplicate case reference '" + ref + "'");
            }
        }
    }

    const std::map<std::string, CaseView>& cases() const noexcept { return cases_; }
    const std::optional<std::string>& source_org() const noexcept { return source_org_; }

    const CaseView* find(const std::string& case_ref) const {
        auto it = cases_.find(case_ref);
        return it == cases_.end() ? nullptr : &it->second;
    }

    std::size_t case_count() const noexcept { return cases_.size(); }

    std::size_t event_count() const {
        std::size_t n = 0;
        for (const auto& [_, c] : cases_) {
            n += c.size();
        }
        return n;
    }

    std::vector<Event> events() const {
        std::vector<Event> out;
        out.reserve(event_count());
        for (const auto& [_, c] : cases_) {
            out.insert(out.end(), c.events().begin(), c.events().end());
        }
        return out;
    }

    std::set<std::string> activities() const {
        std::set<std::string> out;
        for (const auto& [_, c] : cases_) {
            for (const auto& e : c.events()) {
                out.insert(e.activity);
            }
        }
        return out;
    }

    /// Field-wise equality of the case data; source_org is metadata and ignored.
    friend bool operator==(const EventLog& a, const EventLog& b) { return a.cases_ == b.cases_; }

private:
    std::map<std::string, CaseView> cases_;
    std::optional<std::string> source_org_;
};

/// Lexicographically sorted case references.
inline std::vector<std::string> case_refs(const EventLog& log) {
    std::vector<std::string> refs;
    refs.reserve(log.case_count());
    for (const auto& [ref, _] : log.cases()) {
        refs.push_back(ref);
    }
    return refs;
}

/// Keeps only the listed cases. Throws UnknownCasesError if any ref is absent.
inline EventLog filter_cases(const EventLog& log, const std::vector<std::string>& refs) {
    std::vector<CaseView> kept;
    std::vector<std::string> missing;
    std::set<std::string> unique(refs.begin(), refs.end());
    for (const auto& ref : unique) {
        if (const auto* c = log.find(ref)) {
            kept.push_back(*c);
        } else {
            missing.push_back(ref);
        }
    }
    if (!missing.empty()) {
        std::string msg = "unknown case references:";
        for (const auto& m : missing) {
            msg += " " + m;
        }
        throw UnknownCasesError(msg, std::move(missing));
    }
    return EventLog(std::move(kept), log.source_org());
}

using ActivityOrgMap = std::map<std::string, std::string>;

/// Splits a log into one sub-log per organization according to which org
/// owns each activity. Events are moved unchanged.
inline std::map<std::string, EventLog> partition_by_org(const EventLog& log, const ActivityOrgMap& mapping) {
    std::map<std::string, std::vector<Event>> buckets;
    for (const auto& [_, c] : log.cases()) {
        for (const auto& e : c.events()) {
            auto it = mapping.find(e.activity);
            if (it == mapping.end()) {
                throw PartitionError("activity '" + e.activity + "' has no owning organization");
            }
            buckets[it->second].push_back(e);
        }
    }
    std::map<std::string, EventLog> out;
    for (auto& [org, events] : buckets) {
        out.emplace(org, EventLog(std::move(events), org));
    }
    return out;
}

// CSV ---------------------------------------------------------------------

inline constexpr std::string_view kCsvHeader = "case,timestamp,activity,org";

namespace detail {

inline void append_csv_field(std::string& out, std::string_view field) {
    bool quote = field.find_first_of(",\"\r\n") != std::string_view::npos;
    if (!quote) {
        out.append(field);
        return;
    }
    out.push_back('"');
    for (char c : field) {
        if (c == '"') {
            out.push_back('"');
        }
        out.push_back(c);
    }
    out.push_back('"');
}

inline std::optional<std::vector<std::string>> split_csv_line(std::string_view line) {
    std::vector<std::string> fields;
    std::string cur;
    bool in_quotes = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        char c = line[i];
        if (in_quotes) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur.push_back('"');
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                cur.push_back(c);
            }
        } else if (c == '"') {
            if (!cur.empty()) {
                return std::nullopt;
            }
            in_quotes = true;
        } else if (c == ',') {
            fields.push_back(std::move(cur));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    if (in_quotes) {
        return std::nullopt;
    }
    fields.push_back(std::move(cur));
    return fields;
}

struct CsvColumns {
    std::size_t case_ref = 0, timestamp = 1, activity = 2, org = 3;
    std::size_t width = 4;
};

inline Event parse_csv_record(std::string_view line, const CsvColumns& cols, std::size_t line_no,
                              std::uint64_t seq) {
    auto fields = split_csv_line(line);
    if (!fields) {
        throw ParseError("line " + std::to_string(line_no) + ": unbalanced quotes");
    }
    if (fields->size() != cols.width) {
        throw ParseError("line " + std::to_string(line_no) + ": expected " + std::to_string(cols.width) +
                         " fields, found " + std::to_string(fields->size()));
    }
    Event e;
    e.case_ref = std::move((*fields)[cols.case_ref]);
    e.activity = std::move((*fields)[cols.activity]);
    e.org = std::move((*fields)[cols.org]);
    e.seq_hint = seq;
    if (e.case_ref.empty()) {
        throw ParseError("line " + std::to_string(line_no) + ": empty case reference");
    }
    if (e.activity.empty()) {
        throw ParseError("line " + std::to_string(line_no) + ": empty activity");
    }
    auto ts = parse_timestamp((*fields)[cols.timestamp]);
    if (!ts) {
        throw ParseError("line " + std::to_string(line_no) + ": bad timestamp '" + (*fields)[cols.timestamp] +
                         "'");
    }
    e.timestamp = *ts;
    return e;
}

template <typename F>
void for_each_line(std::string_view text, F&& f) {
    std::size_t line_no = 0;
    std::size_t start = 0;
    while (start < text.size()) {
        std::size_t end = text.find('\n', start);
        if (end == std::string_view::npos) {
            end = text.size();
        }
        std::string_view line = text.substr(start, end - start);
        if (!line.empty() && line.back() == '\r') {
            line.remove_suffix(1);
        }
        ++line_no;
        f(line, line_no);
        start = end + 1;
    }
}

}  // namespace detail

/// One CSV record (no trailing newline).
inline void append_csv_row(std::string& out, const Event& e) {
    detail::append_csv_field(out, e.case_ref);
    out.push_back(',');
    out.append(format_timestamp(e.timestamp));
    out.push_back(',');
    detail::append_csv_field(out, e.activity);
    out.push_back(',');
    detail::append_csv_field(out, e.org);
}

/// Rows of one case in case order, each terminated by '\n'.
inline std::string serialize_case_rows(const CaseView& c) {
    std::string out;
    for (const auto& e : c.events()) {
        append_csv_row(out, e);
        out.push_back('\n');
    }
    return out;
}

/// Size in bytes of a case's canonical rows.
inline std::size_t case_payload_bytes(const CaseView& c) {
    std::size_t n = 0;
    std::string row;
    for (const auto& e : c.events()) {
        row.clear();
        append_csv_row(row, e);
        n += row.size() + 1;
    }
    return n;
}

/// Parses a CSV log with a `case,timestamp,activity,org` header (columns in any order).
/// seq_hint is the 0-based record position.
inline EventLog parse_csv(std::string_view text, std::optional<std::string> source_org = std::nullopt) {
    if (text.size() >= 3 && static_cast<unsigned char>(text[0]) == 0xEF &&
        static_cast<unsigned char>(text[1]) == 0xBB && static_cast<unsigned char>(text[2]) == 0xBF) {
        text.remove_prefix(3);
    }
    std::vector<Event> events;
    std::optional<detail::CsvColumns> cols;
    std::uint64_t seq = 0;
    detail::for_each_line(text, [&](std::string_view line, std::size_t line_no) {
        if (!cols) {
            auto header = detail::split_csv_line(line);
            if (!header) {
                throw SchemaError("line 1: malformed header");
            }
            detail::CsvColumns c;
            c.width = header->size();
            bool has[4] = {false, false, false, false};
            for (std::size_t i = 0; i < header->size(); ++i) {
                const auto& h = (*header)[i];
                if (h == "case") {
                    c.case_ref = i, has[0] = true;
                } else if (h == "timestamp") {
                    c.timestamp = i, has[1] = true;
                } else if (h == "activity") {
                    c.activity = i, has[2] = true;
                } else if (h == "org") {
                    c.org = i, has[3] = true;
                }
            }
            static const char* names[4] = {"case", "timestamp", "activity", "org"};
            for (int i = 0; i < 4; ++i) {
                if (!has[i]) {
                    throw SchemaError(std::string("missing required column '") + names[i] + "'");
                }
            }
            cols = c;
            return;
        }
        if (line.empty()) {
            return;
        }
        events.push_back(detail::parse_csv_record(line, *cols, line_no, seq++));
    });
    if (!cols) {
        throw SchemaError("missing CSV header");
    }
    return EventLog(std::move(events), std::move(source_org));
}

/// Headerless rows in canonical column order, as carried inside segments.
inline std::vector<Event> parse_csv_rows(std::string_view text) {
    std::vector<Event> events;
    detail::CsvColumns cols;
    std::uint64_t seq = 0;
    detail::for_each_line(text, [&](std::string_view line, std::size_t line_no) {
        if (!line.empty()) {
            events.push_back(detail::parse_csv_record(line, cols, line_no, seq++));
        }
    });
    return events;
}

/// Canonical CSV with header. Records are emitted in seq_hint order so that
/// parsing the output reproduces the original record positions.
inline std::string serialize_csv(const EventLog& log) {
    auto events = log.events();
    std::stable_sort(events.begin(), events.end(),
                     [](const Event& a, const Event& b) { return a.seq_hint < b.seq_hint; });
    std::string out(kCsvHeader);
    out.push_back('\n');
    for (const auto& e : events) {
        append_csv_row(out, e);
        out.push_back('\n');
    }
    return out;
}

}  // namespace confine

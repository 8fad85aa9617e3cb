#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "confine/eventlog.hpp"

namespace confine {

enum class KeyField { case_ref };

/// Which attributes identify a case across organizations. Events are always
/// ordered by (timestamp, org, seq_hint) after merging.
struct MergeSchema {
    std::vector<KeyField> key_fields{KeyField::case_ref};

    void validate() const {
        if (key_fields.empty()) {
            throw ValidationError("merge schema needs at least one key field");
        }
    }
};

namespace detail {

inline std::string key_of(const CaseView& c, const MergeSchema& schema) {
    std::string key;
    for (auto f : schema.key_fields) {
        switch (f) {
            case KeyField::case_ref:
                key += c.case_ref();
                key.push_back('\x1f');
                break;
        }
    }
    return key;
}

}  // namespace detail

/// Combines partial traces of one case into a single chronologically ordered trace.
inline CaseView merge_case(const std::vector<CaseView>& parts, const MergeSchema& schema = {}) {
    schema.validate();
    if (parts.empty()) {
        throw MergeError("nothing to merge");
    }
    const std::string key = detail::key_of(parts.front(), schema);
    std::size_t total = 0;
    for (const auto& p : parts) {
        if (detail::key_of(p, schema) != key) {
            throw MergeError("cannot merge case '" + p.case_ref() + "' into '" + parts.front().case_ref() + "'");
        }
        total += p.size();
    }
    std::vector<Event> events;
    events.reserve(total);
    for (const auto& p : parts) {
        events.insert(events.end(), p.events().begin(), p.events().end());
    }
    std::sort(events.begin(), events.end(), EventOrder{});
    for (std::size_t i = 1; i < events.size(); ++i) {
        if (events[i] == events[i - 1]) {
            throw ConflictError("duplicate event " + events[i].activity + "@" + format_timestamp(events[i].timestamp) +
                                " from '" + events[i].org + "' in case '" + events[i].case_ref + "'");
        }
    }
    return CaseView(parts.front().case_ref(), std::move(events));
}

/// Tracks which organizations announced each case and which have delivered it.
/// A case is eligible for mining once every announced holder has delivered.
class EligibilityLedger {
public:
    void record_manifest(const std::string& org, const std::vector<std::string>& refs) {
        for (const auto& r : refs) {
            expected_[r].insert(org);
        }
    }

    /// Returns the case refs that became eligible with this delivery.
    std::vector<std::string> record_delivery(const std::string& org, const CaseView& c) {
        const auto& ref = c.case_ref();
        auto exp = expected_.find(ref);
        if (exp == expected_.end() || !exp->second.contains(org)) {
            throw ProtocolError("organization '" + org + "' never announced case '" + ref + "'");
        }
        auto& got = received_[ref];
        if (!got.insert(org).second) {
            throw ConflictError("case '" + ref + "' delivered twice by '" + org + "'");
        }
        if (got.size() == exp->second.size()) {
            return {ref};
        }
        return {};
    }

    bool is_eligible(const std::string& ref) const {
        auto exp = expected_.find(ref);
        auto got = received_.find(ref);
        return exp != expected_.end() && got != received_.end() && got->second.size() == exp->second.size();
    }

    /// Cases still waiting on at least one holder, sorted.
    std::vector<std::string> pending() const {
        std::vector<std::string> out;
        for (const auto& [ref, orgs] : expected_) {
            if (!is_eligible(ref)) {
                out.push_back(ref);
            }
        }
        return out;
    }

    /// Refs announced by one organization, sorted.
    std::vector<std::string> refs_of(const std::string& org) const {
        std::vector<std::string> out;
        for (const auto& [ref, orgs] : expected_) {
            if (orgs.contains(org)) {
                out.push_back(ref);
            }
        }
        return out;
    }

    const std::map<std::string, std::set<std::string>>& expected() const noexcept { return expected_; }
    const std::map<std::string, std::set<std::string>>& received() const noexcept { return received_; }

private:
    std::map<std::string, std::set<std::string>> expected_;
    std::map<std::string, std::set<std::string>> received_;
};

}  // namespace confine

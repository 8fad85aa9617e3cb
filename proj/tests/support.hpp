#pragma once

#include <memory>
#include <random>
#include <string>
#include <tuple>
#include <vector>

#include "confine/confine.hpp"

namespace confine::testing {

inline std::string source_path(const std::string& rel) { return std::string(CONFINE_SOURCE_DIR) + "/" + rel; }

inline std::string manifest_text() { return read_file(source_path("manifest/secure_miner.manifest")); }

/// RSA key generation dominates test time, so each binary shares one enclave.
inline std::shared_ptr<const EnclaveIdentity> shared_identity() {
    static auto id = std::make_shared<const EnclaveIdentity>(EnclaveIdentity::create(manifest_text()));
    return id;
}

inline EventLog sample_log(const std::string& which) {
    return load_log(source_path("tests/data/sample_" + which + ".csv"));
}

inline Timestamp ts(const std::string& iso) {
    auto t = parse_timestamp(iso);
    if (!t) {
        throw ParseError("bad test timestamp " + iso);
    }
    return *t;
}

/// Event content without seq_hint, which is positional and does not survive a
/// segment round trip.
inline std::vector<std::tuple<std::string, std::string, Timestamp, std::string>> rows(
    const std::vector<CaseView>& cases) {
    std::vector<std::tuple<std::string, std::string, Timestamp, std::string>> out;
    for (const auto& c : cases) {
        for (const auto& e : c.events()) {
            out.emplace_back(e.case_ref, e.activity, e.timestamp, e.org);
        }
    }
    return out;
}

/// Random log over `activities`: every case gets 1..max_len events with
/// strictly increasing timestamps.
inline EventLog random_log(std::mt19937_64& rng, std::size_t cases, const std::vector<std::string>& activities,
                           std::size_t max_len = 12, const std::string& org = "X") {
    std::vector<Event> events;
    std::uint64_t seq = 0;
    Timestamp base = ts("2023-01-01T00:00:00Z");
    for (std::size_t c = 0; c < cases; ++c) {
        std::string ref = "c" + std::to_string(c);
        std::size_t len = 1 + rng() % max_len;
        Timestamp t = base + std::chrono::minutes{static_cast<long>(rng() % 10000)};
        for (std::size_t i = 0; i < len; ++i) {
            t += std::chrono::seconds{1 + static_cast<long>(rng() % 3600)};
            events.push_back(Event{ref, activities[rng() % activities.size()], t, org, seq++});
        }
    }
    return EventLog(std::move(events));
}

}  // namespace confine::testing

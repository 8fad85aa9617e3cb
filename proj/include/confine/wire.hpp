#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "confine/attest.hpp"
#include "confine/eventlog.hpp"

namespace confine {

// Protocol messages -------------------------------------------------------------

struct CaseRefRequest {
    std::string miner_id;
};

struct CaseRefResponse {
    std::string org;
    std::vector<std::string> refs;
};

struct CaseRequest {
    std::uint64_t seg_size = 0;
    std::vector<std::string> refs;
    std::string callback;
};

struct AttestationChallenge {
    Nonce nonce{};
};

struct AttestationAnswer {
    AttestationReport report;
};

struct SegmentEnvelope {
    std::string org;
    std::uint64_t seq_no = 0;
    std::uint64_t total = 0;
    crypto::Bytes wrapped_key;
    crypto::Bytes iv;
    crypto::Bytes ciphertext;
    crypto::Bytes auth_tag;

    friend bool operator==(const SegmentEnvelope&, const SegmentEnvelope&) = default;
};

struct Ack {
    std::string status = "ok";  // ok | rejected | error
    std::string reason;

    bool ok() const { return status == "ok"; }

    static Ack accepted() { return {}; }
    static Ack rejected(std::string reason) { return {"rejected", std::move(reason)}; }
    static Ack error(std::string reason) { return {"error", std::move(reason)}; }
};

using json = nlohmann::ordered_json;

namespace detail {

template <typename F>
auto parse_message(std::string_view what, std::string_view text, F&& f) {
    try {
        return f(nlohmann::json::parse(text));
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string(what) + ": " + e.what());
    }
}

}  // namespace detail

inline std::string to_json(const CaseRefRequest& m) { return json{{"miner_id", m.miner_id}}.dump(); }
inline std::string to_json(const CaseRefResponse& m) { return json{{"org", m.org}, {"refs", m.refs}}.dump(); }
inline std::string to_json(const CaseRequest& m) {
    return json{{"seg_size", m.seg_size}, {"refs", m.refs}, {"callback", m.callback}}.dump();
}
inline std::string to_json(const AttestationChallenge& m) {
    return json{{"nonce", crypto::base64url_encode(m.nonce)}}.dump();
}
inline std::string to_json(const AttestationAnswer& m) { return json{{"report", report_to_json(m.report)}}.dump(); }
inline std::string to_json(const Ack& m) {
    json j{{"status", m.status}};
    if (!m.reason.empty()) {
        j["reason"] = m.reason;
    }
    return j.dump();
}
inline std::string to_json(const SegmentEnvelope& m) {
    return json{{"org", m.org},
                {"seq_no", m.seq_no},
                {"total", m.total},
                {"wrapped_key", crypto::base64url_encode(m.wrapped_key)},
                {"iv", crypto::base64url_encode(m.iv)},
                {"ciphertext", crypto::base64url_encode(m.ciphertext)},
                {"auth_tag", crypto::base64url_encode(m.auth_tag)}}
        .dump();
}

inline CaseRefRequest case_ref_request_from_json(std::string_view text) {
    return detail::parse_message("CaseRefRequest", text, [](const nlohmann::json& j) {
        return CaseRefRequest{j.at("miner_id").get<std::string>()};
    });
}

inline CaseRefResponse case_ref_response_from_json(std::string_view text) {
    return detail::parse_message("CaseRefResponse", text, [](const nlohmann::json& j) {
        return CaseRefResponse{j.at("org").get<std::string>(), j.at("refs").get<std::vector<std::string>>()};
    });
}

inline CaseRequest case_request_from_json(std::string_view text) {
    return detail::parse_message("CaseRequest", text, [](const nlohmann::json& j) {
        const auto& seg = j.at("seg_size");
        if (!seg.is_number_integer() || seg.get<std::int64_t>() <= 0) {
            throw ValidationError("seg_size must be a positive integer");
        }
        return CaseRequest{seg.get<std::uint64_t>(), j.at("refs").get<std::vector<std::string>>(),
                           j.at("callback").get<std::string>()};
    });
}

inline AttestationChallenge challenge_from_json(std::string_view text) {
    return detail::parse_message("AttestationChallenge", text, [](const nlohmann::json& j) {
        return AttestationChallenge{detail::fixed_from_b64<16>(j.at("nonce").get<std::string>(), "nonce")};
    });
}

inline AttestationAnswer answer_from_json(std::string_view text) {
    return detail::parse_message("AttestationAnswer", text, [](const nlohmann::json& j) {
        return AttestationAnswer{report_from_json(j.at("report"))};
    });
}

inline Ack ack_from_json(std::string_view text) {
    return detail::parse_message("Ack", text, [](const nlohmann::json& j) {
        Ack a;
        a.status = j.at("status").get<std::string>();
        a.reason = j.value("reason", "");
        return a;
    });
}

inline SegmentEnvelope envelope_from_json(std::string_view text) {
    return detail::parse_message("SegmentEnvelope", text, [](const nlohmann::json& j) {
        SegmentEnvelope e;
        e.org = j.at("org").get<std::string>();
        e.seq_no = j.at("seq_no").get<std::uint64_t>();
        e.total = j.at("total").get<std::uint64_t>();
        e.wrapped_key = crypto::base64url_decode(j.at("wrapped_key").get<std::string>());
        e.iv = crypto::base64url_decode(j.at("iv").get<std::string>());
        e.ciphertext = crypto::base64url_decode(j.at("ciphertext").get<std::string>());
        e.auth_tag = crypto::base64url_decode(j.at("auth_tag").get<std::string>());
        if (e.seq_no >= e.total) {
            throw ValidationError("seq_no must be below total");
        }
        return e;
    });
}

// Segmentation --------------------------------------------------------------------

/// A batch of whole cases. payload_size is the byte length of the canonical
/// headerless CSV rows the segment carries.
struct Segment {
    std::vector<CaseView> cases;
    std::size_t payload_size = 0;

    friend bool operator==(const Segment&, const Segment&) = default;
};

inline std::string serialize_segment(const Segment& seg) {
    std::string out;
    out.reserve(seg.payload_size);
    for (const auto& c : seg.cases) {
        out += serialize_case_rows(c);
    }
    return out;
}

inline Segment parse_segment_payload(std::string_view payload) {
    auto events = parse_csv_rows(payload);
    Segment seg;
    seg.payload_size = payload.size();
    std::vector<Event> current;
    auto flush = [&] {
        if (!current.empty()) {
            std::string ref = current.front().case_ref;
            seg.cases.emplace_back(std::move(ref), std::move(current));
            current.clear();
        }
    };
    for (auto& e : events) {
        if (!current.empty() && current.front().case_ref != e.case_ref) {
            flush();
        }
        current.push_back(std::move(e));
    }
    flush();
    return seg;
}

/// Greedy first-fit over the requested cases in sorted ref order. A case larger
/// than seg_size travels alone.
inline std::vector<Segment> segment_log(const EventLog& log, const std::vector<std::string>& refs,
                                        std::uint64_t seg_size) {
    if (seg_size == 0) {
        throw ValidationError("seg_size must be positive");
    }
    EventLog filtered = filter_cases(log, refs);
    std::vector<Segment> out;
    Segment cur;
    for (const auto& [ref, c] : filtered.cases()) {
        std::size_t bytes = case_payload_bytes(c);
        if (!cur.cases.empty() && cur.payload_size + bytes > seg_size) {
            out.push_back(std::move(cur));
            cur = Segment{};
        }
        cur.cases.push_back(c);
        cur.payload_size += bytes;
    }
    if (!cur.cases.empty()) {
        out.push_back(std::move(cur));
    }
    return out;
}

// Envelope encryption ---------------------------------------------------------------

namespace detail {

inline crypto::Bytes envelope_aad(const std::string& org, std::uint64_t seq_no, std::uint64_t total) {
    std::string aad = org;
    aad.push_back('\0');
    aad += std::to_string(seq_no);
    aad.push_back('/');
    aad += std::to_string(total);
    return crypto::to_bytes(aad);
}

}  // namespace detail

/// Fresh AES-256-GCM key per segment, wrapped with RSA-OAEP under enc_pub. The
/// envelope header (org, seq_no, total) is authenticated as associated data.
inline SegmentEnvelope encrypt_segment(const Segment& seg, const crypto::PublicKey& enc_pub, const std::string& org,
                                       std::uint64_t seq_no, std::uint64_t total) {
    if (seq_no >= total) {
        throw ValidationError("seq_no must be below total");
    }
    auto key = crypto::random_bytes(crypto::kAesKeyBytes);
    auto plain = crypto::to_bytes(serialize_segment(seg));
    auto aad = detail::envelope_aad(org, seq_no, total);
    auto sealed = crypto::aes_gcm_seal(key, plain, aad);
    SegmentEnvelope env;
    env.org = org;
    env.seq_no = seq_no;
    env.total = total;
    env.wrapped_key = crypto::oaep_encrypt(enc_pub, key);
    env.iv = std::move(sealed.iv);
    env.ciphertext = std::move(sealed.ciphertext);
    env.auth_tag = std::move(sealed.tag);
    return env;
}

/// Plaintext payload of an envelope; throws IntegrityError on any tampering.
inline std::string open_envelope(const SegmentEnvelope& env, const EnclaveIdentity& identity) {
    auto key = identity.unwrap(env.wrapped_key);
    crypto::Sealed sealed{env.iv, env.ciphertext, env.auth_tag};
    auto plain = crypto::aes_gcm_open(key, sealed, detail::envelope_aad(env.org, env.seq_no, env.total));
    return crypto::to_string(plain);
}

inline Segment decrypt_segment(const SegmentEnvelope& env, const EnclaveIdentity& identity) {
    return parse_segment_payload(open_envelope(env, identity));
}

}  // namespace confine

#pragma once

#include <algorithm>
#include <array>
#include <fstream>
#include <iterator>
#include <set>
#include <string>
#include <string_view>

#include "json.hpp"

#include "confine/crypto.hpp"

namespace confine {

using Measurement = crypto::Digest;
using Nonce = std::array<std::uint8_t, 16>;

inline Measurement compute_measurement(std::span<const std::uint8_t> code_manifest) {
    return crypto::sha256(code_manifest);
}

inline Measurement compute_measurement(std::string_view code_manifest) {
    return crypto::sha256(std::span(reinterpret_cast<const std::uint8_t*>(code_manifest.data()), code_manifest.size()));
}

inline Nonce make_nonce() {
    auto b = crypto::random_bytes(Nonce{}.size());
    Nonce n{};
    std::copy(b.begin(), b.end(), n.begin());
    return n;
}

/// Simulated enclave identity: code measurement plus an attestation (signing)
/// key pair and an encryption key pair. Only the public halves are exported.
class EnclaveIdentity {
public:
    static EnclaveIdentity create(std::string_view code_manifest) {
        return EnclaveIdentity(compute_measurement(code_manifest), crypto::KeyPair::generate(),
                               crypto::KeyPair::generate());
    }

    const Measurement& measurement() const noexcept { return measurement_; }
    const crypto::PublicKey& attestation_public_key() const noexcept { return attestation_.public_key(); }
    const crypto::PublicKey& encryption_public_key() const noexcept { return encryption_.public_key(); }

    crypto::Bytes sign(std::span<const std::uint8_t> msg) const { return crypto::sign_pss(attestation_, msg); }
    crypto::Bytes unwrap(std::span<const std::uint8_t> wrapped) const { return crypto::oaep_decrypt(encryption_, wrapped); }

private:
    EnclaveIdentity(Measurement m, crypto::KeyPair att, crypto::KeyPair enc)
        : measurement_(m), attestation_(std::move(att)), encryption_(std::move(enc)) {}

    Measurement measurement_;
    crypto::KeyPair attestation_;
    crypto::KeyPair encryption_;
};

struct AttestationReport {
    Measurement measurement{};
    Nonce nonce{};
    crypto::Bytes enc_pub;  // DER SubjectPublicKeyInfo
    crypto::Bytes att_pub;  // DER SubjectPublicKeyInfo
    crypto::Bytes sig;

    friend bool operator==(const AttestationReport&, const AttestationReport&) = default;
};

/// Bytes covered by the report signature: measurement || nonce || enc_pub.
inline crypto::Bytes signing_input(const AttestationReport& r) {
    crypto::Bytes out;
    out.reserve(r.measurement.size() + r.nonce.size() + r.enc_pub.size());
    out.insert(out.end(), r.measurement.begin(), r.measurement.end());
    out.insert(out.end(), r.nonce.begin(), r.nonce.end());
    out.insert(out.end(), r.enc_pub.begin(), r.enc_pub.end());
    return out;
}

inline AttestationReport make_report(const EnclaveIdentity& identity, const Nonce& nonce) {
    AttestationReport r;
    r.measurement = identity.measurement();
    r.nonce = nonce;
    r.enc_pub = identity.encryption_public_key().der();
    r.att_pub = identity.attestation_public_key().der();
    r.sig = identity.sign(signing_input(r));
    return r;
}

/// Measurements a provisioner accepts as genuine miner code.
struct ReferenceRegistry {
    std::set<Measurement> accepted_measurements;

    bool accepts(const Measurement& m) const { return accepted_measurements.contains(m); }
};

enum class RejectReason { bad_signature, stale_nonce, unknown_measurement };

inline std::string_view to_string(RejectReason r) {
    switch (r) {
        case RejectReason::bad_signature:
            return "bad_signature";
        case RejectReason::stale_nonce:
            return "stale_nonce";
        case RejectReason::unknown_measurement:
            return "unknown_measurement";
    }
    return "unknown";
}

struct Verdict {
    bool trusted = false;
    RejectReason reason = RejectReason::bad_signature;  // meaningful only when !trusted

    static Verdict ok() { return {true, RejectReason::bad_signature}; }
    static Verdict rejected(RejectReason r) { return {false, r}; }
};

/// Checks signature, freshness and measurement, in that order.
inline Verdict verify_report(const AttestationReport& report, const Nonce& expected_nonce,
                             const ReferenceRegistry& registry) {
    crypto::PublicKey att;
    try {
        att = crypto::PublicKey::from_der(report.att_pub);
    } catch (const CryptoError&) {
        return Verdict::rejected(RejectReason::bad_signature);
    }
    if (!crypto::verify_pss(att, signing_input(report), report.sig)) {
        return Verdict::rejected(RejectReason::bad_signature);
    }
    if (report.nonce != expected_nonce) {
        return Verdict::rejected(RejectReason::stale_nonce);
    }
    if (!registry.accepts(report.measurement)) {
        return Verdict::rejected(RejectReason::unknown_measurement);
    }
    return Verdict::ok();
}

// JSON --------------------------------------------------------------------------

namespace detail {

template <std::size_t N>
std::array<std::uint8_t, N> fixed_from_b64(const std::string& text, const char* field) {
    auto b = crypto::base64url_decode(text);
    if (b.size() != N) {
        throw ParseError(std::string("field '") + field + "' has wrong length");
    }
    std::array<std::uint8_t, N> out{};
    std::copy(b.begin(), b.end(), out.begin());
    return out;
}

}  // namespace detail

inline nlohmann::ordered_json report_to_json(const AttestationReport& r) {
    return {{"measurement", crypto::base64url_encode(r.measurement)},
            {"nonce", crypto::base64url_encode(r.nonce)},
            {"enc_pub", crypto::base64url_encode(r.enc_pub)},
            {"att_pub", crypto::base64url_encode(r.att_pub)},
            {"sig", crypto::base64url_encode(r.sig)}};
}

inline AttestationReport report_from_json(const nlohmann::json& j) {
    try {
        AttestationReport r;
        r.measurement = detail::fixed_from_b64<32>(j.at("measurement").get<std::string>(), "measurement");
        r.nonce = detail::fixed_from_b64<16>(j.at("nonce").get<std::string>(), "nonce");
        r.enc_pub = crypto::base64url_decode(j.at("enc_pub").get<std::string>());
        r.att_pub = crypto::base64url_decode(j.at("att_pub").get<std::string>());
        r.sig = crypto::base64url_decode(j.at("sig").get<std::string>());
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("attestation report: ") + e.what());
    }
}

inline nlohmann::ordered_json registry_to_json(const ReferenceRegistry& reg) {
    auto arr = nlohmann::ordered_json::array();
    for (const auto& m : reg.accepted_measurements) {
        arr.push_back(crypto::base64url_encode(m));
    }
    return {{"accepted_measurements", arr}};
}

inline ReferenceRegistry registry_from_json(const nlohmann::json& j) {
    try {
        ReferenceRegistry reg;
        for (const auto& m : j.at("accepted_measurements")) {
            reg.accepted_measurements.insert(detail::fixed_from_b64<32>(m.get<std::string>(), "measurement"));
        }
        return reg;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("registry: ") + e.what());
    }
}

inline ReferenceRegistry load_registry(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error("cannot open registry '" + path + "'");
    }
    try {
        return registry_from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("registry: ") + e.what());
    }
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error("cannot open '" + path + "'");
    }
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

}  // namespace confine

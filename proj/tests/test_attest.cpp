#include <gtest/gtest.h>

#include <random>

#include "support.hpp"

using namespace confine;

namespace {

ReferenceRegistry registry_for(const EnclaveIdentity& id) { return ReferenceRegistry{{id.measurement()}}; }

std::string hex(std::span<const std::uint8_t> b) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string out;
    for (auto v : b) {
        out.push_back(digits[v >> 4]);
        out.push_back(digits[v & 15]);
    }
    return out;
}

}  // namespace

TEST(Measurement, DistinctManifestsDiffer) {
    EXPECT_NE(compute_measurement("v1"), compute_measurement("v2"));
    EXPECT_EQ(compute_measurement("v1"), compute_measurement(std::string("v1")));
}

TEST(Measurement, CanonicalManifestIsPinned) {
    // Same digest as `sha256sum manifest/secure_miner.manifest`.
    EXPECT_EQ(hex(compute_measurement(confine::testing::manifest_text())),
              "84d62442479215fa701ea829bcc4f3a2e568795962aa3286fe365773c3d680d1");
    EXPECT_EQ(confine::testing::shared_identity()->measurement(),
              compute_measurement(confine::testing::manifest_text()));
}

TEST(Attestation, GenuineReportIsTrusted) {
    const auto& id = *confine::testing::shared_identity();
    auto nonce = make_nonce();
    auto r = make_report(id, nonce);
    auto v = verify_report(r, nonce, registry_for(id));
    EXPECT_TRUE(v.trusted);
    EXPECT_EQ(r.enc_pub, id.encryption_public_key().der());
}

TEST(Attestation, FreshNonceGivesFreshSignature) {
    const auto& id = *confine::testing::shared_identity();
    auto a = make_report(id, make_nonce());
    auto b = make_report(id, make_nonce());
    EXPECT_NE(a.nonce, b.nonce);
    EXPECT_NE(a.sig, b.sig);
}

TEST(Attestation, UnknownMeasurement) {
    const auto& id = *confine::testing::shared_identity();
    auto nonce = make_nonce();
    ReferenceRegistry other{{compute_measurement("v2")}};
    auto v = verify_report(make_report(id, nonce), nonce, other);
    EXPECT_FALSE(v.trusted);
    EXPECT_EQ(v.reason, RejectReason::unknown_measurement);
}

TEST(Attestation, ReplayedAnswerIsStale) {
    const auto& id = *confine::testing::shared_identity();
    auto reg = registry_for(id);
    auto first = make_nonce();
    auto old_answer = make_report(id, first);
    ASSERT_TRUE(verify_report(old_answer, first, reg).trusted);
    auto second = make_nonce();
    auto v = verify_report(old_answer, second, reg);
    EXPECT_FALSE(v.trusted);
    EXPECT_EQ(v.reason, RejectReason::stale_nonce);
}

TEST(Attestation, ForgedReportWithOtherKey) {
    const auto& id = *confine::testing::shared_identity();
    auto nonce = make_nonce();
    auto r = make_report(id, nonce);
    auto impostor = crypto::KeyPair::generate(2048);
    r.att_pub = impostor.public_key().der();
    r.sig = crypto::sign_pss(impostor, signing_input(r));
    // The registry pins measurements, not attestation keys.
    EXPECT_TRUE(verify_report(r, nonce, registry_for(id)).trusted);
    r.measurement = compute_measurement("patched miner");
    r.sig = crypto::sign_pss(impostor, signing_input(r));
    EXPECT_EQ(verify_report(r, nonce, registry_for(id)).reason, RejectReason::unknown_measurement);
}

TEST(AttestationProperty, AnySingleBitFlipIsRejected) {
    const auto& id = *confine::testing::shared_identity();
    auto reg = registry_for(id);
    auto nonce = make_nonce();
    const auto genuine = make_report(id, nonce);
    std::mt19937_64 rng(41);
    int rejected = 0;
    const int trials = 1200;
    for (int i = 0; i < trials; ++i) {
        auto r = genuine;
        auto flip = [&](auto& field) {
            auto pos = rng() % field.size();
            field[pos] ^= static_cast<std::uint8_t>(1u << (rng() % 8));
        };
        switch (i % 5) {
            case 0:
                flip(r.measurement);
                break;
            case 1:
                flip(r.nonce);
                break;
            case 2:
                flip(r.enc_pub);
                break;
            case 3:
                flip(r.att_pub);
                break;
            default:
                flip(r.sig);
                break;
        }
        auto v = verify_report(r, nonce, reg);
        if (!v.trusted) {
            ++rejected;
        }
        EXPECT_FALSE(v.trusted) << "field " << i % 5;
    }
    EXPECT_EQ(rejected, trials);
}

TEST(Attestation, AlternateKeyEncodingIsRejected) {
    const auto& id = *confine::testing::shared_identity();
    auto nonce = make_nonce();
    auto r = make_report(id, nonce);
    r.att_pub[17] ^= 0x40;
    auto v = verify_report(r, nonce, registry_for(id));
    EXPECT_FALSE(v.trusted);
    EXPECT_EQ(v.reason, RejectReason::bad_signature);
}

TEST(Attestation, ReportJsonRoundTrip) {
    const auto& id = *confine::testing::shared_identity();
    auto r = make_report(id, make_nonce());
    EXPECT_EQ(report_from_json(report_to_json(r)), r);
    auto j = report_to_json(r);
    j["nonce"] = crypto::base64url_encode(crypto::Bytes(15));
    EXPECT_THROW(report_from_json(j), ParseError);
    j.erase("nonce");
    EXPECT_THROW(report_from_json(j), ParseError);
}

TEST(Attestation, RegistryJsonRoundTrip) {
    ReferenceRegistry reg{{compute_measurement("v1"), compute_measurement("v2")}};
    auto back = registry_from_json(registry_to_json(reg));
    EXPECT_EQ(back.accepted_measurements, reg.accepted_measurements);
    EXPECT_THROW(registry_from_json(nlohmann::json::object()), ParseError);
}

TEST(AttestationProperty, NoncesAreUnique) {
    std::set<Nonce> seen;
    for (int i = 0; i < 10000; ++i) {
        seen.insert(make_nonce());
    }
    EXPECT_EQ(seen.size(), 10000u);
}

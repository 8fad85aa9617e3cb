#include <gtest/gtest.h>

#include "support.hpp"

using namespace confine;
using confine::testing::sample_log;

namespace {

std::shared_ptr<const EnclaveIdentity> id() { return confine::testing::shared_identity(); }

ProvisionerService hospital(const ReferenceRegistry& reg = ReferenceRegistry{{id()->measurement()}}) {
    return ProvisionerService(ProvisionerConfig{"H", sample_log("hospital"), reg, {"m1"}, 3});
}

AttestationAnswer answer_for(const AttestationChallenge& ch) { return AttestationAnswer{make_report(*id(), ch.nonce)}; }

}  // namespace

TEST(Provisioner, ServesCaseRefs) {
    auto p = hospital();
    auto resp = p.serve_case_refs(CaseRefRequest{"m1"});
    EXPECT_EQ(resp.org, "H");
    EXPECT_EQ(resp.refs, (std::vector<std::string>{"312", "711"}));
    EXPECT_THROW(p.serve_case_refs(CaseRefRequest{"m2"}), ForbiddenError);
}

TEST(Provisioner, EmptyLogHasNoRefs) {
    ProvisionerService p(ProvisionerConfig{"E", EventLog{}, ReferenceRegistry{{id()->measurement()}}, {"m1"}, 3});
    EXPECT_TRUE(p.serve_case_refs(CaseRefRequest{"m1"}).refs.empty());
}

TEST(Provisioner, EmptyRegistryRejected) {
    EXPECT_THROW(ProvisionerService(ProvisionerConfig{"H", sample_log("hospital"), {}, {"m1"}, 3}), ValidationError);
}

TEST(Provisioner, CaseRequestIssuesNonce) {
    auto p = hospital();
    auto ch = p.handle_case_request(CaseRequest{2u << 20, {"312", "711"}, "cb"});
    EXPECT_EQ(ch.nonce.size(), 16u);
    EXPECT_EQ(p.pending_requests(), 1u);
    auto ch2 = p.handle_case_request(CaseRequest{2u << 20, {"312"}, "cb"});
    EXPECT_NE(ch.nonce, ch2.nonce);
}

TEST(Provisioner, UnknownRefs) {
    auto p = hospital();
    try {
        p.handle_case_request(CaseRequest{1024, {"312", "999"}, "cb"});
        FAIL() << "expected UnknownCasesError";
    } catch (const UnknownCasesError& e) {
        EXPECT_EQ(e.missing(), std::vector<std::string>{"999"});
    }
    EXPECT_THROW(p.handle_case_request(CaseRequest{0, {"312"}, "cb"}), ValidationError);
    EXPECT_EQ(p.pending_requests(), 0u);
}

TEST(Provisioner, TrustedVerdictProducesOrderedEnvelopes) {
    auto p = hospital();
    auto h = sample_log("hospital");
    const std::uint64_t seg = 600;
    auto expected = segment_log(h, {"312", "711"}, seg);
    ASSERT_GE(expected.size(), 2u);
    auto ch = p.handle_case_request(CaseRequest{seg, {"312", "711"}, "cb"});
    auto out = p.handle_attestation(answer_for(ch));
    ASSERT_TRUE(out.ack.ok());
    ASSERT_TRUE(out.transfer);
    EXPECT_EQ(out.transfer->callback, "cb");
    ASSERT_EQ(out.transfer->envelopes.size(), expected.size());
    for (std::size_t i = 0; i < expected.size(); ++i) {
        const auto& env = out.transfer->envelopes[i];
        EXPECT_EQ(env.org, "H");
        EXPECT_EQ(env.seq_no, i);
        EXPECT_EQ(env.total, expected.size());
        EXPECT_EQ(confine::testing::rows(decrypt_segment(env, *id()).cases), confine::testing::rows(expected[i].cases));
    }
    EXPECT_EQ(p.pending_requests(), 0u);
}

TEST(Provisioner, SegSizeAboveBreakpointGivesOneEnvelope) {
    auto p = hospital();
    auto h = sample_log("hospital");
    std::size_t total = 0;
    for (const auto& [_, c] : h.cases()) {
        total += case_payload_bytes(c);
    }
    auto ch = p.handle_case_request(CaseRequest{total, case_refs(h), "cb"});
    auto out = p.handle_attestation(answer_for(ch));
    ASSERT_TRUE(out.transfer);
    EXPECT_EQ(out.transfer->envelopes.size(), 1u);
}

TEST(Provisioner, UnknownMeasurementGetsNothing) {
    auto p = hospital(ReferenceRegistry{{compute_measurement("v2")}});
    auto ch = p.handle_case_request(CaseRequest{600, {"312", "711"}, "cb"});
    auto out = p.handle_attestation(answer_for(ch));
    EXPECT_EQ(out.ack.status, "rejected");
    EXPECT_EQ(out.ack.reason, "unknown_measurement");
    EXPECT_FALSE(out.transfer);
}

TEST(Provisioner, BadSignatureAndStaleNonceGetNothing) {
    auto p = hospital();
    auto ch = p.handle_case_request(CaseRequest{600, {"312"}, "cb"});
    auto ans = answer_for(ch);
    ans.report.sig[0] ^= 1;
    auto out = p.handle_attestation(ans);
    EXPECT_EQ(out.ack.reason, "bad_signature");
    EXPECT_FALSE(out.transfer);

    // A challenge is single-use, whatever its verdict.
    auto replay = p.handle_attestation(answer_for(ch));
    EXPECT_EQ(replay.ack.reason, "stale_nonce");
    EXPECT_FALSE(replay.transfer);

    auto fresh = p.handle_case_request(CaseRequest{600, {"312"}, "cb"});
    auto good = answer_for(fresh);
    ASSERT_TRUE(p.handle_attestation(good).transfer);
    EXPECT_FALSE(p.handle_attestation(good).transfer);
}

TEST(Deliver, PushesInOrder) {
    Transfer t{"cb", {}};
    for (std::uint64_t i = 0; i < 4; ++i) {
        t.envelopes.push_back(SegmentEnvelope{"H", i, 4, {}, {}, {}, {}});
    }
    std::vector<std::uint64_t> seen;
    auto report = deliver(
        t,
        [&](const std::string& cb, const SegmentEnvelope& env) {
            EXPECT_EQ(cb, "cb");
            seen.push_back(env.seq_no);
            return Ack::accepted();
        },
        3);
    EXPECT_TRUE(report.complete());
    EXPECT_EQ(seen, (std::vector<std::uint64_t>{0, 1, 2, 3}));
}

TEST(Deliver, RetriesTransportFailures) {
    Transfer t{"cb", {SegmentEnvelope{"H", 0, 2, {}, {}, {}, {}}, SegmentEnvelope{"H", 1, 2, {}, {}, {}, {}}}};
    int calls = 0;
    auto flaky = [&](const std::string&, const SegmentEnvelope&) {
        if (++calls % 3 != 0) {
            throw std::runtime_error("connection reset");
        }
        return Ack::accepted();
    };
    auto report = deliver(t, flaky, 3);
    EXPECT_TRUE(report.complete());
    EXPECT_EQ(calls, 6);

    int attempts = 0;
    auto dead = [&](const std::string&, const SegmentEnvelope&) -> Ack {
        ++attempts;
        throw std::runtime_error("connection refused");
    };
    report = deliver(t, dead, 3);
    EXPECT_FALSE(report.complete());
    EXPECT_EQ(report.delivered, 0u);
    EXPECT_EQ(attempts, 4);
    ASSERT_TRUE(report.error);
    EXPECT_NE(report.error->find("connection refused"), std::string::npos);
}

TEST(Deliver, NegativeAckAborts) {
    Transfer t{"cb", {SegmentEnvelope{"H", 0, 2, {}, {}, {}, {}}, SegmentEnvelope{"H", 1, 2, {}, {}, {}, {}}}};
    int calls = 0;
    auto report = deliver(
        t,
        [&](const std::string&, const SegmentEnvelope& env) {
            ++calls;
            return env.seq_no == 0 ? Ack::error("integrity") : Ack::accepted();
        },
        3);
    EXPECT_EQ(calls, 1);
    EXPECT_EQ(report.delivered, 0u);
    EXPECT_FALSE(report.complete());
}

#pragma once

#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "confine/attest.hpp"
#include "confine/eventlog.hpp"
#include "confine/wire.hpp"

namespace confine {

struct ProvisionerConfig {
    std::string org_id;
    EventLog log;
    ReferenceRegistry registry;
    std::set<std::string> allowed_miners;
    int retries = 3;
};

/// Segments ready to be pushed to a miner callback, in seq_no order.
struct Transfer {
    std::string callback;
    std::vector<SegmentEnvelope> envelopes;
};

struct AttestationOutcome {
    Ack ack;
    std::optional<Transfer> transfer;
};

/// Sends one envelope to `callback` and returns the receiver's Ack. Throws on
/// transport failure.
using EnvelopePusher = std::function<Ack(const std::string& callback, const SegmentEnvelope&)>;

struct DeliveryReport {
    std::size_t delivered = 0;
    std::size_t total = 0;
    std::optional<std::string> error;

    bool complete() const { return !error && delivered == total; }
};

/// Pushes envelopes in order, retrying each up to `retries` extra times on
/// transport failure. A negative Ack aborts the transfer.
inline DeliveryReport deliver(const Transfer& transfer, const EnvelopePusher& push, int retries) {
    DeliveryReport report;
    report.total = transfer.envelopes.size();
    for (const auto& env : transfer.envelopes) {
        std::optional<Ack> ack;
        std::string last_error;
        for (int attempt = 0; attempt <= retries && !ack; ++attempt) {
            try {
                ack = push(transfer.callback, env);
            } catch (const std::exception& e) {
                last_error = e.what();
            }
        }
        if (!ack) {
            report.error = "callback unreachable for segment " + std::to_string(env.seq_no) + ": " + last_error;
            return report;
        }
        if (!ack->ok()) {
            report.error = "segment " + std::to_string(env.seq_no) + " refused: " + ack->status + " " + ack->reason;
            return report;
        }
        ++report.delivered;
    }
    return report;
}

/// Log Recorder + Log Provider of one organization. Transport-agnostic; the
/// HTTP binding lives in http.hpp.
class ProvisionerService {
public:
    explicit ProvisionerService(ProvisionerConfig config) : config_(std::move(config)) {
        if (config_.registry.accepted_measurements.empty()) {
            throw ValidationError("provisioner '" + config_.org_id + "' has an empty reference registry");
        }
    }

    const std::string& org() const noexcept { return config_.org_id; }
    const ProvisionerConfig& config() const noexcept { return config_; }

    CaseRefResponse serve_case_refs(const CaseRefRequest& req) const {
        if (!config_.allowed_miners.contains(req.miner_id)) {
            throw ForbiddenError("miner '" + req.miner_id + "' is not allowed");
        }
        return CaseRefResponse{config_.org_id, case_refs(config_.log)};
    }

    AttestationChallenge handle_case_request(const CaseRequest& req) {
        if (req.seg_size == 0) {
            throw ValidationError("seg_size must be positive");
        }
        std::vector<std::string> missing;
        for (const auto& r : req.refs) {
            if (!config_.log.find(r)) {
                missing.push_back(r);
            }
        }
        if (!missing.empty()) {
            std::string msg = "unknown case references:";
            for (const auto& m : missing) {
                msg += " " + m;
            }
            throw UnknownCasesError(msg, std::move(missing));
        }
        std::lock_guard lock(mutex_);
        Nonce nonce;
        do {
            nonce = make_nonce();
        } while (pending_.contains(nonce));
        pending_.emplace(nonce, req);
        return AttestationChallenge{nonce};
    }

    /// Verifies the report against the pending challenge it echoes. On a
    /// trusted verdict the requested cases are segmented and encrypted for the
    /// report's encryption key; nothing is produced otherwise.
    AttestationOutcome handle_attestation(const AttestationAnswer& answer) {
        CaseRequest req;
        {
            std::lock_guard lock(mutex_);
            auto it = pending_.find(answer.report.nonce);
            if (it == pending_.end()) {
                return {Ack::rejected(std::string(to_string(RejectReason::stale_nonce))), std::nullopt};
            }
            req = std::move(it->second);
            pending_.erase(it);
        }
        Verdict v = verify_report(answer.report, answer.report.nonce, config_.registry);
        if (!v.trusted) {
            return {Ack::rejected(std::string(to_string(v.reason))), std::nullopt};
        }
        auto enc_pub = crypto::PublicKey::from_der(answer.report.enc_pub);
        auto segments = segment_log(config_.log, req.refs, req.seg_size);
        Transfer t;
        t.callback = req.callback;
        t.envelopes.reserve(segments.size());
        for (std::size_t i = 0; i < segments.size(); ++i) {
            t.envelopes.push_back(encrypt_segment(segments[i], enc_pub, config_.org_id, i, segments.size()));
        }
        return {Ack::accepted(), std::move(t)};
    }

    std::size_t pending_requests() const {
        std::lock_guard lock(mutex_);
        return pending_.size();
    }

private:
    ProvisionerConfig config_;
    mutable std::mutex mutex_;
    std::map<Nonce, CaseRequest> pending_;
};

}  // namespace confine

#pragma once

#include <algorithm>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <exception>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "confine/attest.hpp"
#include "confine/hminer.hpp"
#include "confine/merge.hpp"
#include "confine/provisioner.hpp"
#include "confine/wire.hpp"

namespace confine {

inline constexpr std::size_t KiB = 1024;
inline constexpr std::size_t MiB = 1024 * 1024;

enum class Stage { init, attest, transmit, compute };

inline std::string_view to_string(Stage s) {
    switch (s) {
        case Stage::init:
            return "init";
        case Stage::attest:
            return "attest";
        case Stage::transmit:
            return "transmit";
        case Stage::compute:
            return "compute";
    }
    return "?";
}

struct MetricSample {
    std::int64_t t_ms = 0;
    Stage stage = Stage::init;
    std::size_t in_use = 0;
    std::size_t peak = 0;
};

inline std::string metrics_to_csv(const std::vector<MetricSample>& samples) {
    std::ostringstream out;
    out << "t_ms,stage,in_use_bytes,peak_bytes\n";
    for (const auto& s : samples) {
        out << s.t_ms << ',' << to_string(s.stage) << ',' << s.in_use << ',' << s.peak << '\n';
    }
    return out.str();
}

/// Logical memory accounting of the simulated enclave. Every charge or release
/// is recorded as a metric sample tagged with the current protocol stage.
class EnclaveBudget {
public:
    explicit EnclaveBudget(std::size_t capacity) : capacity_(capacity), start_(std::chrono::steady_clock::now()) {}

    void charge(std::size_t bytes) {
        std::lock_guard lock(mutex_);
        if (bytes > capacity_ - std::min(in_use_, capacity_)) {
            throw EnclaveMemoryExceeded("enclave memory exceeded: requested " + std::to_string(bytes) + " bytes with " +
                                            std::to_string(in_use_) + " of " + std::to_string(capacity_) + " in use",
                                        bytes, in_use_, capacity_);
        }
        in_use_ += bytes;
        peak_ = std::max(peak_, in_use_);
        record();
    }

    void release(std::size_t bytes) {
        std::lock_guard lock(mutex_);
        if (bytes > in_use_) {
            throw std::logic_error("enclave accounting: releasing " + std::to_string(bytes) + " bytes with only " +
                                   std::to_string(in_use_) + " in use");
        }
        in_use_ -= bytes;
        record();
    }

    void set_stage(Stage s) {
        std::lock_guard lock(mutex_);
        stage_ = s;
        record();
    }

    std::size_t capacity() const noexcept { return capacity_; }

    std::size_t in_use() const {
        std::lock_guard lock(mutex_);
        return in_use_;
    }

    std::size_t peak() const {
        std::lock_guard lock(mutex_);
        return peak_;
    }

    std::vector<MetricSample> samples() const {
        std::lock_guard lock(mutex_);
        return samples_;
    }

private:
    void record() {
        auto t = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start_);
        samples_.push_back(MetricSample{t.count(), stage_, in_use_, peak_});
    }

    std::size_t capacity_;
    std::size_t in_use_ = 0;
    std::size_t peak_ = 0;
    Stage stage_ = Stage::init;
    std::chrono::steady_clock::time_point start_;
    std::vector<MetricSample> samples_;
    mutable std::mutex mutex_;
};

using SegmentSink = std::function<Ack(const SegmentEnvelope&)>;

/// Miner-side view of one provisioner, independent of transport.
class ProvisionerLink {
public:
    virtual ~ProvisionerLink() = default;
    virtual std::string name() const = 0;
    virtual CaseRefResponse case_refs(const CaseRefRequest& req) = 0;
    virtual AttestationChallenge request_cases(const CaseRequest& req) = 0;
    virtual Ack attest(const AttestationAnswer& answer) = 0;
    /// Where pushed envelopes end up; transports that deliver in-process use it.
    virtual void bind(SegmentSink) {}
    /// Called once when the miner starts draining its queue.
    virtual void on_transmission_start() {}
};

/// Log Receiver queue. Envelopes may arrive from any thread; their ciphertext
/// is charged to the enclave budget while queued.
class SegmentReceiver {
public:
    explicit SegmentReceiver(EnclaveBudget& budget) : budget_(budget) {}

    void expect(const std::string& org) {
        std::lock_guard lock(mutex_);
        orgs_[org];
    }

    Ack push(const SegmentEnvelope& env) {
        std::lock_guard lock(mutex_);
        if (halted_) {
            return Ack::error("session halted");
        }
        auto it = orgs_.find(env.org);
        if (it == orgs_.end()) {
            return Ack::error("unexpected sender '" + env.org + "'");
        }
        auto& st = it->second;
        if (env.seq_no >= env.total || (st.total && *st.total != env.total)) {
            return Ack::error("inconsistent segment numbering");
        }
        if (!st.seen.insert(env.seq_no).second) {
            return Ack::accepted();
        }
        st.total = env.total;
        try {
            budget_.charge(env.ciphertext.size());
        } catch (const EnclaveMemoryExceeded&) {
            halted_ = true;
            failure_ = std::current_exception();
            cv_.notify_all();
            return Ack::error("enclave memory exceeded");
        }
        queue_.push_back(env);
        cv_.notify_all();
        return Ack::accepted();
    }

    /// Blocks until an envelope is available, the session halted, or the
    /// timeout passes without progress. Rethrows the halting error.
    std::optional<SegmentEnvelope> pop(std::chrono::milliseconds timeout) {
        std::unique_lock lock(mutex_);
        cv_.wait_for(lock, timeout, [&] { return halted_ || !queue_.empty(); });
        if (failure_) {
            std::rethrow_exception(failure_);
        }
        if (queue_.empty()) {
            return std::nullopt;
        }
        SegmentEnvelope env = std::move(queue_.front());
        queue_.pop_front();
        return env;
    }

    /// Every expected org announced a total and all its envelopes arrived.
    bool all_arrived() const {
        std::lock_guard lock(mutex_);
        for (const auto& [_, st] : orgs_) {
            if (!st.total || st.seen.size() != *st.total) {
                return false;
            }
        }
        return true;
    }

    bool empty() const {
        std::lock_guard lock(mutex_);
        return queue_.empty();
    }

    void halt(std::exception_ptr e) {
        std::lock_guard lock(mutex_);
        halted_ = true;
        if (!failure_) {
            failure_ = e;
        }
        cv_.notify_all();
    }

private:
    struct OrgState {
        std::optional<std::uint64_t> total;
        std::set<std::uint64_t> seen;
    };

    EnclaveBudget& budget_;
    std::map<std::string, OrgState> orgs_;
    std::deque<SegmentEnvelope> queue_;
    bool halted_ = false;
    std::exception_ptr failure_;
    mutable std::mutex mutex_;
    std::condition_variable cv_;
};

enum class BatchMode { single_batch, incremental };

struct MinerOptions {
    std::string miner_id = "miner1";
    std::uint64_t seg_size = 2 * MiB;
    BatchMode mode = BatchMode::single_batch;
    std::size_t batch_cases = 100;
    MinerConfig mining;
    MergeSchema schema;
    std::size_t capacity = 128 * MiB;
    bool compute = true;
    std::chrono::milliseconds timeout{30000};
    /// Base URL at which provisioners push segments (`{callback}/segments`).
    std::string callback = "loopback";
};

/// Bytes that left the miner, by channel. Used to audit the secrecy boundary.
struct Emission {
    std::string channel;
    std::string bytes;
};

/// Secure Miner session: Log Requester, Log Receiver, Log Manager and Log
/// Elaborator around one simulated enclave identity and memory budget.
class MinerSession {
public:
    MinerSession(MinerOptions options, std::shared_ptr<const EnclaveIdentity> identity,
                 std::vector<std::unique_ptr<ProvisionerLink>> links, std::size_t image_bytes = 0)
        : options_(std::move(options)),
          identity_(std::move(identity)),
          links_(std::move(links)),
          budget_(options_.capacity),
          receiver_(budget_) {
        options_.schema.validate();
        options_.mining.validate();
        if (options_.seg_size == 0) {
            throw ValidationError("seg_size must be positive");
        }
        if (options_.mode == BatchMode::incremental && options_.batch_cases == 0) {
            throw ValidationError("incremental mode needs batch_cases > 0");
        }
        budget_.charge(image_bytes);
        for (auto& l : links_) {
            l->bind([this](const SegmentEnvelope& env) { return accept_segment(env); });
        }
    }

    MinerSession(const MinerSession&) = delete;
    MinerSession& operator=(const MinerSession&) = delete;

    /// Callback entry point for pushed envelopes (any thread).
    Ack accept_segment(const SegmentEnvelope& env) {
        Ack ack = receiver_.push(env);
        emit("ack", to_json(ack));
        return ack;
    }

    void run_initialization() {
        budget_.set_stage(Stage::init);
        std::map<std::string, ProvisionerLink*> by_org;
        EligibilityLedger ledger;
        for (auto& link : links_) {
            CaseRefRequest req{options_.miner_id};
            emit("request:" + link->name(), to_json(req));
            CaseRefResponse resp;
            try {
                resp = link->case_refs(req);
            } catch (const std::exception& e) {
                throw InitError("provisioner '" + link->name() + "' failed initialization: " + e.what());
            }
            if (by_org.contains(resp.org)) {
                throw InitError("two provisioners claim organization '" + resp.org + "'");
            }
            by_org[resp.org] = link.get();
            ledger.record_manifest(resp.org, resp.refs);
            for (const auto& r : resp.refs) {
                ledger_bytes_ += 2 * (r.size() + resp.org.size());
            }
        }
        // Expected and received holder sets both live inside the enclave.
        budget_.charge(ledger_bytes_);
        by_org_ = std::move(by_org);
        ledger_ = std::move(ledger);
        initialized_ = true;
        baseline_ = budget_.in_use();
    }

    void run_acquisition() {
        if (!initialized_) {
            throw ProtocolError("acquisition before initialization");
        }
        budget_.set_stage(Stage::attest);
        std::vector<std::string> active;
        for (const auto& [org, link] : by_org_) {
            auto refs = ledger_.refs_of(org);
            if (refs.empty()) {
                continue;
            }
            receiver_.expect(org);
            CaseRequest req{options_.seg_size, refs, options_.callback};
            emit("request:" + org, to_json(req));
            AttestationChallenge challenge = link->request_cases(req);
            AttestationAnswer answer{make_report(*identity_, challenge.nonce)};
            emit("request:" + org, to_json(answer));
            Ack ack = link->attest(answer);
            if (!ack.ok()) {
                throw AttestationRejected("provisioner '" + org + "' rejected attestation: " + ack.reason, org,
                                          ack.reason);
            }
            active.push_back(org);
        }

        budget_.set_stage(Stage::transmit);
        for (const auto& org : active) {
            by_org_.at(org)->on_transmission_start();
        }
        while (!(receiver_.all_arrived() && receiver_.empty())) {
            auto env = receiver_.pop(options_.timeout);
            if (!env) {
                auto stragglers = ledger_.pending();
                throw IncompleteCasesError("timed out waiting for " + std::to_string(stragglers.size()) + " cases",
                                           std::move(stragglers));
            }
            try {
                process(*env);
            } catch (const IntegrityError&) {
                ++discarded_segments_;
            } catch (...) {
                receiver_.halt(std::current_exception());
                throw;
            }
        }
        auto stragglers = ledger_.pending();
        if (!stragglers.empty()) {
            throw IncompleteCasesError(std::to_string(stragglers.size()) + " cases incomplete after all segments",
                                       std::move(stragglers));
        }
        if (!options_.compute) {
            release_retained();
            flush_batch();
        }
        acquired_ = true;
    }

    const HeuristicsNet& run_computation() {
        if (!acquired_) {
            throw ProtocolError("computation before acquisition");
        }
        if (!options_.compute) {
            throw ProtocolError("computation disabled for this session");
        }
        budget_.set_stage(Stage::compute);
        if (options_.mode == BatchMode::incremental) {
            flush_batch();
        } else {
            add_to_stats(retained_);
            release_retained();
        }
        if (stats_.case_count == 0) {
            throw Error("no eligible cases to mine");
        }
        net_ = build_net(stats_, options_.mining);
        emit("export:net", serialize_net_json(*net_));
        return *net_;
    }

    const HeuristicsNet& run() {
        run_initialization();
        run_acquisition();
        return run_computation();
    }

    /// Metrics CSV as exported to the host.
    std::string export_metrics() {
        auto csv = metrics_to_csv(budget_.samples());
        emit("export:metrics", csv);
        return csv;
    }

    const std::optional<HeuristicsNet>& net() const noexcept { return net_; }
    const EnclaveBudget& budget() const noexcept { return budget_; }
    const EligibilityLedger& ledger() const noexcept { return ledger_; }
    std::size_t eligible_cases() const noexcept { return eligible_; }
    std::size_t discarded_segments() const noexcept { return discarded_segments_; }
    std::size_t max_resident_segments() const noexcept { return max_resident_segments_; }
    /// Budget in use once initialization completed (image plus ledger).
    std::size_t baseline() const noexcept { return baseline_; }

    /// Digest over every merged case (ref and canonical rows). Lets callers
    /// compare merged case sets without exporting the cases themselves.
    std::string merged_fingerprint() const {
        std::string acc;
        for (const auto& [ref, digest] : merged_digests_) {
            acc += ref;
            acc.push_back('\0');
            acc += crypto::base64url_encode(digest);
            acc.push_back('\n');
        }
        return crypto::base64url_encode(crypto::sha256(crypto::to_bytes(acc)));
    }

    std::vector<Emission> emissions() const {
        std::lock_guard lock(emit_mutex_);
        return emissions_;
    }

    void set_emission_tap(std::function<void(const Emission&)> tap) { tap_ = std::move(tap); }

private:
    void emit(std::string channel, std::string bytes) {
        std::lock_guard lock(emit_mutex_);
        emissions_.push_back(Emission{std::move(channel), std::move(bytes)});
        if (tap_) {
            tap_(emissions_.back());
        }
    }

    void process(const SegmentEnvelope& env) {
        const std::size_t cipher_bytes = env.ciphertext.size();
        std::string plain;
        try {
            plain = open_envelope(env, *identity_);
        } catch (const IntegrityError&) {
            budget_.release(cipher_bytes);
            throw;
        }
        // Ciphertext and plaintext are both resident until decryption completes.
        budget_.charge(plain.size());
        ++resident_segments_;
        max_resident_segments_ = std::max(max_resident_segments_, resident_segments_);
        budget_.release(cipher_bytes);
        Segment seg = parse_segment_payload(plain);
        plain.clear();
        plain.shrink_to_fit();
        // The segment's bytes now live on as stored case parts; its charge
        // carries over to them.
        for (auto& c : seg.cases) {
            std::size_t bytes = case_payload_bytes(c);
            auto newly = ledger_.record_delivery(env.org, c);
            auto& parts = parts_[c.case_ref()];
            parts.push_back(std::move(c));
            part_bytes_[parts.back().case_ref()] += bytes;
            if (!newly.empty()) {
                on_eligible(newly.front());
            }
        }
        --resident_segments_;
    }

    void on_eligible(const std::string& ref) {
        auto node = parts_.extract(ref);
        std::size_t bytes = part_bytes_[ref];
        part_bytes_.erase(ref);
        CaseView merged = merge_case(node.mapped(), options_.schema);
        merged_digests_[ref] = crypto::sha256(crypto::to_bytes(serialize_case_rows(merged)));
        ++eligible_;
        if (options_.mode == BatchMode::single_batch) {
            retained_bytes_ += bytes;
            retained_.push_back(std::move(merged));
            return;
        }
        batch_bytes_ += bytes;
        batch_.push_back(std::move(merged));
        if (batch_.size() >= options_.batch_cases) {
            flush_batch();
        }
    }

    void flush_batch() {
        if (options_.compute) {
            add_to_stats(batch_);
        }
        batch_.clear();
        budget_.release(batch_bytes_);
        batch_bytes_ = 0;
    }

    void add_to_stats(const std::vector<CaseView>& cases) {
        std::size_t before = estimated_bytes(stats_);
        stats_ = accumulate(std::move(stats_), cases);
        std::size_t after = estimated_bytes(stats_);
        if (after > before) {
            budget_.charge(after - before);
        }
    }

    void release_retained() {
        retained_.clear();
        budget_.release(retained_bytes_);
        retained_bytes_ = 0;
    }

    MinerOptions options_;
    std::shared_ptr<const EnclaveIdentity> identity_;
    std::vector<std::unique_ptr<ProvisionerLink>> links_;
    EnclaveBudget budget_;
    SegmentReceiver receiver_;

    std::map<std::string, ProvisionerLink*> by_org_;
    EligibilityLedger ledger_;
    bool initialized_ = false;
    bool acquired_ = false;

    std::map<std::string, std::vector<CaseView>> parts_;
    std::map<std::string, std::size_t> part_bytes_;
    std::vector<CaseView> retained_;
    std::size_t retained_bytes_ = 0;
    std::vector<CaseView> batch_;
    std::size_t batch_bytes_ = 0;
    DfStats stats_;
    std::optional<HeuristicsNet> net_;
    std::map<std::string, crypto::Digest> merged_digests_;
    std::size_t ledger_bytes_ = 0;
    std::size_t baseline_ = 0;
    std::size_t eligible_ = 0;
    std::size_t discarded_segments_ = 0;
    std::size_t resident_segments_ = 0;
    std::size_t max_resident_segments_ = 0;

    mutable std::mutex emit_mutex_;
    std::vector<Emission> emissions_;
    std::function<void(const Emission&)> tap_;
};

// In-process transport ------------------------------------------------------------

/// Collects transfers from in-process provisioners and hands them to the miner
/// once transmission starts, optionally in shuffled order.
class LoopbackHub {
public:
    explicit LoopbackHub(std::optional<std::uint64_t> shuffle_seed = std::nullopt, int retries = 3)
        : shuffle_seed_(shuffle_seed), retries_(retries) {}

    void bind(SegmentSink sink) { sink_ = std::move(sink); }

    void enqueue(Transfer t) { pending_.push_back(std::move(t)); }

    void flush() {
        if (!sink_) {
            throw ProtocolError("loopback hub has no receiver");
        }
        auto pending = std::move(pending_);
        pending_.clear();
        if (!shuffle_seed_) {
            for (const auto& t : pending) {
                auto report = deliver(t, [&](const std::string&, const SegmentEnvelope& e) { return sink_(e); }, retries_);
                reports_.push_back(report);
            }
            return;
        }
        std::vector<SegmentEnvelope> all;
        for (auto& t : pending) {
            for (auto& e : t.envelopes) {
                all.push_back(std::move(e));
            }
        }
        std::mt19937_64 rng(*shuffle_seed_);
        std::shuffle(all.begin(), all.end(), rng);
        Transfer t;
        t.envelopes = std::move(all);
        reports_.push_back(deliver(t, [&](const std::string&, const SegmentEnvelope& e) { return sink_(e); }, retries_));
    }

    const std::vector<DeliveryReport>& reports() const noexcept { return reports_; }

private:
    std::optional<std::uint64_t> shuffle_seed_;
    int retries_;
    SegmentSink sink_;
    std::vector<Transfer> pending_;
    std::vector<DeliveryReport> reports_;
};

class LoopbackLink : public ProvisionerLink {
public:
    LoopbackLink(ProvisionerService& service, LoopbackHub& hub) : service_(service), hub_(hub) {}

    std::string name() const override { return service_.org(); }
    CaseRefResponse case_refs(const CaseRefRequest& req) override { return service_.serve_case_refs(req); }
    AttestationChallenge request_cases(const CaseRequest& req) override { return service_.handle_case_request(req); }

    Ack attest(const AttestationAnswer& answer) override {
        auto outcome = service_.handle_attestation(answer);
        if (outcome.transfer) {
            hub_.enqueue(std::move(*outcome.transfer));
        }
        return outcome.ack;
    }

    void bind(SegmentSink sink) override { hub_.bind(std::move(sink)); }
    void on_transmission_start() override { hub_.flush(); }

private:
    ProvisionerService& service_;
    LoopbackHub& hub_;
};

}  // namespace confine

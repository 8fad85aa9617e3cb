#pragma once

#include <atomic>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "httplib.h"

#include "confine/miner.hpp"
#include "confine/provisioner.hpp"

namespace confine::http {

/// Splits "http://host:port/prefix" into ("http://host:port", "/prefix").
inline std::pair<std::string, std::string> split_url(const std::string& url) {
    auto scheme = url.find("://");
    auto path_start = url.find('/', scheme == std::string::npos ? 0 : scheme + 3);
    if (path_start == std::string::npos) {
        return {url, ""};
    }
    std::string prefix = url.substr(path_start);
    while (!prefix.empty() && prefix.back() == '/') {
        prefix.pop_back();
    }
    return {url.substr(0, path_start), prefix};
}

/// "host:port", ":port" or "port" into (host, port); host defaults to 0.0.0.0.
inline std::pair<std::string, int> parse_listen(const std::string& spec) {
    auto colon = spec.rfind(':');
    std::string host = colon == std::string::npos ? "" : spec.substr(0, colon);
    std::string port = colon == std::string::npos ? spec : spec.substr(colon + 1);
    if (host.empty()) {
        host = "0.0.0.0";
    }
    try {
        return {host, std::stoi(port)};
    } catch (const std::exception&) {
        throw ValidationError("bad listen address '" + spec + "'");
    }
}

namespace detail {

inline std::string error_body(const std::string& message) {
    return nlohmann::json{{"error", message}}.dump();
}

template <typename F>
void guarded(httplib::Response& res, F&& f) {
    try {
        f();
    } catch (const ForbiddenError& e) {
        res.status = 403;
        res.set_content(error_body(e.what()), "application/json");
    } catch (const UnknownCasesError& e) {
        res.status = 404;
        res.set_content(nlohmann::json{{"error", e.what()}, {"missing", e.missing()}}.dump(), "application/json");
    } catch (const ValidationError& e) {
        res.status = 400;
        res.set_content(error_body(e.what()), "application/json");
    } catch (const ParseError& e) {
        res.status = 400;
        res.set_content(error_body(e.what()), "application/json");
    } catch (const std::exception& e) {
        res.status = 500;
        res.set_content(error_body(e.what()), "application/json");
    }
}

/// Runs an httplib server on a background thread.
class ServerThread {
public:
    ServerThread() = default;
    ServerThread(const ServerThread&) = delete;
    ServerThread& operator=(const ServerThread&) = delete;

    ~ServerThread() { stop(); }

    httplib::Server& server() { return server_; }

    /// Binds (port 0 picks a free port) and starts serving. Returns the port.
    int start(const std::string& host, int port) {
        int bound = port;
        if (port == 0) {
            bound = server_.bind_to_any_port(host);
        } else if (!server_.bind_to_port(host, port)) {
            bound = -1;
        }
        if (bound <= 0) {
            throw Error("cannot bind " + host + ":" + std::to_string(port));
        }
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
        return bound;
    }

    void stop() {
        if (thread_.joinable()) {
            server_.stop();
            thread_.join();
        }
    }

    void wait() {
        if (thread_.joinable()) {
            thread_.join();
        }
    }

private:
    httplib::Server server_;
    std::thread thread_;
};

}  // namespace detail

/// POSTs an envelope to `{callback}/segments`.
inline Ack push_envelope(const std::string& callback, const SegmentEnvelope& env) {
    auto [base, prefix] = split_url(callback);
    httplib::Client client(base);
    client.set_connection_timeout(5);
    client.set_read_timeout(60);
    auto res = client.Post(prefix + "/segments", to_json(env), "application/json");
    if (!res) {
        throw DeliveryError("POST " + callback + "/segments failed: " + httplib::to_string(res.error()));
    }
    if (res->status != 200) {
        return Ack::error("HTTP " + std::to_string(res->status) + ": " + res->body);
    }
    return ack_from_json(res->body);
}

/// HTTP front of a ProvisionerService:
///   GET /caserefs?miner_id=..  -> CaseRefResponse
///   POST /cases                -> AttestationChallenge
///   POST /attestation          -> Ack, then segments pushed to the callback
class ProvisionerServer {
public:
    explicit ProvisionerServer(ProvisionerService& service, EnvelopePusher pusher = push_envelope)
        : service_(service), pusher_(std::move(pusher)) {
        auto& srv = thread_.server();
        srv.Get("/caserefs", [this](const httplib::Request& req, httplib::Response& res) {
            detail::guarded(res, [&] {
                CaseRefRequest msg{req.get_param_value("miner_id")};
                res.set_content(to_json(service_.serve_case_refs(msg)), "application/json");
            });
        });
        srv.Post("/cases", [this](const httplib::Request& req, httplib::Response& res) {
            detail::guarded(res, [&] {
                auto msg = case_request_from_json(req.body);
                res.set_content(to_json(service_.handle_case_request(msg)), "application/json");
            });
        });
        srv.Post("/attestation", [this](const httplib::Request& req, httplib::Response& res) {
            detail::guarded(res, [&] {
                auto outcome = service_.handle_attestation(answer_from_json(req.body));
                if (outcome.transfer) {
                    launch(std::move(*outcome.transfer));
                }
                res.set_content(to_json(outcome.ack), "application/json");
            });
        });
    }

    ~ProvisionerServer() { stop(); }

    int start(const std::string& host, int port) { return thread_.start(host, port); }

    void stop() {
        thread_.stop();
        std::vector<std::thread> workers;
        {
            std::lock_guard lock(mutex_);
            workers.swap(workers_);
        }
        for (auto& w : workers) {
            if (w.joinable()) {
                w.join();
            }
        }
    }

    void wait() { thread_.wait(); }

    std::vector<DeliveryReport> reports() const {
        std::lock_guard lock(mutex_);
        return reports_;
    }

private:
    void launch(Transfer t) {
        std::lock_guard lock(mutex_);
        workers_.emplace_back([this, t = std::move(t)] {
            auto report = deliver(t, pusher_, service_.config().retries);
            std::lock_guard inner(mutex_);
            reports_.push_back(std::move(report));
        });
    }

    ProvisionerService& service_;
    EnvelopePusher pusher_;
    detail::ServerThread thread_;
    mutable std::mutex mutex_;
    std::vector<std::thread> workers_;
    std::vector<DeliveryReport> reports_;
};

/// Miner-side client for a provisioner's HTTP endpoints.
class HttpProvisionerLink : public ProvisionerLink {
public:
    explicit HttpProvisionerLink(std::string base_url) : url_(std::move(base_url)) {
        auto [base, prefix] = split_url(url_);
        base_ = base;
        prefix_ = prefix;
    }

    std::string name() const override { return url_; }

    CaseRefResponse case_refs(const CaseRefRequest& req) override {
        httplib::Params params{{"miner_id", req.miner_id}};
        auto res = client().Get(prefix_ + "/caserefs", params, httplib::Headers{});
        return case_ref_response_from_json(checked(res, "/caserefs"));
    }

    AttestationChallenge request_cases(const CaseRequest& req) override {
        auto res = client().Post(prefix_ + "/cases", to_json(req), "application/json");
        return challenge_from_json(checked(res, "/cases"));
    }

    Ack attest(const AttestationAnswer& answer) override {
        auto res = client().Post(prefix_ + "/attestation", to_json(answer), "application/json");
        return ack_from_json(checked(res, "/attestation"));
    }

private:
    httplib::Client client() const {
        httplib::Client c(base_);
        c.set_connection_timeout(5);
        c.set_read_timeout(120);
        return c;
    }

    std::string checked(const httplib::Result& res, const std::string& path) const {
        if (!res) {
            throw Error(url_ + path + ": " + httplib::to_string(res.error()));
        }
        if (res->status == 200) {
            return res->body;
        }
        std::string msg = url_ + path + ": HTTP " + std::to_string(res->status);
        try {
            auto j = nlohmann::json::parse(res->body);
            msg += ": " + j.value("error", "");
            if (res->status == 404 && j.contains("missing")) {
                throw UnknownCasesError(msg, j.at("missing").get<std::vector<std::string>>());
            }
        } catch (const nlohmann::json::exception&) {
            msg += ": " + res->body;
        }
        if (res->status == 403) {
            throw ForbiddenError(msg);
        }
        if (res->status == 400) {
            throw ValidationError(msg);
        }
        throw ProtocolError(msg);
    }

    std::string url_;
    std::string base_;
    std::string prefix_;
};

/// Receives pushed segments for a miner session at POST /segments. The server
/// can be started before the session exists so its URL can go into the
/// session's options; segments arriving before attach() are refused.
class MinerCallbackServer {
public:
    MinerCallbackServer() {
        thread_.server().Post("/segments", [this](const httplib::Request& req, httplib::Response& res) {
            Ack ack;
            try {
                auto env = envelope_from_json(req.body);
                MinerSession* session = session_.load();
                ack = session ? session->accept_segment(env) : Ack::error("no active session");
            } catch (const std::exception& e) {
                res.status = 400;
                ack = Ack::error(e.what());
            }
            res.set_content(to_json(ack), "application/json");
        });
    }

    void attach(MinerSession& session) { session_.store(&session); }
    void detach() { session_.store(nullptr); }

    int start(const std::string& host, int port) { return thread_.start(host, port); }
    void stop() { thread_.stop(); }

private:
    std::atomic<MinerSession*> session_{nullptr};
    detail::ServerThread thread_;
};

}  // namespace confine::http

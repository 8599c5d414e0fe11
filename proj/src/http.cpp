#include <thread>

#include <httplib.h>

#include "fieldscribe/error.hpp"
#include "fieldscribe/gateway.hpp"

namespace fieldscribe::gateway {

using nlohmann::json;

HttpTransport::HttpTransport(std::string base_url, std::chrono::milliseconds timeout)
    : base_url_(std::move(base_url)), timeout_(timeout) {
    while (!base_url_.empty() && base_url_.back() == '/') base_url_.pop_back();
}

json HttpTransport::post(const std::string& endpoint, const json& body) {
    const std::string payload = body.dump();
    for (int attempt = 0;; ++attempt) {
        ++attempts_;
        httplib::Client client(base_url_);
        if (!client.is_valid()) throw Error(Errc::GatewayUnreachable, "invalid gateway URL " + base_url_);
        client.set_connection_timeout(timeout_);
        client.set_read_timeout(timeout_);
        client.set_write_timeout(timeout_);
        auto res = client.Post(endpoint, payload, "application/json");
        if (!res) {
            const httplib::Error err = res.error();
            if (err == httplib::Error::Connection && attempt == 0) continue;
            throw Error(Errc::GatewayUnreachable, base_url_ + endpoint + ": " + httplib::to_string(err));
        }
        if (res->status != 200) throw GatewayStatusError(res->status, res->body);
        try {
            return json::parse(res->body);
        } catch (const json::parse_error& e) {
            throw Error(Errc::GatewayError, endpoint + " returned invalid JSON: " + e.what());
        }
    }
}

struct MockServer::Impl {
    httplib::Server server;
    std::thread thread;
};

MockServer::MockServer(std::shared_ptr<MockBackend> backend) : impl_(std::make_unique<Impl>()) {
    for (const char* endpoint :
         {"/v1/caption", "/v1/embed_text", "/v1/embed_joint", "/v1/detect", "/v1/segment", "/v1/anonymize", "/v1/pos"}) {
        const std::string path = endpoint;
        impl_->server.Post(path, [backend, path](const httplib::Request& req, httplib::Response& res) {
            json request;
            try {
                request = json::parse(req.body);
            } catch (const json::parse_error& e) {
                res.status = 400;
                res.set_content(json{{"error", e.what()}}.dump(), "application/json");
                return;
            }
            backend->enter();
            MockBackend::Reply reply = backend->handle(path, request);
            backend->leave();
            res.status = reply.status;
            res.set_content(reply.body.dump(), "application/json");
        });
    }
    port_ = impl_->server.bind_to_any_port("127.0.0.1");
    if (port_ <= 0) throw Error(Errc::IoError, "mock server could not bind a loopback port");
    impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
    impl_->server.wait_until_ready();
}

MockServer::~MockServer() {
    impl_->server.stop();
    if (impl_->thread.joinable()) impl_->thread.join();
}

std::string MockServer::url() const { return "http://127.0.0.1:" + std::to_string(port_); }

}  // namespace fieldscribe::gateway

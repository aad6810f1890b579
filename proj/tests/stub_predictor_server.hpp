#pragma once

// Local HTTP stand-in for an external operation model.

#include "memmgr/json.hpp"

#include <httplib.h>

#include <atomic>
#include <functional>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace memmgr::testing {

class StubPredictorServer {
public:
    // responder gets the parsed request and returns the raw response body.
    using Responder = std::function<std::string(const Json& request)>;

    explicit StubPredictorServer(Responder responder, int status = 200) : responder_(std::move(responder)) {
        server_.Post("/predict", [this, status](const httplib::Request& req, httplib::Response& res) {
            const Json request = Json::parse(req.body);
            {
                std::lock_guard lock(mutex_);
                requests_.push_back(request);
                content_types_.push_back(req.get_header_value("Content-Type"));
            }
            res.status = status;
            res.set_content(responder_(request), "application/json");
        });
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }

    ~StubPredictorServer() {
        server_.stop();
        thread_.join();
    }

    std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }

    std::vector<Json> requests() const {
        std::lock_guard lock(mutex_);
        return requests_;
    }

    std::vector<std::string> content_types() const {
        std::lock_guard lock(mutex_);
        return content_types_;
    }

private:
    Responder responder_;
    httplib::Server server_;
    int port_ = 0;
    std::thread thread_;
    mutable std::mutex mutex_;
    std::vector<Json> requests_;
    std::vector<std::string> content_types_;
};

}  // namespace memmgr::testing

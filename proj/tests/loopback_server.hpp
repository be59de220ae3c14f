#pragma once

#include <atomic>
#include <functional>
#include <string>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "elect/remote.hpp"

namespace elect::testing {

/// In-process HTTP server speaking the denoiser protocol. `mode` picks the
/// behaviour of /v1/predict: echo returns the latent, oracle returns a
/// point-target prediction, and the failure modes exercise client paths.
class LoopbackServer {
  public:
    enum class Mode { Echo, Oracle, Flaky, BadRequest, Malformed, WrongShape, Slow };

    explicit LoopbackServer(Mode mode, std::optional<PointTargetDenoiser> oracle = std::nullopt, int flaky_failures = 0)
        : mode_(mode), oracle_(std::move(oracle)), flaky_left_(flaky_failures) {
        server_.new_task_queue = [] { return new httplib::ThreadPool(4); };
        server_.Get("/v1/health", [this](const httplib::Request&, httplib::Response& res) {
            res.set_content(nlohmann::json{{"status", "ok"}, {"model_id", model_id()}}.dump(), "application/json");
        });
        server_.Post("/v1/predict", [this](const httplib::Request& req, httplib::Response& res) { predict(req, res); });
        server_.Post("/v1/encode", [](const httplib::Request& req, httplib::Response& res) {
            const auto j = nlohmann::json::parse(req.body);
            const float v = static_cast<float>(j.at("image_path").get<std::string>().size());
            res.set_content(tensor_to_json(Tensor({1, 1, 2, 2}, v)).dump(), "application/json");
        });
        server_.Post("/mllm", [this](const httplib::Request& req, httplib::Response& res) {
            last_mllm_body = req.body;
            res.set_content(mllm_reply, "application/json");
        });
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }

    ~LoopbackServer() {
        server_.stop();
        thread_.join();
    }

    std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }
    int predict_requests() const { return requests_.load(); }

    std::string mllm_reply = R"({"IF": 1, "BC": 0.5})";
    std::string last_mllm_body;

  private:
    std::string model_id() const { return mode_ == Mode::Oracle ? "oracle" : "echo"; }

    void predict(const httplib::Request& http_req, httplib::Response& res) {
        ++requests_;
        if (mode_ == Mode::Flaky && flaky_left_.fetch_sub(1) > 0) {
            res.status = 503;
            res.set_content("warming up", "text/plain");
            return;
        }
        if (mode_ == Mode::BadRequest) {
            res.status = 400;
            res.set_content("bad request", "text/plain");
            return;
        }
        if (mode_ == Mode::Malformed) {
            res.set_content("{\"output\": ", "application/json");
            return;
        }
        if (mode_ == Mode::Slow) std::this_thread::sleep_for(std::chrono::milliseconds(400));
        DenoiserRequest req;
        try {
            req = predict_request_from_json(nlohmann::json::parse(http_req.body));
        } catch (const std::exception& e) {
            res.status = 400;
            res.set_content(e.what(), "text/plain");
            return;
        }
        Tensor out = req.latent;
        if (mode_ == Mode::Oracle) out = oracle_->predict(req);
        if (mode_ == Mode::WrongShape) out = Tensor({1});
        res.set_content(predict_response_json(out).dump(), "application/json");
    }

    Mode mode_;
    std::optional<PointTargetDenoiser> oracle_;
    std::atomic<int> flaky_left_;
    std::atomic<int> requests_{0};
    httplib::Server server_;
    int port_ = 0;
    std::thread thread_;
};

}  // namespace elect::testing

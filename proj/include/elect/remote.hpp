#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdlib>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "elect/denoiser.hpp"
#include "elect/tensor_io.hpp"

namespace elect {

// Wire protocol (JSON over HTTP/1.1):
//   POST /v1/predict  {"mode": "eps"|"velocity", "t": int,
//                      "latent": TENSOR, "image_latent": TENSOR|null, "prompt": string|null}
//                  -> {"output": TENSOR}
//   POST /v1/encode   {"image_path": string} | {"image_b64_png": string} -> TENSOR
//   GET  /v1/health   -> {"status": "ok", "model_id": string}
// TENSOR is {"shape": [...], "b64": base64 of row-major little-endian f32}.

inline nlohmann::json tensor_to_json(const Tensor& t) {
    return {{"shape", t.shape()}, {"b64", tensor_payload_b64(t)}};
}

inline Tensor tensor_from_json(const nlohmann::json& j) {
    if (!j.is_object() || !j.contains("shape") || !j.contains("b64") || !j["shape"].is_array() || !j["b64"].is_string()) {
        throw ProtocolError("tensor JSON needs 'shape' array and 'b64' string");
    }
    Shape shape;
    for (const auto& d : j["shape"]) {
        if (!d.is_number_unsigned() || d.get<std::size_t>() == 0) throw ProtocolError("tensor JSON: bad dimension");
        shape.push_back(d.get<std::size_t>());
    }
    try {
        return tensor_from_payload_b64(shape, j["b64"].get<std::string>());
    } catch (const FormatError& e) {
        throw ProtocolError(e.what());
    }
}

inline nlohmann::json predict_request_json(const DenoiserRequest& req) {
    nlohmann::json j;
    j["mode"] = std::string(to_string(req.mode));
    j["t"] = req.t;
    j["latent"] = tensor_to_json(req.latent);
    j["image_latent"] = req.image_latent ? tensor_to_json(*req.image_latent) : nlohmann::json(nullptr);
    j["prompt"] = req.prompt ? nlohmann::json(*req.prompt) : nlohmann::json(nullptr);
    return j;
}

inline DenoiserRequest predict_request_from_json(const nlohmann::json& j) {
    try {
        DenoiserRequest req;
        req.mode = parse_prediction_mode(j.at("mode").get<std::string>());
        req.t = j.at("t").get<int>();
        req.latent = tensor_from_json(j.at("latent"));
        if (!j.at("image_latent").is_null()) req.image_latent = tensor_from_json(j.at("image_latent"));
        if (!j.at("prompt").is_null()) req.prompt = j.at("prompt").get<std::string>();
        return req;
    } catch (const nlohmann::json::exception& e) {
        throw ProtocolError(std::string("predict request: ") + e.what());
    } catch (const InvalidArgument& e) {
        throw ProtocolError(std::string("predict request: ") + e.what());
    }
}

inline nlohmann::json predict_response_json(const Tensor& output) { return {{"output", tensor_to_json(output)}}; }

inline int remote_timeout_ms_from_env(int fallback = 30000) {
    if (const char* v = std::getenv("ELECT_REMOTE_TIMEOUT_MS")) {
        char* end = nullptr;
        const long ms = std::strtol(v, &end, 10);
        if (end != v && *end == '\0' && ms > 0) return static_cast<int>(ms);
        throw InvalidArgument(std::string("ELECT_REMOTE_TIMEOUT_MS is not a positive integer: ") + v);
    }
    return fallback;
}

struct RemoteOptions {
    int timeout_ms = 30000;
    std::size_t pool_size = 4;
    int max_attempts = 3;
    int backoff_ms = 50;
    PredictionMode mode = PredictionMode::Eps;
    bool has_null_image_branch = true;
    bool check_health = true;
};

/// Client for a remote denoiser. Up to `pool_size` predictions run at once,
/// each on its own connection. Connection failures and 5xx replies are retried.
class RemoteDenoiser final : public Denoiser {
  public:
    RemoteDenoiser(std::string base_url, RemoteOptions opts) : url_(std::move(base_url)), opts_(opts) {
        if (opts_.pool_size == 0) throw InvalidArgument("remote pool size must be >= 1");
        if (opts_.max_attempts < 1) throw InvalidArgument("remote max_attempts must be >= 1");
        for (std::size_t i = 0; i < opts_.pool_size; ++i) free_.push_back(make_client());
        if (opts_.check_health) health();
    }

    DenoiserCaps caps() const override {
        return {opts_.mode, opts_.has_null_image_branch, Concurrency::Concurrent, opts_.pool_size};
    }

    std::string model_id() const override { return model_id_.empty() ? url_ : model_id_; }
    const std::string& url() const { return url_; }

    /// GET /v1/health; throws TransportError unless the server answers ok.
    nlohmann::json health() const {
        auto lease = acquire();
        auto res = lease->Get("/v1/health");
        release(std::move(lease));
        if (!res) {
            throw TransportError("health check of " + url_ + " failed: " + httplib::to_string(res.error()), 1, true);
        }
        if (res->status != 200) {
            throw TransportError("health check of " + url_ + " returned HTTP " + std::to_string(res->status), 1, false);
        }
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(res->body);
        } catch (const nlohmann::json::exception& e) {
            throw TransportError("health check of " + url_ + ": malformed body", 1, false);
        }
        if (j.value("status", "") != "ok") throw TransportError("health check of " + url_ + ": status not ok", 1, false);
        model_id_ = j.value("model_id", "");
        return j;
    }

    Tensor predict(const DenoiserRequest& req) const override {
        req.validate();
        const std::string body = predict_request_json(req).dump();
        const nlohmann::json reply = post_json("/v1/predict", body);
        if (!reply.contains("output")) throw ProtocolError("predict response lacks 'output'");
        Tensor out = tensor_from_json(reply["output"]);
        if (!out.same_shape(req.latent)) {
            throw ProtocolError("predict response shape " + shape_str(out.shape()) + " differs from request " +
                                shape_str(req.latent.shape()));
        }
        return out;
    }

    /// POST /v1/encode with a file path the server can read.
    Tensor encode_path(const std::string& image_path) const {
        return tensor_from_json(post_json("/v1/encode", nlohmann::json{{"image_path", image_path}}.dump()));
    }

  private:
    std::unique_ptr<httplib::Client> make_client() const {
        auto c = std::make_unique<httplib::Client>(url_);
        const auto ms = std::chrono::milliseconds(opts_.timeout_ms);
        c->set_connection_timeout(ms);
        c->set_read_timeout(ms);
        c->set_write_timeout(ms);
        c->set_keep_alive(true);
        return c;
    }

    std::unique_ptr<httplib::Client> acquire() const {
        std::unique_lock lock(mu_);
        cv_.wait(lock, [&] { return !free_.empty(); });
        auto c = std::move(free_.back());
        free_.pop_back();
        return c;
    }

    void release(std::unique_ptr<httplib::Client> c) const {
        {
            std::lock_guard lock(mu_);
            free_.push_back(std::move(c));
        }
        cv_.notify_one();
    }

    nlohmann::json post_json(const std::string& path, const std::string& body) const {
        std::string last_error;
        for (int attempt = 1; attempt <= opts_.max_attempts; ++attempt) {
            auto lease = acquire();
            auto res = lease->Post(path, body, "application/json");
            release(std::move(lease));
            if (!res) {
                last_error = httplib::to_string(res.error());
            } else if (res->status >= 500) {
                last_error = "HTTP " + std::to_string(res->status) + ": " + res->body;
            } else if (res->status != 200) {
                throw TransportError(url_ + path + " returned HTTP " + std::to_string(res->status) + ": " + res->body,
                                     attempt, false);
            } else {
                try {
                    return nlohmann::json::parse(res->body);
                } catch (const nlohmann::json::exception& e) {
                    throw ProtocolError(url_ + path + ": malformed JSON reply: " + e.what());
                }
            }
            if (attempt < opts_.max_attempts) {
                std::this_thread::sleep_for(std::chrono::milliseconds(opts_.backoff_ms * attempt));
            }
        }
        throw TransportError(url_ + path + " failed after " + std::to_string(opts_.max_attempts) +
                                 " attempts: " + last_error,
                             opts_.max_attempts, true);
    }

    std::string url_;
    RemoteOptions opts_;
    mutable std::string model_id_;
    mutable std::mutex mu_;
    mutable std::condition_variable cv_;
    mutable std::vector<std::unique_ptr<httplib::Client>> free_;
};

}  // namespace elect

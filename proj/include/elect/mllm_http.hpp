#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <sstream>
#include <string>

#include <httplib.h>
#include <json.hpp>

#include "elect/prompt_loop.hpp"
#include "elect/remote.hpp"

namespace elect {

#ifndef ELECT_TEMPLATE_DIR
#define ELECT_TEMPLATE_DIR "templates"
#endif

struct MllmTemplates {
    std::string evaluate;  // system text for grading an edit
    std::string variants;  // system text for rephrasing; "{}" takes the instruction

    static MllmTemplates load(const std::filesystem::path& dir = ELECT_TEMPLATE_DIR) {
        auto read = [&](const char* name) {
            std::ifstream is(dir / name);
            if (!is) throw std::runtime_error("cannot open MLLM template " + (dir / name).string());
            std::ostringstream os;
            os << is.rdbuf();
            return os.str();
        };
        return {read("mllm_evaluate.txt"), read("mllm_variants.txt")};
    }
};

/// Python str.format-style rendering: "{{" -> "{", "}}" -> "}", each "{}"
/// takes the next argument.
inline std::string render_template(const std::string& tmpl, const std::vector<std::string>& args = {}) {
    std::string out;
    out.reserve(tmpl.size());
    std::size_t next = 0;
    for (std::size_t i = 0; i < tmpl.size(); ++i) {
        const char c = tmpl[i];
        if (c == '{' && i + 1 < tmpl.size() && tmpl[i + 1] == '{') {
            out.push_back('{');
            ++i;
        } else if (c == '}' && i + 1 < tmpl.size() && tmpl[i + 1] == '}') {
            out.push_back('}');
            ++i;
        } else if (c == '{' && i + 1 < tmpl.size() && tmpl[i + 1] == '}') {
            if (next >= args.size()) throw InvalidArgument("template has more placeholders than arguments");
            out += args[next++];
            ++i;
        } else {
            out.push_back(c);
        }
    }
    return out;
}

/// Generic JSON-over-HTTP MLLM adapter. Each call POSTs
/// {"system": <rendered template>, "inputs": {...}} to one URL and returns the
/// reply body, which is expected to be the bare judgment or variants JSON.
class HttpMllmClient final : public MllmClient {
  public:
    HttpMllmClient(std::string url, MllmTemplates templates, int timeout_ms = 30000)
        : templates_(std::move(templates)) {
        const auto scheme_end = url.find("://");
        const auto path_start = url.find('/', scheme_end == std::string::npos ? 0 : scheme_end + 3);
        base_ = path_start == std::string::npos ? url : url.substr(0, path_start);
        path_ = path_start == std::string::npos ? "/" : url.substr(path_start);
        client_ = std::make_unique<httplib::Client>(base_);
        const auto ms = std::chrono::milliseconds(timeout_ms);
        client_->set_connection_timeout(ms);
        client_->set_read_timeout(ms);
    }

    std::string evaluate(const Tensor& source, const Tensor& edited, const std::string& instruction) override {
        nlohmann::json body{{"system", render_template(templates_.evaluate)},
                            {"inputs",
                             {{"instruction", instruction},
                              {"source", tensor_to_json(source)},
                              {"edited", tensor_to_json(edited)}}}};
        return post(body);
    }

    std::string variants(const Tensor& source, const std::string& instruction, std::size_t n) override {
        nlohmann::json body{{"system", render_template(templates_.variants, {instruction})},
                            {"inputs", {{"instruction", instruction}, {"n", n}, {"source", tensor_to_json(source)}}}};
        return post(body);
    }

  private:
    std::string post(const nlohmann::json& body) {
        std::lock_guard lock(mu_);
        auto res = client_->Post(path_, body.dump(), "application/json");
        if (!res) throw TransportError("MLLM endpoint " + base_ + path_ + ": " + httplib::to_string(res.error()), 1, true);
        if (res->status != 200) {
            throw TransportError("MLLM endpoint " + base_ + path_ + " returned HTTP " + std::to_string(res->status), 1,
                                 res->status >= 500);
        }
        return res->body;
    }

    MllmTemplates templates_;
    std::string base_;
    std::string path_;
    std::mutex mu_;
    std::unique_ptr<httplib::Client> client_;
};

}  // namespace elect

#pragma once

#include <deque>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "elect/engine.hpp"

namespace elect {

/// Three-level instruction-following / background-consistency judgment.
struct EditJudgment {
    double if_score = 0.0;
    double bc_score = 0.0;

    double overall() const { return std::min(if_score, bc_score); }
    bool success() const { return overall() > 0.0; }
};

/// Multimodal judge and instruction rephraser. Both calls return the raw
/// response text, which must be the JSON documents {"IF": x, "BC": y} and
/// {"variants": [...]} respectively.
class MllmClient {
  public:
    virtual ~MllmClient() = default;
    virtual std::string evaluate(const Tensor& source, const Tensor& edited, const std::string& instruction) = 0;
    virtual std::string variants(const Tensor& source, const std::string& instruction, std::size_t n) = 0;
};

using WarningSink = std::function<void(const std::string&)>;

inline void warn_stderr(const std::string& msg) { std::cerr << "warning: " << msg << '\n'; }

namespace detail {

inline bool on_scale(double v) { return v == 0.0 || v == 0.5 || v == 1.0; }

inline EditJudgment parse_judgment(const std::string& raw) {
    const auto j = nlohmann::json::parse(raw);  // throws parse_error on malformed text
    if (!j.is_object() || !j.contains("IF") || !j.contains("BC") || !j["IF"].is_number() || !j["BC"].is_number()) {
        throw nlohmann::json::type_error::create(302, "judgment needs numeric IF and BC", nullptr);
    }
    return {j["IF"].get<double>(), j["BC"].get<double>()};
}

inline std::vector<std::string> parse_variants(const std::string& raw) {
    const auto j = nlohmann::json::parse(raw);
    if (!j.is_object() || !j.contains("variants") || !j["variants"].is_array()) {
        throw nlohmann::json::type_error::create(302, "response needs a variants array", nullptr);
    }
    return j["variants"].get<std::vector<std::string>>();
}

inline std::size_t word_count(const std::string& s) {
    std::istringstream is(s);
    std::size_t n = 0;
    for (std::string w; is >> w;) ++n;
    return n;
}

}  // namespace detail

/// Asks the client to grade an edit. Malformed JSON gets one retry; a score
/// off the {0, 0.5, 1} scale is a protocol error.
inline EditJudgment judge(MllmClient& client, const Tensor& source, const Tensor& edited, const std::string& instruction) {
    EditJudgment j;
    for (int attempt = 0;; ++attempt) {
        try {
            j = detail::parse_judgment(client.evaluate(source, edited, instruction));
            break;
        } catch (const nlohmann::json::exception& e) {
            if (attempt >= 1) throw ProtocolError(std::string("judge: malformed response after retry: ") + e.what());
        }
    }
    if (!detail::on_scale(j.if_score) || !detail::on_scale(j.bc_score)) {
        throw ProtocolError("judge: score outside {0, 0.5, 1}");
    }
    return j;
}

inline constexpr std::size_t kVariantWordLimit = 15;

/// n instruction variants, the first always the original instruction. Long
/// variants are kept with a warning.
inline std::vector<std::string> generate_variants(MllmClient& client, const Tensor& source,
                                                  const std::string& instruction, std::size_t n = 10,
                                                  const WarningSink& warn = warn_stderr) {
    if (n < 1) throw InvalidArgument("generate_variants: n must be >= 1");
    if (n == 1) return {instruction};
    std::vector<std::string> out;
    for (int attempt = 0;; ++attempt) {
        try {
            out = detail::parse_variants(client.variants(source, instruction, n));
            break;
        } catch (const nlohmann::json::exception& e) {
            if (attempt >= 1) throw ProtocolError(std::string("variants: malformed response after retry: ") + e.what());
        }
    }
    if (out.size() < n) {
        throw ProtocolError("variants: asked for " + std::to_string(n) + ", got " + std::to_string(out.size()));
    }
    out.resize(n);
    if (out.front() != instruction) {
        if (warn) warn("first variant differs from the instruction; replacing it");
        out.front() = instruction;
    }
    for (const auto& v : out) {
        if (detail::word_count(v) > kVariantWordLimit && warn) {
            warn("variant exceeds " + std::to_string(kVariantWordLimit) + " words: \"" + v + "\"");
        }
    }
    return out;
}

/// Deterministic stand-in for a multimodal model.
class MockMllm final : public MllmClient {
  public:
    explicit MockMllm(EditJudgment verdict = {1.0, 1.0}, std::uint64_t seed = 0) : verdict_(verdict), seed_(seed) {}

    /// Raw texts returned by the next evaluate() calls, before falling back to the verdict.
    void script_evaluate(std::string raw) { scripted_eval_.push_back(std::move(raw)); }
    void script_variants(std::string raw) { scripted_variants_.push_back(std::move(raw)); }
    void set_verdict(EditJudgment j) { verdict_ = j; }

    std::size_t evaluate_calls() const { return evaluate_calls_; }
    std::size_t variants_calls() const { return variants_calls_; }

    std::string evaluate(const Tensor&, const Tensor&, const std::string&) override {
        ++evaluate_calls_;
        if (!scripted_eval_.empty()) {
            std::string raw = std::move(scripted_eval_.front());
            scripted_eval_.pop_front();
            return raw;
        }
        return nlohmann::json{{"IF", verdict_.if_score}, {"BC", verdict_.bc_score}}.dump();
    }

    std::string variants(const Tensor&, const std::string& instruction, std::size_t n) override {
        ++variants_calls_;
        if (!scripted_variants_.empty()) {
            std::string raw = std::move(scripted_variants_.front());
            scripted_variants_.pop_front();
            return raw;
        }
        static const std::vector<std::string> frames = {
            "please {}",          "{} in this image", "can you {}",      "edit the image: {}", "{}, keeping the rest",
            "now {}",             "try to {}",        "I want you to {}", "{} please",          "make it so: {}",
            "carefully {}",       "simply {}",        "{} only",          "go ahead and {}",    "just {}",
        };
        std::vector<std::size_t> order(frames.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        SeededRng rng(derive_seed(seed_, fnv1a(instruction)));
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.next_u64() % i]);

        std::vector<std::string> list{instruction};
        for (std::size_t k = 0; list.size() < n; ++k) {
            std::string f = frames[order[k % frames.size()]];
            f.replace(f.find("{}"), 2, instruction);
            if (k >= frames.size()) f += " (" + std::to_string(k / frames.size() + 1) + ")";
            list.push_back(std::move(f));
        }
        return nlohmann::json{{"variants", list}}.dump();
    }

  private:
    EditJudgment verdict_;
    std::uint64_t seed_;
    std::deque<std::string> scripted_eval_;
    std::deque<std::string> scripted_variants_;
    std::size_t evaluate_calls_ = 0;
    std::size_t variants_calls_ = 0;
};

/// Prompt candidates sharing one initial noise. Each denoises with its own
/// instruction; scoring and early stopping follow the seed-mode rules.
inline RunResult elect_prompt_select(const EditTask& task, const Denoiser& denoiser,
                                     const std::vector<std::string>& prompts, const EngineConfig& cfg,
                                     std::uint64_t shared_seed, const RunHooks& hooks = {}) {
    if (prompts.empty()) throw InvalidArgument("prompt selection needs at least one prompt");
    const Tensor z_T = gaussian_noise(shared_seed, task.source_latent.shape());
    std::vector<CandidateSpec> candidates;
    candidates.reserve(prompts.size());
    for (const auto& p : prompts) candidates.push_back({shared_seed, p, z_T});
    EngineConfig c = cfg;
    c.seeds.clear();
    c.n_candidates = prompts.size();
    return run_candidates(task, denoiser, c, std::move(candidates), "elect_prompt", hooks);
}

struct PromptOptions {
    std::size_t n_variants = 10;
    bool force = false;  // run prompt selection even when the seed result passes
};

struct PromptRunResult {
    RunResult seed_run;
    EditJudgment judgment;
    std::vector<std::string> variants;
    std::optional<RunResult> prompt_run;

    const Tensor& final_latent() const { return prompt_run ? prompt_run->final_latent : seed_run.final_latent; }
    const SelectionTrace& final_trace() const { return prompt_run ? prompt_run->trace : seed_run.trace; }
};

/// Seed selection first; if the judge marks the result a failure (or `force`),
/// rephrase the instruction and select among prompts from one shared noise.
/// `before_prompt_run` lets callers prepare for the chosen variants.
inline PromptRunResult elect_prompt_run(const EditTask& task, const Denoiser& denoiser, MllmClient& client,
                                        const EngineConfig& cfg, const PromptOptions& opts = {},
                                        const std::function<void(const std::vector<std::string>&)>& before_prompt_run = {},
                                        const WarningSink& warn = warn_stderr) {
    PromptRunResult out{elect_run(task, denoiser, cfg), {}, {}, std::nullopt};
    out.judgment = judge(client, task.source_latent, out.seed_run.final_latent, task.instruction);
    if (out.judgment.success() && !opts.force) return out;

    out.variants = generate_variants(client, task.source_latent, task.instruction, opts.n_variants, warn);
    if (before_prompt_run) before_prompt_run(out.variants);
    out.prompt_run = elect_prompt_select(task, denoiser, out.variants, cfg, cfg.resolved_seeds().front());
    return out;
}

}  // namespace elect

#pragma once

#include <chrono>
#include <cstdint>
#include <exception>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "elect/denoiser.hpp"
#include "elect/parallel.hpp"
#include "elect/relevance.hpp"
#include "elect/rng.hpp"
#include "elect/schedule.hpp"
#include "elect/scoring.hpp"

namespace elect {

/// Source latent plus instruction. The image condition defaults to the
/// source latent (identity encoder). The mask is for evaluation only.
struct EditTask {
    Tensor source_latent;
    std::string instruction;
    std::optional<Tensor> image_latent;
    std::optional<Tensor> gt_mask;

    const Tensor& condition() const { return image_latent ? *image_latent : source_latent; }
};

/// Which prediction feeds the clean-latent projection used for scoring.
enum class TweedieSource { Guided, Conditional };

/// Whether a candidate's background weight comes from the map pooled over all
/// candidates or from its own maps.
enum class MapPooling { Pooled, PerCandidate };

struct EngineConfig {
    std::size_t n_candidates = 10;
    std::vector<std::uint64_t> seeds;  // empty = 1..n_candidates
    int t_stop = 60;
    int steps = 100;
    ScheduleKind schedule = ScheduleKind::Diffusion;
    bool adaptive = false;
    double tau = 0.1;
    int ddc_window = 5;
    int ddc_floor = 20;
    int relevance_window = 20;
    GuidanceConfig guidance;
    bool hybrid_fg = false;
    TweedieSource tweedie_source = TweedieSource::Guided;
    MapPooling pooling = MapPooling::Pooled;
    std::size_t jobs = 1;

    std::vector<std::uint64_t> resolved_seeds() const {
        if (!seeds.empty()) return seeds;
        std::vector<std::uint64_t> s(n_candidates);
        for (std::size_t i = 0; i < n_candidates; ++i) s[i] = i + 1;
        return s;
    }

    void validate() const {
        if (n_candidates < 1 && seeds.empty()) throw InvalidArgument("need at least one candidate");
        if (!seeds.empty() && n_candidates != seeds.size() && n_candidates != 0) {
            throw InvalidArgument("seed list length " + std::to_string(seeds.size()) + " disagrees with N = " +
                                  std::to_string(n_candidates));
        }
        if (steps < 2) throw InvalidArgument("steps must be >= 2");
        if (t_stop < 0 || t_stop >= steps) {
            throw InvalidArgument("t_stop must lie in [0, " + std::to_string(steps) + "), got " + std::to_string(t_stop));
        }
        if (!(tau > 0.0 && tau < 1.0)) throw InvalidArgument("tau must lie in (0, 1)");
        if (ddc_window < 1) throw InvalidArgument("ddc_window must be >= 1");
        if (ddc_floor < 0) throw InvalidArgument("ddc_floor must be >= 0");
        if (relevance_window < 1) throw InvalidArgument("relevance_window must be >= 1");
        guidance.validate();
    }
};

struct StepRecord {
    int t = 0;
    std::vector<double> scores;  // one per candidate
    double best = 0.0;
    std::optional<double> smoothed_delta;
};

struct SelectionTrace {
    std::string method;
    int steps = 0;
    std::vector<std::uint64_t> seeds;
    std::vector<std::string> prompts;
    std::vector<StepRecord> per_step;
    std::vector<double> selection_scores;  // scores at the stop step
    std::vector<double> fg_scores;         // only with the hybrid rule
    std::size_t chosen_id = 0;
    int actual_stop_step = 0;
    std::uint64_t nfe = 0;
    std::uint64_t model_calls = 0;
    double wall_ms = 0.0;
    bool complete = false;
};

struct RunResult {
    Tensor final_latent;
    SelectionTrace trace;
};

struct NfeCount {
    std::uint64_t nfe;
    std::uint64_t model_calls;
};

inline NfeCount nfe_count(const SelectionTrace& trace) { return {trace.nfe, trace.model_calls}; }

/// Closed-form step count: N candidates to the stop step, one to the end.
inline std::uint64_t expected_nfe(std::size_t n, int steps, int stop) {
    return static_cast<std::uint64_t>(n) * static_cast<std::uint64_t>(steps - stop) + static_cast<std::uint64_t>(stop);
}

/// Raised when the denoiser fails mid-run; carries what was traced so far.
class RunAborted : public std::runtime_error {
  public:
    RunAborted(const std::string& what, SelectionTrace partial, std::exception_ptr cause)
        : std::runtime_error(what), partial(std::move(partial)), cause(std::move(cause)) {}
    SelectionTrace partial;
    std::exception_ptr cause;
};

struct RunHooks {
    std::function<void(std::size_t candidate, int t, const Tensor& map)> on_relevance;
};

/// Diminishing-delta tracker over the best score per step.
class DdcMonitor {
  public:
    explicit DdcMonitor(int window) : window_(window) {
        if (window < 1) throw InvalidArgument("DDC window must be >= 1");
    }

    /// Relative change treated as zero. Scores come from float32 latents, so
    /// smaller differences are rounding noise.
    static constexpr double kRelativeNoise = 1e-6;

    /// Feeds S_t; returns the smoothed delta once one is available.
    std::optional<double> push(double best_score) {
        if (last_) {
            double delta = std::abs(best_score - *last_);
            if (delta <= kRelativeNoise * std::max(std::abs(best_score), std::abs(*last_))) delta = 0.0;
            deltas_.push_back(delta);
            const std::size_t k = std::min<std::size_t>(deltas_.size(), static_cast<std::size_t>(window_));
            double sum = 0.0;
            for (std::size_t j = deltas_.size() - k; j < deltas_.size(); ++j) sum += deltas_[j];
            const double smoothed = sum / static_cast<double>(k);
            smoothed_.push_back(smoothed);
            max_ = std::max(max_, smoothed);
        }
        last_ = best_score;
        scored_ += 1;
        if (smoothed_.empty()) return std::nullopt;
        return smoothed_.back();
    }

    int scored_steps() const { return scored_; }
    double max_smoothed() const { return max_; }
    const std::vector<double>& smoothed() const { return smoothed_; }

  private:
    int window_;
    std::optional<double> last_;
    std::vector<double> deltas_;
    std::vector<double> smoothed_;
    double max_ = 0.0;
    int scored_ = 0;
};

/// True once the latest smoothed delta falls below tau times the running
/// maximum of smoothed deltas. An all-zero history counts as converged.
inline bool ddc_stop(const DdcMonitor& monitor, double tau) {
    if (monitor.scored_steps() < 2 || monitor.smoothed().empty()) return false;
    const double current = monitor.smoothed().back();
    if (monitor.max_smoothed() <= 0.0) return true;
    return current / monitor.max_smoothed() < tau;
}

/// Index of the first entry of an already-smoothed delta sequence where the
/// ratio to the running maximum drops below tau, skipping indices < min_index.
inline std::optional<std::size_t> ddc_first_fire(std::span<const double> smoothed, double tau, std::size_t min_index = 0) {
    double running_max = 0.0;
    for (std::size_t k = 0; k < smoothed.size(); ++k) {
        running_max = std::max(running_max, smoothed[k]);
        if (k < min_index) continue;
        if (running_max <= 0.0 || smoothed[k] / running_max < tau) return k;
    }
    return std::nullopt;
}

struct CandidateSpec {
    std::uint64_t seed;
    std::string prompt;
    Tensor initial_latent;
};

namespace detail {

inline std::size_t effective_jobs(const Denoiser& d, std::size_t requested) {
    const DenoiserCaps caps = d.caps();
    if (caps.concurrency == Concurrency::Serialized) return 1;
    std::size_t jobs = std::max<std::size_t>(1, requested);
    if (caps.max_parallel > 0) jobs = std::min(jobs, caps.max_parallel);
    return jobs;
}

inline void check_denoiser(const Denoiser& d, const EngineConfig& cfg) {
    if (d.caps().mode != mode_for(cfg.schedule)) {
        throw InvalidArgument("denoiser predicts " + std::string(to_string(d.caps().mode)) + " but the schedule is " +
                              std::string(to_string(cfg.schedule)));
    }
}

}  // namespace detail

/// Shared driver for seed and prompt candidates. All candidates advance
/// together from label T; at the stop step (fixed, or chosen by the
/// diminishing-delta rule) they are scored on their clean-latent projections
/// and only the winner continues to t = 0. A stop step of 0 scores finished
/// latents, which is Best-of-N.
inline RunResult run_candidates(const EditTask& task, const Denoiser& denoiser, const EngineConfig& cfg,
                                std::vector<CandidateSpec> candidates, std::string method, const RunHooks& hooks = {}) {
    cfg.validate();
    detail::check_denoiser(denoiser, cfg);
    if (candidates.empty()) throw InvalidArgument("no candidates");
    for (const auto& c : candidates) require_same_shape(c.initial_latent, task.source_latent, "candidate latent");
    require_same_shape(task.condition(), task.source_latent, "image condition");

    const auto t0 = std::chrono::steady_clock::now();
    const NoiseSchedule sched = make_schedule(cfg.schedule, cfg.steps);
    const int T = cfg.steps;
    const std::size_t n = candidates.size();
    const std::size_t jobs = detail::effective_jobs(denoiser, cfg.jobs);

    SelectionTrace trace;
    trace.method = std::move(method);
    trace.steps = T;
    for (const auto& c : candidates) {
        trace.seeds.push_back(c.seed);
        trace.prompts.push_back(c.prompt);
    }

    CallCounter calls;
    std::vector<Tensor> latents;
    latents.reserve(n);
    for (auto& c : candidates) latents.push_back(std::move(c.initial_latent));

    RelevanceAccumulator acc(n, leading_window(T, cfg.relevance_window));
    DdcMonitor ddc(cfg.ddc_window);
    std::vector<std::optional<GuidedPrediction>> preds(n);
    std::vector<Tensor> projections(n);

    auto finish_trace = [&] {
        trace.model_calls = calls.value();
        trace.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    };

    auto weight_for = [&](std::size_t i) {
        return soft_background_weight(cfg.pooling == MapPooling::Pooled ? acc.mean_map() : acc.candidate_mean(i));
    };

    auto score_all = [&](int t) {
        std::vector<BisReport> reports(n);
        const std::optional<Tensor> pooled =
            cfg.pooling == MapPooling::Pooled ? std::optional<Tensor>(weight_for(0)) : std::nullopt;
        for (std::size_t i = 0; i < n; ++i) {
            const Tensor w = pooled ? *pooled : weight_for(i);
            reports[i] = bis_score(projections[i], task.source_latent, w, i, t);
        }
        return reports;
    };

    try {
        std::optional<int> stop;
        for (int t = T; t >= 1 && !stop; --t) {
            parallel_for(n, jobs, [&](std::size_t i) {
                GuidedPrediction p = guided_predict(denoiser, latents[i], t, task.condition(), candidates[i].prompt,
                                                    cfg.guidance, calls);
                const Tensor& eps = cfg.tweedie_source == TweedieSource::Guided ? p.guided : p.cond;
                projections[i] = tweedie(latents[i], eps, t, sched);
                preds[i] = std::move(p);
            });
            if (acc.window().contains(t)) {
                for (std::size_t i = 0; i < n; ++i) {
                    Tensor map = relevance_map(preds[i]->cond, preds[i]->img_uncond);
                    if (hooks.on_relevance) hooks.on_relevance(i, t, map);
                    acc.accumulate(i, map, t);
                }
            }

            std::vector<BisReport> reports = score_all(t);
            StepRecord rec;
            rec.t = t;
            for (const auto& r : reports) rec.scores.push_back(r.score);
            rec.best = *std::min_element(rec.scores.begin(), rec.scores.end());
            rec.smoothed_delta = ddc.push(rec.best);
            trace.per_step.push_back(rec);

            const int executed = T - t;
            const bool fire = cfg.adaptive ? (executed >= cfg.ddc_floor && ddc_stop(ddc, cfg.tau))
                                           : (t == cfg.t_stop);
            if (fire) {
                stop = t;
                break;
            }
            parallel_for(n, jobs, [&](std::size_t i) { latents[i] = denoise_step(latents[i], preds[i]->guided, t, sched); });
            trace.nfe += n;
        }

        // Selection: at the stop step on projections, or on finished latents.
        const int stop_step = stop.value_or(0);
        if (!stop) {
            for (std::size_t i = 0; i < n; ++i) projections[i] = latents[i];
        }
        std::vector<BisReport> reports = score_all(stop_step);
        for (const auto& r : reports) trace.selection_scores.push_back(r.score);

        std::size_t winner = rank_candidates(reports).front();
        if (cfg.hybrid_fg) {
            const Tensor mean = acc.mean_map();
            for (std::size_t i = 0; i < n; ++i) trace.fg_scores.push_back(fg_score(projections[i], task.source_latent, mean));
            winner = hybrid_select(reports, trace.fg_scores);
        }
        trace.chosen_id = winner;
        trace.actual_stop_step = stop_step;

        Tensor z = std::move(latents[winner]);
        if (stop_step >= 1) {
            z = denoise_step(z, preds[winner]->guided, stop_step, sched);
            trace.nfe += 1;
            for (int t = stop_step - 1; t >= 1; --t) {
                GuidedPrediction p =
                    guided_predict(denoiser, z, t, task.condition(), candidates[winner].prompt, cfg.guidance, calls);
                z = denoise_step(z, p.guided, t, sched);
                trace.nfe += 1;
            }
        }
        trace.complete = true;
        finish_trace();
        return {std::move(z), std::move(trace)};
    } catch (const InvalidArgument&) {
        throw;
    } catch (const std::exception& e) {
        finish_trace();
        throw RunAborted(std::string("run aborted: ") + e.what(), std::move(trace), std::current_exception());
    }
}

inline std::vector<CandidateSpec> seed_candidates(const EditTask& task, const EngineConfig& cfg) {
    std::vector<CandidateSpec> out;
    for (std::uint64_t s : cfg.resolved_seeds()) {
        out.push_back({s, task.instruction, gaussian_noise(s, task.source_latent.shape())});
    }
    return out;
}

/// Early-stopped candidate selection over noise seeds.
inline RunResult elect_run(const EditTask& task, const Denoiser& denoiser, const EngineConfig& cfg,
                           const RunHooks& hooks = {}) {
    return run_candidates(task, denoiser, cfg, seed_candidates(task, cfg), cfg.adaptive ? "elect_adaptive" : "elect",
                          hooks);
}

/// Every candidate runs to completion; the finished latents are scored.
inline RunResult best_of_n(const EditTask& task, const Denoiser& denoiser, EngineConfig cfg,
                           const RunHooks& hooks = {}) {
    cfg.t_stop = 0;
    cfg.adaptive = false;
    return run_candidates(task, denoiser, cfg, seed_candidates(task, cfg), "best_of_n", hooks);
}

/// Plain guided sampling of one seed, with no selection machinery.
inline RunResult vanilla_run(const EditTask& task, const Denoiser& denoiser, const EngineConfig& cfg,
                             std::uint64_t seed = 1) {
    cfg.validate();
    detail::check_denoiser(denoiser, cfg);
    const auto t0 = std::chrono::steady_clock::now();
    const NoiseSchedule sched = make_schedule(cfg.schedule, cfg.steps);
    CallCounter calls;
    SelectionTrace trace;
    trace.method = "vanilla";
    trace.steps = cfg.steps;
    trace.seeds = {seed};
    trace.prompts = {task.instruction};
    Tensor z = gaussian_noise(seed, task.source_latent.shape());
    for (int t = cfg.steps; t >= 1; --t) {
        GuidedPrediction p = guided_predict(denoiser, z, t, task.condition(), task.instruction, cfg.guidance, calls);
        z = denoise_step(z, p.guided, t, sched);
        trace.nfe += 1;
    }
    trace.complete = true;
    trace.model_calls = calls.value();
    trace.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    return {std::move(z), std::move(trace)};
}

}  // namespace elect

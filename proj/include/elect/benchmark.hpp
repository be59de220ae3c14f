#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "elect/denoiser.hpp"
#include "elect/engine.hpp"
#include "elect/rng.hpp"

namespace elect {

enum class DeltaDistribution { FoldedNormal, Zero, Fixed };

struct BenchParams {
    std::size_t channels = 4;
    std::size_t height = 16;
    std::size_t width = 16;
    std::size_t min_patch = 6;
    std::size_t max_patch = 10;
    DeltaDistribution delta_dist = DeltaDistribution::FoldedNormal;
    double delta_sigma = 0.3;
    std::vector<double> fixed_deltas;  // by seed - 1, for DeltaDistribution::Fixed
    double fg_jitter = 0.0;            // std-dev of per-candidate edit strength (0 = one fixed pattern)
    std::size_t max_candidates = 16;   // seeds pre-registered with each oracle

    void validate() const {
        if (channels < 1 || height < 2 || width < 2) throw InvalidArgument("benchmark latent too small");
        if (min_patch < 1 || max_patch < min_patch || max_patch >= std::min(height, width)) {
            throw InvalidArgument("benchmark patch size range invalid for the latent size");
        }
        if (delta_sigma < 0.0 || fg_jitter < 0.0) throw InvalidArgument("benchmark spreads must be nonnegative");
    }
};

/// One synthetic editing problem. Every candidate (a seed, optionally paired
/// with an instruction variant) has a closed-form outcome:
///   target = source + gain * edit_offset (inside the patch)
///                   + delta * field     (outside the patch)
/// so its ground-truth background MSE is delta^2 * mean(field^2 over background).
class BenchTask {
  public:
    BenchTask(std::size_t index, std::uint64_t task_seed, BenchParams params)
        : index_(index), task_seed_(task_seed), params_(std::move(params)) {
        params_.validate();
        build();
    }

    std::size_t index() const { return index_; }
    std::uint64_t task_seed() const { return task_seed_; }
    const BenchParams& params() const { return params_; }
    const EditTask& edit() const { return edit_; }
    const Tensor& source() const { return edit_.source_latent; }
    const Tensor& gt_mask() const { return *edit_.gt_mask; }
    const Tensor& edit_offset() const { return edit_offset_; }
    Shape latent_shape() const { return {1, params_.channels, params_.height, params_.width}; }

    /// Candidate key: the seed for the task instruction, a seed/prompt mix otherwise.
    std::uint64_t key(std::uint64_t seed, std::string_view prompt) const {
        if (prompt == edit_.instruction) return seed;
        return derive_seed(seed, fnv1a(prompt));
    }

    void set_prompt_delta(const std::string& prompt, double delta) { prompt_deltas_[prompt] = delta; }

    double delta(std::uint64_t seed, std::string_view prompt) const {
        if (auto it = prompt_deltas_.find(std::string(prompt)); it != prompt_deltas_.end()) return it->second;
        switch (params_.delta_dist) {
            case DeltaDistribution::Zero:
                return 0.0;
            case DeltaDistribution::Fixed: {
                if (seed < 1 || seed > params_.fixed_deltas.size()) {
                    throw InvalidArgument("no fixed delta for seed " + std::to_string(seed));
                }
                return params_.fixed_deltas[seed - 1];
            }
            case DeltaDistribution::FoldedNormal:
                break;
        }
        SeededRng rng(derive_seed(task_seed_, key(seed, prompt) * 4 + 1));
        return std::abs(rng.normal_pair().first * params_.delta_sigma);
    }
    double delta(std::uint64_t seed) const { return delta(seed, edit_.instruction); }

    double fg_gain(std::uint64_t seed, std::string_view prompt) const {
        SeededRng rng(derive_seed(task_seed_, key(seed, prompt) * 4 + 2));
        return 1.0 + params_.fg_jitter * rng.normal_pair().first;
    }

    /// Smooth low-frequency pattern, zero inside the edit patch.
    Tensor field(std::uint64_t seed, std::string_view prompt) const {
        SeededRng rng(derive_seed(task_seed_, key(seed, prompt) * 4 + 3));
        return smooth_field(rng, true);
    }

    double field_energy(std::uint64_t seed, std::string_view prompt) const {
        const Tensor f = field(seed, prompt);
        const std::size_t plane = params_.height * params_.width;
        double sq = 0.0;
        std::size_t n = 0;
        for (std::size_t i = 0; i < f.size(); ++i) {
            if (gt_mask()[i % plane] != 0.0f) continue;
            sq += static_cast<double>(f[i]) * f[i];
            ++n;
        }
        return sq / static_cast<double>(n);
    }

    /// Analytic ground-truth background MSE of the candidate's final latent.
    double gt_bg_mse(std::uint64_t seed, std::string_view prompt) const {
        const double d = delta(seed, prompt);
        return d * d * field_energy(seed, prompt);
    }
    double gt_bg_mse(std::uint64_t seed) const { return gt_bg_mse(seed, edit_.instruction); }

    /// Source with the candidate's background deviation and no edit.
    Tensor unedited(std::uint64_t seed, std::string_view prompt) const {
        const Tensor f = field(seed, prompt);
        const double d = delta(seed, prompt);
        return zip_with(source(), f, [d](float s, float v) { return static_cast<float>(s + d * v); });
    }

    /// The candidate's final clean latent.
    Tensor target(std::uint64_t seed, std::string_view prompt) const {
        const Tensor base = unedited(seed, prompt);
        const double g = fg_gain(seed, prompt);
        return zip_with(base, edit_offset_, [g](float b, float o) { return static_cast<float>(b + g * o); });
    }
    Tensor target(std::uint64_t seed) const { return target(seed, edit_.instruction); }

  private:
    Tensor smooth_field(SeededRng& rng, bool background_only) const {
        const std::size_t h = params_.height, w = params_.width, plane = h * w;
        std::vector<float> out(params_.channels * plane, 0.0f);
        for (std::size_t c = 0; c < params_.channels; ++c) {
            for (int k = 0; k < 3; ++k) {
                const double amp = rng.uniform(0.5, 1.0);
                const double fx = rng.uniform(0.25, 2.0);
                const double fy = rng.uniform(0.25, 2.0);
                const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
                for (std::size_t y = 0; y < h; ++y) {
                    for (std::size_t x = 0; x < w; ++x) {
                        const double arg = 2.0 * std::numbers::pi * (fx * x / w + fy * y / h) + phase;
                        out[c * plane + y * w + x] += static_cast<float>(amp * std::cos(arg));
                    }
                }
            }
        }
        if (background_only) {
            for (std::size_t i = 0; i < out.size(); ++i) {
                if (mask_plane_[i % plane] != 0.0f) out[i] = 0.0f;
            }
        }
        return Tensor(latent_shape(), std::move(out));
    }

    void build() {
        const std::size_t h = params_.height, w = params_.width, plane = h * w;
        SeededRng rng(derive_seed(task_seed_, 0));

        const auto ph = static_cast<std::size_t>(rng.uniform_int(params_.min_patch, params_.max_patch));
        const auto pw = static_cast<std::size_t>(rng.uniform_int(params_.min_patch, params_.max_patch));
        const auto y0 = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(h - ph)));
        const auto x0 = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(w - pw)));
        mask_plane_.assign(plane, 0.0f);
        for (std::size_t y = y0; y < y0 + ph; ++y) {
            for (std::size_t x = x0; x < x0 + pw; ++x) mask_plane_[y * w + x] = 1.0f;
        }

        Tensor src = smooth_field(rng, false);
        Tensor grain = gaussian_noise(rng, latent_shape());
        src = zip_with(src, grain, [](float s, float g) { return 0.5f * s + 0.1f * g; });

        // Edit: a bump centred in the patch, never zero inside it.
        std::vector<float> offset(params_.channels * plane, 0.0f);
        const double cy = y0 + (ph - 1) / 2.0, cx = x0 + (pw - 1) / 2.0;
        const double sy = ph / 2.5, sx = pw / 2.5;
        for (std::size_t c = 0; c < params_.channels; ++c) {
            const double amp = rng.uniform(0.8, 1.5) * (rng.next_u64() & 1 ? 1.0 : -1.0);
            for (std::size_t y = y0; y < y0 + ph; ++y) {
                for (std::size_t x = x0; x < x0 + pw; ++x) {
                    const double dy = (y - cy) / sy, dx = (x - cx) / sx;
                    const double bump = std::exp(-0.5 * (dx * dx + dy * dy));
                    offset[c * plane + y * w + x] = static_cast<float>(amp * (0.3 + 0.7 * bump));
                }
            }
        }
        edit_offset_ = Tensor(latent_shape(), std::move(offset));
        edit_.source_latent = std::move(src);
        edit_.instruction = "synthetic edit " + std::to_string(index_);
        edit_.gt_mask = Tensor({h, w}, mask_plane_);
    }

    std::size_t index_;
    std::uint64_t task_seed_;
    BenchParams params_;
    EditTask edit_;
    std::vector<float> mask_plane_;
    Tensor edit_offset_;
    std::map<std::string, double> prompt_deltas_;
};

/// Analytic denoiser for a BenchTask. It recognizes which registered
/// candidate a latent belongs to by matching it against each candidate's
/// closed-form trajectory, then predicts so that:
///   - null-text branches project onto the seed's unedited latent (no
///     foreground change, no prompt dependence),
///   - the image + text branch projects onto a latent chosen so that the
///     guided combination projects exactly onto the candidate's target.
/// For the task instruction, cond and uncond differ only inside the edit patch.
class SyntheticEditDenoiser final : public Denoiser {
  public:
    SyntheticEditDenoiser(std::shared_ptr<const BenchTask> task, NoiseSchedule sched, GuidanceConfig guidance)
        : task_(std::move(task)), sched_(std::move(sched)), guidance_(guidance) {
        for (std::uint64_t s = 1; s <= task_->params().max_candidates; ++s) register_seed(s);
    }

    DenoiserCaps caps() const override { return {mode_for(sched_.kind()), true, Concurrency::Concurrent, 0}; }
    std::string model_id() const override { return "synthetic-edit"; }

    void register_seed(std::uint64_t seed) { register_track(seed, task_->edit().instruction); }

    /// Candidate starting from seed's noise but conditioned on `prompt`.
    void register_track(std::uint64_t seed, const std::string& prompt) {
        std::lock_guard lock(mu_);
        for (const auto& tr : tracks_) {
            if (tr.seed == seed && tr.prompt == prompt) return;
        }
        Track tr;
        tr.seed = seed;
        tr.prompt = prompt;
        // Null-text branches never see the prompt, so their target depends on the seed only.
        tr.unedited = task_->unedited(seed, task_->edit().instruction);
        const Tensor target = task_->target(seed, prompt);
        const double st = guidance_.text_scale;
        tr.cond = st != 0.0 ? zip_with(tr.unedited, target,
                                       [st](float u, float g) { return static_cast<float>(u + (g - u) / st); })
                            : target;
        tr.guided = cfg_combine(tr.unedited, tr.unedited, tr.cond, guidance_);
        tr.z_T = gaussian_noise(seed, task_->latent_shape());
        const int T = sched_.steps();
        if (sched_.kind() == ScheduleKind::Diffusion) {
            const double ab = sched_.alpha_bar_at(T);
            const double a = std::sqrt(ab), b = std::sqrt(1.0 - ab);
            tr.noise = zip_with(tr.z_T, tr.guided, [a, b](float z, float c) { return static_cast<float>((z - a * c) / b); });
        } else {
            tr.noise = tr.z_T;
        }
        tracks_.push_back(std::move(tr));
    }

    Tensor predict(const DenoiserRequest& req) const override {
        req.validate();
        if (!req.latent.same_shape(task_->source())) {
            throw InvalidArgument("synthetic denoiser expects latent shape " + shape_str(task_->source().shape()));
        }
        const Track& tr = identify(req);
        const bool conditioned = req.image_latent.has_value() && req.prompt.has_value();
        return point_target_prediction(req.latent, conditioned ? tr.cond : tr.unedited, req.t, sched_);
    }

    /// Latent a candidate is expected to have at label t.
    Tensor expected_latent(std::uint64_t seed, const std::string& prompt, int t) const {
        std::lock_guard lock(mu_);
        for (const auto& tr : tracks_) {
            if (tr.seed == seed && tr.prompt == prompt) return trajectory(tr, t);
        }
        throw InvalidArgument("candidate not registered");
    }

  private:
    struct Track {
        std::uint64_t seed = 0;
        std::string prompt;
        Tensor unedited, cond, guided, z_T, noise;
    };

    Tensor trajectory(const Track& tr, int t) const {
        if (sched_.kind() == ScheduleKind::Diffusion) {
            const double ab = sched_.alpha_bar_at(t);
            const double a = std::sqrt(ab), b = std::sqrt(1.0 - ab);
            return zip_with(tr.guided, tr.noise, [a, b](float c, float n) { return static_cast<float>(a * c + b * n); });
        }
        const double tau = sched_.time_at(t);
        return zip_with(tr.guided, tr.z_T, [tau](float c, float z) { return static_cast<float>(c + tau * (z - c)); });
    }

    const Track& identify(const DenoiserRequest& req) const {
        std::lock_guard lock(mu_);
        if (tracks_.empty()) throw StateError("synthetic denoiser has no registered candidates");
        bool prompt_known = false;
        if (req.prompt) {
            for (const auto& tr : tracks_) prompt_known |= tr.prompt == *req.prompt;
        }
        const Track* best = nullptr;
        double best_d = INFINITY;
        for (const auto& tr : tracks_) {
            if (prompt_known && tr.prompt != *req.prompt) continue;
            const Tensor expect = trajectory(tr, req.t);
            double d = 0.0;
            for (std::size_t i = 0; i < expect.size() && d < best_d; ++i) {
                const double e = static_cast<double>(expect[i]) - req.latent[i];
                d += e * e;
            }
            if (d < best_d) {
                best_d = d;
                best = &tr;
            }
        }
        return *best;
    }

    std::shared_ptr<const BenchTask> task_;
    NoiseSchedule sched_;
    GuidanceConfig guidance_;
    mutable std::mutex mu_;
    std::vector<Track> tracks_;
};

/// Generates `n_tasks` independent synthetic tasks from one seed.
inline std::vector<std::shared_ptr<BenchTask>> make_benchmark(std::uint64_t rng_seed, std::size_t n_tasks,
                                                              const BenchParams& params = {}) {
    if (n_tasks < 1) throw InvalidArgument("make_benchmark: need at least one task");
    params.validate();
    std::vector<std::shared_ptr<BenchTask>> out;
    out.reserve(n_tasks);
    for (std::size_t i = 0; i < n_tasks; ++i) {
        out.push_back(std::make_shared<BenchTask>(i, derive_seed(rng_seed, i + 1), params));
    }
    return out;
}

/// Seed with the smallest analytic background error among `seeds` (ties to the earlier seed).
inline std::uint64_t gt_best_seed(const BenchTask& task, const std::vector<std::uint64_t>& seeds) {
    std::uint64_t best = seeds.front();
    double best_v = task.gt_bg_mse(best);
    for (std::uint64_t s : seeds) {
        const double v = task.gt_bg_mse(s);
        if (v < best_v) {
            best_v = v;
            best = s;
        }
    }
    return best;
}

}  // namespace elect

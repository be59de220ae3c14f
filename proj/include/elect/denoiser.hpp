#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "elect/schedule.hpp"
#include "elect/tensor.hpp"

namespace elect {

enum class PredictionMode { Eps, Velocity };

inline std::string_view to_string(PredictionMode m) { return m == PredictionMode::Eps ? "eps" : "velocity"; }

inline PredictionMode parse_prediction_mode(std::string_view s) {
    if (s == "eps") return PredictionMode::Eps;
    if (s == "velocity") return PredictionMode::Velocity;
    throw InvalidArgument("unknown prediction mode '" + std::string(s) + "'");
}

inline PredictionMode mode_for(ScheduleKind kind) {
    return kind == ScheduleKind::Diffusion ? PredictionMode::Eps : PredictionMode::Velocity;
}

/// Arguments of one conditional prediction. An absent image latent is the
/// null image condition; an absent prompt is the null text condition.
struct DenoiserRequest {
    Tensor latent;
    int t = 0;
    std::optional<Tensor> image_latent;
    std::optional<std::string> prompt;
    PredictionMode mode = PredictionMode::Eps;

    void validate() const {
        if (image_latent) require_same_shape(latent, *image_latent, "denoiser request image latent");
    }
};

enum class Concurrency { Concurrent, Serialized };

struct DenoiserCaps {
    PredictionMode mode = PredictionMode::Eps;
    bool has_null_image_branch = true;
    Concurrency concurrency = Concurrency::Concurrent;
    std::size_t max_parallel = 0;  // 0 = unbounded
};

class Denoiser {
  public:
    virtual ~Denoiser() = default;
    virtual DenoiserCaps caps() const = 0;
    /// Noise (or velocity) prediction shaped like `req.latent`. Must be
    /// deterministic for identical requests.
    virtual Tensor predict(const DenoiserRequest& req) const = 0;
    virtual std::string model_id() const { return "unnamed"; }
};

struct GuidanceConfig {
    double image_scale = 1.5;
    double text_scale = 7.5;

    void validate() const {
        if (!std::isfinite(image_scale) || !std::isfinite(text_scale)) {
            throw InvalidArgument("guidance scales must be finite");
        }
    }
};

/// e_uu + s_I (e_iu - e_uu) + s_T (e_ic - e_iu)
inline Tensor cfg_combine(const Tensor& e_uu, const Tensor& e_iu, const Tensor& e_ic, const GuidanceConfig& g) {
    require_same_shape(e_uu, e_iu, "cfg_combine");
    require_same_shape(e_uu, e_ic, "cfg_combine");
    const double si = g.image_scale;
    const double st = g.text_scale;
    std::vector<float> out(e_uu.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double uu = e_uu[i];
        const double iu = e_iu[i];
        const double ic = e_ic[i];
        out[i] = static_cast<float>(uu + si * (iu - uu) + st * (ic - iu));
    }
    return Tensor(e_uu.shape(), std::move(out));
}

class CallCounter {
  public:
    void add(std::uint64_t n) { count_.fetch_add(n, std::memory_order_relaxed); }
    std::uint64_t value() const { return count_.load(std::memory_order_relaxed); }

  private:
    std::atomic<std::uint64_t> count_{0};
};

struct GuidedPrediction {
    Tensor guided;      // combined estimate that drives the sampler
    Tensor cond;        // image + text condition
    Tensor img_uncond;  // image condition, null text
};

/// Issues the three guidance branches (two when the denoiser has no
/// null-image branch, in which case e_uu := e_iu).
inline GuidedPrediction guided_predict(const Denoiser& d, const Tensor& z_t, int t, const Tensor& image_latent,
                                       const std::string& prompt, const GuidanceConfig& g, CallCounter& calls) {
    const DenoiserCaps caps = d.caps();
    DenoiserRequest req{z_t, t, image_latent, std::nullopt, caps.mode};
    req.validate();

    std::optional<Tensor> e_uu;
    if (caps.has_null_image_branch) {
        DenoiserRequest null_req{z_t, t, std::nullopt, std::nullopt, caps.mode};
        e_uu = d.predict(null_req);
        calls.add(1);
    }
    Tensor e_iu = d.predict(req);
    calls.add(1);
    req.prompt = prompt;
    Tensor e_ic = d.predict(req);
    calls.add(1);

    const Tensor& uu = e_uu ? *e_uu : e_iu;
    require_same_shape(z_t, uu, "denoiser output");
    require_same_shape(z_t, e_iu, "denoiser output");
    require_same_shape(z_t, e_ic, "denoiser output");
    Tensor guided = cfg_combine(uu, e_iu, e_ic, g);
    return {std::move(guided), std::move(e_ic), std::move(e_iu)};
}

/// Prediction that makes the clean-latent projection equal `target` at every
/// step, for every condition.
inline Tensor point_target_prediction(const Tensor& z_t, const Tensor& target, int t, const NoiseSchedule& sched) {
    require_same_shape(z_t, target, "point-target prediction");
    if (t < 1) throw InvalidArgument("point-target prediction needs t >= 1");
    if (sched.kind() == ScheduleKind::Diffusion) {
        const double ab = sched.alpha_bar_at(t);
        const double a = std::sqrt(ab);
        const double inv_b = 1.0 / std::sqrt(1.0 - ab);
        return zip_with(z_t, target, [=](float z, float c) { return static_cast<float>((z - a * c) * inv_b); });
    }
    const double tau = sched.time_at(t);
    return zip_with(z_t, target, [tau](float z, float c) { return static_cast<float>((z - c) / tau); });
}

/// Analytic denoiser whose every branch points at one fixed clean latent.
class PointTargetDenoiser final : public Denoiser {
  public:
    PointTargetDenoiser(Tensor target, NoiseSchedule sched) : target_(std::move(target)), sched_(std::move(sched)) {}

    DenoiserCaps caps() const override { return {mode_for(sched_.kind()), true, Concurrency::Concurrent, 0}; }

    Tensor predict(const DenoiserRequest& req) const override {
        req.validate();
        if (!req.latent.same_shape(target_)) {
            throw InvalidArgument("point-target denoiser expects latent shape " + shape_str(target_.shape()));
        }
        return point_target_prediction(req.latent, target_, req.t, sched_);
    }

    std::string model_id() const override { return "point-target"; }
    const Tensor& target() const { return target_; }

  private:
    Tensor target_;
    NoiseSchedule sched_;
};

/// Returns the same velocity for every request.
class ConstantVelocityDenoiser final : public Denoiser {
  public:
    explicit ConstantVelocityDenoiser(Tensor velocity) : velocity_(std::move(velocity)) {}

    DenoiserCaps caps() const override { return {PredictionMode::Velocity, true, Concurrency::Concurrent, 0}; }

    Tensor predict(const DenoiserRequest& req) const override {
        require_same_shape(req.latent, velocity_, "constant-velocity denoiser");
        return velocity_;
    }

    std::string model_id() const override { return "constant-velocity"; }

  private:
    Tensor velocity_;
};

}  // namespace elect

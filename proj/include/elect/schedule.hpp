#pragma once

#include <cmath>
#include <string>
#include <string_view>
#include <vector>

#include "elect/tensor.hpp"

namespace elect {

enum class ScheduleKind { Diffusion, RectifiedFlow };

inline std::string_view to_string(ScheduleKind k) {
    return k == ScheduleKind::Diffusion ? "diffusion" : "rectified-flow";
}

inline ScheduleKind parse_schedule_kind(std::string_view s) {
    if (s == "diffusion" || s == "ddim") return ScheduleKind::Diffusion;
    if (s == "rectified-flow" || s == "rf") return ScheduleKind::RectifiedFlow;
    throw InvalidArgument("unknown schedule kind '" + std::string(s) + "'");
}

inline constexpr int kTrainSteps = 1000;
inline constexpr double kBetaStart = 0.00085;
inline constexpr double kBetaEnd = 0.012;

/// Discrete sampling grid. Steps are labeled t = T..1, with t = 0 the clean
/// end. For diffusion `alpha_bar[t]` is the cumulative signal fraction
/// (alpha_bar[0] = 1). For rectified flow `rf_times[k] = 1 - k/T` is the
/// continuous time after k steps, so label t sits at time t/T.
class NoiseSchedule {
  public:
    static NoiseSchedule make(ScheduleKind kind, int steps) {
        if (steps < 2) throw InvalidArgument("schedule needs at least 2 steps, got " + std::to_string(steps));
        NoiseSchedule s;
        s.kind_ = kind;
        s.steps_ = steps;
        if (kind == ScheduleKind::Diffusion) {
            if (steps > kTrainSteps) {
                throw InvalidArgument("diffusion schedule supports at most " + std::to_string(kTrainSteps) + " steps");
            }
            // Scaled-linear betas: sqrt(beta) linear over the training grid.
            std::vector<double> train_alpha_bar(kTrainSteps);
            const double a = std::sqrt(kBetaStart);
            const double b = std::sqrt(kBetaEnd);
            double prod = 1.0;
            for (int j = 0; j < kTrainSteps; ++j) {
                const double root = a + (b - a) * j / (kTrainSteps - 1);
                prod *= 1.0 - root * root;
                train_alpha_bar[j] = prod;
            }
            s.alpha_bar_.resize(steps + 1);
            s.alpha_bar_[0] = 1.0;
            for (int t = 1; t <= steps; ++t) {
                // Trailing spacing: label T hits the last training index.
                const int idx = static_cast<int>(static_cast<long long>(t) * kTrainSteps / steps) - 1;
                s.alpha_bar_[t] = train_alpha_bar[idx];
            }
        } else {
            s.rf_times_.resize(steps + 1);
            for (int k = 0; k <= steps; ++k) s.rf_times_[k] = 1.0 - static_cast<double>(k) / steps;
            s.rf_times_[steps] = 0.0;
        }
        return s;
    }

    /// Custom diffusion grid; alpha_bar[0] must be 1 and values strictly decrease in (0, 1].
    static NoiseSchedule from_alpha_bar(std::vector<double> alpha_bar) {
        if (alpha_bar.size() < 3) throw InvalidArgument("custom schedule needs at least 2 steps");
        if (alpha_bar[0] != 1.0) throw InvalidArgument("alpha_bar[0] must be 1");
        for (std::size_t t = 1; t < alpha_bar.size(); ++t) {
            if (!(alpha_bar[t] > 0.0 && alpha_bar[t] < alpha_bar[t - 1])) {
                throw InvalidArgument("alpha_bar must be strictly decreasing in (0, 1]");
            }
        }
        NoiseSchedule s;
        s.kind_ = ScheduleKind::Diffusion;
        s.steps_ = static_cast<int>(alpha_bar.size()) - 1;
        s.alpha_bar_ = std::move(alpha_bar);
        return s;
    }

    ScheduleKind kind() const { return kind_; }
    int steps() const { return steps_; }
    const std::vector<double>& alpha_bar() const { return alpha_bar_; }
    const std::vector<double>& rf_times() const { return rf_times_; }

    void check_label(int t) const {
        if (t < 0 || t > steps_) {
            throw InvalidArgument("timestep " + std::to_string(t) + " outside [0, " + std::to_string(steps_) + "]");
        }
    }

    double alpha_bar_at(int t) const {
        check_label(t);
        if (kind_ != ScheduleKind::Diffusion) throw InvalidArgument("alpha_bar requested on a rectified-flow schedule");
        return alpha_bar_[t];
    }

    /// Continuous rectified-flow time of label t.
    double time_at(int t) const {
        check_label(t);
        if (kind_ != ScheduleKind::RectifiedFlow) throw InvalidArgument("rf time requested on a diffusion schedule");
        return rf_times_[steps_ - t];
    }

    /// Signal-to-noise ratio sqrt(alpha_bar / (1 - alpha_bar)); diffusion only.
    double snr_at(int t) const {
        const double ab = alpha_bar_at(t);
        return std::sqrt(ab / (1.0 - ab));
    }

  private:
    NoiseSchedule() = default;

    ScheduleKind kind_ = ScheduleKind::Diffusion;
    int steps_ = 0;
    std::vector<double> alpha_bar_;
    std::vector<double> rf_times_;
};

inline NoiseSchedule make_schedule(ScheduleKind kind, int steps) { return NoiseSchedule::make(kind, steps); }

/// Forward noising. Diffusion: sqrt(ab) z0 + sqrt(1 - ab) eps.
/// Rectified flow: (1 - tau) z0 + tau eps, whose velocity is eps - z0.
inline Tensor add_noise(const Tensor& z0, const Tensor& eps, int t, const NoiseSchedule& sched) {
    require_same_shape(z0, eps, "add_noise");
    double a, b;
    if (sched.kind() == ScheduleKind::Diffusion) {
        const double ab = sched.alpha_bar_at(t);
        a = std::sqrt(ab);
        b = std::sqrt(1.0 - ab);
    } else {
        const double tau = sched.time_at(t);
        a = 1.0 - tau;
        b = tau;
    }
    return zip_with(z0, eps, [a, b](float x, float e) { return static_cast<float>(a * x + b * e); });
}

/// Clean-latent estimate from a diffusion noise prediction at signal fraction `alpha_bar`.
inline Tensor tweedie_diffusion(const Tensor& z_t, const Tensor& eps_hat, double alpha_bar) {
    require_same_shape(z_t, eps_hat, "tweedie");
    if (!(alpha_bar > 0.0)) throw NumericDomainError("tweedie: alpha_bar must be positive");
    const double inv = 1.0 / std::sqrt(alpha_bar);
    const double noise = std::sqrt(1.0 - alpha_bar);
    return zip_with(z_t, eps_hat, [=](float z, float e) { return static_cast<float>((z - noise * e) * inv); });
}

/// Clean-latent projection. For rectified flow `eps_hat` is the velocity and
/// the projection is z_t - v * tau.
inline Tensor tweedie(const Tensor& z_t, const Tensor& eps_hat, int t, const NoiseSchedule& sched) {
    if (sched.kind() == ScheduleKind::Diffusion) return tweedie_diffusion(z_t, eps_hat, sched.alpha_bar_at(t));
    require_same_shape(z_t, eps_hat, "tweedie");
    const double tau = sched.time_at(t);
    return zip_with(z_t, eps_hat, [tau](float z, float v) { return static_cast<float>(z - v * tau); });
}

/// One deterministic step from label t to t - 1 (DDIM with eta = 0, or an
/// Euler step of the rectified-flow ODE).
inline Tensor denoise_step(const Tensor& z_t, const Tensor& eps_hat, int t, const NoiseSchedule& sched) {
    if (t < 1) throw InvalidArgument("denoise_step: t must be >= 1, got " + std::to_string(t));
    require_same_shape(z_t, eps_hat, "denoise_step");
    if (sched.kind() == ScheduleKind::Diffusion) {
        const double ab = sched.alpha_bar_at(t);
        const double ab_prev = sched.alpha_bar_at(t - 1);
        const double inv = 1.0 / std::sqrt(ab);
        const double noise = std::sqrt(1.0 - ab);
        const double a_prev = std::sqrt(ab_prev);
        const double b_prev = std::sqrt(1.0 - ab_prev);
        return zip_with(z_t, eps_hat, [=](float z, float e) {
            const double z0 = (z - noise * e) * inv;
            return static_cast<float>(a_prev * z0 + b_prev * e);
        });
    }
    const double dt = sched.time_at(t) - sched.time_at(t - 1);
    return zip_with(z_t, eps_hat, [dt](float z, float v) { return static_cast<float>(z - v * dt); });
}

}  // namespace elect

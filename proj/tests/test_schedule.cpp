#include <gtest/gtest.h>

#include <cmath>

#include "elect/rng.hpp"
#include "elect/schedule.hpp"

using namespace elect;

namespace {

// Independent cumulative product in long double: beta_j = (sqrt(b0) + j (sqrt(b1) - sqrt(b0)) / 999)^2.
long double oracle_alpha_bar(int train_index) {
    const long double a = std::sqrt(0.00085L), b = std::sqrt(0.012L);
    long double prod = 1.0L;
    for (int j = 0; j <= train_index; ++j) {
        const long double r = a + (b - a) * j / 999.0L;
        prod *= 1.0L - r * r;
    }
    return prod;
}

}  // namespace

TEST(Schedule, DiffusionMatchesIndependentProduct) {
    for (int T : {10, 50, 100, 1000}) {
        NoiseSchedule s = make_schedule(ScheduleKind::Diffusion, T);
        EXPECT_EQ(s.alpha_bar_at(0), 1.0);
        for (int t = 1; t <= T; ++t) {
            const int idx = t * 1000 / T - 1;
            ASSERT_NEAR(s.alpha_bar_at(t), static_cast<double>(oracle_alpha_bar(idx)), 1e-12) << "T=" << T << " t=" << t;
        }
    }
}

TEST(Schedule, DiffusionEndpoints) {
    NoiseSchedule s = make_schedule(ScheduleKind::Diffusion, 100);
    EXPECT_LT(s.alpha_bar_at(100), 0.01);
    EXPECT_EQ(s.alpha_bar_at(0), 1.0);
    for (int t = 1; t <= 100; ++t) EXPECT_LT(s.alpha_bar_at(t), s.alpha_bar_at(t - 1));
}

TEST(Schedule, RectifiedFlowGrid) {
    NoiseSchedule s = make_schedule(ScheduleKind::RectifiedFlow, 100);
    EXPECT_EQ(s.rf_times().front(), 1.0);
    EXPECT_EQ(s.rf_times().back(), 0.0);
    for (int k = 1; k <= 100; ++k) EXPECT_NEAR(s.rf_times()[k - 1] - s.rf_times()[k], 0.01, 1e-12);
    EXPECT_DOUBLE_EQ(s.time_at(100), 1.0);
    EXPECT_DOUBLE_EQ(s.time_at(50), 0.5);
}

TEST(Schedule, Preconditions) {
    EXPECT_THROW(make_schedule(ScheduleKind::Diffusion, 1), InvalidArgument);
    EXPECT_THROW(make_schedule(ScheduleKind::Diffusion, 1001), InvalidArgument);
    EXPECT_THROW(make_schedule(ScheduleKind::Diffusion, 100).alpha_bar_at(101), InvalidArgument);
    EXPECT_THROW(make_schedule(ScheduleKind::RectifiedFlow, 100).alpha_bar_at(1), InvalidArgument);
    EXPECT_THROW(parse_schedule_kind("ddpm"), InvalidArgument);
    EXPECT_EQ(parse_schedule_kind("rectified-flow"), ScheduleKind::RectifiedFlow);
}

TEST(Schedule, CustomAlphaBar) {
    NoiseSchedule s = NoiseSchedule::from_alpha_bar({1.0, 0.75, 0.25});
    EXPECT_EQ(s.steps(), 2);
    EXPECT_EQ(s.alpha_bar_at(2), 0.25);
    EXPECT_THROW(NoiseSchedule::from_alpha_bar({0.9, 0.5, 0.1}), InvalidArgument);
    EXPECT_THROW(NoiseSchedule::from_alpha_bar({1.0, 0.5, 0.6}), InvalidArgument);
}

TEST(AddNoise, IdentityAtZero) {
    NoiseSchedule s = make_schedule(ScheduleKind::Diffusion, 100);
    Tensor z0 = gaussian_noise(1, {8});
    EXPECT_EQ(add_noise(z0, gaussian_noise(2, {8}), 0, s), z0);
}

TEST(AddNoise, ZeroSignalScalesNoise) {
    NoiseSchedule s = make_schedule(ScheduleKind::Diffusion, 100);
    Tensor eps = gaussian_noise(2, {8});
    for (int t : {1, 37, 100}) {
        Tensor z = add_noise(Tensor({8}, 0.0f), eps, t, s);
        const double b = std::sqrt(1.0 - s.alpha_bar_at(t));
        for (int i = 0; i < 8; ++i) EXPECT_FLOAT_EQ(z[i], static_cast<float>(b * eps[i]));
    }
}

TEST(AddNoise, HandExample) {
    NoiseSchedule s = NoiseSchedule::from_alpha_bar({1.0, 0.5, 0.25});
    Tensor z = add_noise(Tensor({2}, {1, 1}), Tensor({2}, {0, 2}), 2, s);
    EXPECT_FLOAT_EQ(z[0], 0.5f);
    EXPECT_FLOAT_EQ(z[1], static_cast<float>(0.5 + std::sqrt(0.75) * 2));
}

TEST(Tweedie, InvertsAddNoiseEverywhere) {
    Tensor z0 = gaussian_noise(11, {4, 8, 8});
    Tensor eps = gaussian_noise(12, {4, 8, 8});
    for (ScheduleKind kind : {ScheduleKind::Diffusion, ScheduleKind::RectifiedFlow}) {
        NoiseSchedule s = make_schedule(kind, 100);
        for (int t = 0; t <= 100; ++t) {
            if (kind == ScheduleKind::RectifiedFlow && t == 0) continue;
            Tensor zt = add_noise(z0, eps, t, s);
            // Rectified flow predicts velocity eps - z0.
            Tensor pred = kind == ScheduleKind::Diffusion
                              ? eps
                              : zip_with(eps, z0, [](float e, float z) { return e - z; });
            Tensor back = tweedie(zt, pred, t, s);
            double err = 0.0, norm = 0.0;
            for (std::size_t i = 0; i < z0.size(); ++i) {
                err = std::max(err, std::abs(static_cast<double>(back[i]) - z0[i]));
                norm = std::max(norm, std::abs(static_cast<double>(z0[i])));
            }
            ASSERT_LE(err / norm, 1e-5) << to_string(kind) << " t=" << t;
        }
    }
}

TEST(Tweedie, RectifiedFlowPlugIn) {
    NoiseSchedule s = make_schedule(ScheduleKind::RectifiedFlow, 100);
    Tensor out = tweedie(Tensor({2}, {2, 2}), Tensor({2}, {1, 0}), 50, s);
    EXPECT_FLOAT_EQ(out[0], 1.5f);
    EXPECT_FLOAT_EQ(out[1], 2.0f);
}

TEST(Tweedie, RejectsNonPositiveAlphaBar) {
    EXPECT_THROW(tweedie_diffusion(Tensor({1}), Tensor({1}), 0.0), NumericDomainError);
}

TEST(DenoiseStep, ZeroNoiseRescales) {
    NoiseSchedule s = make_schedule(ScheduleKind::Diffusion, 100);
    Tensor z = gaussian_noise(4, {6});
    for (int t : {1, 50, 100}) {
        Tensor next = denoise_step(z, Tensor({6}, 0.0f), t, s);
        const double k = std::sqrt(s.alpha_bar_at(t - 1) / s.alpha_bar_at(t));
        for (int i = 0; i < 6; ++i) EXPECT_NEAR(next[i], k * z[i], 1e-5 * std::abs(k * z[i]) + 1e-7);
    }
    EXPECT_THROW(denoise_step(z, z, 0, s), InvalidArgument);
}

#pragma once

#include <cmath>
#include <map>
#include <optional>
#include <vector>

#include "elect/robust_stats.hpp"
#include "elect/tensor.hpp"

namespace elect {

/// Per-pixel edit relevance: channel-mean of |cond - uncond|, outlier-clamped
/// and rescaled to [0, 1]. Output shape is [H, W].
inline Tensor relevance_map(const Tensor& eps_cond, const Tensor& eps_uncond) {
    require_same_shape(eps_cond, eps_uncond, "relevance_map");
    const SpatialDims dims = spatial_dims(eps_cond.shape());
    const std::size_t plane = dims.plane();
    std::vector<double> acc(plane, 0.0);
    for (std::size_t c = 0; c < dims.channels; ++c) {
        for (std::size_t p = 0; p < plane; ++p) {
            const std::size_t i = c * plane + p;
            acc[p] += std::abs(static_cast<double>(eps_cond[i]) - static_cast<double>(eps_uncond[i]));
        }
    }
    std::vector<float> raw(plane);
    for (std::size_t p = 0; p < plane; ++p) raw[p] = static_cast<float>(acc[p] / static_cast<double>(dims.channels));
    return iqr_clamp_normalize(Tensor({dims.height, dims.width}, std::move(raw)));
}

/// Inclusive range of step labels whose maps are averaged.
struct StepWindow {
    int lo;
    int hi;
    bool contains(int t) const { return t >= lo && t <= hi; }
};

/// The first `length` denoising steps of a T-step grid: labels T - length + 1 .. T.
inline StepWindow leading_window(int steps, int length) { return {std::max(1, steps - length + 1), steps}; }

/// Collects relevance maps per (candidate, step) inside a step window and
/// averages them over candidates and steps. Summation runs in a fixed order
/// (step descending, candidate ascending) so the result does not depend on
/// the order maps arrive in.
class RelevanceAccumulator {
  public:
    RelevanceAccumulator(std::size_t candidates, StepWindow window) : candidates_(candidates), window_(window) {
        if (candidates == 0) throw InvalidArgument("relevance accumulator needs at least one candidate");
    }

    const StepWindow& window() const { return window_; }
    std::size_t candidates() const { return candidates_; }

    /// Maps for steps outside the window are ignored.
    void accumulate(std::size_t candidate, const Tensor& map, int t) {
        if (candidate >= candidates_) throw InvalidArgument("relevance accumulator: candidate index out of range");
        if (!window_.contains(t)) return;
        if (map_shape_) {
            if (*map_shape_ != map.shape()) throw InvalidArgument("relevance accumulator: map shape changed");
        } else {
            map_shape_ = map.shape();
        }
        auto& row = maps_[t];
        if (row.empty()) row.resize(candidates_);
        row[candidate] = map;
    }

    std::size_t steps_accumulated(std::size_t candidate) const {
        std::size_t n = 0;
        for (const auto& [t, row] : maps_) n += row[candidate].has_value();
        return n;
    }

    bool consistent() const {
        for (const auto& [t, row] : maps_) {
            for (const auto& m : row) {
                if (!m) return false;
            }
        }
        return true;
    }

    bool empty() const { return maps_.empty(); }

    /// Mean over all candidates and accumulated steps.
    Tensor mean_map() const {
        std::vector<std::size_t> all(candidates_);
        for (std::size_t i = 0; i < candidates_; ++i) all[i] = i;
        return mean_over(all);
    }

    /// Mean over the steps of one candidate only.
    Tensor candidate_mean(std::size_t candidate) const { return mean_over({candidate}); }

  private:
    Tensor mean_over(const std::vector<std::size_t>& ids) const {
        if (maps_.empty()) throw StateError("relevance accumulator: no maps accumulated");
        if (!consistent()) throw StateError("relevance accumulator: candidates contributed different step sets");
        const std::size_t n = shape_numel(*map_shape_);
        std::vector<double> sum(n, 0.0);
        std::size_t count = 0;
        for (auto it = maps_.rbegin(); it != maps_.rend(); ++it) {
            for (std::size_t id : ids) {
                const Tensor& m = *it->second[id];
                for (std::size_t k = 0; k < n; ++k) sum[k] += m[k];
                ++count;
            }
        }
        std::vector<float> out(n);
        for (std::size_t k = 0; k < n; ++k) {
            out[k] = static_cast<float>(std::clamp(sum[k] / static_cast<double>(count), 0.0, 1.0));
        }
        return Tensor(*map_shape_, std::move(out));
    }

    std::size_t candidates_;
    StepWindow window_;
    std::optional<Shape> map_shape_;
    std::map<int, std::vector<std::optional<Tensor>>> maps_;
};

/// 1 - m^2, the soft background weight.
inline Tensor soft_background_weight(const Tensor& mean_map) {
    for (float v : mean_map.data()) {
        if (!(v >= 0.0f && v <= 1.0f)) throw InvalidArgument("soft_background_weight: map value outside [0, 1]");
    }
    return map_values(mean_map, [](float m) { return 1.0f - m * m; });
}

/// Thresholded mask for visualization only; never used for scoring.
inline Tensor debug_binary_mask(const Tensor& mean_map, float threshold = 0.5f) {
    return map_values(mean_map, [threshold](float m) { return m >= threshold ? 1.0f : 0.0f; });
}

}  // namespace elect

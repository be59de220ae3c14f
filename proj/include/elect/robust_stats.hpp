#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "elect/tensor.hpp"

namespace elect {

/// Quantile of a sorted sample by linear interpolation at rank (n - 1) * p.
inline double quantile_sorted(const std::vector<double>& sorted, double p) {
    if (sorted.empty()) throw InvalidArgument("quantile of empty sample");
    const double rank = (static_cast<double>(sorted.size()) - 1.0) * p;
    const auto lo = static_cast<std::size_t>(std::floor(rank));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = rank - static_cast<double>(lo);
    return sorted[lo] + (sorted[hi] - sorted[lo]) * frac;
}

inline double quantile(std::vector<double> values, double p) {
    std::sort(values.begin(), values.end());
    return quantile_sorted(values, p);
}

inline double median(std::vector<double> values) { return quantile(std::move(values), 0.5); }

struct IqrBounds {
    double q1;
    double q3;
    double lower;
    double upper;
};

inline IqrBounds iqr_bounds(std::span<const float> values) {
    std::vector<double> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());
    const double q1 = quantile_sorted(sorted, 0.25);
    const double q3 = quantile_sorted(sorted, 0.75);
    const double iqr = q3 - q1;
    return {q1, q3, q1 - 1.5 * iqr, q3 + 1.5 * iqr};
}

/// Clamps outliers to the Tukey fences [q1 - 1.5 IQR, q3 + 1.5 IQR] and
/// min-max rescales to [0, 1]. A zero IQR has no outlier scale, so the clamp
/// is skipped in that case. Constant maps come back as all zeros.
inline Tensor iqr_clamp_normalize(const Tensor& map) {
    if (map.empty()) throw InvalidArgument("iqr_clamp_normalize: empty map");
    for (float v : map.data()) {
        if (std::isnan(v)) throw InvalidArgument("iqr_clamp_normalize: NaN in input");
    }
    const IqrBounds b = iqr_bounds(map.data());
    const bool clamp = b.q3 > b.q1;

    std::vector<double> clamped(map.size());
    double lo = INFINITY;
    double hi = -INFINITY;
    for (std::size_t i = 0; i < map.size(); ++i) {
        double v = map[i];
        if (clamp) v = std::clamp(v, b.lower, b.upper);
        clamped[i] = v;
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }

    std::vector<float> out(map.size(), 0.0f);
    if (hi > lo) {
        const double scale = 1.0 / (hi - lo);
        for (std::size_t i = 0; i < out.size(); ++i) {
            out[i] = static_cast<float>(std::clamp((clamped[i] - lo) * scale, 0.0, 1.0));
        }
    }
    return Tensor(map.shape(), std::move(out));
}

}  // namespace elect

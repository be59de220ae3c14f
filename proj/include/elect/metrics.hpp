#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "elect/tensor.hpp"

namespace elect {

struct MetricsRow {
    double bg_mse = 0.0;
    double psnr = std::numeric_limits<double>::infinity();
    double ssim = 1.0;
    std::uint64_t nfe = 0;
    std::string method;
    std::size_t candidate_id = 0;
};

namespace detail {

inline void check_mask(const Tensor& latent, const Tensor& mask) {
    const SpatialDims dims = spatial_dims(latent.shape());
    if (mask.size() != dims.plane()) {
        throw InvalidArgument("mask shape " + shape_str(mask.shape()) + " does not match latent plane " +
                              std::to_string(dims.height) + "x" + std::to_string(dims.width));
    }
    for (float v : mask.data()) {
        if (v != 0.0f && v != 1.0f) throw InvalidArgument("mask must be binary");
    }
}

inline std::vector<double> gaussian_taps(int size, double sigma) {
    std::vector<double> taps(size);
    const double centre = (size - 1) / 2.0;
    double sum = 0.0;
    for (int i = 0; i < size; ++i) {
        const double x = i - centre;
        taps[i] = std::exp(-(x * x) / (2.0 * sigma * sigma));
        sum += taps[i];
    }
    for (auto& v : taps) v /= sum;
    return taps;
}

// Separable 'valid' Gaussian filter over an H x W plane.
inline std::vector<double> gaussian_filter_valid(const std::vector<double>& img, std::size_t h, std::size_t w,
                                                 const std::vector<double>& taps, std::size_t& out_h, std::size_t& out_w) {
    const std::size_t k = taps.size();
    out_h = h - k + 1;
    out_w = w - k + 1;
    std::vector<double> rows(h * out_w, 0.0);
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < out_w; ++x) {
            double s = 0.0;
            for (std::size_t j = 0; j < k; ++j) s += taps[j] * img[y * w + x + j];
            rows[y * out_w + x] = s;
        }
    }
    std::vector<double> out(out_h * out_w, 0.0);
    for (std::size_t y = 0; y < out_h; ++y) {
        for (std::size_t x = 0; x < out_w; ++x) {
            double s = 0.0;
            for (std::size_t j = 0; j < k; ++j) s += taps[j] * rows[(y + j) * out_w + x];
            out[y * out_w + x] = s;
        }
    }
    return out;
}

}  // namespace detail

/// Mean SSIM of one H x W plane pair: 11-tap Gaussian window (sigma 1.5,
/// shrunk to fit small planes), k1 = 0.01, k2 = 0.03, valid positions only.
inline double ssim_plane(const std::vector<double>& a, const std::vector<double>& b, std::size_t h, std::size_t w,
                         double data_range) {
    const int size = static_cast<int>(std::min<std::size_t>({11, h, w}));
    const auto taps = detail::gaussian_taps(size, 1.5);
    std::vector<double> aa(a.size()), bb(a.size()), ab(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        aa[i] = a[i] * a[i];
        bb[i] = b[i] * b[i];
        ab[i] = a[i] * b[i];
    }
    std::size_t oh, ow;
    const auto mu_a = detail::gaussian_filter_valid(a, h, w, taps, oh, ow);
    const auto mu_b = detail::gaussian_filter_valid(b, h, w, taps, oh, ow);
    const auto s_aa = detail::gaussian_filter_valid(aa, h, w, taps, oh, ow);
    const auto s_bb = detail::gaussian_filter_valid(bb, h, w, taps, oh, ow);
    const auto s_ab = detail::gaussian_filter_valid(ab, h, w, taps, oh, ow);
    const double c1 = (0.01 * data_range) * (0.01 * data_range);
    const double c2 = (0.03 * data_range) * (0.03 * data_range);
    double total = 0.0;
    for (std::size_t i = 0; i < mu_a.size(); ++i) {
        const double va = s_aa[i] - mu_a[i] * mu_a[i];
        const double vb = s_bb[i] - mu_b[i] * mu_b[i];
        const double cov = s_ab[i] - mu_a[i] * mu_b[i];
        const double num = (2 * mu_a[i] * mu_b[i] + c1) * (2 * cov + c2);
        const double den = (mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + c1) * (va + vb + c2);
        total += num / den;
    }
    return total / static_cast<double>(mu_a.size());
}

/// Background-only fidelity of an edit against its source. MSE and PSNR use
/// background elements (mask = 0) across all channels; SSIM is the channel
/// average on copies with the foreground zeroed. Peak is the source range.
inline MetricsRow background_metrics(const Tensor& edited, const Tensor& source, const Tensor& gt_mask) {
    require_same_shape(edited, source, "background_metrics");
    detail::check_mask(source, gt_mask);
    const SpatialDims dims = spatial_dims(source.shape());
    const std::size_t plane = dims.plane();

    std::size_t bg_pixels = 0;
    for (float m : gt_mask.data()) bg_pixels += (m == 0.0f);
    if (bg_pixels == 0) throw DegenerateInput("background_metrics: mask covers the whole image");

    const auto [lo, hi] = std::minmax_element(source.data().begin(), source.data().end());
    double range = static_cast<double>(*hi) - *lo;
    if (range <= 0.0) range = 1.0;

    double sq = 0.0;
    for (std::size_t c = 0; c < dims.channels; ++c) {
        for (std::size_t p = 0; p < plane; ++p) {
            if (gt_mask[p] != 0.0f) continue;
            const double d = static_cast<double>(edited[c * plane + p]) - source[c * plane + p];
            sq += d * d;
        }
    }
    MetricsRow row;
    row.bg_mse = sq / static_cast<double>(bg_pixels * dims.channels);
    row.psnr = row.bg_mse > 0.0 ? 10.0 * std::log10(range * range / row.bg_mse)
                                : std::numeric_limits<double>::infinity();

    double ssim_sum = 0.0;
    for (std::size_t c = 0; c < dims.channels; ++c) {
        std::vector<double> a(plane), b(plane);
        for (std::size_t p = 0; p < plane; ++p) {
            const double keep = 1.0 - gt_mask[p];
            a[p] = keep * edited[c * plane + p];
            b[p] = keep * source[c * plane + p];
        }
        ssim_sum += ssim_plane(a, b, dims.height, dims.width, range);
    }
    row.ssim = ssim_sum / static_cast<double>(dims.channels);
    return row;
}

}  // namespace elect

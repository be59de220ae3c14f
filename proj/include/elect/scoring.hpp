#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <optional>
#include <vector>

#include "elect/robust_stats.hpp"
#include "elect/tensor.hpp"

namespace elect {

struct BisReport {
    std::size_t candidate_id = 0;
    int t = 0;
    double score = 0.0;
    std::optional<Tensor> map;  // weighted |z0_hat - source|, kept for debugging
};

namespace detail {

// Resolves how a weight tensor lines up with a latent: either the same shape,
// or a single [H, W] plane broadcast over every channel.
inline std::size_t weight_plane(const Tensor& latent, const Tensor& weight, const char* what) {
    if (weight.same_shape(latent)) return 0;
    const SpatialDims dims = spatial_dims(latent.shape());
    if (weight.size() == dims.plane() && weight.ndim() >= 1) {
        const auto& ws = weight.shape();
        const bool hw_match = ws.size() >= 2 ? (ws[ws.size() - 2] == dims.height && ws.back() == dims.width)
                                             : ws[0] == dims.plane();
        if (hw_match) return dims.plane();
    }
    throw InvalidArgument(std::string(what) + ": weight shape " + shape_str(weight.shape()) +
                          " does not broadcast over latent " + shape_str(latent.shape()));
}

inline double weight_at(const Tensor& weight, std::size_t plane, std::size_t i) {
    return plane == 0 ? weight[i] : weight[i % plane];
}

}  // namespace detail

/// Mean over all elements of weight * |z0_hat - source|.
inline BisReport bis_score(const Tensor& z0_hat, const Tensor& source_latent, const Tensor& weight,
                           std::size_t candidate_id = 0, int t = 0, bool keep_map = false) {
    require_same_shape(z0_hat, source_latent, "bis_score");
    const std::size_t plane = detail::weight_plane(z0_hat, weight, "bis_score");
    double sum = 0.0;
    std::vector<float> map;
    if (keep_map) map.resize(z0_hat.size());
    for (std::size_t i = 0; i < z0_hat.size(); ++i) {
        const double v =
            detail::weight_at(weight, plane, i) * std::abs(static_cast<double>(z0_hat[i]) - source_latent[i]);
        sum += v;
        if (keep_map) map[i] = static_cast<float>(v);
    }
    BisReport r{candidate_id, t, sum / static_cast<double>(z0_hat.size()), std::nullopt};
    if (keep_map) r.map = Tensor(z0_hat.shape(), std::move(map));
    return r;
}

/// Mean over all elements of m^2 * (z0_hat - source)^2: how much the
/// candidate changed where the edit is expected.
inline double fg_score(const Tensor& z0_hat, const Tensor& source_latent, const Tensor& mean_map) {
    require_same_shape(z0_hat, source_latent, "fg_score");
    const std::size_t plane = detail::weight_plane(z0_hat, mean_map, "fg_score");
    double sum = 0.0;
    for (std::size_t i = 0; i < z0_hat.size(); ++i) {
        const double m = detail::weight_at(mean_map, plane, i);
        const double d = static_cast<double>(z0_hat[i]) - source_latent[i];
        sum += m * m * d * d;
    }
    return sum / static_cast<double>(z0_hat.size());
}

/// Candidate ids by ascending score; ties go to the lower id.
inline std::vector<std::size_t> rank_candidates(const std::vector<BisReport>& reports) {
    if (reports.empty()) throw InvalidArgument("rank_candidates: no reports");
    for (const auto& r : reports) {
        if (r.t != reports.front().t) throw InvalidArgument("rank_candidates: reports from different timesteps");
        if (!std::isfinite(r.score)) throw InvalidArgument("rank_candidates: non-finite score");
    }
    std::vector<std::size_t> order(reports.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (reports[a].score != reports[b].score) return reports[a].score < reports[b].score;
        return reports[a].candidate_id < reports[b].candidate_id;
    });
    std::vector<std::size_t> ids(order.size());
    for (std::size_t k = 0; k < order.size(); ++k) ids[k] = reports[order[k]].candidate_id;
    return ids;
}

/// Hybrid background/foreground pick: keep the background argmin unless its
/// foreground change is below the pool median, then take the foreground
/// argmax instead. Returns a position into `bis`/`fg`.
inline std::size_t hybrid_select(const std::vector<BisReport>& bis, const std::vector<double>& fg) {
    if (bis.size() != fg.size() || bis.empty()) throw InvalidArgument("hybrid_select: size mismatch");
    const std::size_t bg_id = rank_candidates(bis).front();
    std::size_t bg_pos = 0;
    while (bis[bg_pos].candidate_id != bg_id) ++bg_pos;
    const double med = median(std::vector<double>(fg.begin(), fg.end()));
    if (fg[bg_pos] >= med) return bg_pos;
    std::size_t best = 0;
    for (std::size_t k = 1; k < fg.size(); ++k) {
        if (fg[k] > fg[best]) best = k;
    }
    return best;
}

}  // namespace elect

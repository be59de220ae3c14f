#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "elect/errors.hpp"

namespace elect {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << ']';
    return os.str();
}

/// Dense row-major float32 tensor. Construction rejects empty shapes, zero
/// dimensions, size mismatches and non-finite values.
class Tensor {
  public:
    Tensor() = default;

    explicit Tensor(Shape shape, float fill = 0.0f) : shape_(std::move(shape)) {
        validate_shape(shape_);
        if (!std::isfinite(fill)) throw InvalidArgument("tensor fill value is not finite");
        data_.assign(shape_numel(shape_), fill);
    }

    Tensor(Shape shape, std::vector<float> data) : shape_(std::move(shape)), data_(std::move(data)) {
        validate_shape(shape_);
        if (data_.size() != shape_numel(shape_)) {
            throw InvalidArgument("tensor data length " + std::to_string(data_.size()) +
                                  " does not match shape " + shape_str(shape_));
        }
        for (float v : data_) {
            if (!std::isfinite(v)) throw InvalidArgument("tensor data contains NaN or Inf");
        }
    }

    const Shape& shape() const { return shape_; }
    std::size_t ndim() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    std::span<const float> data() const { return data_; }
    std::span<float> data() { return data_; }
    const std::vector<float>& values() const { return data_; }

    float operator[](std::size_t i) const { return data_[i]; }
    float& operator[](std::size_t i) { return data_[i]; }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    Tensor reshaped(Shape shape) const {
        if (shape_numel(shape) != data_.size()) {
            throw InvalidArgument("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
        }
        return Tensor(std::move(shape), data_);
    }

    friend bool operator==(const Tensor&, const Tensor&) = default;

  private:
    static void validate_shape(const Shape& shape) {
        if (shape.empty()) throw InvalidArgument("tensor shape is empty");
        for (auto d : shape) {
            if (d == 0) throw InvalidArgument("tensor shape " + shape_str(shape) + " has a zero dimension");
        }
    }

    Shape shape_;
    std::vector<float> data_;
};

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (!a.same_shape(b)) {
        throw InvalidArgument(std::string(what) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                              shape_str(b.shape()));
    }
}

/// Applies `fn` elementwise over same-shaped inputs.
template <typename Fn>
Tensor zip_with(const Tensor& a, const Tensor& b, Fn fn, const char* what = "zip_with") {
    require_same_shape(a, b, what);
    std::vector<float> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = fn(a[i], b[i]);
    return Tensor(a.shape(), std::move(out));
}

template <typename Fn>
Tensor map_values(const Tensor& a, Fn fn) {
    std::vector<float> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = fn(a[i]);
    return Tensor(a.shape(), std::move(out));
}

inline float max_abs_diff(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "max_abs_diff");
    float m = 0.0f;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

/// Spatial layout of a latent: the last two dims are H, W and everything in
/// front of them is folded into channels.
struct SpatialDims {
    std::size_t channels;
    std::size_t height;
    std::size_t width;
    std::size_t plane() const { return height * width; }
};

inline SpatialDims spatial_dims(const Shape& shape) {
    if (shape.size() < 2) {
        return {1, 1, shape_numel(shape)};
    }
    const std::size_t h = shape[shape.size() - 2];
    const std::size_t w = shape[shape.size() - 1];
    return {shape_numel(shape) / (h * w), h, w};
}

}  // namespace elect

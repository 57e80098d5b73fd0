#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "zsparse/error.hpp"

namespace zsparse {

using Shape = std::vector<std::size_t>;

inline std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

inline std::size_t shape_numel(const Shape& s) {
    return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>{});
}

/// Dense row-major f32 array. Every extent is >= 1 and data().size() is
/// always the product of the extents.
class Tensor {
public:
    Tensor() : shape_{1}, data_(1, 0.0f) {}

    explicit Tensor(Shape shape) : shape_(std::move(shape)) {
        validate_shape(shape_);
        data_.assign(shape_numel(shape_), 0.0f);
    }

    Tensor(Shape shape, std::vector<float> data) : shape_(std::move(shape)), data_(std::move(data)) {
        validate_shape(shape_);
        if (data_.size() != shape_numel(shape_))
            throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                             " does not match shape " + shape_str(shape_));
    }

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }

    static Tensor full(Shape shape, float value) {
        Tensor t(std::move(shape));
        std::fill(t.data_.begin(), t.data_.end(), value);
        return t;
    }

    static Tensor identity(std::size_t n) {
        Tensor t({n, n});
        for (std::size_t i = 0; i < n; ++i) t.at(i, i) = 1.0f;
        return t;
    }

    /// 2D literal, e.g. Tensor::matrix({{1, 2}, {3, 4}}).
    static Tensor matrix(std::initializer_list<std::initializer_list<float>> rows) {
        const std::size_t m = rows.size();
        const std::size_t n = m ? rows.begin()->size() : 0;
        std::vector<float> data;
        data.reserve(m * n);
        for (const auto& r : rows) {
            if (r.size() != n) throw ShapeError("ragged matrix literal");
            data.insert(data.end(), r.begin(), r.end());
        }
        return Tensor({m, n}, std::move(data));
    }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
    std::size_t size() const noexcept { return data_.size(); }

    std::span<float> data() noexcept { return data_; }
    std::span<const float> data() const noexcept { return data_; }
    const std::vector<float>& values() const noexcept { return data_; }

    float& operator[](std::size_t i) { return data_[i]; }
    float operator[](std::size_t i) const { return data_[i]; }

    /// Number of rows when viewed as [dim(0), size()/dim(0)].
    std::size_t rows() const noexcept { return shape_[0]; }
    std::size_t row_width() const noexcept { return data_.size() / shape_[0]; }

    std::span<float> row(std::size_t i) { return {data_.data() + i * row_width(), row_width()}; }
    std::span<const float> row(std::size_t i) const {
        return {data_.data() + i * row_width(), row_width()};
    }

    float& at(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
    float at(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }

    /// Same data, new extents. Element count must be preserved.
    Tensor reshaped(Shape shape) const& {
        Tensor t = *this;
        return std::move(t).reshaped(std::move(shape));
    }
    Tensor reshaped(Shape shape) && {
        validate_shape(shape);
        if (shape_numel(shape) != data_.size())
            throw ShapeError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
        shape_ = std::move(shape);
        return std::move(*this);
    }

    /// Bit-exact comparison of shape and payload.
    friend bool operator==(const Tensor& a, const Tensor& b) {
        return a.shape_ == b.shape_ &&
               std::memcmp(a.data_.data(), b.data_.data(), a.data_.size() * sizeof(float)) == 0;
    }

private:
    static void validate_shape(const Shape& s) {
        if (s.empty()) throw ShapeError("tensor rank must be >= 1");
        for (auto e : s)
            if (e == 0) throw ShapeError("tensor extents must be positive, got " + shape_str(s));
    }

    Shape shape_;
    std::vector<float> data_;
};

inline void require_finite(const Tensor& t, const char* where) {
    for (float v : t.data())
        if (!std::isfinite(v)) throw NumericError(std::string(where) + ": non-finite value");
}

inline void require_rank(const Tensor& t, std::size_t rank, const char* where) {
    if (t.rank() != rank)
        throw ShapeError(std::string(where) + ": expected rank " + std::to_string(rank) +
                         ", got shape " + shape_str(t.shape()));
}

/// Multiply-accumulate bookkeeping for matmul. Owned by the caller; not
/// shared across threads.
struct OpCounter {
    std::uint64_t macs = 0;
    std::uint64_t calls = 0;
    std::uint64_t rows = 0;
};

/// c = a * b. Each c[i,j] is accumulated over p = 0..k-1 in ascending order
/// in f32, so results do not depend on the number of rows in a.
inline Tensor matmul(const Tensor& a, const Tensor& b, OpCounter* counter = nullptr) {
    require_rank(a, 2, "matmul");
    require_rank(b, 2, "matmul");
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    if (b.dim(0) != k)
        throw ShapeError("matmul: inner extents differ " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
    Tensor c({m, n});
    const float* pa = a.data().data();
    const float* pb = b.data().data();
    float* pc = c.data().data();
    for (std::size_t i = 0; i < m; ++i) {
        float* crow = pc + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const float aip = pa[i * k + p];
            const float* brow = pb + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
        }
    }
    if (counter) {
        counter->macs += static_cast<std::uint64_t>(m) * k * n;
        counter->calls += 1;
        counter->rows += m;
    }
    require_finite(c, "matmul");
    return c;
}

/// Adds a length-n bias to every row of an [m, n] tensor in place.
inline void add_row_bias(Tensor& x, const Tensor& bias) {
    if (bias.size() != x.row_width())
        throw ShapeError("row bias length " + std::to_string(bias.size()) + " vs row width " +
                         std::to_string(x.row_width()));
    for (std::size_t i = 0; i < x.rows(); ++i) {
        auto r = x.row(i);
        for (std::size_t j = 0; j < r.size(); ++j) r[j] += bias[j];
    }
}

inline Tensor add(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape())
        throw ShapeError("add: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    Tensor c = a;
    for (std::size_t i = 0; i < c.size(); ++i) c[i] += b[i];
    require_finite(c, "add");
    return c;
}

/// max|a - ref| / max|ref|, the infinity-norm relative error used by every
/// equivalence check in the project.
inline double max_relative_error(const Tensor& a, const Tensor& ref) {
    if (a.shape() != ref.shape())
        throw ShapeError("max_relative_error: " + shape_str(a.shape()) + " vs " +
                         shape_str(ref.shape()));
    double diff = 0.0, scale = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        diff = std::max(diff, std::fabs(static_cast<double>(a[i]) - ref[i]));
        scale = std::max(scale, std::fabs(static_cast<double>(ref[i])));
    }
    if (scale == 0.0) return diff;
    return diff / scale;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) throw ShapeError("max_abs_diff: shapes differ");
    double diff = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        diff = std::max(diff, std::fabs(static_cast<double>(a[i]) - b[i]));
    return diff;
}

inline constexpr float kLayerNormEps = 1e-6f;

/// Per-row LayerNorm with population variance. Row statistics accumulate in
/// double in ascending feature order.
inline Tensor layernorm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                        float eps = kLayerNormEps) {
    const std::size_t d = x.row_width();
    if (gamma.size() != d || beta.size() != d)
        throw ShapeError("layernorm: gamma/beta length must equal feature width " +
                         std::to_string(d));
    if (!(eps >= 0.0f)) throw ConfigError("layernorm: eps must be non-negative");
    Tensor y(x.shape());
    for (std::size_t i = 0; i < x.rows(); ++i) {
        auto in = x.row(i);
        auto out = y.row(i);
        double mean = 0.0;
        for (float v : in) mean += v;
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (float v : in) var += (v - mean) * (v - mean);
        var /= static_cast<double>(d);
        const double inv = 1.0 / std::sqrt(var + eps);
        for (std::size_t j = 0; j < d; ++j)
            out[j] = static_cast<float>((in[j] - mean) * inv * gamma[j] + beta[j]);
    }
    require_finite(y, "layernorm");
    return y;
}

inline float gelu(float x) {
    const double xd = x;
    return static_cast<float>(0.5 * xd * (1.0 + std::erf(xd / std::sqrt(2.0))));
}

/// Exact (erf-based) GELU, elementwise.
inline Tensor gelu(const Tensor& x) {
    Tensor y = x;
    for (float& v : y.data()) v = gelu(v);
    require_finite(y, "gelu");
    return y;
}

}  // namespace zsparse

#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "zsparse/error.hpp"
#include "zsparse/tensor.hpp"

namespace zsparse {

using Index = std::uint32_t;

struct GridShape {
    std::size_t h = 1;
    std::size_t w = 1;

    std::size_t n() const noexcept { return h * w; }
    std::size_t index(std::size_t row, std::size_t col) const noexcept { return row * w + col; }

    friend bool operator==(const GridShape&, const GridShape&) = default;
};

inline void validate(const GridShape& g) {
    if (g.h == 0 || g.w == 0) throw ConfigError("grid extents must be >= 1");
}

// https://fgiesen.wordpress.com/2009/12/13/decoding-morton-codes/
inline std::uint64_t part_1_by_1(std::uint64_t x) {
    x &= 0x00000000ffffffffull;
    x = (x ^ (x << 16)) & 0x0000ffff0000ffffull;
    x = (x ^ (x << 8)) & 0x00ff00ff00ff00ffull;
    x = (x ^ (x << 4)) & 0x0f0f0f0f0f0f0f0full;
    x = (x ^ (x << 2)) & 0x3333333333333333ull;
    x = (x ^ (x << 1)) & 0x5555555555555555ull;
    return x;
}

/// Z-order code. Column bits go to even positions, row bits to odd ones.
inline std::uint64_t morton_encode(std::uint32_t x, std::uint32_t y) {
    return part_1_by_1(x) | (part_1_by_1(y) << 1);
}

/// A validated bijection on [0, N). forward[rank] is a token index and
/// inverse[token] is its rank.
class Permutation {
public:
    Permutation() = default;

    explicit Permutation(std::vector<Index> forward) : forward_(std::move(forward)) {
        if (forward_.size() > std::size_t{0xffffffffu})
            throw ConfigError("permutation too long");
        inverse_.assign(forward_.size(), kUnset);
        for (std::size_t r = 0; r < forward_.size(); ++r) {
            const Index t = forward_[r];
            if (t >= forward_.size())
                throw ConfigError("permutation entry " + std::to_string(t) + " out of range [0, " +
                                  std::to_string(forward_.size()) + ")");
            if (inverse_[t] != kUnset)
                throw ConfigError("permutation repeats index " + std::to_string(t));
            inverse_[t] = static_cast<Index>(r);
        }
    }

    static Permutation identity(std::size_t n) {
        std::vector<Index> f(n);
        std::iota(f.begin(), f.end(), Index{0});
        return Permutation(std::move(f));
    }

    std::size_t size() const noexcept { return forward_.size(); }
    const std::vector<Index>& forward() const noexcept { return forward_; }
    const std::vector<Index>& inverse() const noexcept { return inverse_; }
    Index operator[](std::size_t rank) const { return forward_[rank]; }

    friend bool operator==(const Permutation& a, const Permutation& b) {
        return a.forward_ == b.forward_;
    }

private:
    static constexpr Index kUnset = 0xffffffffu;
    std::vector<Index> forward_;
    std::vector<Index> inverse_;
};

inline Permutation invert(const Permutation& p) { return Permutation(p.inverse()); }

/// (outer ∘ inner): rank r maps to inner[outer[r]].
inline Permutation compose(const Permutation& outer, const Permutation& inner) {
    if (outer.size() != inner.size()) throw ShapeError("compose: permutation sizes differ");
    std::vector<Index> f(outer.size());
    for (std::size_t r = 0; r < f.size(); ++r) f[r] = inner[outer[r]];
    return Permutation(std::move(f));
}

/// Row-major token indices sorted by the Morton code of their true (row, col)
/// coordinates. Works for any extents; no padding tokens are produced.
inline Permutation morton_order(const GridShape& shape) {
    validate(shape);
    std::vector<std::pair<std::uint64_t, Index>> keyed;
    keyed.reserve(shape.n());
    for (std::size_t y = 0; y < shape.h; ++y)
        for (std::size_t x = 0; x < shape.w; ++x)
            keyed.emplace_back(morton_encode(static_cast<std::uint32_t>(x),
                                             static_cast<std::uint32_t>(y)),
                               static_cast<Index>(shape.index(y, x)));
    std::sort(keyed.begin(), keyed.end());
    std::vector<Index> f;
    f.reserve(keyed.size());
    for (const auto& [code, idx] : keyed) f.push_back(idx);
    return Permutation(std::move(f));
}

/// Morton code of every row-major token, indexed by token.
inline std::vector<std::uint64_t> morton_codes(const GridShape& shape) {
    std::vector<std::uint64_t> codes(shape.n());
    for (std::size_t y = 0; y < shape.h; ++y)
        for (std::size_t x = 0; x < shape.w; ++x)
            codes[shape.index(y, x)] =
                morton_encode(static_cast<std::uint32_t>(x), static_cast<std::uint32_t>(y));
    return codes;
}

/// out.row(i) = t.row(p[i]).
inline Tensor apply_permutation(const Permutation& p, const Tensor& t) {
    if (t.rows() != p.size())
        throw ShapeError("apply_permutation: permutation of size " + std::to_string(p.size()) +
                         " applied to tensor " + shape_str(t.shape()));
    Tensor out(t.shape());
    const std::size_t w = t.row_width();
    const float* src = t.data().data();
    float* dst = out.data().data();
    for (std::size_t i = 0; i < p.size(); ++i)
        std::copy_n(src + static_cast<std::size_t>(p[i]) * w, w, dst + i * w);
    return out;
}

inline constexpr std::size_t kMaxSerializedIndex = std::size_t{1} << 24;

/// Rank-1 tensor of indices stored as exact f32 integers.
inline Tensor permutation_to_tensor(const Permutation& p) {
    if (p.size() == 0) throw ShapeError("cannot serialize an empty permutation");
    if (p.size() > kMaxSerializedIndex)
        throw ConfigError("permutation longer than 2^24 cannot be stored as f32 indices");
    Tensor t({p.size()});
    for (std::size_t i = 0; i < p.size(); ++i) t[i] = static_cast<float>(p[i]);
    return t;
}

inline Permutation permutation_from_tensor(const Tensor& t) {
    require_rank(t, 1, "permutation_from_tensor");
    std::vector<Index> f(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) {
        const float v = t[i];
        if (!(v >= 0.0f) || v != static_cast<float>(static_cast<Index>(v)))
            throw ConfigError("permutation tensor entry " + std::to_string(i) +
                              " is not a non-negative integer");
        f[i] = static_cast<Index>(v);
    }
    return Permutation(std::move(f));
}

}  // namespace zsparse

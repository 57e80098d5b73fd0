#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "zsparse/error.hpp"
#include "zsparse/grid.hpp"
#include "zsparse/tensor.hpp"

namespace zsparse {

/// Non-negative H×W gradient-magnitude field. `m` has shape [h, w].
struct SaliencyMap {
    GridShape shape;
    Tensor m;

    float operator()(std::size_t row, std::size_t col) const { return m.at(row, col); }
    float at_token(std::size_t token) const { return m[token]; }
    std::size_t n() const noexcept { return shape.n(); }

    static SaliencyMap uniform(const GridShape& shape, float value = 1.0f) {
        return {shape, Tensor::full({shape.h, shape.w}, value)};
    }

    /// Wraps an [h, w] tensor. Values must be finite and non-negative.
    static SaliencyMap from_tensor(Tensor t) {
        require_rank(t, 2, "SaliencyMap");
        for (float v : t.data())
            if (!(v >= 0.0f) || !std::isfinite(v))
                throw ConfigError("saliency values must be finite and non-negative");
        GridShape g{t.dim(0), t.dim(1)};
        return {g, std::move(t)};
    }
};

enum class Granularity { token, zgroup };

struct OrderingConfig {
    Granularity granularity = Granularity::zgroup;
    std::size_t group_size = 4;
};

namespace detail {

// Correlation form.
inline constexpr int kSobelX[3][3] = {{-1, 0, 1}, {-2, 0, 2}, {-1, 0, 1}};
inline constexpr int kSobelY[3][3] = {{-1, -2, -1}, {0, 0, 0}, {1, 2, 1}};

}  // namespace detail

/// Sobel gradient magnitude of an [H, W, D] (or [H, W]) feature map. Each
/// channel is filtered with the 3×3 Sobel pair under zero padding, the
/// per-channel responses are summed, and the magnitude is taken of the sums.
inline SaliencyMap sobel_magnitude(const Tensor& x) {
    if (x.rank() != 2 && x.rank() != 3)
        throw ShapeError("sobel_magnitude: expected [H,W,D] or [H,W], got " + shape_str(x.shape()));
    const std::size_t h = x.dim(0), w = x.dim(1);
    const std::size_t d = x.rank() == 3 ? x.dim(2) : 1;

    std::vector<double> plane(h * w, 0.0);
    for (std::size_t t = 0; t < h * w; ++t) {
        double s = 0.0;
        for (std::size_t c = 0; c < d; ++c) s += x[t * d + c];
        plane[t] = s;
    }

    Tensor m({h, w});
    for (std::size_t i = 0; i < h; ++i) {
        for (std::size_t j = 0; j < w; ++j) {
            double gx = 0.0, gy = 0.0;
            for (int a = -1; a <= 1; ++a) {
                const std::ptrdiff_t r = static_cast<std::ptrdiff_t>(i) + a;
                if (r < 0 || r >= static_cast<std::ptrdiff_t>(h)) continue;
                for (int b = -1; b <= 1; ++b) {
                    const std::ptrdiff_t c = static_cast<std::ptrdiff_t>(j) + b;
                    if (c < 0 || c >= static_cast<std::ptrdiff_t>(w)) continue;
                    const double v = plane[static_cast<std::size_t>(r) * w + static_cast<std::size_t>(c)];
                    gx += detail::kSobelX[a + 1][b + 1] * v;
                    gy += detail::kSobelY[a + 1][b + 1] * v;
                }
            }
            m.at(i, j) = static_cast<float>(std::sqrt(gx * gx + gy * gy));
        }
    }
    require_finite(m, "sobel_magnitude");
    return {GridShape{h, w}, std::move(m)};
}

/// Sum of saliency over each contiguous run of `group_size` Morton ranks.
inline Tensor group_energy(const SaliencyMap& m, const Permutation& morton, std::size_t group_size) {
    const std::size_t n = m.n();
    if (morton.size() != n)
        throw ShapeError("group_energy: Morton order has " + std::to_string(morton.size()) +
                         " entries for a grid of " + std::to_string(n));
    if (group_size == 0 || n % group_size != 0)
        throw ConfigError("group_energy: group size " + std::to_string(group_size) +
                          " does not divide N = " + std::to_string(n));
    Tensor e({n / group_size});
    for (std::size_t g = 0; g < n / group_size; ++g) {
        double s = 0.0;
        for (std::size_t k = 0; k < group_size; ++k) s += m.at_token(morton[g * group_size + k]);
        e[g] = static_cast<float>(s);
    }
    return e;
}

/// Descending-saliency order of the grid's tokens.
///
/// token:  tokens sorted by descending saliency, ties by ascending Morton code.
/// zgroup: Morton runs of `group_size` tokens sorted by descending group
///         energy (ties by Morton position); each run is emitted intact in
///         Morton order.
///
/// Uniform saliency therefore yields exactly the Morton order in both modes.
inline Permutation importance_order(const SaliencyMap& m, const OrderingConfig& cfg = {}) {
    const std::size_t n = m.n();
    const Permutation morton = morton_order(m.shape);

    if (cfg.granularity == Granularity::token) {
        // Walking Morton order with a stable sort gives the Morton tie-break.
        std::vector<Index> f = morton.forward();
        std::stable_sort(f.begin(), f.end(),
                         [&](Index a, Index b) { return m.at_token(a) > m.at_token(b); });
        return Permutation(std::move(f));
    }

    const Tensor energy = group_energy(m, morton, cfg.group_size);
    std::vector<Index> groups(energy.size());
    std::iota(groups.begin(), groups.end(), Index{0});
    std::stable_sort(groups.begin(), groups.end(),
                     [&](Index a, Index b) { return energy[a] > energy[b]; });
    std::vector<Index> f;
    f.reserve(n);
    for (Index g : groups)
        for (std::size_t k = 0; k < cfg.group_size; ++k) f.push_back(morton[g * cfg.group_size + k]);
    return Permutation(std::move(f));
}

}  // namespace zsparse

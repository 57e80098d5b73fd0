#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "zsparse/error.hpp"
#include "zsparse/grid.hpp"
#include "zsparse/rng.hpp"
#include "zsparse/tensor.hpp"

namespace zsparse {

struct MlpWeights {
    Tensor w1;  // [d, h]
    Tensor b1;  // [h]
    Tensor w2;  // [h, d]
    Tensor b2;  // [d]
    Tensor ln_gamma;
    Tensor ln_beta;

    std::size_t width() const { return w1.dim(0); }
    std::size_t hidden() const { return w1.dim(1); }

    static MlpWeights zeros(std::size_t d, std::size_t h) {
        return {Tensor({d, h}), Tensor({h}), Tensor({h, d}), Tensor({d}), Tensor::full({d}, 1.0f),
                Tensor({d})};
    }

    static MlpWeights random(std::size_t d, std::size_t h, Rng& rng) {
        MlpWeights w = zeros(d, h);
        w.w1 = random_normal({d, h}, rng, static_cast<float>(1.0 / std::sqrt(double(d))));
        w.b1 = random_normal({h}, rng, 0.1f);
        w.w2 = random_normal({h, d}, rng, static_cast<float>(1.0 / std::sqrt(double(h))));
        w.b2 = random_normal({d}, rng, 0.1f);
        return w;
    }
};

inline void validate(const MlpWeights& w) {
    require_rank(w.w1, 2, "mlp w1");
    require_rank(w.w2, 2, "mlp w2");
    const std::size_t d = w.w1.dim(0), h = w.w1.dim(1);
    if (w.w2.dim(0) != h || w.w2.dim(1) != d || w.b1.size() != h || w.b2.size() != d ||
        w.ln_gamma.size() != d || w.ln_beta.size() != d)
        throw ShapeError("MLP weights are inconsistent with width " + std::to_string(d) +
                         " and hidden " + std::to_string(h));
}

struct MlpOutput {
    Tensor y;      // x + delta
    Tensor delta;  // MLP(LN(x))
};

/// delta = W2·gelu(W1·LN(x) + b1) + b2, row by row.
inline Tensor mlp_delta(const Tensor& x, const MlpWeights& w, OpCounter* counter = nullptr) {
    validate(w);
    require_rank(x, 2, "mlp input");
    if (x.dim(1) != w.width())
        throw ShapeError("mlp: token width " + std::to_string(x.dim(1)) + " vs weights " +
                         std::to_string(w.width()));
    Tensor hidden = matmul(layernorm(x, w.ln_gamma, w.ln_beta), w.w1, counter);
    add_row_bias(hidden, w.b1);
    Tensor delta = matmul(gelu(hidden), w.w2, counter);
    add_row_bias(delta, w.b2);
    require_finite(delta, "mlp");
    return delta;
}

inline MlpOutput mlp_forward(const Tensor& x, const MlpWeights& w, OpCounter* counter = nullptr) {
    Tensor delta = mlp_delta(x, w, counter);
    Tensor y = add(x, delta);
    return {std::move(y), std::move(delta)};
}

enum class BypassMode { identity, layernorm };

struct RouterConfig {
    double keep_fraction = 1.0;
    BypassMode bypass = BypassMode::identity;
};

/// K = round(keep_fraction * n), clamped to [1, n].
inline std::size_t keep_count(double keep_fraction, std::size_t n) {
    if (!(keep_fraction > 0.0 && keep_fraction <= 1.0))
        throw ConfigError("keep_fraction must lie in (0, 1]");
    const auto k = static_cast<std::size_t>(std::llround(keep_fraction * static_cast<double>(n)));
    return std::clamp<std::size_t>(k, 1, n);
}

/// Residual-consistency MLP. The tokens at ranks 0..K-1 of `sigma` go through
/// the MLP and come out equal to the dense rows bit for bit; every other token
/// bypasses it (unchanged, or layer-normed in BypassMode::layernorm).
inline Tensor route_mlp(const Tensor& x, const MlpWeights& w, const Permutation& sigma,
                        const RouterConfig& cfg, OpCounter* counter = nullptr) {
    require_rank(x, 2, "route_mlp input");
    const std::size_t n = x.dim(0), d = x.dim(1);
    if (sigma.size() != n)
        throw ShapeError("route_mlp: permutation of " + std::to_string(sigma.size()) +
                         " for " + std::to_string(n) + " tokens");
    const std::size_t k = keep_count(cfg.keep_fraction, n);

    Tensor kept({k, d});
    for (std::size_t r = 0; r < k; ++r) std::ranges::copy(x.row(sigma[r]), kept.row(r).begin());
    const Tensor delta = mlp_delta(kept, w, counter);

    Tensor out = cfg.bypass == BypassMode::identity ? x : layernorm(x, w.ln_gamma, w.ln_beta);
    for (std::size_t r = 0; r < k; ++r) {
        const auto src = x.row(sigma[r]);
        const auto dl = delta.row(r);
        auto dst = out.row(sigma[r]);
        for (std::size_t c = 0; c < d; ++c) dst[c] = src[c] + dl[c];
    }
    return out;
}

/// u_i = ||delta_i||_2.
inline Tensor update_magnitudes(const Tensor& delta) {
    Tensor u({delta.rows()});
    for (std::size_t i = 0; i < delta.rows(); ++i) {
        double s = 0.0;
        for (float v : delta.row(i)) s += static_cast<double>(v) * v;
        u[i] = static_cast<float>(std::sqrt(s));
    }
    return u;
}

inline constexpr double kNormEps = 1e-12;

/// Mean cosine distance of each token to all others:
/// d_i = 1/(N-1) * sum_{j != i} (1 - cos(x_i, x_j)).
/// Uses sum_j cos(x_i, x_j) = x̂_i · sum_j x̂_j, so it runs in O(N·d).
inline Tensor token_dissimilarity(const Tensor& x) {
    require_rank(x, 2, "token_dissimilarity");
    const std::size_t n = x.dim(0), d = x.dim(1);
    Tensor out({n});
    if (n < 2) return out;
    std::vector<double> unit(n * d), total(d, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const auto r = x.row(i);
        double norm = 0.0;
        for (float v : r) norm += static_cast<double>(v) * v;
        norm = std::max(std::sqrt(norm), kNormEps);
        for (std::size_t c = 0; c < d; ++c) {
            unit[i * d + c] = r[c] / norm;
            total[c] += unit[i * d + c];
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        double self = 0.0, all = 0.0;
        for (std::size_t c = 0; c < d; ++c) {
            self += unit[i * d + c] * unit[i * d + c];
            all += unit[i * d + c] * total[c];
        }
        const double mean_cos = (all - self) / static_cast<double>(n - 1);
        out[i] = static_cast<float>(std::clamp(1.0 - mean_cos, 0.0, 2.0));
    }
    return out;
}

/// Pearson correlation. Throws if either input has zero variance.
inline double pearson(const Tensor& a, const Tensor& b) {
    if (a.size() != b.size()) throw ShapeError("pearson: lengths differ");
    const std::size_t n = a.size();
    if (n < 2) throw ConfigError("pearson: need at least two samples");
    double ma = 0.0, mb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= static_cast<double>(n);
    mb /= static_cast<double>(n);
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double da = a[i] - ma, db = b[i] - mb;
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if (saa == 0.0 || sbb == 0.0) throw NumericError("pearson: correlation undefined for constant input");
    return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

struct KMeansResult {
    Tensor replaced;                // each row swapped for its centroid
    Tensor centroids;               // [k, d]
    std::vector<std::size_t> assignment;
    double distortion = 0.0;        // mean squared distance to the assigned centroid
    std::vector<double> history;    // distortion after every assignment step
};

inline constexpr std::size_t kDefaultKMeansIters = 25;

/// Lloyd's algorithm with k-means++ seeding from `seed`, run for exactly
/// `iters` update steps. Distances and centroids are kept in double.
///
/// A cluster left empty after an assignment is re-seeded at the point
/// farthest from its current centroid. Ties in assignment go to the lowest
/// centroid index.
inline KMeansResult kmeans_replace(const Tensor& x, std::size_t k, std::uint64_t seed,
                                   std::size_t iters = kDefaultKMeansIters) {
    require_rank(x, 2, "kmeans_replace");
    const std::size_t n = x.dim(0), d = x.dim(1);
    if (k < 1 || k > n)
        throw ConfigError("kmeans: cluster count " + std::to_string(k) + " outside [1, " +
                          std::to_string(n) + "]");

    auto sq_dist = [&](std::size_t i, const double* c) {
        const auto r = x.row(i);
        double s = 0.0;
        for (std::size_t p = 0; p < d; ++p) {
            const double t = r[p] - c[p];
            s += t * t;
        }
        return s;
    };

    // k-means++ seeding.
    Rng rng(seed);
    std::vector<double> cent(k * d);
    auto set_centroid = [&](std::size_t c, std::size_t i) {
        const auto r = x.row(i);
        for (std::size_t p = 0; p < d; ++p) cent[c * d + p] = r[p];
    };
    set_centroid(0, static_cast<std::size_t>(rng.below(n)));
    std::vector<double> nearest(n);
    for (std::size_t i = 0; i < n; ++i) nearest[i] = sq_dist(i, cent.data());
    for (std::size_t c = 1; c < k; ++c) {
        double total = 0.0;
        for (double v : nearest) total += v;
        std::size_t pick = 0;
        if (total > 0.0) {
            const double target = rng.uniform() * total;
            double run = 0.0;
            pick = n;
            for (std::size_t i = 0; i < n; ++i) {
                if (nearest[i] <= 0.0) continue;
                run += nearest[i];
                pick = i;
                if (run > target) break;
            }
        } else {
            pick = static_cast<std::size_t>(rng.below(n));
        }
        set_centroid(c, pick);
        for (std::size_t i = 0; i < n; ++i)
            nearest[i] = std::min(nearest[i], sq_dist(i, cent.data() + c * d));
    }

    KMeansResult res;
    res.assignment.assign(n, 0);
    std::vector<double> dist(n);
    auto assign = [&] {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double best = std::numeric_limits<double>::infinity();
            std::size_t arg = 0;
            for (std::size_t c = 0; c < k; ++c) {
                const double s = sq_dist(i, cent.data() + c * d);
                if (s < best) {
                    best = s;
                    arg = c;
                }
            }
            res.assignment[i] = arg;
            dist[i] = best;
            total += best;
        }
        res.history.push_back(total / static_cast<double>(n));
    };

    assign();
    std::vector<double> sums(k * d);
    std::vector<std::size_t> counts(k);
    for (std::size_t it = 0; it < iters; ++it) {
        std::fill(sums.begin(), sums.end(), 0.0);
        std::fill(counts.begin(), counts.end(), 0);
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t c = res.assignment[i];
            ++counts[c];
            const auto r = x.row(i);
            for (std::size_t p = 0; p < d; ++p) sums[c * d + p] += r[p];
        }
        for (std::size_t c = 0; c < k; ++c)
            if (counts[c] > 0)
                for (std::size_t p = 0; p < d; ++p)
                    cent[c * d + p] = sums[c * d + p] / static_cast<double>(counts[c]);
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] > 0) continue;
            std::size_t far = 0;
            double far_d = -1.0;
            for (std::size_t i = 0; i < n; ++i) {
                const double s = sq_dist(i, cent.data() + res.assignment[i] * d);
                if (s > far_d) {
                    far_d = s;
                    far = i;
                }
            }
            set_centroid(c, far);
            res.assignment[far] = c;
        }
        assign();
    }

    res.distortion = res.history.back();
    res.centroids = Tensor({k, d});
    for (std::size_t i = 0; i < k * d; ++i) res.centroids[i] = static_cast<float>(cent[i]);
    res.replaced = Tensor({n, d});
    for (std::size_t i = 0; i < n; ++i)
        std::ranges::copy(res.centroids.row(res.assignment[i]), res.replaced.row(i).begin());
    return res;
}

/// ||a - b||_F / ||b||_F.
inline double relative_perturbation(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) throw ShapeError("relative_perturbation: shapes differ");
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double t = static_cast<double>(a[i]) - b[i];
        num += t * t;
        den += static_cast<double>(b[i]) * b[i];
    }
    return den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
}

}  // namespace zsparse

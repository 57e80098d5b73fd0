#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <exception>
#include <limits>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "zsparse/error.hpp"
#include "zsparse/grid.hpp"
#include "zsparse/tensor.hpp"

namespace zsparse {

/// Decomposed 2D relative-position bias over a w×w key grid:
/// B[q, k] = bh[q, k / w] + bw[q, k % w], with q and k spatial indices.
struct BiasTables {
    Tensor bh;  // [S_q, w]
    Tensor bw;  // [S_q, w]
    std::size_t w = 1;

    static BiasTables zeros(std::size_t s_q, std::size_t w) {
        return {Tensor({s_q, w}), Tensor({s_q, w}), w};
    }

    float at(std::size_t q, std::size_t k) const { return bh.at(q, k / w) + bw.at(q, k % w); }
};

inline void validate_bias(const BiasTables& b, std::size_t s_q, std::size_t s_k) {
    if (b.w * b.w != s_k)
        throw ShapeError("bias grid side " + std::to_string(b.w) + " squared != S_k = " +
                         std::to_string(s_k));
    if (b.bh.rank() != 2 || b.bw.rank() != 2 || b.bh.dim(0) != s_q || b.bw.dim(0) != s_q ||
        b.bh.dim(1) != b.w || b.bw.dim(1) != b.w)
        throw ShapeError("bias tables must be [S_q, w] = [" + std::to_string(s_q) + ", " +
                         std::to_string(b.w) + "]");
}

struct AShapeConfig {
    std::size_t b_row = 32;
    std::size_t b_col = 32;
    double r = 1.0;
    std::optional<float> tau;  // defaults to 1/sqrt(d)
    unsigned threads = 1;      // query tiles are split across this many threads
};

inline constexpr std::size_t kLocalTile = 32;
inline constexpr std::size_t kGlobalTile = 128;

/// Key tiles visited by each query tile.
struct ActiveSet {
    std::size_t t_col = 0;
    std::vector<std::vector<std::size_t>> tiles;  // sorted, one entry per query tile

    std::size_t t_row() const noexcept { return tiles.size(); }

    std::size_t pairs() const {
        std::size_t s = 0;
        for (const auto& j : tiles) s += j.size();
        return s;
    }
};

inline std::size_t prefix_tiles(std::size_t t_col, double r) {
    if (!(r >= 0.0 && r <= 1.0)) throw ConfigError("density ratio r must lie in [0, 1]");
    return static_cast<std::size_t>(std::floor(r * static_cast<double>(t_col)));
}

/// J_i = {0, ..., floor(r*t_col) - 1} ∪ {i}. A query tile beyond the last key
/// tile takes the last key tile as its diagonal.
inline ActiveSet build_active_set(std::size_t t_row, std::size_t t_col, double r) {
    if (t_row == 0 || t_col == 0) throw ConfigError("tile counts must be >= 1");
    const std::size_t prefix = prefix_tiles(t_col, r);
    ActiveSet a;
    a.t_col = t_col;
    a.tiles.resize(t_row);
    for (std::size_t i = 0; i < t_row; ++i) {
        auto& j = a.tiles[i];
        j.reserve(prefix + 1);
        for (std::size_t c = 0; c < prefix; ++c) j.push_back(c);
        const std::size_t diag = std::min(i, t_col - 1);
        if (diag >= prefix) j.push_back(diag);
    }
    return a;
}

/// Fraction of the t_row×t_col tile grid that the A-shape pattern visits.
inline double achieved_density(std::size_t t_row, std::size_t t_col, double r) {
    const ActiveSet a = build_active_set(t_row, t_col, r);
    return static_cast<double>(a.pairs()) / static_cast<double>(t_row * t_col);
}

inline std::size_t tile_count(std::size_t len, std::size_t tile) { return (len + tile - 1) / tile; }

namespace detail {

inline void validate_attention_inputs(const Tensor& q, const Tensor& k, const Tensor& v,
                                      const BiasTables& bias, const Permutation& sq_perm,
                                      const Permutation& sk_perm) {
    require_rank(q, 2, "attention q");
    require_rank(k, 2, "attention k");
    require_rank(v, 2, "attention v");
    if (q.dim(1) != k.dim(1))
        throw ShapeError("attention: q and k head widths differ");
    if (k.dim(0) != v.dim(0)) throw ShapeError("attention: k and v lengths differ");
    if (sq_perm.size() != q.dim(0) || sk_perm.size() != k.dim(0))
        throw ShapeError("attention: permutation sizes must equal S_q and S_k");
    validate_bias(bias, q.dim(0), k.dim(0));
}

inline float resolve_tau(const std::optional<float>& tau, std::size_t d) {
    return tau ? *tau : static_cast<float>(1.0 / std::sqrt(static_cast<double>(d)));
}

}  // namespace detail

/// Reference attention: softmax(tau*Q*K^T + B)*V with an explicit score
/// matrix, accumulated in double. Inputs are in permuted order; the
/// permutations map a permuted position to its spatial index for the bias.
inline Tensor dense_attention_ref(const Tensor& q, const Tensor& k, const Tensor& v,
                                  const BiasTables& bias, const Permutation& sq_perm,
                                  const Permutation& sk_perm, float tau) {
    detail::validate_attention_inputs(q, k, v, bias, sq_perm, sk_perm);
    const std::size_t s_q = q.dim(0), s_k = k.dim(0), d = q.dim(1), dv = v.dim(1);
    Tensor out({s_q, dv});
    std::vector<double> scores(s_k);
    std::vector<double> acc(dv);
    for (std::size_t i = 0; i < s_q; ++i) {
        const auto qi = q.row(i);
        const std::size_t spatial_q = sq_perm[i];
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < s_k; ++j) {
            const auto kj = k.row(j);
            double dot = 0.0;
            for (std::size_t p = 0; p < d; ++p) dot += static_cast<double>(qi[p]) * kj[p];
            scores[j] = tau * dot + bias.at(spatial_q, sk_perm[j]);
            mx = std::max(mx, scores[j]);
        }
        double denom = 0.0;
        std::fill(acc.begin(), acc.end(), 0.0);
        for (std::size_t j = 0; j < s_k; ++j) {
            const double p = std::exp(scores[j] - mx);
            denom += p;
            const auto vj = v.row(j);
            for (std::size_t c = 0; c < dv; ++c) acc[c] += p * vj[c];
        }
        auto o = out.row(i);
        for (std::size_t c = 0; c < dv; ++c) o[c] = static_cast<float>(acc[c] / denom);
    }
    require_finite(out, "dense_attention_ref");
    return out;
}

struct AttentionStats {
    std::uint64_t tile_pairs = 0;
    std::uint64_t total_pairs = 0;
};

/// Block-sparse online-softmax attention with the A-shape tile pattern and a
/// fused decomposed 2D bias.
///
/// Query tile i visits key tiles J_i in ascending order, keeping a running row
/// max m, denominator l and accumulator O. Scores are kept unscaled with the
/// bias pre-divided by tau, so exp(tau*(S - m)) recovers softmax(tau*QK^T + B).
/// Columns past S_k in the last key tile are masked to -inf. Any thread count
/// gives the same bits as the serial run.
inline Tensor ashape_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                               const BiasTables& bias, const Permutation& sq_perm,
                               const Permutation& sk_perm, const AShapeConfig& cfg,
                               AttentionStats* stats = nullptr) {
    detail::validate_attention_inputs(q, k, v, bias, sq_perm, sk_perm);
    if (cfg.b_row == 0 || cfg.b_col == 0) throw ConfigError("tile sizes must be >= 1");
    const std::size_t s_q = q.dim(0), s_k = k.dim(0), d = q.dim(1), dv = v.dim(1);
    const float tau = detail::resolve_tau(cfg.tau, d);
    if (!(tau > 0.0f) || !std::isfinite(tau)) throw ConfigError("softmax scale tau must be > 0");
    const float inv_tau = 1.0f / tau;

    const std::size_t t_row = tile_count(s_q, cfg.b_row);
    const std::size_t t_col = tile_count(s_k, cfg.b_col);
    const ActiveSet active = build_active_set(t_row, t_col, cfg.r);
    const std::size_t w = bias.w;
    constexpr float neg_inf = -std::numeric_limits<float>::infinity();

    // K^T with each key tile padded to b_col columns.
    const std::size_t kt_stride = t_col * cfg.b_col;
    std::vector<float> kt(d * kt_stride, 0.0f);
    for (std::size_t j = 0; j < s_k; ++j) {
        const auto kj = k.row(j);
        for (std::size_t p = 0; p < d; ++p) kt[p * kt_stride + j] = kj[p];
    }
    // Bias column split of every key's spatial index.
    std::vector<std::uint32_t> key_row(kt_stride, 0), key_col(kt_stride, 0);
    for (std::size_t j = 0; j < s_k; ++j) {
        key_row[j] = static_cast<std::uint32_t>(sk_perm[j] / w);
        key_col[j] = static_cast<std::uint32_t>(sk_perm[j] % w);
    }

    Tensor out({s_q, dv});
    const float* pq = q.data().data();
    const float* pv = v.data().data();
    float* po = out.data().data();

    auto run_tile = [&](std::size_t i, std::vector<float>& s, std::vector<float>& o_acc,
                        std::vector<float>& m, std::vector<float>& l) {
        const std::size_t r0 = i * cfg.b_row;
        const std::size_t rows = std::min(cfg.b_row, s_q - r0);
        std::fill(m.begin(), m.end(), neg_inf);
        std::fill(l.begin(), l.end(), 0.0f);
        std::fill(o_acc.begin(), o_acc.end(), 0.0f);

        for (std::size_t j : active.tiles[i]) {
            const std::size_t c0 = j * cfg.b_col;
            const std::size_t valid = std::min(cfg.b_col, s_k - c0);

            // S = Q_i K_j^T (+ bias / tau), padded columns = -inf.
            std::fill(s.begin(), s.end(), 0.0f);
            for (std::size_t row = 0; row < rows; ++row) {
                float* srow = s.data() + row * cfg.b_col;
                const float* qrow = pq + (r0 + row) * d;
                for (std::size_t p = 0; p < d; ++p) {
                    const float qp = qrow[p];
                    const float* krow = kt.data() + p * kt_stride + c0;
                    for (std::size_t col = 0; col < valid; ++col) srow[col] += qp * krow[col];
                }
                const std::size_t spatial_q = sq_perm[r0 + row];
                const float* bh = bias.bh.data().data() + spatial_q * w;
                const float* bw = bias.bw.data().data() + spatial_q * w;
                for (std::size_t col = 0; col < valid; ++col)
                    srow[col] += (bh[key_row[c0 + col]] + bw[key_col[c0 + col]]) * inv_tau;
                for (std::size_t col = valid; col < cfg.b_col; ++col) srow[col] = neg_inf;
            }

            // Online softmax update.
            for (std::size_t row = 0; row < rows; ++row) {
                float* srow = s.data() + row * cfg.b_col;
                float row_max = neg_inf;
                for (std::size_t col = 0; col < valid; ++col) row_max = std::max(row_max, srow[col]);
                const float m_new = std::max(m[row], row_max);
                const float alpha = m[row] == neg_inf ? 0.0f : std::exp(tau * (m[row] - m_new));
                float row_sum = 0.0f;
                for (std::size_t col = 0; col < cfg.b_col; ++col) {
                    const float e = srow[col] == neg_inf ? 0.0f : std::exp(tau * (srow[col] - m_new));
                    srow[col] = e;
                    row_sum += e;
                }
                l[row] = alpha * l[row] + row_sum;
                float* orow = o_acc.data() + row * dv;
                for (std::size_t c = 0; c < dv; ++c) orow[c] *= alpha;
                for (std::size_t col = 0; col < valid; ++col) {
                    const float p = srow[col];
                    const float* vrow = pv + (c0 + col) * dv;
                    for (std::size_t c = 0; c < dv; ++c) orow[c] += p * vrow[c];
                }
                m[row] = m_new;
            }
        }

        for (std::size_t row = 0; row < rows; ++row) {
            // The diagonal tile always has a valid column, so l > 0.
            if (!(l[row] > 0.0f)) throw NumericError("ashape_attention: empty softmax row");
            const float inv_l = 1.0f / l[row];
            const float* orow = o_acc.data() + row * dv;
            float* dst = po + (r0 + row) * dv;
            for (std::size_t c = 0; c < dv; ++c) dst[c] = orow[c] * inv_l;
        }
    };

    auto run_range = [&](std::size_t begin, std::size_t step) {
        std::vector<float> s(cfg.b_row * cfg.b_col), o_acc(cfg.b_row * dv), m(cfg.b_row), l(cfg.b_row);
        for (std::size_t i = begin; i < t_row; i += step) run_tile(i, s, o_acc, m, l);
    };

    const unsigned threads = std::max(1u, std::min<unsigned>(cfg.threads, static_cast<unsigned>(t_row)));
    if (threads == 1) {
        run_range(0, 1);
    } else {
        std::vector<std::exception_ptr> errors(threads);
        std::vector<std::thread> pool;
        pool.reserve(threads);
        for (unsigned t = 0; t < threads; ++t)
            pool.emplace_back([&, t] {
                try {
                    run_range(t, threads);
                } catch (...) {
                    errors[t] = std::current_exception();
                }
            });
        for (auto& th : pool) th.join();
        for (auto& e : errors)
            if (e) std::rethrow_exception(e);
    }

    if (stats) {
        stats->tile_pairs += active.pairs();
        stats->total_pairs += static_cast<std::uint64_t>(t_row) * t_col;
    }
    require_finite(out, "ashape_attention");
    return out;
}

}  // namespace zsparse

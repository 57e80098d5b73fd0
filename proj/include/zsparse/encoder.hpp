#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "zsparse/attention.hpp"
#include "zsparse/error.hpp"
#include "zsparse/grid.hpp"
#include "zsparse/mlp.hpp"
#include "zsparse/rng.hpp"
#include "zsparse/saliency.hpp"
#include "zsparse/stripesort.hpp"
#include "zsparse/tensor.hpp"

namespace zsparse {

enum class BlockKind { local, global };

/// dense:     identity token order, A-shape kernel at r = 1, full MLP.
/// sparse:    stripe-sorted order, per-block r and keep fraction.
/// reference: identity order, explicit-score reference attention, full MLP.
enum class EncoderMode { dense, sparse, reference };

struct EncoderConfig {
    GridShape grid{64, 64};
    std::size_t d = 64;
    std::size_t heads = 4;
    std::size_t window = 14;
    std::size_t mlp_ratio = 4;
    std::vector<BlockKind> layout{BlockKind::local, BlockKind::local, BlockKind::global};
    std::vector<double> density{1.0};        // one value, or one per block
    std::vector<double> keep_fraction{1.0};  // one value, or one per block
    StripeConfig stripe{};
    OrderingConfig ordering{};
    BypassMode bypass = BypassMode::identity;
    std::size_t tile_local = kLocalTile;
    std::size_t tile_global = kGlobalTile;
    unsigned threads = 1;
    std::uint64_t seed = 0;

    std::size_t blocks() const { return layout.size(); }
    std::size_t head_dim() const { return d / heads; }
    std::size_t padded_h() const { return (grid.h + window - 1) / window * window; }
    std::size_t padded_w() const { return (grid.w + window - 1) / window * window; }
    std::size_t window_tokens() const { return window * window; }
    std::size_t windows() const { return (padded_h() / window) * (padded_w() / window); }

    double density_at(std::size_t b) const { return density.size() == 1 ? density[0] : density.at(b); }
    double keep_at(std::size_t b) const {
        return keep_fraction.size() == 1 ? keep_fraction[0] : keep_fraction.at(b);
    }
};

inline bool has_kind(const EncoderConfig& cfg, BlockKind kind) {
    return std::find(cfg.layout.begin(), cfg.layout.end(), kind) != cfg.layout.end();
}

inline void validate(const EncoderConfig& cfg) {
    validate(cfg.grid);
    if (cfg.d == 0 || cfg.heads == 0 || cfg.d % cfg.heads != 0)
        throw ConfigError("d = " + std::to_string(cfg.d) + " must be a positive multiple of heads = " +
                          std::to_string(cfg.heads));
    if (cfg.window == 0) throw ConfigError("window must be >= 1");
    if (cfg.mlp_ratio == 0) throw ConfigError("mlp_ratio must be >= 1");
    if (cfg.layout.empty()) throw ConfigError("layout must name at least one block");
    if (cfg.tile_local == 0 || cfg.tile_global == 0) throw ConfigError("tile sizes must be >= 1");
    for (const auto* list : {&cfg.density, &cfg.keep_fraction})
        if (list->size() != 1 && list->size() != cfg.blocks())
            throw ConfigError("per-block lists must have 1 or " + std::to_string(cfg.blocks()) +
                              " entries");
    for (double r : cfg.density)
        if (!(r >= 0.0 && r <= 1.0)) throw ConfigError("density must lie in [0, 1]");
    for (double k : cfg.keep_fraction)
        if (!(k > 0.0 && k <= 1.0)) throw ConfigError("keep_fraction must lie in (0, 1]");

    // The global scan order drives MLP routing in every block.
    require_divides(cfg.stripe.g, cfg.grid.n(), "encoder grid");
    if (cfg.ordering.granularity == Granularity::zgroup &&
        (cfg.ordering.group_size == 0 || cfg.grid.n() % cfg.ordering.group_size != 0))
        throw ConfigError("group_size " + std::to_string(cfg.ordering.group_size) +
                          " does not divide N = " + std::to_string(cfg.grid.n()));
    if (has_kind(cfg, BlockKind::local)) {
        require_divides(cfg.stripe.g, cfg.window_tokens(), "encoder window");
        if (cfg.ordering.granularity == Granularity::zgroup &&
            cfg.window_tokens() % cfg.ordering.group_size != 0)
            throw ConfigError("group_size " + std::to_string(cfg.ordering.group_size) +
                              " does not divide window tokens " +
                              std::to_string(cfg.window_tokens()));
    }
    if (has_kind(cfg, BlockKind::global) && cfg.grid.h != cfg.grid.w)
        throw ConfigError("global blocks need a square token grid for the 2D bias");
}

struct BlockWeights {
    Tensor ln_gamma, ln_beta;  // [d]
    Tensor w_qkv;              // [d, 3d]
    Tensor b_qkv;              // [3d]
    Tensor w_proj;             // [d, d]
    Tensor b_proj;             // [d]
    std::vector<BiasTables> bias;  // one per head
    MlpWeights mlp;
};

struct EncoderWeights {
    std::vector<BlockWeights> blocks;
};

namespace detail {

inline std::size_t attention_side(const EncoderConfig& cfg, BlockKind kind) {
    return kind == BlockKind::local ? cfg.window : cfg.grid.w;
}

inline BlockWeights zero_block(const EncoderConfig& cfg, BlockKind kind) {
    const std::size_t d = cfg.d, side = attention_side(cfg, kind);
    BlockWeights b{Tensor::full({d}, 1.0f), Tensor({d}), Tensor({d, 3 * d}), Tensor({3 * d}),
                   Tensor({d, d}), Tensor({d}), {}, MlpWeights::zeros(d, d * cfg.mlp_ratio)};
    for (std::size_t h = 0; h < cfg.heads; ++h) b.bias.push_back(BiasTables::zeros(side * side, side));
    return b;
}

}  // namespace detail

/// Weights with every projection, bias and MLP parameter zero; the blocks
/// reduce to the identity.
inline EncoderWeights zero_weights(const EncoderConfig& cfg) {
    validate(cfg);
    EncoderWeights w;
    for (BlockKind kind : cfg.layout) w.blocks.push_back(detail::zero_block(cfg, kind));
    return w;
}

/// Seeded random stand-ins for trained weights.
inline EncoderWeights random_weights(const EncoderConfig& cfg) {
    validate(cfg);
    Rng root(cfg.seed);
    EncoderWeights w;
    const std::size_t d = cfg.d;
    const float proj_std = static_cast<float>(1.0 / std::sqrt(static_cast<double>(d)));
    for (std::size_t b = 0; b < cfg.blocks(); ++b) {
        Rng rng = root.fork(b);
        BlockWeights bw = detail::zero_block(cfg, cfg.layout[b]);
        bw.ln_gamma = random_uniform({d}, rng, 0.8f, 1.2f);
        bw.ln_beta = random_normal({d}, rng, 0.05f);
        bw.w_qkv = random_normal({d, 3 * d}, rng, proj_std);
        bw.b_qkv = random_normal({3 * d}, rng, 0.02f);
        bw.w_proj = random_normal({d, d}, rng, proj_std);
        bw.b_proj = random_normal({d}, rng, 0.02f);
        for (auto& t : bw.bias) {
            t.bh = random_normal(t.bh.shape(), rng, 0.5f);
            t.bw = random_normal(t.bw.shape(), rng, 0.5f);
        }
        bw.mlp = MlpWeights::random(d, d * cfg.mlp_ratio, rng);
        bw.mlp.ln_gamma = random_uniform({d}, rng, 0.8f, 1.2f);
        bw.mlp.ln_beta = random_normal({d}, rng, 0.05f);
        w.blocks.push_back(std::move(bw));
    }
    return w;
}

/// Scan orders computed once from the layer-0 input: one per local window
/// (window-local token indices) and one over the whole grid.
struct ScanPlan {
    Permutation global;
    std::vector<Permutation> windows;
};

/// Saliency of one window; positions in the zero padding get 0.
inline SaliencyMap window_saliency(const SaliencyMap& m, std::size_t window, std::size_t wy,
                                   std::size_t wx) {
    Tensor t({window, window});
    for (std::size_t ly = 0; ly < window; ++ly)
        for (std::size_t lx = 0; lx < window; ++lx) {
            const std::size_t y = wy * window + ly, x = wx * window + lx;
            if (y < m.shape.h && x < m.shape.w) t.at(ly, lx) = m(y, x);
        }
    return {GridShape{window, window}, std::move(t)};
}

inline ScanPlan plan_scan(const SaliencyMap& m, const EncoderConfig& cfg) {
    ScanPlan plan{scan_order(m, cfg.ordering, cfg.stripe), {}};
    if (has_kind(cfg, BlockKind::local)) {
        const std::size_t wh = cfg.padded_h() / cfg.window, ww = cfg.padded_w() / cfg.window;
        for (std::size_t wy = 0; wy < wh; ++wy)
            for (std::size_t wx = 0; wx < ww; ++wx)
                plan.windows.push_back(
                    scan_order(window_saliency(m, cfg.window, wy, wx), cfg.ordering, cfg.stripe));
    }
    return plan;
}

inline ScanPlan identity_plan(const EncoderConfig& cfg) {
    ScanPlan plan{Permutation::identity(cfg.grid.n()), {}};
    if (has_kind(cfg, BlockKind::local))
        plan.windows.assign(cfg.windows(), Permutation::identity(cfg.window_tokens()));
    return plan;
}

struct BlockCost {
    BlockKind kind = BlockKind::local;
    std::uint64_t tile_pairs = 0;
    std::uint64_t total_tile_pairs = 0;
    std::uint64_t mlp_rows = 0;
    std::uint64_t total_mlp_rows = 0;
    std::uint64_t mlp_macs = 0;
    double wall_ms = 0.0;

    double attention_density() const {
        return static_cast<double>(tile_pairs) / static_cast<double>(total_tile_pairs);
    }
    double mlp_density() const {
        return static_cast<double>(mlp_rows) / static_cast<double>(total_mlp_rows);
    }
};

struct CostReport {
    std::vector<BlockCost> blocks;

    double total_ms() const {
        double s = 0.0;
        for (const auto& b : blocks) s += b.wall_ms;
        return s;
    }
};

/// Called once per block with the tokens entering the MLP ([N, d], row-major
/// over the grid) and the order used to pick the keep-set.
using MlpObserver =
    std::function<void(std::size_t block, const Tensor& mlp_input, const Permutation& order)>;

namespace detail {

inline Tensor slice_cols(const Tensor& x, std::size_t c0, std::size_t width) {
    Tensor out({x.rows(), width});
    for (std::size_t i = 0; i < x.rows(); ++i)
        std::copy_n(x.row(i).begin() + static_cast<std::ptrdiff_t>(c0), width, out.row(i).begin());
    return out;
}

/// Multi-head self-attention on tokens already in scan order `order`.
inline Tensor attend(const Tensor& tokens, const Permutation& order, const BlockWeights& w,
                     const EncoderConfig& cfg, std::size_t tile, double r, EncoderMode mode,
                     AttentionStats& stats) {
    const std::size_t d = cfg.d, dh = cfg.head_dim(), s = tokens.rows();
    Tensor qkv = matmul(tokens, w.w_qkv);
    add_row_bias(qkv, w.b_qkv);
    Tensor heads_out({s, d});
    const float tau = static_cast<float>(1.0 / std::sqrt(static_cast<double>(dh)));
    for (std::size_t h = 0; h < cfg.heads; ++h) {
        const Tensor q = slice_cols(qkv, h * dh, dh);
        const Tensor k = slice_cols(qkv, d + h * dh, dh);
        const Tensor v = slice_cols(qkv, 2 * d + h * dh, dh);
        Tensor o;
        if (mode == EncoderMode::reference) {
            o = dense_attention_ref(q, k, v, w.bias[h], order, order, tau);
            const std::size_t t = tile_count(s, tile);
            stats.tile_pairs += t * t;
            stats.total_pairs += t * t;
        } else {
            AShapeConfig a{tile, tile, mode == EncoderMode::sparse ? r : 1.0, tau, cfg.threads};
            o = ashape_attention(q, k, v, w.bias[h], order, order, a, &stats);
        }
        for (std::size_t i = 0; i < s; ++i)
            std::ranges::copy(o.row(i), heads_out.row(i).begin() + static_cast<std::ptrdiff_t>(h * dh));
    }
    Tensor out = matmul(heads_out, w.w_proj);
    add_row_bias(out, w.b_proj);
    return out;
}

/// permute → attention → inverse permute, for tokens in row-major order.
inline Tensor attend_spatial(const Tensor& tokens, const Permutation& order, const BlockWeights& w,
                             const EncoderConfig& cfg, std::size_t tile, double r, EncoderMode mode,
                             AttentionStats& stats) {
    const Tensor permuted = apply_permutation(order, tokens);
    const Tensor out = attend(permuted, order, w, cfg, tile, r, mode, stats);
    return apply_permutation(invert(order), out);
}

inline Tensor local_attention(const Tensor& normed, const ScanPlan& plan, const BlockWeights& w,
                              const EncoderConfig& cfg, double r, EncoderMode mode,
                              AttentionStats& stats) {
    const std::size_t win = cfg.window, d = cfg.d;
    const std::size_t wh = cfg.padded_h() / win, ww = cfg.padded_w() / win;
    Tensor out({cfg.grid.n(), d});
    Tensor tokens({win * win, d});
    for (std::size_t wy = 0; wy < wh; ++wy) {
        for (std::size_t wx = 0; wx < ww; ++wx) {
            std::fill(tokens.data().begin(), tokens.data().end(), 0.0f);
            for (std::size_t ly = 0; ly < win; ++ly)
                for (std::size_t lx = 0; lx < win; ++lx) {
                    const std::size_t y = wy * win + ly, x = wx * win + lx;
                    if (y < cfg.grid.h && x < cfg.grid.w)
                        std::ranges::copy(normed.row(cfg.grid.index(y, x)),
                                          tokens.row(ly * win + lx).begin());
                }
            const Tensor o = attend_spatial(tokens, plan.windows[wy * ww + wx], w, cfg,
                                            cfg.tile_local, r, mode, stats);
            for (std::size_t ly = 0; ly < win; ++ly)
                for (std::size_t lx = 0; lx < win; ++lx) {
                    const std::size_t y = wy * win + ly, x = wx * win + lx;
                    if (y < cfg.grid.h && x < cfg.grid.w)
                        std::ranges::copy(o.row(ly * win + lx), out.row(cfg.grid.index(y, x)).begin());
                }
        }
    }
    return out;
}

}  // namespace detail

struct EncoderResult {
    Tensor y;  // [H, W, d], original spatial order
    CostReport report;
};

inline void validate(const EncoderWeights& w, const EncoderConfig& cfg) {
    if (w.blocks.size() != cfg.blocks())
        throw ShapeError("encoder weights have " + std::to_string(w.blocks.size()) +
                         " blocks, config has " + std::to_string(cfg.blocks()));
    for (std::size_t b = 0; b < cfg.blocks(); ++b) {
        const auto& bw = w.blocks[b];
        const std::size_t side = detail::attention_side(cfg, cfg.layout[b]);
        if (bw.w_qkv.shape() != Shape{cfg.d, 3 * cfg.d} || bw.w_proj.shape() != Shape{cfg.d, cfg.d} ||
            bw.b_qkv.size() != 3 * cfg.d || bw.b_proj.size() != cfg.d ||
            bw.ln_gamma.size() != cfg.d || bw.ln_beta.size() != cfg.d || bw.bias.size() != cfg.heads)
            throw ShapeError("block " + std::to_string(b) + " weights do not match the config");
        for (const auto& t : bw.bias) validate_bias(t, side * side, side * side);
        validate(bw.mlp);
        if (bw.mlp.width() != cfg.d) throw ShapeError("block MLP width does not match d");
    }
}

/// Runs the encoder on an [H, W, d] feature map.
///
/// The scan order is derived once from the Sobel saliency of `x`: per window
/// for local blocks, over the whole grid for global blocks and MLP routing.
/// Each block is LN → (window) attention in scan order → residual → MLP
/// (routed in sparse mode). The output is in the original spatial order.
inline EncoderResult encoder_forward(const Tensor& x, const EncoderWeights& w,
                                     const EncoderConfig& cfg, EncoderMode mode,
                                     const MlpObserver& observer = {}) {
    validate(cfg);
    validate(w, cfg);
    if (x.shape() != Shape{cfg.grid.h, cfg.grid.w, cfg.d})
        throw ShapeError("encoder input " + shape_str(x.shape()) + " does not match grid " +
                         std::to_string(cfg.grid.h) + "x" + std::to_string(cfg.grid.w) + "x" +
                         std::to_string(cfg.d));

    const ScanPlan plan =
        mode == EncoderMode::sparse ? plan_scan(sobel_magnitude(x), cfg) : identity_plan(cfg);

    const std::size_t n = cfg.grid.n();
    Tensor tokens = x.reshaped({n, cfg.d});
    CostReport report;
    for (std::size_t b = 0; b < cfg.blocks(); ++b) {
        const auto start = std::chrono::steady_clock::now();
        const BlockWeights& bw = w.blocks[b];
        const BlockKind kind = cfg.layout[b];
        const double r = cfg.density_at(b);

        AttentionStats stats;
        const Tensor normed = layernorm(tokens, bw.ln_gamma, bw.ln_beta);
        const Tensor attn =
            kind == BlockKind::local
                ? detail::local_attention(normed, plan, bw, cfg, r, mode, stats)
                : detail::attend_spatial(normed, plan.global, bw, cfg, cfg.tile_global, r, mode, stats);
        const Tensor mid = add(tokens, attn);

        if (observer) observer(b, mid, plan.global);

        OpCounter mlp_ops;
        std::size_t kept = n;
        if (mode == EncoderMode::sparse) {
            const RouterConfig rc{cfg.keep_at(b), cfg.bypass};
            kept = keep_count(rc.keep_fraction, n);
            tokens = route_mlp(mid, bw.mlp, plan.global, rc, &mlp_ops);
        } else {
            tokens = mlp_forward(mid, bw.mlp, &mlp_ops).y;
        }

        BlockCost cost;
        cost.kind = kind;
        cost.tile_pairs = stats.tile_pairs;
        cost.total_tile_pairs = stats.total_pairs;
        cost.mlp_rows = kept;
        cost.total_mlp_rows = n;
        cost.mlp_macs = mlp_ops.macs;
        cost.wall_ms =
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
        report.blocks.push_back(cost);
    }
    return {std::move(tokens).reshaped({cfg.grid.h, cfg.grid.w, cfg.d}), std::move(report)};
}

struct BenchRow {
    double density = 0.0;
    double attention_density = 0.0;
    double mlp_density = 0.0;
    double median_ms = 0.0;
    double speedup = 0.0;
};

inline double median(std::vector<double> v) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    const std::size_t m = v.size() / 2;
    return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

/// Times the encoder in dense mode and in sparse mode at each density (used
/// for both the attention ratio r and the MLP keep fraction of every block).
inline std::vector<BenchRow> bench(const EncoderConfig& base, const std::vector<double>& densities,
                                   std::size_t repeats) {
    validate(base);
    if (repeats == 0) throw ConfigError("repeats must be >= 1");
    const EncoderWeights w = random_weights(base);
    Rng rng(base.seed ^ 0x5eedull);
    const Tensor x = random_normal({base.grid.h, base.grid.w, base.d}, rng);

    auto time_mode = [&](const EncoderConfig& cfg, EncoderMode mode, CostReport* last) {
        std::vector<double> ms;
        for (std::size_t i = 0; i < repeats; ++i) {
            const auto start = std::chrono::steady_clock::now();
            auto res = encoder_forward(x, w, cfg, mode);
            ms.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                                   start)
                             .count());
            if (last) *last = std::move(res.report);
        }
        return median(ms);
    };

    const double dense_ms = time_mode(base, EncoderMode::dense, nullptr);
    std::vector<BenchRow> rows;
    for (double r : densities) {
        EncoderConfig cfg = base;
        cfg.density = {r};
        cfg.keep_fraction = {r};
        CostReport report;
        const double ms = time_mode(cfg, EncoderMode::sparse, &report);
        std::uint64_t pairs = 0, total_pairs = 0, mlp = 0, total_mlp = 0;
        for (const auto& b : report.blocks) {
            pairs += b.tile_pairs;
            total_pairs += b.total_tile_pairs;
            mlp += b.mlp_rows;
            total_mlp += b.total_mlp_rows;
        }
        rows.push_back({r, double(pairs) / double(total_pairs), double(mlp) / double(total_mlp), ms,
                        dense_ms / ms});
    }
    return rows;
}

}  // namespace zsparse

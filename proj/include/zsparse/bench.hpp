#pragma once

#include <chrono>
#include <cmath>
#include <string>
#include <vector>

#include "zsparse/attention.hpp"
#include "zsparse/encoder.hpp"
#include "zsparse/rng.hpp"
#include "zsparse/saliency.hpp"
#include "zsparse/stripesort.hpp"

namespace zsparse {

struct AttnBenchConfig {
    std::size_t n = 4096;
    std::size_t d = 64;
    std::vector<double> densities{0.25, 0.5, 1.0};
    std::size_t repeats = 20;
    std::size_t tile = kGlobalTile;
    unsigned threads = 1;
    std::uint64_t seed = 0;
};

struct AttnBenchRow {
    double density = 0.0;
    double achieved_density = 0.0;
    double median_ms = 0.0;
    double speedup = 0.0;  // median time at r = 1 divided by this row's
};

/// Times the A-shape kernel alone on one random head of length n (a square
/// grid) in stripe-sorted order. Densities are timed round-robin inside each
/// repeat.
inline std::vector<AttnBenchRow> attention_bench(const AttnBenchConfig& cfg) {
    const auto side = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(cfg.n))));
    if (cfg.n == 0 || side * side != cfg.n) throw ConfigError("attn-bench: n must be a perfect square");
    if (cfg.d == 0) throw ConfigError("attn-bench: d must be >= 1");
    if (cfg.repeats == 0) throw ConfigError("attn-bench: repeats must be >= 1");
    if (cfg.tile == 0) throw ConfigError("attn-bench: tile must be >= 1");
    for (double r : cfg.densities)
        if (!(r >= 0.0 && r <= 1.0)) throw ConfigError("attn-bench: densities must lie in [0, 1]");

    Rng rng(cfg.seed);
    const Tensor q = random_normal({cfg.n, cfg.d}, rng);
    const Tensor k = random_normal({cfg.n, cfg.d}, rng);
    const Tensor v = random_normal({cfg.n, cfg.d}, rng);
    BiasTables bias{random_normal({cfg.n, side}, rng, 0.5f), random_normal({cfg.n, side}, rng, 0.5f),
                    side};
    const SaliencyMap sal = SaliencyMap::from_tensor(random_uniform({side, side}, rng, 0.0f, 1.0f));
    const Permutation order = scan_order(sal, OrderingConfig{}, StripeConfig{});

    std::vector<double> all = cfg.densities;
    const bool has_full = std::find(all.begin(), all.end(), 1.0) != all.end();
    if (!has_full) all.push_back(1.0);

    std::vector<std::vector<double>> ms(all.size());
    for (std::size_t rep = 0; rep < cfg.repeats; ++rep) {
        for (std::size_t i = 0; i < all.size(); ++i) {
            const AShapeConfig a{cfg.tile, cfg.tile, all[i], std::nullopt, cfg.threads};
            const auto start = std::chrono::steady_clock::now();
            const Tensor o = ashape_attention(q, k, v, bias, order, order, a);
            ms[i].push_back(
                std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
                    .count());
            if (o.size() == 0) throw NumericError("attn-bench: empty output");
        }
    }

    const std::size_t full_idx =
        static_cast<std::size_t>(std::find(all.begin(), all.end(), 1.0) - all.begin());
    const double full_ms = median(ms[full_idx]);
    const std::size_t t = tile_count(cfg.n, cfg.tile);
    std::vector<AttnBenchRow> rows;
    for (std::size_t i = 0; i < cfg.densities.size(); ++i) {
        const double m = median(ms[i]);
        rows.push_back({all[i], achieved_density(t, t, all[i]), m, full_ms / m});
    }
    return rows;
}

}  // namespace zsparse

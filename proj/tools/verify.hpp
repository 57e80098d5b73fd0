#pragma once

// Oracle-equivalence suites run by `zsparse verify`.

#include <cmath>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "zsparse/zsparse.hpp"

namespace zsparse::verify {

struct SuiteResult {
    std::string name;
    std::size_t cases = 0;
    std::size_t failures = 0;
    double worst = 0.0;  // worst error seen, where the suite measures one
};

namespace detail {

inline Permutation shuffled(std::size_t n, Rng& rng) {
    std::vector<Index> f(n);
    for (std::size_t i = 0; i < n; ++i) f[i] = static_cast<Index>(i);
    for (std::size_t i = n; i > 1; --i) std::swap(f[i - 1], f[rng.below(i)]);
    return Permutation(std::move(f));
}

struct Head {
    Tensor q, k, v;
    BiasTables bias;
    Permutation sq, sk;
    float tau;
};

inline Head random_head(Rng& rng) {
    const std::size_t side = 1 + rng.below(16), s = side * side, d = 1 + rng.below(64);
    return {random_normal({s, d}, rng),
            random_normal({s, d}, rng),
            random_normal({s, d}, rng),
            {random_normal({s, side}, rng, 0.5f), random_normal({s, side}, rng, 0.5f), side},
            shuffled(s, rng),
            shuffled(s, rng),
            static_cast<float>(1.0 / std::sqrt(double(d)))};
}

inline double masked_error(const Head& h, std::size_t tile, double r) {
    const AShapeConfig cfg{tile, tile, r, h.tau};
    const Tensor o = ashape_attention(h.q, h.k, h.v, h.bias, h.sq, h.sk, cfg);
    const auto bias = oracle::dense_bias(h.bias.bh, h.bias.bw, h.bias.w, h.sq.forward(), h.sk.forward());
    const std::size_t t_col = tile_count(h.k.dim(0), tile);
    const Tensor ref = oracle::masked_attention(h.q, h.k, h.v, bias, h.tau, [&](std::size_t i, std::size_t j) {
        return oracle::active_tiles(i / tile, t_col, r).count(j / tile) > 0;
    });
    return max_relative_error(o, ref);
}

}  // namespace detail

inline SuiteResult kernel_vs_reference(std::uint64_t seed, std::size_t cases) {
    SuiteResult res{"kernel_vs_reference", cases};
    Rng rng(seed);
    for (std::size_t c = 0; c < cases; ++c) {
        const auto h = detail::random_head(rng);
        const std::size_t tile = 1 + rng.below(64);
        const Tensor o = ashape_attention(h.q, h.k, h.v, h.bias, h.sq, h.sk, {tile, tile, 1.0, h.tau});
        const double e = max_relative_error(o, dense_attention_ref(h.q, h.k, h.v, h.bias, h.sq, h.sk, h.tau));
        res.worst = std::max(res.worst, e);
        res.failures += e > 1e-4;
    }
    return res;
}

inline SuiteResult kernel_vs_masked(std::uint64_t seed, std::size_t cases) {
    SuiteResult res{"kernel_vs_masked", cases};
    Rng rng(seed ^ 0x1);
    for (std::size_t c = 0; c < cases; ++c) {
        const auto h = detail::random_head(rng);
        const double r = std::vector<double>{0.0, 0.25, 0.5}[c % 3];
        const double e = detail::masked_error(h, 1 + rng.below(32), r);
        res.worst = std::max(res.worst, e);
        res.failures += e > 1e-4;
    }
    return res;
}

inline SuiteResult active_set(std::uint64_t seed, std::size_t cases) {
    SuiteResult res{"active_set", cases};
    Rng rng(seed ^ 0x2);
    for (std::size_t c = 0; c < cases; ++c) {
        const std::size_t tr = 1 + rng.below(32), tc = 1 + rng.below(32);
        const double r = rng.uniform();
        const auto a = build_active_set(tr, tc, r);
        std::size_t pairs = 0;
        bool ok = true;
        for (std::size_t i = 0; i < tr; ++i) {
            const auto ref = oracle::active_tiles(i, tc, r);
            ok = ok && a.tiles[i] == std::vector<std::size_t>(ref.begin(), ref.end());
            pairs += ref.size();
        }
        ok = ok && achieved_density(tr, tc, r) == double(pairs) / double(tr * tc);
        res.failures += !ok;
    }
    return res;
}

inline SuiteResult permutation_laws(std::uint64_t seed, std::size_t cases) {
    SuiteResult res{"permutation_laws", cases};
    Rng rng(seed ^ 0x3);
    for (std::size_t c = 0; c < cases; ++c) {
        const std::size_t side = 2 * (1 + rng.below(12));
        const GridShape g{side, side};
        const auto m = SaliencyMap::from_tensor(random_uniform({side, side}, rng, 0.0f, 1.0f));
        const auto pi = importance_order(m, {Granularity::token, 4});
        const auto sigma = stripe_sort(pi, {4, StripeVariant::full}, g);
        const Tensor feats = random_normal({g.n(), 3}, rng);
        bool ok = sigma.forward() == oracle::reshape_transpose_flatten(pi.forward(), 4);
        ok = ok && apply_permutation(invert(sigma), apply_permutation(sigma, feats)) == feats;
        res.failures += !ok;
    }
    return res;
}

inline SuiteResult phase_shift(std::uint64_t, std::size_t) {
    SuiteResult res{"phase_shift", 0};
    for (std::size_t side : {4u, 8u, 16u, 32u}) {
        ++res.cases;
        const auto sigma = scan_order(SaliencyMap::uniform({side, side}), {}, {});
        std::set<std::size_t> phases;
        bool ok = true;
        for (const auto& b : block_members(sigma, 4)) {
            const std::size_t dy = b[0] / side % 2, dx = b[0] % side % 2;
            phases.insert(dy * 2 + dx);
            for (Index t : b) ok = ok && t / side % 2 == dy && t % side % 2 == dx;
        }
        res.failures += !(ok && phases.size() == 4);
    }
    return res;
}

inline SuiteResult sobel(std::uint64_t seed, std::size_t cases) {
    SuiteResult res{"sobel", cases};
    Rng rng(seed ^ 0x4);
    for (std::size_t c = 0; c < cases; ++c) {
        const Tensor x = random_normal({1 + rng.below(12), 1 + rng.below(12), 1 + rng.below(4)}, rng);
        const auto m = sobel_magnitude(x);
        const auto ref = oracle::sobel(x);
        double worst = 0.0;
        for (std::size_t t = 0; t < ref.size(); ++t) worst = std::max(worst, std::abs(m.at_token(t) - ref[t]));
        res.worst = std::max(res.worst, worst);
        res.failures += worst > 1e-4;
    }
    return res;
}

inline SuiteResult routed_mlp(std::uint64_t seed, std::size_t cases) {
    SuiteResult res{"routed_mlp", cases};
    Rng rng(seed ^ 0x5);
    for (std::size_t c = 0; c < cases; ++c) {
        const std::size_t n = 1 + rng.below(100), d = 1 + rng.below(16);
        const auto w = MlpWeights::random(d, 2 * d, rng);
        const Tensor x = random_normal({n, d}, rng);
        const auto sigma = detail::shuffled(n, rng);
        const double f = 0.01 + 0.99 * rng.uniform();
        OpCounter dense_ops, ops;
        const Tensor dense = mlp_forward(x, w, &dense_ops).y;
        const Tensor y = route_mlp(x, w, sigma, {f}, &ops);
        const std::size_t k = keep_count(f, n);
        bool ok = ops.macs * n == dense_ops.macs * k;
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t col = 0; col < d; ++col)
                ok = ok && y.at(sigma[r], col) == (r < k ? dense : x).at(sigma[r], col);
        res.failures += !ok;
    }
    return res;
}

inline std::vector<SuiteResult> run_all(std::uint64_t seed, std::size_t cases) {
    return {kernel_vs_reference(seed, cases), kernel_vs_masked(seed, cases),
            active_set(seed, cases),          permutation_laws(seed, cases),
            phase_shift(seed, cases),         sobel(seed, cases),
            routed_mlp(seed, cases)};
}

}  // namespace zsparse::verify

#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "zsparse/attention.hpp"
#include "zsparse/rng.hpp"

using namespace zsparse;

namespace {

Permutation random_permutation(std::size_t n, Rng& rng) {
    std::vector<Index> f(n);
    std::iota(f.begin(), f.end(), Index{0});
    for (std::size_t i = n; i > 1; --i) std::swap(f[i - 1], f[rng.below(i)]);
    return Permutation(std::move(f));
}

struct Instance {
    Tensor q, k, v;
    BiasTables bias;
    Permutation sq, sk;
};

Instance make_instance(std::size_t s, std::size_t d, Rng& rng, float bias_std = 0.5f) {
    const auto w = static_cast<std::size_t>(std::lround(std::sqrt(double(s))));
    Instance in{random_normal({s, d}, rng),
                random_normal({s, d}, rng),
                random_normal({s, d}, rng),
                {random_normal({s, w}, rng, bias_std), random_normal({s, w}, rng, bias_std), w},
                random_permutation(s, rng),
                random_permutation(s, rng)};
    return in;
}

Tensor masked_oracle(const Instance& in, float tau, std::size_t b_row, std::size_t b_col, double r) {
    const auto bias = oracle::dense_bias(in.bias.bh, in.bias.bw, in.bias.w, in.sq.forward(), in.sk.forward());
    const std::size_t t_col = (in.k.dim(0) + b_col - 1) / b_col;
    return oracle::masked_attention(in.q, in.k, in.v, bias, tau, [&](std::size_t i, std::size_t j) {
        return oracle::active_tiles(i / b_row, t_col, r).count(j / b_col) > 0;
    });
}

}  // namespace

TEST(ActiveSet, Formula) {
    EXPECT_EQ(build_active_set(8, 8, 0.25).tiles[5], (std::vector<std::size_t>{0, 1, 5}));
    EXPECT_EQ(build_active_set(8, 8, 0.25).tiles[1], (std::vector<std::size_t>{0, 1}));
    for (std::size_t i = 0; i < 6; ++i)
        EXPECT_EQ(build_active_set(6, 6, 0.0).tiles[i], (std::vector<std::size_t>{i}));
    for (const auto& j : build_active_set(5, 5, 1.0).tiles)
        EXPECT_EQ(j, (std::vector<std::size_t>{0, 1, 2, 3, 4}));
    EXPECT_THROW(build_active_set(0, 3, 0.5), ConfigError);
    EXPECT_THROW(build_active_set(2, 3, 1.5), ConfigError);
}

TEST(ActiveSet, MatchesEnumeration) {
    Rng rng(50);
    for (int rep = 0; rep < 200; ++rep) {
        const std::size_t tr = 1 + rng.below(20), tc = 1 + rng.below(20);
        const double r = rng.uniform();
        const auto a = build_active_set(tr, tc, r);
        for (std::size_t i = 0; i < tr; ++i) {
            const auto ref = oracle::active_tiles(i, tc, r);
            ASSERT_EQ(a.tiles[i], std::vector<std::size_t>(ref.begin(), ref.end()));
        }
    }
}

TEST(AchievedDensity, KnownValues) {
    EXPECT_EQ(achieved_density(8, 8, 1.0), 1.0);
    EXPECT_EQ(achieved_density(8, 8, 0.0), 1.0 / 8.0);
    EXPECT_EQ(achieved_density(13, 13, 0.0), 1.0 / 13.0);
    EXPECT_EQ(achieved_density(8, 8, 0.25), 0.34375);
}

TEST(DenseRef, SingleKeyReturnsValue) {
    const Tensor q({1, 3}, {1, 2, 3}), k({1, 3}, {-1, 0, 4}), v({1, 2}, {0.25f, -7.5f});
    const auto p = Permutation::identity(1);
    EXPECT_EQ(dense_attention_ref(q, k, v, BiasTables::zeros(1, 1), p, p, 0.7f), v);
}

TEST(DenseRef, ZeroScaleGivesColumnMean) {
    Rng rng(51);
    const Tensor q = random_normal({9, 4}, rng), k = random_normal({9, 4}, rng), v = random_normal({9, 5}, rng);
    const auto p = Permutation::identity(9);
    const Tensor o = dense_attention_ref(q, k, v, BiasTables::zeros(9, 3), p, p, 0.0f);
    for (std::size_t c = 0; c < 5; ++c) {
        double mean = 0;
        for (std::size_t j = 0; j < 9; ++j) mean += v.at(j, c);
        mean /= 9;
        for (std::size_t i = 0; i < 9; ++i) EXPECT_NEAR(o.at(i, c), mean, 1e-6);
    }
}

TEST(DenseRef, MatchesScalarLoopOracle) {
    Rng rng(52);
    for (int rep = 0; rep < 10; ++rep) {
        const auto in = make_instance(16, 4, rng);
        const Tensor o = dense_attention_ref(in.q, in.k, in.v, in.bias, in.sq, in.sk, 0.5f);
        const auto bias = oracle::dense_bias(in.bias.bh, in.bias.bw, 4, in.sq.forward(), in.sk.forward());
        const Tensor ref = oracle::masked_attention(in.q, in.k, in.v, bias, 0.5, [](auto, auto) { return true; });
        EXPECT_LE(max_relative_error(o, ref), 1e-6);
    }
}

TEST(DenseRef, RejectsBadShapes) {
    const Tensor q({4, 2}), k({4, 2}), v({4, 2});
    const auto p = Permutation::identity(4);
    EXPECT_THROW(dense_attention_ref(q, k, v, BiasTables::zeros(4, 3), p, p, 1.0f), ShapeError);
    EXPECT_THROW(dense_attention_ref(q, Tensor({4, 3}), v, BiasTables::zeros(4, 2), p, p, 1.0f), ShapeError);
    EXPECT_THROW(dense_attention_ref(q, k, v, BiasTables::zeros(4, 2), Permutation::identity(3), p, 1.0f),
                 ShapeError);
}

TEST(AShape, FullDensityMatchesDenseRef) {
    Rng rng(53);
    for (std::size_t s : {1u, 4u, 9u, 49u, 100u, 196u}) {
        const auto in = make_instance(s, 16, rng);
        const Tensor ref = dense_attention_ref(in.q, in.k, in.v, in.bias, in.sq, in.sk, 0.25f);
        for (std::size_t tile : {1u, 7u, 16u, 32u, 256u}) {
            AShapeConfig cfg{tile, tile, 1.0, 0.25f, 1};
            const Tensor o = ashape_attention(in.q, in.k, in.v, in.bias, in.sq, in.sk, cfg);
            ASSERT_LE(max_relative_error(o, ref), 1e-4) << "s=" << s << " tile=" << tile;
        }
    }
}

TEST(AShape, SingleTileAtZeroDensityIsDense) {
    Rng rng(54);
    const auto in = make_instance(64, 8, rng);
    const Tensor ref = dense_attention_ref(in.q, in.k, in.v, in.bias, in.sq, in.sk, 1.0f / std::sqrt(8.0f));
    const Tensor o = ashape_attention(in.q, in.k, in.v, in.bias, in.sq, in.sk, {64, 64, 0.0});
    EXPECT_LE(max_relative_error(o, ref), 1e-5);
}

TEST(AShape, SparseMatchesMaskedOracle) {
    Rng rng(55);
    const auto in = make_instance(256, 16, rng);
    const float tau = 0.25f;
    for (double r : {0.0, 0.25, 0.5, 0.75}) {
        const Tensor o = ashape_attention(in.q, in.k, in.v, in.bias, in.sq, in.sk, {32, 32, r, tau});
        EXPECT_LE(max_relative_error(o, masked_oracle(in, tau, 32, 32, r)), 1e-4) << r;
    }
}

TEST(AShape, RaggedTilesAndRectangularTiling) {
    Rng rng(56);
    const auto in = make_instance(121, 8, rng);
    const float tau = 0.3f;
    for (auto [br, bc] : {std::pair{16u, 16u}, std::pair{10u, 24u}, std::pair{40u, 12u}}) {
        for (double r : {0.0, 0.3, 1.0}) {
            const Tensor o = ashape_attention(in.q, in.k, in.v, in.bias, in.sq, in.sk, {br, bc, r, tau});
            ASSERT_LE(max_relative_error(o, masked_oracle(in, tau, br, bc, r)), 1e-4)
                << br << "x" << bc << " r=" << r;
        }
    }
}

TEST(AShape, DistinctQueryAndKeyLengths) {
    Rng rng(57);
    const std::size_t sq = 40, sk = 64, d = 8;
    Instance in{random_normal({sq, d}, rng), random_normal({sk, d}, rng), random_normal({sk, d}, rng),
                {random_normal({sq, 8}, rng), random_normal({sq, 8}, rng), 8},
                random_permutation(sq, rng), random_permutation(sk, rng)};
    for (double r : {0.0, 0.5, 1.0}) {
        const Tensor o = ashape_attention(in.q, in.k, in.v, in.bias, in.sq, in.sk, {8, 16, r, 0.4f});
        ASSERT_LE(max_relative_error(o, masked_oracle(in, 0.4f, 8, 16, r)), 1e-4);
    }
}

TEST(AShape, ThreadCountDoesNotChangeBits) {
    Rng rng(58);
    const auto in = make_instance(144, 16, rng);
    const Tensor serial = ashape_attention(in.q, in.k, in.v, in.bias, in.sq, in.sk, {16, 16, 0.25});
    for (unsigned t : {2u, 3u, 8u}) {
        AShapeConfig cfg{16, 16, 0.25, std::nullopt, t};
        EXPECT_EQ(ashape_attention(in.q, in.k, in.v, in.bias, in.sq, in.sk, cfg), serial);
    }
}

TEST(AShape, SoftmaxShiftInvariance) {
    Rng rng(59);
    auto in = make_instance(64, 8, rng);
    const AShapeConfig cfg{16, 16, 0.5, 0.35f};
    const Tensor base = ashape_attention(in.q, in.k, in.v, in.bias, in.sq, in.sk, cfg);
    // Adding c to every bh entry of a row adds c to every score of that row.
    for (std::size_t qi = 0; qi < 64; ++qi)
        for (std::size_t p = 0; p < 8; ++p) in.bias.bh.at(qi, p) += 3.0f + 0.1f * float(qi % 5);
    const Tensor shifted = ashape_attention(in.q, in.k, in.v, in.bias, in.sq, in.sk, cfg);
    EXPECT_LT(max_abs_diff(base, shifted), 1e-5);
}

TEST(AShape, RowsAreStochastic) {
    Rng rng(60);
    const std::size_t s = 36;
    auto in = make_instance(s, 6, rng);
    // V = ones: every output entry equals the row sum of the attention weights.
    const Tensor ones = Tensor::full({s, 1}, 1.0f);
    for (double r : {0.0, 0.5, 1.0}) {
        const Tensor o = ashape_attention(in.q, in.k, ones, in.bias, in.sq, in.sk, {8, 8, r});
        for (float x : o.data()) EXPECT_NEAR(x, 1.0f, 1e-5);
        // V = identity: the output rows are the weights themselves.
        const Tensor w = ashape_attention(in.q, in.k, Tensor::identity(s), in.bias, in.sq, in.sk, {8, 8, r});
        for (std::size_t i = 0; i < s; ++i) {
            double sum = 0;
            for (float x : w.row(i)) {
                EXPECT_GE(x, 0.0f);
                sum += x;
            }
            EXPECT_NEAR(sum, 1.0, 1e-5);
        }
    }
}

TEST(AShape, PermutationConsistency) {
    Rng rng(61);
    const std::size_t s = 64, d = 8;
    const Tensor q = random_normal({s, d}, rng), k = random_normal({s, d}, rng), v = random_normal({s, d}, rng);
    const BiasTables bias{random_normal({s, 8}, rng), random_normal({s, 8}, rng), 8};
    const auto id = Permutation::identity(s);
    const Tensor spatial = dense_attention_ref(q, k, v, bias, id, id, 0.3f);
    const Permutation p = random_permutation(s, rng);
    const Tensor o = ashape_attention(apply_permutation(p, q), apply_permutation(p, k), apply_permutation(p, v),
                                      bias, p, p, {16, 16, 1.0, 0.3f});
    EXPECT_LE(max_abs_diff(apply_permutation(invert(p), o), spatial), 1e-5);
}

TEST(AShape, StatsCountTilePairs) {
    Rng rng(62);
    const auto in = make_instance(256, 4, rng);
    AttentionStats stats;
    ashape_attention(in.q, in.k, in.v, in.bias, in.sq, in.sk, {32, 32, 0.25}, &stats);
    EXPECT_EQ(stats.tile_pairs, 22u);
    EXPECT_EQ(stats.total_pairs, 64u);
}

TEST(AShape, ConfigErrors) {
    Rng rng(63);
    const auto in = make_instance(16, 4, rng);
    EXPECT_THROW(ashape_attention(in.q, in.k, in.v, in.bias, in.sq, in.sk, {0, 4, 1.0}), ConfigError);
    EXPECT_THROW(ashape_attention(in.q, in.k, in.v, in.bias, in.sq, in.sk, {4, 4, 1.0, 0.0f}), ConfigError);
    EXPECT_THROW(ashape_attention(in.q, in.k, in.v, in.bias, in.sq, in.sk, {4, 4, -0.1}), ConfigError);
}

TEST(AShape, LargeLogitsStayFinite) {
    Rng rng(64);
    auto in = make_instance(64, 8, rng, 40.0f);
    for (float& x : in.q.data()) x *= 20.0f;
    const AShapeConfig cfg{16, 16, 1.0, 0.35f};
    const Tensor o = ashape_attention(in.q, in.k, in.v, in.bias, in.sq, in.sk, cfg);
    const Tensor ref = dense_attention_ref(in.q, in.k, in.v, in.bias, in.sq, in.sk, 0.35f);
    EXPECT_LE(max_relative_error(o, ref), 1e-4);
}

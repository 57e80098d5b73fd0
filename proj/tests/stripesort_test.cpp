#include <gtest/gtest.h>

#include <algorithm>
#include <set>

#include "oracles.hpp"
#include "zsparse/rng.hpp"
#include "zsparse/stripesort.hpp"

using namespace zsparse;

namespace {

Permutation random_permutation(std::size_t n, Rng& rng) {
    std::vector<Index> f(n);
    std::iota(f.begin(), f.end(), Index{0});
    for (std::size_t i = n; i > 1; --i) std::swap(f[i - 1], f[rng.below(i)]);
    return Permutation(std::move(f));
}

}  // namespace

TEST(StripeSort, EightTokensFourGroups) {
    const Permutation pi({2, 3, 6, 0, 7, 1, 5, 4});
    const auto s = stripe_sort(pi, {4, StripeVariant::full}, {2, 4});
    const auto& p = pi.forward();
    EXPECT_EQ(s.forward(), (std::vector<Index>{p[0], p[4], p[1], p[5], p[2], p[6], p[3], p[7]}));
}

TEST(StripeSort, SingleGroupIsIdentityMap) {
    Rng rng(40);
    const Permutation pi = random_permutation(12, rng);
    EXPECT_EQ(stripe_sort(pi, {1, StripeVariant::full}, {3, 4}), pi);
}

TEST(StripeSort, MatchesReshapeTransposeFlatten) {
    Rng rng(41);
    for (int rep = 0; rep < 100; ++rep) {
        const Permutation pi = random_permutation(64, rng);
        const auto s = stripe_sort(pi, {4, StripeVariant::full}, {8, 8});
        ASSERT_EQ(s.forward(), oracle::reshape_transpose_flatten(pi.forward(), 4));
    }
}

TEST(StripeSort, Variants) {
    Rng rng(42);
    const GridShape g{8, 8};
    const Permutation pi = random_permutation(64, rng);
    EXPECT_EQ(stripe_sort(pi, {4, StripeVariant::no_interleave}, g), pi);
    const auto ns = stripe_sort(pi, {4, StripeVariant::no_sort}, g);
    EXPECT_EQ(ns.forward(), oracle::reshape_transpose_flatten(morton_order(g).forward(), 4));
}

TEST(StripeSort, DivisibilityError) {
    EXPECT_THROW(stripe_sort(Permutation::identity(10), {4, StripeVariant::full}, {2, 5}), ConfigError);
    EXPECT_THROW(block_members(Permutation::identity(10), 3), ConfigError);
}

TEST(BlockMembers, IdentityTwoBlocks) {
    const auto b = block_members(Permutation::identity(8), 2);
    EXPECT_EQ(b[0], (std::vector<Index>{0, 1, 2, 3}));
    EXPECT_EQ(b[1], (std::vector<Index>{4, 5, 6, 7}));
}

TEST(BlockMembers, PartitionForRandomOrders) {
    Rng rng(43);
    for (int rep = 0; rep < 200; ++rep) {
        const std::size_t g = 1 + rng.below(8);
        const std::size_t n = g * (1 + rng.below(20));
        const auto blocks = block_members(random_permutation(n, rng), g);
        std::vector<int> seen(n, 0);
        for (const auto& b : blocks) {
            ASSERT_EQ(b.size(), n / g);
            for (Index t : b) ++seen[t];
        }
        ASSERT_TRUE(std::all_of(seen.begin(), seen.end(), [](int c) { return c == 1; }));
    }
}

TEST(BlockMembers, UniformSaliencyGivesPhaseShiftedGrids) {
    for (std::size_t side : {4u, 8u, 16u, 32u}) {
        const GridShape g{side, side};
        const auto sigma = scan_order(SaliencyMap::uniform(g), {}, {4, StripeVariant::full});
        const auto blocks = block_members(sigma, 4);
        std::set<std::pair<std::size_t, std::size_t>> offsets;
        for (const auto& b : blocks) {
            const std::size_t dy = b[0] / side % 2, dx = b[0] % side % 2;
            offsets.insert({dy, dx});
            std::set<Index> expected;
            for (std::size_t a = 0; a < side / 2; ++a)
                for (std::size_t c = 0; c < side / 2; ++c) expected.insert((2 * a + dy) * side + 2 * c + dx);
            ASSERT_EQ(std::set<Index>(b.begin(), b.end()), expected);
        }
        EXPECT_EQ(offsets.size(), 4u);
    }
}

TEST(BlockMembers, EveryBlockTouchesEveryQuadrant) {
    for (std::size_t side : {4u, 8u, 16u, 64u}) {
        const auto sigma = scan_order(SaliencyMap::uniform({side, side}), {}, {});
        for (const auto& b : block_members(sigma, 4)) {
            std::set<int> quads;
            for (Index t : b) quads.insert(int(t / side >= side / 2) * 2 + int(t % side >= side / 2));
            ASSERT_EQ(quads.size(), 4u);
        }
    }
}

TEST(StripeSort, AllVariantsBijectiveAndInvertible) {
    Rng rng(44);
    for (int rep = 0; rep < 50; ++rep) {
        const Tensor t = random_uniform({8, 8}, rng, 0.0f, 1.0f);
        const auto m = SaliencyMap::from_tensor(t);
        const Tensor feats = random_normal({64, 3}, rng);
        for (auto v : {StripeVariant::full, StripeVariant::no_interleave, StripeVariant::no_sort}) {
            const auto s = scan_order(m, {}, {4, v});
            std::vector<Index> sorted = s.forward();
            std::sort(sorted.begin(), sorted.end());
            ASSERT_EQ(sorted, Permutation::identity(64).forward());
            ASSERT_EQ(apply_permutation(invert(s), apply_permutation(s, feats)), feats);
        }
    }
}

TEST(StripeSort, ParseVariant) {
    EXPECT_EQ(parse_stripe_variant("no_sort"), StripeVariant::no_sort);
    EXPECT_THROW(parse_stripe_variant("bogus"), ConfigError);
}

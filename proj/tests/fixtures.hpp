#pragma once

// Shared constructed inputs for the unit tests and the acceptance binary.

#include <numeric>
#include <vector>

#include "zsparse/grid.hpp"
#include "zsparse/mlp.hpp"
#include "zsparse/rng.hpp"

namespace fixture {

using namespace zsparse;

inline Permutation random_permutation(std::size_t n, Rng& rng) {
    std::vector<Index> f(n);
    std::iota(f.begin(), f.end(), Index{0});
    for (std::size_t i = n; i > 1; --i) std::swap(f[i - 1], f[rng.below(i)]);
    return Permutation(std::move(f));
}

struct PlantedTokens {
    Tensor x;
    MlpWeights w;
    std::vector<bool> planted;
};

/// Most tokens share one direction; a planted subset points elsewhere. The MLP
/// is wired so that its hidden units fire only when LN(x) leaves the shared
/// direction's normalized profile, so the planted tokens get large updates and
/// the rest almost none.
inline PlantedTokens planted_tokens(std::uint64_t seed, std::size_t n = 96, std::size_t d = 16,
                                    std::size_t planted = 12) {
    Rng rng(seed);
    const Tensor base = random_normal({d}, rng);
    PlantedTokens out{Tensor({n, d}), MlpWeights::zeros(d, 2 * d), std::vector<bool>(n, false)};
    for (std::size_t i = 0; i < n; ++i) {
        const bool p = rng.below(n) < planted;
        out.planted[i] = p;
        const Tensor dir = p ? random_normal({d}, rng) : base;
        const float scale = static_cast<float>(1.0 + rng.uniform());
        for (std::size_t c = 0; c < d; ++c)
            out.x.at(i, c) = scale * dir[c] + static_cast<float>(0.02 * rng.normal());
    }
    const Tensor z = layernorm(base.reshaped({1, d}), out.w.ln_gamma, out.w.ln_beta);
    const float a = 4.0f, threshold = 3.0f;
    for (std::size_t j = 0; j < d; ++j) {
        out.w.w1.at(j, j) = a;
        out.w.w1.at(j, d + j) = -a;
        out.w.b1[j] = -a * z[j] - threshold;
        out.w.b1[d + j] = a * z[j] - threshold;
        out.w.w2.at(j, j) = 1.0f;
        out.w.w2.at(d + j, j) = 1.0f;
    }
    return out;
}

}  // namespace fixture

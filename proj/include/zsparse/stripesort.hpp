#pragma once

#include <string>
#include <vector>

#include "zsparse/error.hpp"
#include "zsparse/grid.hpp"
#include "zsparse/saliency.hpp"

namespace zsparse {

enum class StripeVariant {
    full,           // interleave the importance order
    no_interleave,  // keep the importance order as is
    no_sort,        // interleave the plain Morton order
};

struct StripeConfig {
    std::size_t g = 4;
    StripeVariant variant = StripeVariant::full;
};

inline const char* to_string(StripeVariant v) {
    switch (v) {
        case StripeVariant::full: return "full";
        case StripeVariant::no_interleave: return "no_interleave";
        case StripeVariant::no_sort: return "no_sort";
    }
    return "?";
}

inline StripeVariant parse_stripe_variant(const std::string& s) {
    if (s == "full") return StripeVariant::full;
    if (s == "no_interleave") return StripeVariant::no_interleave;
    if (s == "no_sort") return StripeVariant::no_sort;
    throw ConfigError("unknown stripe variant '" + s + "' (expected full|no_interleave|no_sort)");
}

inline void require_divides(std::size_t g, std::size_t n, const char* where) {
    if (g == 0 || n % g != 0)
        throw ConfigError(std::string(where) + ": group count G = " + std::to_string(g) +
                          " does not divide N = " + std::to_string(n));
}

/// Reads `order` as an (N/G)×G row-major matrix and returns its transpose
/// flattened: out[g*(N/G) + t] = order[t*G + g].
inline Permutation interleave(const Permutation& order, std::size_t g) {
    const std::size_t n = order.size();
    require_divides(g, n, "interleave");
    const std::size_t rows = n / g;
    std::vector<Index> f(n);
    for (std::size_t t = 0; t < rows; ++t)
        for (std::size_t c = 0; c < g; ++c) f[c * rows + t] = order[t * g + c];
    return Permutation(std::move(f));
}

/// Final scan order from the importance order `pi` of a grid of `shape`.
/// `shape` is only consulted by the no_sort variant.
inline Permutation stripe_sort(const Permutation& pi, const StripeConfig& cfg, const GridShape& shape) {
    require_divides(cfg.g, pi.size(), "stripe_sort");
    if (shape.n() != pi.size())
        throw ShapeError("stripe_sort: grid of " + std::to_string(shape.n()) +
                         " tokens for a permutation of " + std::to_string(pi.size()));
    switch (cfg.variant) {
        case StripeVariant::full: return interleave(pi, cfg.g);
        case StripeVariant::no_interleave: return pi;
        case StripeVariant::no_sort: return interleave(morton_order(shape), cfg.g);
    }
    throw ConfigError("stripe_sort: invalid variant");
}

/// Saliency → importance order → stripe interleave.
inline Permutation scan_order(const SaliencyMap& m, const OrderingConfig& ordering,
                              const StripeConfig& stripe) {
    return stripe_sort(importance_order(m, ordering), stripe, m.shape);
}

/// Token sets of the G contiguous sequence blocks of `sigma`.
inline std::vector<std::vector<Index>> block_members(const Permutation& sigma, std::size_t g) {
    const std::size_t n = sigma.size();
    require_divides(g, n, "block_members");
    const std::size_t len = n / g;
    std::vector<std::vector<Index>> blocks(g);
    for (std::size_t b = 0; b < g; ++b)
        blocks[b].assign(sigma.forward().begin() + static_cast<std::ptrdiff_t>(b * len),
                         sigma.forward().begin() + static_cast<std::ptrdiff_t>((b + 1) * len));
    return blocks;
}

/// Per-token block id, laid out row-major over the grid.
inline std::vector<std::size_t> block_map(const Permutation& sigma, std::size_t g) {
    const auto blocks = block_members(sigma, g);
    std::vector<std::size_t> id(sigma.size());
    for (std::size_t b = 0; b < blocks.size(); ++b)
        for (Index t : blocks[b]) id[t] = b;
    return id;
}

}  // namespace zsparse

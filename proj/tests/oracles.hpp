#pragma once

// Brute-force reference implementations used only by tests. None of these
// call into the library code paths they check.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <set>
#include <vector>

#include "zsparse/tensor.hpp"

namespace oracle {

using zsparse::Tensor;

inline Tensor naive_matmul(const Tensor& a, const Tensor& b) {
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    Tensor c({m, n});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            float acc = 0.0f;
            for (std::size_t p = 0; p < k; ++p) acc += a.at(i, p) * b.at(p, j);
            c.at(i, j) = acc;
        }
    return c;
}

inline std::vector<double> layernorm_row(const std::vector<double>& x, const std::vector<double>& g,
                                         const std::vector<double>& b, double eps) {
    const double n = static_cast<double>(x.size());
    const double mean = std::accumulate(x.begin(), x.end(), 0.0) / n;
    double var = 0.0;
    for (double v : x) var += (v - mean) * (v - mean);
    var /= n;
    std::vector<double> y(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = (x[i] - mean) / std::sqrt(var + eps) * g[i] + b[i];
    return y;
}

inline double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }

/// Per-bit interleave: x bit b -> 2b, y bit b -> 2b+1.
inline std::uint64_t morton(std::uint32_t x, std::uint32_t y) {
    std::uint64_t code = 0;
    for (int b = 0; b < 32; ++b) {
        code |= static_cast<std::uint64_t>((x >> b) & 1u) << (2 * b);
        code |= static_cast<std::uint64_t>((y >> b) & 1u) << (2 * b + 1);
    }
    return code;
}

/// Reference Sobel: zero-pad, convolve each channel with the true (flipped)
/// kernels, sum channel responses, take the magnitude.
inline std::vector<double> sobel(const Tensor& x) {
    const std::size_t h = x.dim(0), w = x.dim(1), d = x.rank() == 3 ? x.dim(2) : 1;
    const int kx[3][3] = {{-1, 0, 1}, {-2, 0, 2}, {-1, 0, 1}};
    const int ky[3][3] = {{-1, -2, -1}, {0, 0, 0}, {1, 2, 1}};
    std::vector<double> gx(h * w, 0.0), gy(h * w, 0.0);
    for (std::size_t c = 0; c < d; ++c) {
        std::vector<double> pad((h + 2) * (w + 2), 0.0);
        for (std::size_t i = 0; i < h; ++i)
            for (std::size_t j = 0; j < w; ++j) pad[(i + 1) * (w + 2) + j + 1] = x[(i * w + j) * d + c];
        for (std::size_t i = 0; i < h; ++i)
            for (std::size_t j = 0; j < w; ++j) {
                double sx = 0.0, sy = 0.0;
                for (int a = 0; a < 3; ++a)
                    for (int b = 0; b < 3; ++b) {
                        // convolution: kernel flipped in both axes
                        const double v = pad[(i + 2 - a) * (w + 2) + (j + 2 - b)];
                        sx += kx[a][b] * v;
                        sy += ky[a][b] * v;
                    }
                gx[i * w + j] += sx;
                gy[i * w + j] += sy;
            }
    }
    std::vector<double> m(h * w);
    for (std::size_t t = 0; t < h * w; ++t) m[t] = std::sqrt(gx[t] * gx[t] + gy[t] * gy[t]);
    return m;
}

/// Reshape to rows×g, transpose, flatten.
inline std::vector<std::uint32_t> reshape_transpose_flatten(const std::vector<std::uint32_t>& v,
                                                           std::size_t g) {
    const std::size_t rows = v.size() / g;
    std::vector<std::vector<std::uint32_t>> t(rows, std::vector<std::uint32_t>(g));
    for (std::size_t i = 0; i < v.size(); ++i) t[i / g][i % g] = v[i];
    std::vector<std::uint32_t> out;
    for (std::size_t c = 0; c < g; ++c)
        for (std::size_t r = 0; r < rows; ++r) out.push_back(t[r][c]);
    return out;
}

/// Active key tiles of query tile i by enumeration over all tiles.
inline std::set<std::size_t> active_tiles(std::size_t i, std::size_t t_col, double r) {
    std::set<std::size_t> s;
    const auto limit = static_cast<std::size_t>(std::floor(r * static_cast<double>(t_col)));
    for (std::size_t j = 0; j < t_col; ++j)
        if (j < limit || j == std::min(i, t_col - 1)) s.insert(j);
    return s;
}

/// Dense bias matrix from the decomposed tables, looked up at spatial indices.
inline std::vector<double> dense_bias(const Tensor& bh, const Tensor& bw, std::size_t w,
                                      const std::vector<std::uint32_t>& sq,
                                      const std::vector<std::uint32_t>& sk) {
    std::vector<double> b(sq.size() * sk.size());
    for (std::size_t i = 0; i < sq.size(); ++i)
        for (std::size_t j = 0; j < sk.size(); ++j) {
            const std::size_t kr = sk[j] / w, kc = sk[j] % w;
            b[i * sk.size() + j] = static_cast<double>(bh.at(sq[i], kr)) + bw.at(sq[i], kc);
        }
    return b;
}

/// softmax(tau*QK^T + B) V in long double, restricted to columns where
/// allowed(i, j) is true.
template <class Allowed>
Tensor masked_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                        const std::vector<double>& bias, double tau, Allowed allowed) {
    const std::size_t sq = q.dim(0), sk = k.dim(0), d = q.dim(1), dv = v.dim(1);
    Tensor out({sq, dv});
    for (std::size_t i = 0; i < sq; ++i) {
        std::vector<long double> s(sk, -std::numeric_limits<long double>::infinity());
        long double mx = -std::numeric_limits<long double>::infinity();
        for (std::size_t j = 0; j < sk; ++j) {
            if (!allowed(i, j)) continue;
            long double dot = 0;
            for (std::size_t p = 0; p < d; ++p) dot += static_cast<long double>(q.at(i, p)) * k.at(j, p);
            s[j] = tau * dot + bias[i * sk + j];
            mx = std::max(mx, s[j]);
        }
        long double z = 0;
        std::vector<long double> acc(dv, 0);
        for (std::size_t j = 0; j < sk; ++j) {
            if (!allowed(i, j)) continue;
            const long double e = std::exp(s[j] - mx);
            z += e;
            for (std::size_t c = 0; c < dv; ++c) acc[c] += e * v.at(j, c);
        }
        for (std::size_t c = 0; c < dv; ++c) out.at(i, c) = static_cast<float>(acc[c] / z);
    }
    return out;
}

inline double pairwise_dissimilarity(const Tensor& x, std::size_t i) {
    const std::size_t n = x.dim(0), d = x.dim(1);
    auto norm = [&](std::size_t r) {
        double s = 0;
        for (std::size_t c = 0; c < d; ++c) s += double(x.at(r, c)) * x.at(r, c);
        return std::sqrt(s);
    };
    double total = 0;
    for (std::size_t j = 0; j < n; ++j) {
        if (j == i) continue;
        double dot = 0;
        for (std::size_t c = 0; c < d; ++c) dot += double(x.at(i, c)) * x.at(j, c);
        total += 1.0 - dot / (norm(i) * norm(j));
    }
    return total / double(n - 1);
}

inline double covariance_pearson(const std::vector<double>& a, const std::vector<double>& b) {
    const double n = double(a.size());
    double ea = 0, eb = 0, eab = 0, eaa = 0, ebb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ea += a[i];
        eb += b[i];
        eab += a[i] * b[i];
        eaa += a[i] * a[i];
        ebb += b[i] * b[i];
    }
    ea /= n;
    eb /= n;
    eab /= n;
    eaa /= n;
    ebb /= n;
    return (eab - ea * eb) / std::sqrt((eaa - ea * ea) * (ebb - eb * eb));
}

}  // namespace oracle

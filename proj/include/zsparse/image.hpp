#pragma once

#include <algorithm>
#include <cstdint>
#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include "zsparse/error.hpp"
#include "zsparse/tensor.hpp"

namespace zsparse {

/// Binary P5 PGM of an [h, w] field, min-max normalized to 0..255. A
/// constant field maps to 0.
inline std::vector<std::uint8_t> encode_pgm(const Tensor& field) {
    require_rank(field, 2, "encode_pgm");
    const std::size_t h = field.dim(0), w = field.dim(1);
    const auto [lo_it, hi_it] = std::minmax_element(field.data().begin(), field.data().end());
    const double lo = *lo_it, hi = *hi_it;
    const std::string header = "P5\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());
    out.reserve(header.size() + h * w);
    for (float v : field.data()) {
        const double t = hi > lo ? (v - lo) / (hi - lo) : 0.0;
        out.push_back(static_cast<std::uint8_t>(std::lround(std::clamp(t, 0.0, 1.0) * 255.0)));
    }
    return out;
}

inline void write_pgm(const Tensor& field, const std::string& path) {
    const auto bytes = encode_pgm(field);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw Error(path + ": cannot open for writing");
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw Error(path + ": write failed");
}

}  // namespace zsparse

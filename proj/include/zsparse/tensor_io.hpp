#pragma once

// SPTN binary tensor format, all integers little-endian:
//
//   offset  size     field
//   0       4        magic "SPTN"
//   4       1        version (1)
//   5       1        dtype (0 = f32)
//   6       1        rank (1..255)
//   7       3        reserved, written as zero, ignored on read
//   10      8*rank   extents, u64 each
//   ...     4*numel  payload, f32 IEEE-754 row-major

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "zsparse/error.hpp"
#include "zsparse/tensor.hpp"

namespace zsparse {

inline constexpr std::array<char, 4> kSptnMagic{'S', 'P', 'T', 'N'};
inline constexpr std::uint8_t kSptnVersion = 1;
inline constexpr std::uint8_t kSptnDtypeF32 = 0;
inline constexpr std::size_t kSptnFixedHeader = 10;

namespace detail {

inline void put_le(std::vector<std::uint8_t>& out, std::uint64_t v, int bytes) {
    for (int i = 0; i < bytes; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline std::uint64_t get_le(const std::uint8_t* p, int bytes) {
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return v;
}

}  // namespace detail

inline std::vector<std::uint8_t> encode_sptn(const Tensor& t) {
    if (t.rank() > 255) throw ShapeError("SPTN supports rank <= 255");
    std::vector<std::uint8_t> out;
    out.reserve(kSptnFixedHeader + 8 * t.rank() + 4 * t.size());
    out.insert(out.end(), kSptnMagic.begin(), kSptnMagic.end());
    out.push_back(kSptnVersion);
    out.push_back(kSptnDtypeF32);
    out.push_back(static_cast<std::uint8_t>(t.rank()));
    out.insert(out.end(), 3, 0);
    for (auto e : t.shape()) detail::put_le(out, e, 8);
    for (float v : t.data()) detail::put_le(out, std::bit_cast<std::uint32_t>(v), 4);
    return out;
}

/// `origin` names the source in error messages.
inline Tensor decode_sptn(const std::vector<std::uint8_t>& bytes, const std::string& origin) {
    using Kind = TensorFileError::Kind;
    if (bytes.size() < kSptnFixedHeader)
        throw TensorFileError(Kind::truncated, origin, "file shorter than SPTN header");
    if (!std::equal(kSptnMagic.begin(), kSptnMagic.end(), bytes.begin()))
        throw TensorFileError(Kind::bad_magic, origin, "bad magic, expected \"SPTN\"");
    if (bytes[4] != kSptnVersion)
        throw TensorFileError(Kind::bad_version, origin,
                              "unsupported version " + std::to_string(bytes[4]));
    if (bytes[5] != kSptnDtypeF32)
        throw TensorFileError(Kind::bad_dtype, origin,
                              "unsupported dtype " + std::to_string(bytes[5]));
    const std::size_t rank = bytes[6];
    if (rank == 0) throw TensorFileError(Kind::bad_shape, origin, "rank must be >= 1");
    const std::size_t header = kSptnFixedHeader + 8 * rank;
    if (bytes.size() < header)
        throw TensorFileError(Kind::truncated, origin, "truncated extents");
    Shape shape(rank);
    std::uint64_t numel = 1;
    for (std::size_t i = 0; i < rank; ++i) {
        const std::uint64_t e = detail::get_le(bytes.data() + kSptnFixedHeader + 8 * i, 8);
        if (e == 0) throw TensorFileError(Kind::bad_shape, origin, "zero extent");
        if (numel > (std::uint64_t{1} << 40) / e)
            throw TensorFileError(Kind::bad_shape, origin, "tensor too large");
        numel *= e;
        shape[i] = static_cast<std::size_t>(e);
    }
    const std::size_t expected = header + 4 * numel;
    if (bytes.size() < expected)
        throw TensorFileError(Kind::truncated, origin,
                              "payload truncated: expected " + std::to_string(expected) +
                                  " bytes, got " + std::to_string(bytes.size()));
    if (bytes.size() > expected)
        throw TensorFileError(Kind::trailing_bytes, origin, "unexpected bytes after payload");
    std::vector<float> data(numel);
    for (std::size_t i = 0; i < numel; ++i)
        data[i] = std::bit_cast<float>(
            static_cast<std::uint32_t>(detail::get_le(bytes.data() + header + 4 * i, 4)));
    return Tensor(std::move(shape), std::move(data));
}

inline void write_bytes(const std::vector<std::uint8_t>& bytes, const std::string& path) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw TensorFileError(TensorFileError::Kind::io, path, "cannot open for writing");
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw TensorFileError(TensorFileError::Kind::io, path, "write failed");
}

inline std::vector<std::uint8_t> read_bytes(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw TensorFileError(TensorFileError::Kind::io, path, "cannot open for reading");
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

inline void tensor_write(const Tensor& t, const std::string& path) {
    write_bytes(encode_sptn(t), path);
}

inline Tensor tensor_read(const std::string& path) { return decode_sptn(read_bytes(path), path); }

}  // namespace zsparse

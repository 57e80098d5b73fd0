#pragma once

// Encoder config files are flat `key = value` text. Blank lines and lines
// starting with '#' are ignored. Lists are comma separated.
//
//   grid_h, grid_w     token grid extents
//   d, heads           model width, attention heads
//   window             local window side
//   mlp_ratio          MLP hidden width as a multiple of d
//   layout             e.g. local,local,global
//   density            A-shape density r, one value or one per block
//   keep_fraction      MLP keep fraction, one value or one per block
//   stripe_g           stripe group count G
//   stripe_variant     full | no_interleave | no_sort
//   ordering           zgroup | token
//   group_size         Z-group size for zgroup ordering
//   bypass             identity | layernorm
//   tile_local         A-shape tile for local blocks
//   tile_global        A-shape tile for global blocks
//   threads            kernel threads
//   seed               weight seed

#include <charconv>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "zsparse/encoder.hpp"
#include "zsparse/error.hpp"

namespace zsparse {

inline std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split(std::string_view s, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = s.find(sep, start);
        out.push_back(trim(s.substr(start, pos == std::string_view::npos ? pos : pos - start)));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

inline std::uint64_t parse_uint(const std::string& s, const std::string& key) {
    std::uint64_t v = 0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size() || s.empty())
        throw ConfigError(key + ": expected a non-negative integer, got '" + s + "'");
    return v;
}

inline double parse_double(const std::string& s, const std::string& key) {
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ConfigError(key + ": expected a number, got '" + s + "'");
    }
}

inline std::vector<double> parse_doubles(const std::string& s, const std::string& key) {
    std::vector<double> out;
    for (const auto& part : split(s, ',')) out.push_back(parse_double(part, key));
    return out;
}

inline BlockKind parse_block_kind(const std::string& s) {
    if (s == "local") return BlockKind::local;
    if (s == "global") return BlockKind::global;
    throw ConfigError("layout: unknown block kind '" + s + "' (expected local|global)");
}

inline EncoderConfig parse_encoder_config(std::istream& in, const std::string& origin = "config") {
    EncoderConfig cfg;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key = value");
        const std::string key = trim(std::string_view(t).substr(0, eq));
        const std::string val = trim(std::string_view(t).substr(eq + 1));
        try {
            if (key == "grid_h") cfg.grid.h = parse_uint(val, key);
            else if (key == "grid_w") cfg.grid.w = parse_uint(val, key);
            else if (key == "d") cfg.d = parse_uint(val, key);
            else if (key == "heads") cfg.heads = parse_uint(val, key);
            else if (key == "window") cfg.window = parse_uint(val, key);
            else if (key == "mlp_ratio") cfg.mlp_ratio = parse_uint(val, key);
            else if (key == "layout") {
                cfg.layout.clear();
                for (const auto& part : split(val, ',')) cfg.layout.push_back(parse_block_kind(part));
            } else if (key == "density") cfg.density = parse_doubles(val, key);
            else if (key == "keep_fraction") cfg.keep_fraction = parse_doubles(val, key);
            else if (key == "stripe_g") cfg.stripe.g = parse_uint(val, key);
            else if (key == "stripe_variant") cfg.stripe.variant = parse_stripe_variant(val);
            else if (key == "ordering") {
                if (val == "zgroup") cfg.ordering.granularity = Granularity::zgroup;
                else if (val == "token") cfg.ordering.granularity = Granularity::token;
                else throw ConfigError("ordering: expected zgroup|token, got '" + val + "'");
            } else if (key == "group_size") cfg.ordering.group_size = parse_uint(val, key);
            else if (key == "bypass") {
                if (val == "identity") cfg.bypass = BypassMode::identity;
                else if (val == "layernorm") cfg.bypass = BypassMode::layernorm;
                else throw ConfigError("bypass: expected identity|layernorm, got '" + val + "'");
            } else if (key == "tile_local") cfg.tile_local = parse_uint(val, key);
            else if (key == "tile_global") cfg.tile_global = parse_uint(val, key);
            else if (key == "threads") cfg.threads = static_cast<unsigned>(parse_uint(val, key));
            else if (key == "seed") cfg.seed = parse_uint(val, key);
            else throw ConfigError("unknown key '" + key + "'");
        } catch (const ConfigError& e) {
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    validate(cfg);
    return cfg;
}

inline EncoderConfig load_encoder_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError(path + ": cannot open config file");
    return parse_encoder_config(f, path);
}

}  // namespace zsparse

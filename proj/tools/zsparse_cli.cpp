#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "verify.hpp"
#include "zsparse/zsparse.hpp"

using namespace zsparse;

namespace {

std::string num(double v) {
    if (std::isnan(v)) return "nan";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

/// Writes to `path`, or to stdout when the path is empty.
void emit(const std::string& path, const std::string& text) {
    if (path.empty()) {
        std::cout << text;
        return;
    }
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw Error(path + ": cannot open for writing");
    f << text;
    if (!f) throw Error(path + ": write failed");
}

std::vector<double> parse_list(const std::string& s, const std::string& flag) {
    return parse_doubles(s, flag);
}

void print_seed(std::uint64_t seed) { std::cerr << "seed=" << seed << "\n"; }

struct SaliencyArgs {
    std::string in, out, pgm;
};

void run_saliency(const SaliencyArgs& a) {
    const Tensor x = tensor_read(a.in);
    const SaliencyMap m = sobel_magnitude(x);
    tensor_write(m.m, a.out);
    if (!a.pgm.empty()) write_pgm(m.m, a.pgm);
    std::cout << "saliency " << m.shape.h << "x" << m.shape.w << " -> " << a.out << "\n";
}

struct PermuteArgs {
    std::string in, out, blocks, variant = "full", ordering = "zgroup";
    std::size_t g = 4, group_size = 4;
};

void run_permute(const PermuteArgs& a) {
    const Tensor t = tensor_read(a.in);
    if (t.rank() != 2) throw ConfigError(a.in + ": saliency map must be [H, W], got " + shape_str(t.shape()));
    const SaliencyMap m = SaliencyMap::from_tensor(t);
    OrderingConfig ord;
    if (a.ordering == "zgroup") ord.granularity = Granularity::zgroup;
    else if (a.ordering == "token") ord.granularity = Granularity::token;
    else throw ConfigError("--ordering: expected zgroup|token, got '" + a.ordering + "'");
    ord.group_size = a.group_size;
    const StripeConfig stripe{a.g, parse_stripe_variant(a.variant)};
    const Permutation sigma = scan_order(m, ord, stripe);
    tensor_write(permutation_to_tensor(sigma), a.out);
    if (!a.blocks.empty()) {
        Tensor ids({m.shape.h, m.shape.w});
        const auto map = block_map(sigma, a.g);
        for (std::size_t t = 0; t < map.size(); ++t) ids[t] = static_cast<float>(map[t]);
        write_pgm(ids, a.blocks);
    }
    std::cout << "sigma over " << sigma.size() << " tokens, g=" << a.g << ", variant " << a.variant
              << " -> " << a.out << "\n";
}

int run_verify(std::uint64_t seed, std::size_t cases) {
    print_seed(seed);
    if (cases == 0) throw ConfigError("--cases must be >= 1");
    const auto results = verify::run_all(seed, cases);
    std::size_t failed = 0;
    std::printf("%-22s %6s %9s %12s  %s\n", "suite", "cases", "failures", "worst_err", "status");
    for (const auto& r : results) {
        std::printf("%-22s %6zu %9zu %12.3e  %s\n", r.name.c_str(), r.cases, r.failures, r.worst,
                    r.failures ? "FAIL" : "pass");
        failed += r.failures > 0;
    }
    if (failed) {
        std::cout << failed << " suite(s) failed\n";
        return 1;
    }
    std::cout << "all suites passed\n";
    return 0;
}

struct AttnBenchArgs {
    std::size_t n = 4096, d = 64, repeats = 20, tile = kGlobalTile;
    unsigned threads = 1;
    std::string densities = "0.25,0.5,1.0", csv;
    std::uint64_t seed = 0;
};

void run_attn_bench(const AttnBenchArgs& a) {
    print_seed(a.seed);
    AttnBenchConfig cfg;
    cfg.n = a.n;
    cfg.d = a.d;
    cfg.densities = parse_list(a.densities, "--densities");
    cfg.repeats = a.repeats;
    cfg.tile = a.tile;
    cfg.threads = a.threads;
    cfg.seed = a.seed;
    std::ostringstream out;
    out << "density,achieved_density,median_ms,speedup\n";
    for (const auto& r : attention_bench(cfg))
        out << num(r.density) << "," << num(r.achieved_density) << "," << num(r.median_ms) << ","
            << num(r.speedup) << "\n";
    emit(a.csv, out.str());
}

struct EncodeArgs {
    std::string config, in, out, report, mode = "sparse";
    std::uint64_t seed = 0;
    bool seed_given = false;
};

EncoderConfig load_with_seed(const std::string& path, std::uint64_t seed, bool seed_given) {
    EncoderConfig cfg = load_encoder_config(path);
    if (seed_given) cfg.seed = seed;
    print_seed(cfg.seed);
    return cfg;
}

EncoderMode parse_mode(const std::string& s) {
    if (s == "dense") return EncoderMode::dense;
    if (s == "sparse") return EncoderMode::sparse;
    if (s == "reference") return EncoderMode::reference;
    throw ConfigError("--mode: expected dense|sparse|reference, got '" + s + "'");
}

void run_encode(const EncodeArgs& a) {
    const EncoderConfig cfg = load_with_seed(a.config, a.seed, a.seed_given);
    const EncoderMode mode = parse_mode(a.mode);
    const Tensor x = tensor_read(a.in);
    const auto res = encoder_forward(x, random_weights(cfg), cfg, mode);
    tensor_write(res.y, a.out);
    if (!a.report.empty()) {
        std::ostringstream csv;
        csv << "block,kind,tile_pairs,total_tile_pairs,attention_density,mlp_rows,total_mlp_rows,"
               "mlp_density,mlp_macs,wall_ms\n";
        for (std::size_t b = 0; b < res.report.blocks.size(); ++b) {
            const auto& c = res.report.blocks[b];
            csv << b << "," << (c.kind == BlockKind::local ? "local" : "global") << "," << c.tile_pairs << ","
                << c.total_tile_pairs << "," << num(c.attention_density()) << "," << c.mlp_rows << ","
                << c.total_mlp_rows << "," << num(c.mlp_density()) << "," << c.mlp_macs << ","
                << num(c.wall_ms) << "\n";
        }
        emit(a.report, csv.str());
    }
    std::cout << "encoded " << shape_str(x.shape()) << " (" << a.mode << ", " << num(res.report.total_ms())
              << " ms) -> " << a.out << "\n";
}

void run_mlp_stats(const EncodeArgs& a, const std::string& csv_path) {
    const EncoderConfig cfg = load_with_seed(a.config, a.seed, a.seed_given);
    const Tensor x = tensor_read(a.in);
    const EncoderWeights w = random_weights(cfg);
    std::ostringstream csv;
    csv << "layer,K,rho,mean_u_keep,mean_u_bypass\n";
    encoder_forward(x, w, cfg, EncoderMode::sparse,
                    [&](std::size_t b, const Tensor& mid, const Permutation& order) {
                        const Tensor u = update_magnitudes(mlp_delta(mid, w.blocks[b].mlp));
                        const Tensor dis = token_dissimilarity(mid);
                        double rho = std::numeric_limits<double>::quiet_NaN();
                        try {
                            rho = pearson(dis, u);
                        } catch (const NumericError&) {
                        }
                        const std::size_t n = mid.rows(), k = keep_count(cfg.keep_at(b), n);
                        double keep = 0.0, bypass = 0.0;
                        for (std::size_t r = 0; r < n; ++r) (r < k ? keep : bypass) += u[order[r]];
                        csv << b << "," << k << "," << num(rho) << "," << num(keep / double(k)) << ","
                            << num(k < n ? bypass / double(n - k) : std::numeric_limits<double>::quiet_NaN())
                            << "\n";
                    });
    emit(csv_path, csv.str());
}

struct ProbeArgs {
    std::string in, ks = "64,128,256", csv;
    std::size_t iters = kDefaultKMeansIters;
    std::uint64_t seed = 0;
};

void run_probe(const ProbeArgs& a) {
    print_seed(a.seed);
    Tensor x = tensor_read(a.in);
    if (x.rank() == 3) x = std::move(x).reshaped({x.dim(0) * x.dim(1), x.dim(2)});
    if (x.rank() != 2) throw ConfigError(a.in + ": tokens must be [N, d] or [H, W, d]");
    std::ostringstream csv;
    csv << "k,distortion,relative_perturbation\n";
    for (double kv : parse_list(a.ks, "--k")) {
        if (kv < 1 || kv != std::floor(kv)) throw ConfigError("--k: cluster counts must be positive integers");
        const auto res = kmeans_replace(x, static_cast<std::size_t>(kv), a.seed, a.iters);
        csv << static_cast<std::size_t>(kv) << "," << num(res.distortion) << ","
            << num(relative_perturbation(res.replaced, x)) << "\n";
    }
    emit(a.csv, csv.str());
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"zsparse: saliency-ordered block-sparse attention toolkit"};
    app.require_subcommand(1);

    SaliencyArgs sal;
    auto* c_sal = app.add_subcommand("saliency", "Sobel saliency map of an [H, W, D] feature tensor");
    c_sal->add_option("--in", sal.in, "input .sptn")->required();
    c_sal->add_option("--out", sal.out, "output saliency .sptn [H, W]")->required();
    c_sal->add_option("--pgm", sal.pgm, "optional PGM preview");

    PermuteArgs perm;
    auto* c_perm = app.add_subcommand("permute", "scan order from a saliency map");
    c_perm->add_option("--in", perm.in, "saliency .sptn [H, W]")->required();
    c_perm->add_option("--out", perm.out, "output permutation .sptn [N]")->required();
    c_perm->add_option("--g", perm.g, "stripe groups")->capture_default_str();
    c_perm->add_option("--variant", perm.variant, "full|no_sort|no_interleave")->capture_default_str();
    c_perm->add_option("--ordering", perm.ordering, "zgroup|token")->capture_default_str();
    c_perm->add_option("--group-size", perm.group_size, "tokens per Z-group")->capture_default_str();
    c_perm->add_option("--blocks", perm.blocks, "optional PGM of block membership");

    std::uint64_t v_seed = 0;
    std::size_t v_cases = 50;
    auto* c_ver = app.add_subcommand("verify", "run the oracle-equivalence suites");
    c_ver->add_option("--seed", v_seed)->capture_default_str();
    c_ver->add_option("--cases", v_cases, "random instances per suite")->capture_default_str();

    AttnBenchArgs ab;
    auto* c_ab = app.add_subcommand("attn-bench", "time the A-shape kernel across densities");
    c_ab->add_option("--n", ab.n, "tokens (a perfect square)")->capture_default_str();
    c_ab->add_option("--d", ab.d, "head width")->capture_default_str();
    c_ab->add_option("--densities", ab.densities, "comma-separated r values")->capture_default_str();
    c_ab->add_option("--repeats", ab.repeats)->capture_default_str();
    c_ab->add_option("--tile", ab.tile, "query and key tile size")->capture_default_str();
    c_ab->add_option("--threads", ab.threads)->capture_default_str();
    c_ab->add_option("--seed", ab.seed)->capture_default_str();
    c_ab->add_option("--csv", ab.csv, "output CSV (stdout if omitted)");

    EncodeArgs enc;
    auto* c_enc = app.add_subcommand("encode", "run the toy encoder");
    c_enc->add_option("--config", enc.config)->required();
    c_enc->add_option("--in", enc.in, "input .sptn [H, W, d]")->required();
    c_enc->add_option("--out", enc.out, "output .sptn")->required();
    c_enc->add_option("--mode", enc.mode, "dense|sparse|reference")->capture_default_str();
    c_enc->add_option("--report", enc.report, "per-block cost CSV");
    auto* enc_seed = c_enc->add_option("--seed", enc.seed, "weight seed (overrides the config)");

    EncodeArgs ms;
    std::string ms_csv;
    auto* c_ms = app.add_subcommand("mlp-stats", "per-layer dissimilarity vs MLP update correlation");
    c_ms->add_option("--config", ms.config)->required();
    c_ms->add_option("--in", ms.in, "input .sptn [H, W, d]")->required();
    c_ms->add_option("--csv", ms_csv, "output CSV (stdout if omitted)");
    auto* ms_seed = c_ms->add_option("--seed", ms.seed, "weight seed (overrides the config)");

    ProbeArgs pr;
    auto* c_pr = app.add_subcommand("probe-cluster", "k-means centroid replacement probe");
    c_pr->add_option("--in", pr.in, "tokens .sptn [N, d] or [H, W, d]")->required();
    c_pr->add_option("--k", pr.ks, "comma-separated cluster counts")->capture_default_str();
    c_pr->add_option("--iters", pr.iters)->capture_default_str();
    c_pr->add_option("--seed", pr.seed)->capture_default_str();
    c_pr->add_option("--csv", pr.csv, "output CSV (stdout if omitted)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (c_sal->parsed()) run_saliency(sal);
        else if (c_perm->parsed()) run_permute(perm);
        else if (c_ver->parsed()) return run_verify(v_seed, v_cases);
        else if (c_ab->parsed()) run_attn_bench(ab);
        else if (c_enc->parsed()) {
            enc.seed_given = enc_seed->count() > 0;
            run_encode(enc);
        } else if (c_ms->parsed()) {
            ms.seed_given = ms_seed->count() > 0;
            run_mlp_stats(ms, ms_csv);
        } else if (c_pr->parsed()) run_probe(pr);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

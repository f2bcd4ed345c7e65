#pragma once

// Subcommand bodies for the amsp tool. Each takes a RunConfig and the stream
// that receives the JSON report, and returns the process exit status. Errors
// propagate as exceptions; main turns them into one-line JSON on stderr.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "amsp/amsp.hpp"

namespace amsp::cli {

using nlohmann::json;

/// Usage problems that CLI11 cannot see (missing combinations, bad lists).
class UsageError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct RunConfig {
    std::string input;
    std::string output;
    std::uint64_t seed = 0;

    std::string variant = "similar";
    double nt = 0.5;
    double ns = 0.9;
    double sigma = 0.5;
    double floor = 0.001;
    std::string mode = "literal";

    std::string block = "amsp-vconv";
    std::string save_weights;
    std::optional<std::size_t> b, c, h, w, g, t, r, n, k;

    std::optional<std::size_t> synthetic;
    std::size_t reps = 10;
    std::string levels;
    std::size_t seeds = 16;
};

inline nms::NMSSimilarConfig similar_config(const RunConfig& run) {
    nms::NMSSimilarConfig cfg{run.nt, run.ns, run.sigma, run.floor, nms::parse_mode(run.mode)};
    cfg.validate();
    return cfg;
}

inline std::string mode_name(nms::GateMode m) { return m == nms::GateMode::literal ? "literal" : "dense-preserve"; }

inline json config_json(const nms::NMSSimilarConfig& cfg) {
    return {{"nt", cfg.iou_threshold}, {"ns", cfg.sim_threshold}, {"sigma", cfg.sigma},
            {"floor", cfg.score_floor}, {"mode", mode_name(cfg.mode)}};
}

inline json stats_json(const nms::SuppressionStats& s) {
    return {{"decay_evals", s.decay_evals}, {"hard_removals", s.hard_removals}, {"iterations", s.iterations}};
}

inline std::vector<nms::DetectionRecord> read_detection_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open " + path);
    return nms::read_detections(is);
}

// ---------------------------------------------------------------------------
// nms

inline int cmd_nms(const RunConfig& run, std::ostream& out) {
    if (run.input.empty() || run.output.empty()) throw UsageError("nms needs --input and --output");
    const nms::Variant variant = nms::parse_variant(run.variant);
    const nms::NMSSimilarConfig cfg = similar_config(run);
    const auto records = read_detection_file(run.input);
    const nms::ImageGroups groups = nms::group_by_image(records);

    std::ostringstream lines;
    nms::SuppressionStats stats;
    std::size_t survivors = 0;
    for (const auto& members : groups.members) {
        std::vector<nms::DetBox> boxes;
        boxes.reserve(members.size());
        for (std::size_t i : members) boxes.push_back(records[i].box);
        const nms::SuppressionResult res = nms::suppress_multiclass(boxes, variant, cfg);
        stats += res.stats;
        survivors += res.boxes.size();
        for (std::size_t k = 0; k < res.boxes.size(); ++k) {
            lines << nms::detection_json(records[members[res.source[k]]], res.boxes[k].score).dump() << '\n';
        }
    }
    write_file_atomic(run.output, lines.str());

    json report{{"command", "nms"}, {"variant", nms::to_string(variant)}, {"config", config_json(cfg)},
                {"images", groups.keys.size()}, {"input_boxes", records.size()}, {"survivors", survivors},
                {"output", run.output}};
    report["stats"] = stats_json(stats);
    out << report.dump() << '\n';
    return 0;
}

// ---------------------------------------------------------------------------
// block

struct BlockShape {
    std::size_t b, c, h, w;
};

inline BlockShape block_shape(const RunConfig& run) {
    return {run.b.value_or(1), run.c.value_or(8), run.h.value_or(8), run.w.value_or(8)};
}

/// Vortex group count from --g, or from --t via g = (c/2)/t.
inline std::size_t vconv_groups(const RunConfig& run, std::size_t c) {
    if (run.t) {
        const std::size_t half = c / 2;
        if (*run.t == 0 || half % *run.t != 0) {
            throw ContractError("--t " + std::to_string(*run.t) + " must divide c/2 = " + std::to_string(half));
        }
        const std::size_t g = half / *run.t;
        if (run.g && *run.g != g) {
            throw ContractError("--g " + std::to_string(*run.g) + " disagrees with --t " + std::to_string(*run.t) +
                                " (c/2 = g * t requires g = " + std::to_string(g) + ")");
        }
        return g;
    }
    return run.g.value_or(std::gcd<std::size_t>(c / 2 == 0 ? 1 : c / 2, 4));
}

inline FADCSPOptions fad_options(const RunConfig& run, std::size_t c) {
    FADCSPOptions opt;
    opt.channels = c;
    opt.reduction = run.r.value_or(2);
    opt.splits = run.n.value_or(2);
    if (run.t) {
        if (*run.t == 0 || c % *run.t != 0) {
            throw ContractError("--t " + std::to_string(*run.t) + " must divide c = " + std::to_string(c));
        }
        opt.amsp_groups = c / *run.t;
    } else {
        opt.amsp_groups = std::gcd<std::size_t>(c, 4);
    }
    opt.seed = run.seed;
    return opt;
}

/// A block instance behind one interface: forward on either tensor type.
struct BlockInstance {
    std::string name;
    std::optional<AMSPVConvBlock> vconv;
    std::optional<FADCSPParams> fad;

    template <class V>
    V forward(const V& x) const {
        if (name == "amsp-vconv") return amsp_vconv_forward(x, *vconv);
        if (name == "fad-csp") return fad_csp_forward(x, *fad);
        if (name == "gfa") return gfa_apply(gfa_attention(x, fad->gfa), x);
        return rep_bottleneck_forward(x, fad->rep);
    }

    [[nodiscard]] Archive archive(std::uint64_t seed) const {
        return vconv ? archive_block(*vconv, seed) : archive_block(*fad, seed);
    }
};

inline BlockInstance make_block(const RunConfig& run, std::size_t c) {
    BlockInstance inst{run.block, std::nullopt, std::nullopt};
    if (run.block == "amsp-vconv") {
        inst.vconv = make_amsp_vconv_block({c, vconv_groups(run, c), run.k.value_or(3), run.seed});
    } else if (run.block == "fad-csp" || run.block == "gfa" || run.block == "rep-bottleneck") {
        inst.fad = make_fad_csp(fad_options(run, c));
    } else {
        throw UsageError("unknown block '" + run.block + "' (expected amsp-vconv, fad-csp, gfa or rep-bottleneck)");
    }
    return inst;
}

inline json tensor_summary(const Tensor& t) {
    const auto v = t.data();
    const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    double sum = 0.0, sq = 0.0;
    for (double x : v) {
        sum += x;
        sq += x * x;
    }
    const Shape s = t.shape();
    return {{"shape", {s.n, s.c, s.h, s.w}}, {"min", *lo}, {"max", *hi},
            {"mean", sum / static_cast<double>(v.size())}, {"l2", std::sqrt(sq)}};
}

inline Tensor block_input(const RunConfig& run, const BlockShape& shape) {
    if (!run.input.empty()) return load_tensor(run.input);
    Rng rng(run.seed ^ 0x5EEDF00Dull);
    return random_normal(Shape{shape.b, shape.c, shape.h, shape.w}, rng);
}

inline int cmd_block_forward(const RunConfig& run, std::ostream& out) {
    const Tensor x = block_input(run, block_shape(run));
    const BlockInstance blk = make_block(run, x.shape().c);
    const Tensor y = blk.forward(x);
    json report{{"command", "block forward"}, {"block", blk.name}, {"seed", run.seed},
                {"input", tensor_summary(x)}, {"output", tensor_summary(y)}};
    if (!run.output.empty()) {
        write_file_atomic(run.output, encode_tensor(y));
        report["output_file"] = run.output;
    }
    if (!run.save_weights.empty()) {
        save_archive(run.save_weights, blk.archive(run.seed));
        report["weights_manifest"] = run.save_weights + ".json";
    }
    out << report.dump() << '\n';
    return 0;
}

inline constexpr double kGradTolerance = 1e-5;

inline int cmd_block_gradcheck(const RunConfig& run, std::ostream& out) {
    const BlockShape shape = block_shape(run);
    const Tensor x = block_input(run, shape);
    const BlockInstance blk = make_block(run, x.shape().c);
    const double err = grad_check([&](const auto& v) { return sum(blk.forward(v)); }, x, 1e-5);
    const Shape s = x.shape();
    out << json{{"command", "block gradcheck"}, {"block", blk.name}, {"seed", run.seed},
                {"shape", {s.n, s.c, s.h, s.w}}, {"objective", "sum"}, {"eps", 1e-5},
                {"max_rel_error", err}, {"tolerance", kGradTolerance}, {"pass", err <= kGradTolerance}}
               .dump()
        << '\n';
    return 0;
}

inline int cmd_block_params(const RunConfig& run, std::ostream& out) {
    const std::size_t c = run.c.value_or(64), k = run.k.value_or(3), g = vconv_groups(run, c);
    const ParamCount p = vconv_param_count(c, k, g);
    out << json{{"command", "block params"}, {"c", c}, {"k", k}, {"g", g}, {"t", c / 2 / g},
                {"vconv_params", p.vconv_params}, {"standard_params", p.standard_params},
                {"ratio", static_cast<double>(p.vconv_params) / static_cast<double>(p.standard_params)}}
               .dump()
        << '\n';
    return 0;
}

// ---------------------------------------------------------------------------
// bench

inline json bench_json(const nms::BenchReport& r) {
    return {{"median_ms", r.median_ms}, {"times_ms", r.times_ms}, {"decay_evals", r.decay_evals},
            {"removals", r.removals}, {"survivors", r.survivors}, {"deterministic", r.deterministic}};
}

inline int cmd_bench(const RunConfig& run, std::ostream& out) {
    if (run.synthetic.has_value() == !run.input.empty()) throw UsageError("bench needs exactly one of --synthetic N or --input");
    if (run.reps < 3) throw ContractError("--reps must be at least 3, got " + std::to_string(run.reps));
    const nms::NMSSimilarConfig cfg = similar_config(run);

    nms::Corpus corpus;
    json corpus_info;
    if (run.synthetic) {
        if (*run.synthetic == 0) throw ContractError("--synthetic must be positive");
        nms::DenseCorpusOptions opt;
        opt.boxes = *run.synthetic;
        opt.seed = run.seed;
        corpus.push_back(nms::make_dense_corpus(opt));
        corpus_info = {{"kind", "synthetic-dense"}, {"boxes", opt.boxes}, {"seed", run.seed},
                       {"extent", opt.extent}, {"clusters", std::max<std::size_t>(1, opt.boxes / 40)}};
    } else {
        const auto records = read_detection_file(run.input);
        const nms::ImageGroups groups = nms::group_by_image(records);
        for (const auto& members : groups.members) {
            std::vector<nms::DetBox> image;
            for (std::size_t i : members) image.push_back(records[i].box);
            corpus.push_back(std::move(image));
        }
        corpus_info = {{"kind", "file"}, {"path", run.input}, {"boxes", records.size()}, {"images", corpus.size()}};
    }

    const auto hard = nms::bench_nms(corpus, nms::Variant::hard, cfg, run.reps);
    const auto soft = nms::bench_nms(corpus, nms::Variant::soft, cfg, run.reps);
    const auto similar = nms::bench_nms(corpus, nms::Variant::similar, cfg, run.reps);

    json report{{"command", "bench"}, {"corpus", corpus_info}, {"reps", run.reps}, {"config", config_json(cfg)}};
    report["variants"] = {{"hard", bench_json(hard)}, {"soft", bench_json(soft)}, {"similar", bench_json(similar)}};
    report["ordering"] = {{"hard_le_similar", hard.median_ms <= similar.median_ms},
                          {"similar_le_soft", similar.median_ms <= soft.median_ms},
                          {"holds", hard.median_ms <= similar.median_ms && similar.median_ms <= soft.median_ms}};
    report["economy"] = {{"similar_decay_evals", similar.decay_evals}, {"soft_decay_evals", soft.decay_evals},
                         {"holds", similar.decay_evals <= soft.decay_evals},
                         {"strict", similar.decay_evals < soft.decay_evals}};
    out << report.dump() << '\n';
    return 0;
}

// ---------------------------------------------------------------------------
// noise-probe

inline std::vector<double> parse_levels(const std::string& csv) {
    std::vector<double> out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(item, &used);
        } catch (const std::exception&) {
            throw UsageError("--levels: '" + item + "' is not a number");
        }
        if (item.find_first_not_of(" \t", used) != std::string::npos) throw UsageError("--levels: '" + item + "' is not a number");
        if (!(v >= 0.0) || !std::isfinite(v)) throw ContractError("--levels: noise level " + item + " must be finite and >= 0");
        out.push_back(v);
    }
    if (out.empty()) throw UsageError("--levels is empty");
    return out;
}

inline json curve_json(const NoiseCurve& c) {
    return {{"mean", c.mean}, {"non_decreasing", c.non_decreasing()}, {"per_seed", c.per_seed}};
}

inline int cmd_noise_probe(const RunConfig& run, std::ostream& out) {
    NoiseProbeOptions opt;
    opt.input = Shape{run.b.value_or(1), run.c.value_or(16), run.h.value_or(16), run.w.value_or(16)};
    opt.kernel = run.k.value_or(3);
    opt.groups = vconv_groups(run, opt.input.c);
    if (!run.levels.empty()) opt.levels = parse_levels(run.levels);
    opt.seeds = run.seeds;
    opt.seed = run.seed;
    const NoiseProbeReport rep = run_noise_probe(opt);

    const Shape s = opt.input;
    json report{{"command", "noise-probe"},
                {"study", "perturbation sensitivity on random weights; relative output deviation "
                          "||f(x + noise) - f(x)|| / ||f(x)||; not an accuracy measurement"},
                {"input_shape", {s.n, s.c, s.h, s.w}}, {"g", opt.groups}, {"k", opt.kernel},
                {"input_distribution", "uniform [0, 1)"}, {"noise_unit", opt.noise_unit},
                {"levels", opt.levels}, {"seeds", opt.seeds}, {"seed", opt.seed}};
    report["amsp_vconv"] = curve_json(rep.vconv);
    report["standard_conv"] = curve_json(rep.standard);
    const std::string text = report.dump() + "\n";
    if (!run.output.empty()) write_file_atomic(run.output, text);
    out << text;
    return 0;
}

}  // namespace amsp::cli

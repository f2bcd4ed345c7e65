// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "amsp/amsp.hpp"
#include "box_gen.hpp"

using namespace amsp;
using namespace amsp::nms;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;
};

bool same_result(const SuppressionResult& a, const SuppressionResult& b) {
    if (a.boxes.size() != b.boxes.size() || a.source != b.source) return false;
    for (std::size_t i = 0; i < a.boxes.size(); ++i) {
        const DetBox &x = a.boxes[i], &y = b.boxes[i];
        if (x.x1 != y.x1 || x.y1 != y.y1 || x.x2 != y.x2 || x.y2 != y.y2) return false;
        if (std::abs(x.score - y.score) > 1e-12) return false;
    }
    return true;
}

Outcome degenerate_equivalences() {
    Rng rng(1001);
    const std::size_t sets = 1000;
    std::size_t a_fail = 0, b_fail = 0, boxes = 0;
    for (std::size_t i = 0; i < sets; ++i) {
        const auto b = testgen::random_boxes(rng, 200);
        boxes += b.size();
        NMSSimilarConfig a_cfg;
        a_cfg.sim_threshold = 1.0;
        a_cfg.iou_threshold = rng.uniform(0.05, 0.95);
        if (!same_result(nms_similar(b, a_cfg), nms_hard_with_stats(b, a_cfg.iou_threshold, a_cfg.score_floor))) ++a_fail;
        NMSSimilarConfig b_cfg;
        b_cfg.iou_threshold = 1.0;
        b_cfg.sim_threshold = 0.0;
        b_cfg.sigma = rng.uniform(0.1, 2.0);
        if (!same_result(nms_similar(b, b_cfg), soft_nms_with_stats(b, b_cfg.sigma, b_cfg.score_floor))) ++b_fail;
    }
    std::ostringstream os;
    os << sets << " sets, " << boxes << " boxes; N_s=1 vs hard mismatches " << a_fail << ", N_t=1/N_s=0 vs soft mismatches "
       << b_fail;
    return {a_fail == 0 && b_fail == 0, os.str()};
}

Outcome suppression_economy() {
    Rng rng(2002);
    std::size_t violations = 0;
    const std::size_t sets = 1000;
    for (std::size_t i = 0; i < sets; ++i) {
        const auto b = testgen::random_boxes(rng, 200);
        for (GateMode mode : {GateMode::literal, GateMode::dense_preserve}) {
            NMSSimilarConfig cfg;
            cfg.mode = mode;
            const auto soft = soft_nms_with_stats(b, cfg.sigma, cfg.score_floor);
            if (nms_similar(b, cfg).stats.decay_evals > soft.stats.decay_evals) ++violations;
        }
    }
    const auto dense = make_dense_corpus({2000, 0, 1, 1000.0, 7});
    const NMSSimilarConfig cfg;
    const auto soft = soft_nms_with_stats(dense, cfg.sigma, cfg.score_floor).stats.decay_evals;
    const auto sim = nms_similar(dense, cfg).stats.decay_evals;
    std::ostringstream os;
    os << sets << " random sets x 2 modes, violations " << violations << "; dense 2000-box corpus: similar " << sim
       << " < soft " << soft << " decay evaluations";
    return {violations == 0 && sim < soft, os.str()};
}

Outcome timing_ordering() {
    const Corpus corpus{make_dense_corpus({2000, 0, 1, 1000.0, 3})};
    const NMSSimilarConfig cfg;
    const auto hard = bench_nms(corpus, Variant::hard, cfg, 10);
    const auto similar = bench_nms(corpus, Variant::similar, cfg, 10);
    const auto soft = bench_nms(corpus, Variant::soft, cfg, 10);
    char buf[200];
    std::snprintf(buf, sizeof buf, "median of 10 on 2000 boxes: hard %.2f ms <= similar %.2f ms <= soft %.2f ms",
                  hard.median_ms, similar.median_ms, soft.median_ms);
    const bool ok = hard.median_ms <= similar.median_ms && similar.median_ms <= soft.median_ms && hard.deterministic &&
                    similar.deterministic && soft.deterministic;
    return {ok, buf};
}

Outcome gradient_correctness() {
    Rng rng(4004);
    const Tensor x = random_normal(Shape{2, 8, 6, 6}, rng);
    const AMSPVConvBlock vb = make_amsp_vconv_block({8, 2, 3, 41});
    const FADCSPParams fp = make_fad_csp({8, 2, 2, 4, 42});
    const double e1 = grad_check([&](const auto& v) { return sum(amsp_vconv_forward(v, vb)); }, x, 1e-5);
    const double e2 = grad_check([&](const auto& v) { return sum(gfa_apply(gfa_attention(v, fp.gfa), v)); }, x, 1e-5);
    const double e3 = grad_check([&](const auto& v) { return sum(rep_bottleneck_forward(v, fp.rep)); }, x, 1e-5);
    const double e4 = grad_check([&](const auto& v) { return sum(fad_csp_forward(v, fp)); }, x, 1e-5);
    char buf[200];
    std::snprintf(buf, sizeof buf, "max rel error at (2,8,6,6): amsp-vconv %.2e, gfa %.2e, rep-bottleneck %.2e, fad-csp %.2e",
                  e1, e2, e3, e4);
    return {std::max({e1, e2, e3, e4}) <= 1e-5, buf};
}

Outcome shape_contracts() {
    Rng rng(5005);
    std::size_t cases = 0, failures = 0;
    for (std::size_t c : {8u, 16u, 32u}) {
        for (int trial = 0; trial < 30; ++trial) {
            const std::size_t h = 4 + rng.index(13), w = 4 + rng.index(13);
            const std::size_t half = c / 2;
            std::vector<std::size_t> gs;
            for (std::size_t g = 1; g <= half; ++g)
                if (half % g == 0) gs.push_back(g);
            const std::size_t g = gs[rng.index(gs.size())];
            const Tensor x = random_normal(Shape{2, c, h, w}, rng);
            const AMSPVConvBlock vb = make_amsp_vconv_block({c, g, 3, rng.next()});
            const Tensor y = amsp_vconv_forward(x, vb);
            const FADCSPParams fp = make_fad_csp({c, 2, 2, 4, rng.next()});
            const Tensor z = fad_csp_forward(x, fp);
            const auto halves = split_channels(y, {half, half});
            ++cases;
            if (y.shape() != x.shape() || z.shape() != x.shape() || !(halves[0] == cbs(x, vb.entry_conv, vb.entry_bn))) {
                ++failures;
            }
        }
    }
    std::ostringstream os;
    os << cases << " random shapes (c in {8,16,32}, h,w in 4..16): shape or first-half mismatches " << failures;
    return {failures == 0, os.str()};
}

Outcome permutation_properties() {
    Rng rng(6006);
    std::size_t configs = 0, perms = 0, failures = 0;
    for (std::size_t m = 1; m <= 16; ++m) {
        for (std::size_t t = 1; t <= m; ++t) {
            if (m % t != 0) continue;
            ++configs;
            const std::size_t rows = m / t;
            const Tensor x = random_normal(Shape{2, m, 3, 2}, rng);
            std::vector<std::vector<std::size_t>> candidates;
            if (rows <= 7) {
                std::vector<std::size_t> p(rows);
                std::iota(p.begin(), p.end(), 0);
                do candidates.push_back(p);
                while (std::next_permutation(p.begin(), p.end()));
            } else {
                for (int s = 0; s < 200; ++s) candidates.push_back(rng.permutation(rows));
            }
            for (const auto& p : candidates) {
                ++perms;
                const AMSPConfig cfg{t, p, 0};
                const Tensor y = amsp_permute(x, cfg);
                bool ok = amsp_permute(y, cfg.inverse()) == x;
                // Channel multiset: each output channel is bit-equal to exactly one distinct input channel.
                std::vector<bool> used(m, false);
                for (std::size_t oc = 0; oc < m && ok; ++oc) {
                    bool found = false;
                    for (std::size_t ic = 0; ic < m && !found; ++ic) {
                        if (used[ic]) continue;
                        bool equal = true;
                        for (std::size_t n = 0; n < 2 && equal; ++n)
                            for (std::size_t k = 0; k < 6 && equal; ++k)
                                equal = y[y.offset(n, oc, 0, 0) + k] == x[x.offset(n, ic, 0, 0) + k];
                        if (equal) used[ic] = found = true;
                    }
                    ok = found;
                }
                if (!ok) ++failures;
            }
        }
    }
    std::ostringstream os;
    os << configs << " (c/2, t) pairs for c/2 <= 16, " << perms << " permutations: failures " << failures;
    return {failures == 0, os.str()};
}

Outcome parameter_reduction() {
    std::size_t configs = 0, failures = 0;
    for (std::size_t c = 2; c <= 64; c += 2)
        for (std::size_t k : {1u, 3u, 5u, 7u})
            for (std::size_t g = 1; g <= c / 2; ++g) {
                if ((c / 2) % g != 0) continue;
                ++configs;
                const ParamCount p = vconv_param_count(c, k, g);
                const std::size_t counted = make_amsp_vconv_block({c, g, k, configs}).weight_count();
                if (!(counted < p.standard_params) || counted != p.vconv_params) ++failures;
            }
    const ParamCount ref = vconv_param_count(64, 3, 4);
    std::ostringstream os;
    os << configs << " (c,k,g) configs, mismatches " << failures << "; c=64,k=3,g=4: " << ref.vconv_params << " < "
       << ref.standard_params;
    return {failures == 0 && ref.vconv_params == 19008 && ref.standard_params == 36864, os.str()};
}

Outcome noise_probe_sanity() {
    NoiseProbeOptions opt;
    opt.seeds = 16;
    opt.seed = 8008;
    const NoiseProbeReport a = run_noise_probe(opt);
    const NoiseProbeReport b = run_noise_probe(opt);
    bool zero = true;
    for (std::size_t s = 0; s < opt.seeds; ++s) zero = zero && a.vconv.per_seed[s][0] == 0.0 && a.standard.per_seed[s][0] == 0.0;
    const bool deterministic = a.vconv.per_seed == b.vconv.per_seed && a.standard.per_seed == b.standard.per_seed;
    const bool mono = a.vconv.non_decreasing() && a.standard.non_decreasing();
    char buf[240];
    std::snprintf(buf, sizeof buf,
                  "16 seeds, levels 0..10: zero at level 0 %s, non-decreasing %s (vconv %.4f, standard %.4f at 10), "
                  "deterministic %s",
                  zero ? "yes" : "no", mono ? "yes" : "no", a.vconv.mean.back(), a.standard.mean.back(),
                  deterministic ? "yes" : "no");
    return {zero && mono && deterministic, buf};
}

}  // namespace

int main() {
    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
        {"nms degenerate equivalences", degenerate_equivalences},
        {"suppression economy", suppression_economy},
        {"timing ordering hard <= similar <= soft", timing_ordering},
        {"gradient correctness", gradient_correctness},
        {"shape and residual contracts", shape_contracts},
        {"permutation properties", permutation_properties},
        {"parameter reduction", parameter_reduction},
        {"noise-probe sanity", noise_probe_sanity},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        std::printf("%s  %zu. %s: %s [%.1fs]\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, o.detail.c_str(), secs);
        std::fflush(stdout);
        if (!o.pass) ++failed;
    }
    std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
    return failed == 0 ? 0 : 1;
}

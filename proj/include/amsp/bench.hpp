#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "amsp/nms.hpp"
#include "amsp/random.hpp"

namespace amsp::nms {

/// Detections grouped by image.
using Corpus = std::vector<std::vector<DetBox>>;

struct DenseCorpusOptions {
    std::size_t boxes = 2000;
    std::size_t clusters = 0;  // 0: one cluster per 40 boxes
    std::size_t classes = 1;
    double extent = 1000.0;    // image side in pixels
    std::uint64_t seed = 0;
};

/// Boxes scattered around seeded cluster centres. Each cluster has a base size and
/// base aspect ratio; members jitter both slightly, so neighbours overlap heavily
/// and mostly share an aspect ratio, as in schools of fish or weed beds.
inline std::vector<DetBox> make_dense_corpus(const DenseCorpusOptions& opt) {
    Rng rng(opt.seed);
    const std::size_t k = opt.clusters > 0 ? opt.clusters : std::max<std::size_t>(1, opt.boxes / 40);
    struct Cluster {
        double cx, cy, size, aspect;
        std::size_t cls;
    };
    std::vector<Cluster> clusters;
    for (std::size_t i = 0; i < k; ++i) {
        Cluster c;
        c.cx = rng.uniform(0.1, 0.9) * opt.extent;
        c.cy = rng.uniform(0.1, 0.9) * opt.extent;
        c.size = rng.uniform(0.02, 0.08) * opt.extent;
        c.aspect = std::exp(rng.uniform(std::log(0.4), std::log(2.5)));
        c.cls = opt.classes > 1 ? rng.index(opt.classes) : 0;
        clusters.push_back(c);
    }
    std::vector<DetBox> out;
    out.reserve(opt.boxes);
    for (std::size_t i = 0; i < opt.boxes; ++i) {
        const Cluster& c = clusters[rng.index(k)];
        const double size = c.size * std::exp(0.15 * rng.normal());
        const double aspect = c.aspect * std::exp(0.08 * rng.normal());
        const double w = size * std::sqrt(aspect);
        const double h = size / std::sqrt(aspect);
        const double cx = c.cx + 0.35 * c.size * rng.normal();
        const double cy = c.cy + 0.35 * c.size * rng.normal();
        const double score = rng.uniform(0.05, 1.0);
        out.push_back(DetBox{cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2, score, c.cls});
    }
    return out;
}

struct BenchReport {
    Variant variant = Variant::hard;
    std::size_t reps = 0;
    double median_ms = 0.0;
    std::vector<double> times_ms;
    std::uint64_t decay_evals = 0;
    std::uint64_t removals = 0;
    std::size_t survivors = 0;
    bool deterministic = true;  // every rep produced the same survivors
};

/// Runs `variant` over every image `reps` times; counters come from one rep.
inline BenchReport bench_nms(const Corpus& corpus, Variant variant, const NMSSimilarConfig& cfg, std::size_t reps) {
    if (reps < 3) amsp::detail::contract_fail("bench_nms: reps must be at least 3, got ", reps);
    std::size_t total = 0;
    for (const auto& image : corpus) total += image.size();
    if (total == 0) amsp::detail::contract_fail("bench_nms: corpus is empty");

    BenchReport report;
    report.variant = variant;
    report.reps = reps;
    std::vector<std::vector<DetBox>> first;
    for (std::size_t r = 0; r < reps; ++r) {
        std::vector<std::vector<DetBox>> survivors;
        SuppressionStats stats;
        const auto start = std::chrono::steady_clock::now();
        for (const auto& image : corpus) {
            SuppressionResult res = suppress_multiclass(image, variant, cfg);
            stats += res.stats;
            survivors.push_back(std::move(res.boxes));
        }
        const auto stop = std::chrono::steady_clock::now();
        report.times_ms.push_back(std::chrono::duration<double, std::milli>(stop - start).count());
        if (r == 0) {
            report.decay_evals = stats.decay_evals;
            report.removals = stats.hard_removals;
            for (const auto& s : survivors) report.survivors += s.size();
            first = std::move(survivors);
        } else if (survivors != first) {
            report.deterministic = false;
        }
    }
    std::vector<double> sorted = report.times_ms;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t mid = sorted.size() / 2;
    report.median_ms = sorted.size() % 2 == 1 ? sorted[mid] : 0.5 * (sorted[mid - 1] + sorted[mid]);
    return report;
}

}  // namespace amsp::nms

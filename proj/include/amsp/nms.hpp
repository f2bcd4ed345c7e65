#pragma once

// Greedy duplicate suppression: hard NMS, Gaussian Soft-NMS, and NMS-Similar,
// which gates the Gaussian decay on the cosine similarity of box (w, h) vectors.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "amsp/tensor.hpp"

namespace amsp::nms {

/// Corner-form box with confidence and class.
struct DetBox {
    double x1 = 0.0;
    double y1 = 0.0;
    double x2 = 0.0;
    double y2 = 0.0;
    double score = 0.0;
    std::size_t class_id = 0;

    [[nodiscard]] double width() const noexcept { return x2 - x1; }
    [[nodiscard]] double height() const noexcept { return y2 - y1; }
    [[nodiscard]] double area() const noexcept { return width() * height(); }

    friend bool operator==(const DetBox&, const DetBox&) = default;
};

/// Throws ContractError for zero-area, inverted or non-finite boxes.
inline DetBox make_box(double x1, double y1, double x2, double y2, double score, std::size_t class_id = 0) {
    if (!std::isfinite(x1) || !std::isfinite(y1) || !std::isfinite(x2) || !std::isfinite(y2)) {
        detail::contract_fail("box coordinates must be finite");
    }
    if (!(x2 > x1) || !(y2 > y1)) {
        detail::contract_fail("box (", x1, ", ", y1, ", ", x2, ", ", y2, ") must have positive width and height");
    }
    if (!std::isfinite(score)) detail::contract_fail("box score must be finite");
    return DetBox{x1, y1, x2, y2, score, class_id};
}

enum class GateMode { literal, dense_preserve };

struct NMSSimilarConfig {
    double iou_threshold = 0.5;  // N_t
    double sim_threshold = 0.9;  // N_s
    double sigma = 0.5;
    double score_floor = 0.001;
    GateMode mode = GateMode::literal;

    void validate() const {
        if (!(sigma > 0.0)) detail::contract_fail("NMSSimilarConfig: sigma must be positive, got ", sigma);
        if (!(score_floor >= 0.0)) detail::contract_fail("NMSSimilarConfig: score floor must be >= 0, got ", score_floor);
        if (!(iou_threshold >= 0.0 && iou_threshold <= 1.0)) {
            detail::contract_fail("NMSSimilarConfig: IoU threshold must lie in [0, 1], got ", iou_threshold);
        }
        if (std::isnan(sim_threshold)) detail::contract_fail("NMSSimilarConfig: similarity threshold is NaN");
    }
};

struct SuppressionStats {
    std::uint64_t decay_evals = 0;
    std::uint64_t hard_removals = 0;
    std::uint64_t iterations = 0;
    std::chrono::nanoseconds wall_time{0};

    SuppressionStats& operator+=(const SuppressionStats& o) {
        decay_evals += o.decay_evals;
        hard_removals += o.hard_removals;
        iterations += o.iterations;
        wall_time += o.wall_time;
        return *this;
    }
};

struct SuppressionResult {
    std::vector<DetBox> boxes;          // score descending, adjusted scores
    std::vector<std::size_t> source;    // input index of each survivor
    SuppressionStats stats;
};

inline double iou(const DetBox& a, const DetBox& b) noexcept {
    const double iw = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
    const double ih = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
    if (iw <= 0.0 || ih <= 0.0) return 0.0;
    const double inter = iw * ih;
    const double uni = a.area() + b.area() - inter;
    return std::clamp(inter / uni, 0.0, 1.0);
}

/// Cosine similarity of the (width, height) vectors, clamped to (0, 1].
inline double aspect_sim(const DetBox& m, const DetBox& b) noexcept {
    const double mw = m.width(), mh = m.height(), bw = b.width(), bh = b.height();
    if (mw * bh == mh * bw) return 1.0;  // parallel
    const double s = (mw * bw + mh * bh) / std::sqrt((mw * mw + mh * mh) * (bw * bw + bh * bh));
    return std::min(s, 1.0);
}

inline double gaussian_decay(double score, double iou_val, double sigma) noexcept {
    return score * std::exp(-(iou_val * iou_val) / sigma);
}

namespace detail {

using Clock = std::chrono::steady_clock;

/// Indices of boxes at or above the floor, in input order.
inline std::vector<std::size_t> above_floor(std::span<const DetBox> boxes, double floor) {
    std::vector<std::size_t> idx;
    idx.reserve(boxes.size());
    for (std::size_t i = 0; i < boxes.size(); ++i)
        if (!(boxes[i].score < floor)) idx.push_back(i);
    return idx;
}

/// Position in `alive` of the highest score; ties go to the lower input index.
inline std::size_t pick_pivot(const std::vector<std::size_t>& alive, const std::vector<double>& scores) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < alive.size(); ++k) {
        const double s = scores[alive[k]], sb = scores[alive[best]];
        if (s > sb || (s == sb && alive[k] < alive[best])) best = k;
    }
    return best;
}

/// What one pivot does to one remaining box.
enum class Action { keep, decay, remove };

/// Shared greedy loop for the decaying variants. `decide` chooses the action for
/// (pivot, candidate); decayed boxes that drop below the floor are discarded.
template <class Decide>
SuppressionResult greedy_decay(std::span<const DetBox> boxes, double sigma, double floor, Decide&& decide) {
    const auto start = Clock::now();
    SuppressionResult out;
    std::vector<double> scores(boxes.size());
    for (std::size_t i = 0; i < boxes.size(); ++i) scores[i] = boxes[i].score;
    std::vector<std::size_t> alive = above_floor(boxes, floor);

    while (!alive.empty()) {
        ++out.stats.iterations;
        const std::size_t pos = pick_pivot(alive, scores);
        const std::size_t m = alive[pos];
        alive.erase(alive.begin() + static_cast<std::ptrdiff_t>(pos));
        DetBox kept = boxes[m];
        kept.score = scores[m];
        out.boxes.push_back(kept);
        out.source.push_back(m);

        std::size_t write = 0;
        for (std::size_t k = 0; k < alive.size(); ++k) {
            const std::size_t i = alive[k];
            const double ov = iou(boxes[m], boxes[i]);
            switch (decide(boxes[m], boxes[i], ov)) {
                case Action::remove:
                    ++out.stats.hard_removals;
                    continue;
                case Action::decay:
                    ++out.stats.decay_evals;
                    scores[i] = gaussian_decay(scores[i], ov, sigma);
                    if (scores[i] < floor) continue;
                    break;
                case Action::keep:
                    break;
            }
            alive[write++] = i;
        }
        alive.resize(write);
    }
    out.stats.wall_time = std::chrono::duration_cast<std::chrono::nanoseconds>(Clock::now() - start);
    return out;
}

}  // namespace detail

/// Classic greedy NMS: keep the best box, drop everything with IoU > n_t against it.
inline SuppressionResult nms_hard_with_stats(std::span<const DetBox> boxes, double n_t, double score_floor = 0.0) {
    const auto start = detail::Clock::now();
    SuppressionResult out;
    std::vector<std::size_t> order = detail::above_floor(boxes, score_floor);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return boxes[a].score > boxes[b].score; });
    std::vector<bool> removed(boxes.size(), false);
    for (std::size_t k = 0; k < order.size(); ++k) {
        const std::size_t m = order[k];
        if (removed[m]) continue;
        ++out.stats.iterations;
        out.boxes.push_back(boxes[m]);
        out.source.push_back(m);
        for (std::size_t j = k + 1; j < order.size(); ++j) {
            const std::size_t i = order[j];
            if (removed[i]) continue;
            if (iou(boxes[m], boxes[i]) > n_t) {
                removed[i] = true;
                ++out.stats.hard_removals;
            }
        }
    }
    out.stats.wall_time = std::chrono::duration_cast<std::chrono::nanoseconds>(detail::Clock::now() - start);
    return out;
}

inline std::vector<DetBox> nms_hard(std::span<const DetBox> boxes, double n_t, double score_floor = 0.0) {
    return nms_hard_with_stats(boxes, n_t, score_floor).boxes;
}

/// Gaussian Soft-NMS: every remaining box is decayed by each pivot.
inline SuppressionResult soft_nms_with_stats(std::span<const DetBox> boxes, double sigma, double score_floor) {
    if (!(sigma > 0.0)) amsp::detail::contract_fail("soft_nms: sigma must be positive, got ", sigma);
    return detail::greedy_decay(boxes, sigma, score_floor,
                                [](const DetBox&, const DetBox&, double) { return detail::Action::decay; });
}

inline std::vector<DetBox> soft_nms(std::span<const DetBox> boxes, double sigma, double score_floor) {
    return soft_nms_with_stats(boxes, sigma, score_floor).boxes;
}

/// NMS-Similar.
///
/// literal: IoU > N_t removes; otherwise Sim > N_s decays; otherwise untouched.
/// dense_preserve: IoU > N_t and Sim <= N_s removes; IoU > N_t and Sim > N_s
/// decays; low-overlap boxes are untouched.
inline SuppressionResult nms_similar(std::span<const DetBox> boxes, const NMSSimilarConfig& cfg) {
    cfg.validate();
    using detail::Action;
    if (cfg.mode == GateMode::literal) {
        return detail::greedy_decay(boxes, cfg.sigma, cfg.score_floor, [&](const DetBox& m, const DetBox& b, double ov) {
            if (ov > cfg.iou_threshold) return Action::remove;
            return aspect_sim(m, b) > cfg.sim_threshold ? Action::decay : Action::keep;
        });
    }
    return detail::greedy_decay(boxes, cfg.sigma, cfg.score_floor, [&](const DetBox& m, const DetBox& b, double ov) {
        if (!(ov > cfg.iou_threshold)) return Action::keep;
        return aspect_sim(m, b) > cfg.sim_threshold ? Action::decay : Action::remove;
    });
}

enum class Variant { hard, soft, similar };

inline std::string_view to_string(Variant v) {
    switch (v) {
        case Variant::hard: return "hard";
        case Variant::soft: return "soft";
        case Variant::similar: return "similar";
    }
    return "?";
}

/// Accepts hard/nms, soft/soft-nms, similar/nms-similar.
inline Variant parse_variant(std::string_view name) {
    if (name == "hard" || name == "nms") return Variant::hard;
    if (name == "soft" || name == "soft-nms") return Variant::soft;
    if (name == "similar" || name == "nms-similar") return Variant::similar;
    amsp::detail::contract_fail("unknown suppression variant '", name, "' (expected hard, soft or similar)");
}

inline GateMode parse_mode(std::string_view name) {
    if (name == "literal") return GateMode::literal;
    if (name == "dense-preserve" || name == "dense_preserve") return GateMode::dense_preserve;
    amsp::detail::contract_fail("unknown gating mode '", name, "' (expected literal or dense-preserve)");
}

/// Runs one variant on a single-class list. Hard NMS uses cfg.iou_threshold and
/// cfg.score_floor; Soft-NMS uses cfg.sigma and cfg.score_floor.
inline SuppressionResult suppress(std::span<const DetBox> boxes, Variant variant, const NMSSimilarConfig& cfg) {
    switch (variant) {
        case Variant::hard: return nms_hard_with_stats(boxes, cfg.iou_threshold, cfg.score_floor);
        case Variant::soft: return soft_nms_with_stats(boxes, cfg.sigma, cfg.score_floor);
        case Variant::similar: return nms_similar(boxes, cfg);
    }
    return {};
}

/// Per-class suppression; merged output sorted by score descending (class id,
/// then per-class rank, on ties).
inline SuppressionResult suppress_multiclass(std::span<const DetBox> boxes, Variant variant,
                                             const NMSSimilarConfig& cfg) {
    std::map<std::size_t, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < boxes.size(); ++i) by_class[boxes[i].class_id].push_back(i);
    std::vector<std::pair<DetBox, std::size_t>> merged;
    SuppressionStats stats;
    for (const auto& [cls, members] : by_class) {
        std::vector<DetBox> list;
        list.reserve(members.size());
        for (std::size_t i : members) list.push_back(boxes[i]);
        SuppressionResult r = suppress(list, variant, cfg);
        stats += r.stats;
        for (std::size_t k = 0; k < r.boxes.size(); ++k) merged.emplace_back(r.boxes[k], members[r.source[k]]);
    }
    std::stable_sort(merged.begin(), merged.end(),
                     [](const auto& a, const auto& b) { return a.first.score > b.first.score; });
    SuppressionResult out;
    out.stats = stats;
    for (auto& [box, src] : merged) {
        out.boxes.push_back(box);
        out.source.push_back(src);
    }
    return out;
}

inline SuppressionResult suppress_multiclass(std::span<const DetBox> boxes, std::string_view variant,
                                             const NMSSimilarConfig& cfg) {
    return suppress_multiclass(boxes, parse_variant(variant), cfg);
}

}  // namespace amsp::nms

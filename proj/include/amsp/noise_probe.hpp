#pragma once

// Perturbation sensitivity of the AMSP-VConv block against a standard conv
// block: relative output deviation ||f(x + noise) - f(x)|| / ||f(x)|| as the
// noise standard deviation grows. A property study on random weights; it says
// nothing about detection accuracy.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "amsp/amsp_vconv.hpp"
#include "amsp/parallel.hpp"
#include "amsp/random.hpp"

namespace amsp {

struct NoiseProbeOptions {
    Shape input{1, 16, 16, 16};
    std::size_t groups = 4;  // g of the vortex block
    std::size_t kernel = 3;
    std::vector<double> levels{0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
    std::size_t seeds = 16;
    std::uint64_t seed = 0;
    /// Inputs are uniform in [0, 1); a level L adds Gaussian noise of std L * noise_unit.
    double noise_unit = 1.0 / 255.0;
    std::size_t threads = 0;  // 0: thread_cap()
};

/// The comparator: one c -> c k x k CBS, the convolution vconv_param_count counts.
struct StandardConvBlock {
    ConvParams conv;
    BNParams bn;
};

inline StandardConvBlock make_standard_block(std::size_t channels, std::size_t kernel, std::uint64_t seed) {
    Rng rng(seed);
    StandardConvBlock b;
    b.conv = random_conv(rng, channels, channels, kernel, 1, kernel / 2, 1, false);
    b.bn = random_bn(rng, channels);
    return b;
}

inline Tensor standard_block_forward(const Tensor& x, const StandardConvBlock& b) { return cbs(x, b.conv, b.bn); }

struct NoiseCurve {
    std::vector<double> mean;                 // per level, averaged over seeds
    std::vector<std::vector<double>> per_seed;  // [seed][level]

    [[nodiscard]] bool non_decreasing() const {
        return std::is_sorted(mean.begin(), mean.end());
    }
};

struct NoiseProbeReport {
    NoiseProbeOptions options;
    NoiseCurve vconv;
    NoiseCurve standard;
};

namespace detail {

inline double l2(const Tensor& t) {
    double acc = 0.0;
    for (double v : t.data()) acc += v * v;
    return std::sqrt(acc);
}

inline double relative_deviation(const Tensor& clean, const Tensor& noisy) {
    double acc = 0.0;
    for (std::size_t i = 0; i < clean.numel(); ++i) acc += (noisy[i] - clean[i]) * (noisy[i] - clean[i]);
    const double denom = l2(clean);
    return denom > 0.0 ? std::sqrt(acc) / denom : 0.0;
}

/// splitmix64 step, used to derive independent per-seed streams.
inline std::uint64_t mix_seed(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

}  // namespace detail

inline NoiseProbeReport run_noise_probe(const NoiseProbeOptions& opt) {
    for (double level : opt.levels) {
        if (!(level >= 0.0) || !std::isfinite(level)) detail::contract_fail("noise probe: invalid noise level ", level);
    }
    if (opt.seeds == 0) detail::contract_fail("noise probe: at least one seed is required");
    detail::validate_vconv_shape(opt.input.c, opt.groups);

    const std::size_t nl = opt.levels.size();
    NoiseProbeReport report{opt, {}, {}};
    report.vconv.per_seed.assign(opt.seeds, std::vector<double>(nl, 0.0));
    report.standard.per_seed.assign(opt.seeds, std::vector<double>(nl, 0.0));

    parallel_for(
        opt.seeds,
        [&](std::size_t s) {
            const std::uint64_t base = detail::mix_seed(opt.seed + s);
            const AMSPVConvBlock vblock =
                make_amsp_vconv_block({opt.input.c, opt.groups, opt.kernel, detail::mix_seed(base ^ 1)});
            const StandardConvBlock sblock = make_standard_block(opt.input.c, opt.kernel, detail::mix_seed(base ^ 2));
            Rng rng(detail::mix_seed(base ^ 3));
            const Tensor x = random_uniform(opt.input, rng, 0.0, 1.0);
            const Tensor direction = random_normal(opt.input, rng);
            const Tensor v_clean = amsp_vconv_forward(x, vblock);
            const Tensor s_clean = standard_block_forward(x, sblock);
            for (std::size_t l = 0; l < nl; ++l) {
                Tensor noisy = x;
                const double sd = opt.levels[l] * opt.noise_unit;
                for (std::size_t i = 0; i < noisy.numel(); ++i) noisy[i] += sd * direction[i];
                report.vconv.per_seed[s][l] = detail::relative_deviation(v_clean, amsp_vconv_forward(noisy, vblock));
                report.standard.per_seed[s][l] =
                    detail::relative_deviation(s_clean, standard_block_forward(noisy, sblock));
            }
        },
        opt.threads == 0 ? thread_cap() : opt.threads);

    for (NoiseCurve* curve : {&report.vconv, &report.standard}) {
        curve->mean.assign(nl, 0.0);
        for (std::size_t l = 0; l < nl; ++l) {
            for (std::size_t s = 0; s < opt.seeds; ++s) curve->mean[l] += curve->per_seed[s][l];
            curve->mean[l] /= static_cast<double>(opt.seeds);
        }
    }
    return report;
}

}  // namespace amsp

#pragma once

// Seeded generators for weights, permutations and synthetic data.
//
// std::uniform_real_distribution and friends are implementation-defined, so
// the variates here are built directly from mt19937_64 output words. The
// same seed gives the same numbers on every standard library.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <random>
#include <utility>
#include <vector>

#include "amsp/tensor.hpp"

namespace amsp {

class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    /// Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n).
    std::size_t index(std::size_t n) {
        // Lemire-style rejection keeps the draw unbiased.
        const std::uint64_t bound = n;
        const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % bound);
        std::uint64_t v = engine_();
        while (v >= limit) v = engine_();
        return static_cast<std::size_t>(v % bound);
    }

    /// Standard normal via Box-Muller.
    double normal() {
        if (spare_) {
            spare_ = false;
            return cached_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        cached_ = r * std::sin(2.0 * std::numbers::pi * u2);
        spare_ = true;
        return r * std::cos(2.0 * std::numbers::pi * u2);
    }

    /// Fisher-Yates shuffle of 0..n-1.
    std::vector<std::size_t> permutation(std::size_t n) {
        std::vector<std::size_t> p(n);
        std::iota(p.begin(), p.end(), std::size_t{0});
        for (std::size_t i = n; i > 1; --i) std::swap(p[i - 1], p[index(i)]);
        return p;
    }

    std::uint64_t next() { return engine_(); }

private:
    std::mt19937_64 engine_;
    bool spare_ = false;
    double cached_ = 0.0;
};

inline Tensor random_uniform(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t(shape);
    for (double& v : t.data()) v = rng.uniform(lo, hi);
    return t;
}

inline Tensor random_normal(Shape shape, Rng& rng, double stddev = 1.0) {
    Tensor t(shape);
    for (double& v : t.data()) v = stddev * rng.normal();
    return t;
}

/// Conv weights drawn uniform in +-1/sqrt(fan_in), bias likewise when requested.
inline ConvParams random_conv(Rng& rng, std::size_t out_channels, std::size_t in_per_group, std::size_t kernel,
                              std::size_t stride, std::size_t padding, std::size_t groups, bool with_bias) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in_per_group * kernel * kernel));
    ConvParams p;
    p.weights = random_uniform(Shape{out_channels, in_per_group, kernel, kernel}, rng, -bound, bound);
    if (with_bias) {
        p.bias.resize(out_channels);
        for (double& b : p.bias) b = rng.uniform(-bound, bound);
    }
    p.stride = stride;
    p.padding = padding;
    p.groups = groups;
    return p;
}

/// Non-trivial inference statistics so tests exercise every BN term.
inline BNParams random_bn(Rng& rng, std::size_t channels, double eps = 1e-5) {
    BNParams p;
    p.eps = eps;
    for (std::size_t c = 0; c < channels; ++c) {
        p.gamma.push_back(rng.uniform(0.5, 1.5));
        p.beta.push_back(rng.uniform(-0.2, 0.2));
        p.running_mean.push_back(rng.uniform(-0.2, 0.2));
        p.running_var.push_back(rng.uniform(0.5, 1.5));
    }
    return p;
}

}  // namespace amsp

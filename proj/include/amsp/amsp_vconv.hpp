#pragma once

// AMSP vortex convolution: CBS halving, row grouping + row shuffle of the
// halved channels, a grouped convolution whose groups all share one kernel,
// BN + SiLU, and a channel concat with the CBS output.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "amsp/autodiff.hpp"
#include "amsp/ops.hpp"
#include "amsp/random.hpp"
#include "amsp/tensor.hpp"

namespace amsp {

/// Channel row grouping (width `group_width`) and the fixed row permutation.
///
/// Row `i` of the output is row `permutation[i]` of the input, i.e. output
/// channels i*t .. i*t+t-1 come from input channels permutation[i]*t onward.
struct AMSPConfig {
    std::size_t group_width = 1;
    std::vector<std::size_t> permutation;
    std::uint64_t seed = 0;

    [[nodiscard]] std::size_t groups() const noexcept { return permutation.size(); }
    [[nodiscard]] std::size_t channels() const noexcept { return group_width * permutation.size(); }

    /// Permutation drawn once from `seed`; fixed for the life of the config.
    static AMSPConfig sample(std::size_t channels, std::size_t group_width, std::uint64_t seed) {
        if (group_width == 0 || channels % group_width != 0) {
            detail::contract_fail("AMSPConfig: group width ", group_width, " does not divide ", channels, " channels");
        }
        Rng rng(seed);
        return AMSPConfig{group_width, rng.permutation(channels / group_width), seed};
    }

    static AMSPConfig identity(std::size_t channels, std::size_t group_width) {
        if (group_width == 0 || channels % group_width != 0) {
            detail::contract_fail("AMSPConfig: group width ", group_width, " does not divide ", channels, " channels");
        }
        AMSPConfig cfg{group_width, std::vector<std::size_t>(channels / group_width), 0};
        for (std::size_t i = 0; i < cfg.permutation.size(); ++i) cfg.permutation[i] = i;
        return cfg;
    }

    [[nodiscard]] AMSPConfig inverse() const {
        AMSPConfig inv{group_width, std::vector<std::size_t>(permutation.size()), seed};
        for (std::size_t i = 0; i < permutation.size(); ++i) inv.permutation[permutation[i]] = i;
        return inv;
    }

    /// Throws unless `permutation` is a bijection on {0..g-1}.
    void validate() const {
        if (group_width == 0) detail::contract_fail("AMSPConfig: group width must be positive");
        std::vector<bool> seen(permutation.size(), false);
        for (std::size_t p : permutation) {
            if (p >= permutation.size() || seen[p]) {
                detail::contract_fail("AMSPConfig: permutation is not a bijection on 0..", permutation.size() - 1);
            }
            seen[p] = true;
        }
    }
};

namespace detail {

inline std::vector<std::size_t> amsp_channel_map(std::size_t channels, const AMSPConfig& cfg) {
    cfg.validate();
    if (channels % cfg.group_width != 0) {
        contract_fail("amsp_permute: channel count ", channels, " not divisible by group width ", cfg.group_width);
    }
    if (channels / cfg.group_width != cfg.groups()) {
        contract_fail("amsp_permute: ", channels, " channels form ", channels / cfg.group_width,
                      " rows but the permutation has ", cfg.groups(), " entries");
    }
    std::vector<std::size_t> source(channels);
    for (std::size_t row = 0; row < cfg.groups(); ++row)
        for (std::size_t k = 0; k < cfg.group_width; ++k)
            source[row * cfg.group_width + k] = cfg.permutation[row] * cfg.group_width + k;
    return source;
}

}  // namespace detail

template <class V>
V amsp_permute(const V& x, const AMSPConfig& cfg) {
    const auto source = detail::amsp_channel_map(x.shape().c, cfg);
    return gather_channels(x, std::span<const std::size_t>(source));
}

/// One shared (t_out, t_in, k, k) kernel applied to each of `groups` channel groups.
struct VConvParams {
    Tensor shared_kernel;
    std::size_t groups = 1;
    std::size_t stride = 1;
    std::size_t padding = 1;
    BNParams post_bn;

    [[nodiscard]] std::size_t in_channels() const noexcept { return groups * shared_kernel.shape().c; }
    [[nodiscard]] std::size_t out_channels() const noexcept { return groups * shared_kernel.shape().n; }
};

namespace detail {

inline void validate_vconv(const Shape& in, const VConvParams& p) {
    if (p.groups == 0) contract_fail("vortex_conv: groups must be positive");
    if (in.c != p.in_channels()) {
        contract_fail("vortex_conv: input has ", in.c, " channels but ", p.groups, " groups x t_in ",
                      p.shared_kernel.shape().c, " = ", p.in_channels());
    }
}

}  // namespace detail

inline Tensor vortex_conv(const Tensor& y, const VConvParams& p) {
    detail::validate_vconv(y.shape(), p);
    const Tensor z = detail::conv_forward(y, p.shared_kernel, {}, p.out_channels(), p.stride, p.padding, p.groups);
    return activation(batch_norm(z, p.post_bn), Activation::silu);
}

inline Var vortex_conv(const Var& y, const VConvParams& p) {
    detail::validate_vconv(y.shape(), p);
    Tensor z = detail::conv_forward(y.value(), p.shared_kernel, {}, p.out_channels(), p.stride, p.padding, p.groups);
    const std::size_t parent = y.id();
    const Shape in = y.shape();
    Var zv = y.tape().record("vortex_conv", std::move(z), [parent, in, p](Tape& t, const Tensor& go) {
        t.accumulate(parent, detail::conv_backward_input(in, p.shared_kernel, go, p.stride, p.padding, p.groups));
    });
    return activation(batch_norm(zv, p.post_bn), Activation::silu);
}

struct AMSPVConvBlock {
    ConvParams entry_conv;  // c -> c/2, stride 1, same padding (k=3 by default)
    BNParams entry_bn;
    AMSPConfig amsp;
    VConvParams vconv;

    [[nodiscard]] std::size_t in_channels() const noexcept { return entry_conv.in_channels(); }

    /// Stored convolution weight elements (bias and BN excluded).
    [[nodiscard]] std::size_t weight_count() const noexcept {
        return entry_conv.weights.numel() + vconv.shared_kernel.numel();
    }
};

struct AMSPVConvOptions {
    std::size_t channels = 16;
    std::size_t groups = 4;  // g; group width t = channels / (2g)
    std::size_t kernel = 3;  // entry and vortex kernel size
    std::uint64_t seed = 0;
};

namespace detail {

inline void validate_vconv_shape(std::size_t c, std::size_t g) {
    if (c == 0 || c % 2 != 0) contract_fail("amsp-vconv: channel count c = ", c, " must be even and positive");
    if (g == 0 || (c / 2) % g != 0) contract_fail("amsp-vconv: c/2 = ", c / 2, " must be divisible by g = ", g);
}

}  // namespace detail

/// Seeded block. One seed stream draws the entry CBS, the permutation seed,
/// the shared kernel and the post BN, in that order.
inline AMSPVConvBlock make_amsp_vconv_block(const AMSPVConvOptions& opt) {
    detail::validate_vconv_shape(opt.channels, opt.groups);
    if (opt.kernel == 0 || opt.kernel % 2 == 0) detail::contract_fail("amsp-vconv: kernel ", opt.kernel, " must be odd");
    const std::size_t half = opt.channels / 2;
    const std::size_t t = half / opt.groups;
    Rng rng(opt.seed);
    AMSPVConvBlock block;
    block.entry_conv = random_conv(rng, half, opt.channels, opt.kernel, 1, opt.kernel / 2, 1, false);
    block.entry_bn = random_bn(rng, half);
    block.amsp = AMSPConfig::sample(half, t, rng.next());
    block.vconv.shared_kernel = random_uniform(Shape{t, t, opt.kernel, opt.kernel}, rng,
                                               -1.0 / std::sqrt(static_cast<double>(t * opt.kernel * opt.kernel)),
                                               1.0 / std::sqrt(static_cast<double>(t * opt.kernel * opt.kernel)));
    block.vconv.groups = opt.groups;
    block.vconv.stride = 1;
    block.vconv.padding = opt.kernel / 2;
    block.vconv.post_bn = random_bn(rng, half);
    return block;
}

template <class V>
V amsp_vconv_forward(const V& f_in, const AMSPVConvBlock& block) {
    const std::size_t c = f_in.shape().c;
    if (c % 2 != 0) detail::contract_fail("amsp_vconv_forward: channel count ", c, " is odd");
    if (block.entry_conv.out_channels() != c / 2) {
        detail::contract_fail("amsp_vconv_forward: entry CBS produces ", block.entry_conv.out_channels(),
                              " channels, expected c/2 = ", c / 2);
    }
    const V x = cbs(f_in, block.entry_conv, block.entry_bn);
    const V y = amsp_permute(x, block.amsp);
    const V z = vortex_conv(y, block.vconv);
    return concat_channels({x, z});
}

struct ParamCount {
    std::size_t vconv_params = 0;
    std::size_t standard_params = 0;
};

/// Weight counts for the block (entry c -> c/2 conv plus one shared kernel with
/// t_in = t_out = c/2g) against a single c -> c k x k convolution.
inline ParamCount vconv_param_count(std::size_t c, std::size_t k, std::size_t g) {
    detail::validate_vconv_shape(c, g);
    const std::size_t t = c / (2 * g);
    return ParamCount{c * (c / 2) * k * k + t * t * k * k, c * c * k * k};
}

}  // namespace amsp

#pragma once

// FAD-CSP: a strip-pooling attention path (GFA) and a split/sum bottleneck path
// (RepBottleneck), concatenated and fused by a CBS.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "amsp/amsp_vconv.hpp"
#include "amsp/autodiff.hpp"
#include "amsp/ops.hpp"
#include "amsp/random.hpp"
#include "amsp/tensor.hpp"

namespace amsp {

struct GFAParams {
    std::size_t reduction = 2;  // r
    ConvParams fuse_conv;       // c -> c/r, 1x1
    BNParams fuse_bn;
    ConvParams branch_h;        // c/r -> c, 1x1
    ConvParams branch_w;        // c/r -> c, 1x1
    AMSPConfig amsp;            // over the c channels of the pooled strip
};

/// Pointwise (t -> t, 1x1) then depthwise (3x3, groups = t), each CBS, plus the input.
struct BottleneckParams {
    ConvParams pointwise;
    BNParams pointwise_bn;
    ConvParams depthwise;
    BNParams depthwise_bn;
};

struct RepBottleneckParams {
    std::vector<BottleneckParams> bottlenecks;  // one per split

    [[nodiscard]] std::size_t splits() const noexcept { return bottlenecks.size(); }
};

struct FADCSPParams {
    GFAParams gfa;
    RepBottleneckParams rep;
    ConvParams out_conv;  // (c/n + c) -> c, 1x1
    BNParams out_bn;
};

/// Attention map A_f (n, c, h, w) with A_f[n,c,i,j] = sigmoid(y_h[n,c,i] * y_w[n,c,j]).
template <class V>
V gfa_attention(const V& f_in, const GFAParams& p) {
    const Shape s = f_in.shape();
    if (p.reduction == 0 || s.c % p.reduction != 0) {
        detail::contract_fail("gfa_attention: reduction ratio r = ", p.reduction, " does not divide c = ", s.c);
    }
    if (s.h + s.w < 2) detail::contract_fail("gfa_attention: h + w must be at least 2, got ", to_string(s));

    auto pools = strip_pools(f_in);
    // (n,c,1,w) -> (n,c,w,1) shares its memory order, so a reshape is the transpose.
    const V w_col = reshape(pools.v_w, Shape{s.n, s.c, s.w, 1});
    const V strip = concat_height(std::vector<V>{pools.v_h, w_col});
    const V fused = cbs(amsp_permute(strip, p.amsp), p.fuse_conv, p.fuse_bn);
    const std::vector<std::size_t> extents{s.h, s.w};
    auto parts = split_height(fused, std::span<const std::size_t>(extents));
    const V y_h = conv2d(parts[0], p.branch_h);
    const V y_w = conv2d(parts[1], p.branch_w);
    return activation(outer_hw(y_h, y_w), Activation::sigmoid);
}

template <class V>
V gfa_apply(const V& a_f, const V& f_in) {
    return mul(a_f, f_in);
}

template <class V>
V bottleneck_forward(const V& x, const BottleneckParams& p) {
    const V local = cbs(cbs(x, p.pointwise, p.pointwise_bn), p.depthwise, p.depthwise_bn);
    return add(x, local);
}

/// Sum over i of bottleneck_i(channel split i); shape (n, c/n, h, w).
template <class V>
V rep_bottleneck_forward(const V& x, const RepBottleneckParams& p) {
    const std::size_t n = p.splits();
    const std::size_t c = x.shape().c;
    if (n == 0 || c % n != 0) detail::contract_fail("rep_bottleneck_forward: split count n = ", n, " does not divide c = ", c);
    const std::vector<std::size_t> sizes(n, c / n);
    auto groups = split_channels(x, std::span<const std::size_t>(sizes));
    V acc = bottleneck_forward(groups[0], p.bottlenecks[0]);
    for (std::size_t i = 1; i < n; ++i) acc = add(acc, bottleneck_forward(groups[i], p.bottlenecks[i]));
    return acc;
}

template <class V>
V fad_csp_forward(const V& f_in, const FADCSPParams& p) {
    const V i_fd = gfa_apply(gfa_attention(f_in, p.gfa), f_in);
    const V i_rep = rep_bottleneck_forward(f_in, p.rep);
    return cbs(concat_channels({i_rep, i_fd}), p.out_conv, p.out_bn);
}

struct FADCSPOptions {
    std::size_t channels = 8;
    std::size_t reduction = 2;   // r
    std::size_t splits = 2;      // n
    std::size_t amsp_groups = 4; // rows in the GFA shuffle; width = c / amsp_groups
    std::uint64_t seed = 0;
};

inline BottleneckParams make_bottleneck(Rng& rng, std::size_t channels) {
    BottleneckParams b;
    b.pointwise = random_conv(rng, channels, channels, 1, 1, 0, 1, false);
    b.pointwise_bn = random_bn(rng, channels);
    b.depthwise = random_conv(rng, channels, 1, 3, 1, 1, channels, false);
    b.depthwise_bn = random_bn(rng, channels);
    return b;
}

inline FADCSPParams make_fad_csp(const FADCSPOptions& opt) {
    const std::size_t c = opt.channels;
    if (c == 0) detail::contract_fail("fad-csp: channel count must be positive");
    if (opt.reduction == 0 || c % opt.reduction != 0) {
        detail::contract_fail("fad-csp: r = ", opt.reduction, " must divide c = ", c);
    }
    if (opt.splits == 0 || c % opt.splits != 0) detail::contract_fail("fad-csp: n = ", opt.splits, " must divide c = ", c);
    if (opt.amsp_groups == 0 || c % opt.amsp_groups != 0) {
        detail::contract_fail("fad-csp: GFA shuffle rows ", opt.amsp_groups, " must divide c = ", c);
    }
    const std::size_t reduced = c / opt.reduction;
    const std::size_t part = c / opt.splits;

    Rng rng(opt.seed);
    FADCSPParams p;
    p.gfa.reduction = opt.reduction;
    p.gfa.amsp = AMSPConfig::sample(c, c / opt.amsp_groups, rng.next());
    p.gfa.fuse_conv = random_conv(rng, reduced, c, 1, 1, 0, 1, false);
    p.gfa.fuse_bn = random_bn(rng, reduced);
    p.gfa.branch_h = random_conv(rng, c, reduced, 1, 1, 0, 1, true);
    p.gfa.branch_w = random_conv(rng, c, reduced, 1, 1, 0, 1, true);
    for (std::size_t i = 0; i < opt.splits; ++i) p.rep.bottlenecks.push_back(make_bottleneck(rng, part));
    p.out_conv = random_conv(rng, c, part + c, 1, 1, 0, 1, false);
    p.out_bn = random_bn(rng, c);
    return p;
}

}  // namespace amsp

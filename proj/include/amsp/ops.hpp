#pragma once

// Forward tensor operations and the input-gradient kernels used by the tape.

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <utility>
#include <vector>

#include "amsp/tensor.hpp"

namespace amsp {

namespace detail {

inline std::size_t conv_out_extent(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t padding,
                                   const char* axis) {
    if (in + 2 * padding < kernel) {
        contract_fail("conv2d: ", axis, " ", in, " with padding ", padding, " is smaller than kernel ", kernel);
    }
    return (in + 2 * padding - kernel) / stride + 1;
}

inline void validate_conv(const Shape& in, const ConvParams& p) {
    if (p.stride == 0) contract_fail("conv2d: stride must be positive");
    if (p.groups == 0) contract_fail("conv2d: groups must be positive");
    const Shape& ws = p.weights.shape();
    if (ws.numel() == 0) contract_fail("conv2d: empty weight tensor ", to_string(ws));
    if (ws.n % p.groups != 0) {
        contract_fail("conv2d: out_channels ", ws.n, " not divisible by groups ", p.groups);
    }
    if (ws.c * p.groups != in.c) {
        contract_fail("conv2d: in_channels ", in.c, " != in_per_group ", ws.c, " * groups ", p.groups);
    }
    if (!p.bias.empty() && p.bias.size() != ws.n) {
        contract_fail("conv2d: bias length ", p.bias.size(), " != out_channels ", ws.n);
    }
}

/// Grouped cross-correlation. Output channel `oc` reads weight row `oc % weights.n`,
/// so a weight tensor with fewer rows than `out_channels` is shared across groups.
inline Tensor conv_forward(const Tensor& x, const Tensor& weights, std::span<const double> bias,
                           std::size_t out_channels, std::size_t stride, std::size_t padding, std::size_t groups) {
    const Shape in = x.shape();
    const Shape ws = weights.shape();
    const std::size_t kh = ws.h, kw = ws.w, icpg = ws.c;
    const std::size_t oh = conv_out_extent(in.h, kh, stride, padding, "height");
    const std::size_t ow = conv_out_extent(in.w, kw, stride, padding, "width");
    const std::size_t ocpg = out_channels / groups;
    const auto pad = static_cast<std::ptrdiff_t>(padding);

    Tensor y(Shape{in.n, out_channels, oh, ow});
    for (std::size_t n = 0; n < in.n; ++n) {
        for (std::size_t oc = 0; oc < out_channels; ++oc) {
            const std::size_t g = oc / ocpg;
            const std::size_t wrow = oc % ws.n;
            const double b = bias.empty() ? 0.0 : bias[oc];
            for (std::size_t oy = 0; oy < oh; ++oy) {
                for (std::size_t ox = 0; ox < ow; ++ox) {
                    double acc = b;
                    for (std::size_t ic = 0; ic < icpg; ++ic) {
                        const std::size_t cin = g * icpg + ic;
                        for (std::size_t ky = 0; ky < kh; ++ky) {
                            const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky) - pad;
                            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(in.h)) continue;
                            for (std::size_t kx = 0; kx < kw; ++kx) {
                                const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride + kx) - pad;
                                if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(in.w)) continue;
                                acc += weights(wrow, ic, ky, kx) *
                                       x(n, cin, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix));
                            }
                        }
                    }
                    y(n, oc, oy, ox) = acc;
                }
            }
        }
    }
    return y;
}

/// d(loss)/d(input) for conv_forward.
inline Tensor conv_backward_input(const Shape& in, const Tensor& weights, const Tensor& grad_out,
                                  std::size_t stride, std::size_t padding, std::size_t groups) {
    const Shape ws = weights.shape();
    const Shape os = grad_out.shape();
    const std::size_t kh = ws.h, kw = ws.w, icpg = ws.c;
    const std::size_t ocpg = os.c / groups;
    const auto pad = static_cast<std::ptrdiff_t>(padding);

    Tensor gx(in);
    for (std::size_t n = 0; n < os.n; ++n) {
        for (std::size_t oc = 0; oc < os.c; ++oc) {
            const std::size_t g = oc / ocpg;
            const std::size_t wrow = oc % ws.n;
            for (std::size_t oy = 0; oy < os.h; ++oy) {
                for (std::size_t ox = 0; ox < os.w; ++ox) {
                    const double go = grad_out(n, oc, oy, ox);
                    if (go == 0.0) continue;
                    for (std::size_t ic = 0; ic < icpg; ++ic) {
                        const std::size_t cin = g * icpg + ic;
                        for (std::size_t ky = 0; ky < kh; ++ky) {
                            const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky) - pad;
                            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(in.h)) continue;
                            for (std::size_t kx = 0; kx < kw; ++kx) {
                                const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride + kx) - pad;
                                if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(in.w)) continue;
                                gx(n, cin, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix)) +=
                                    weights(wrow, ic, ky, kx) * go;
                            }
                        }
                    }
                }
            }
        }
    }
    return gx;
}

inline void validate_bn(const Shape& in, const BNParams& p) {
    const std::size_t c = in.c;
    if (p.gamma.size() != c || p.beta.size() != c || p.running_mean.size() != c || p.running_var.size() != c) {
        contract_fail("batch_norm: per-channel arrays must have length ", c, " (gamma ", p.gamma.size(), ", beta ",
                      p.beta.size(), ", mean ", p.running_mean.size(), ", var ", p.running_var.size(), ")");
    }
    if (!(p.eps >= 0.0)) contract_fail("batch_norm: eps must be non-negative, got ", p.eps);
    for (std::size_t i = 0; i < c; ++i) {
        if (p.running_var[i] < 0.0) contract_fail("batch_norm: running_var[", i, "] = ", p.running_var[i], " < 0");
        if (!(p.running_var[i] + p.eps > 0.0)) contract_fail("batch_norm: var + eps must be positive at channel ", i);
    }
}

inline double bn_inv_std(const BNParams& p, std::size_t ch) { return 1.0 / std::sqrt(p.running_var[ch] + p.eps); }

template <class F>
Tensor map(const Tensor& x, F&& f) {
    Tensor y(x.shape());
    const auto src = x.data();
    auto dst = y.data();
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] = f(src[i]);
    return y;
}

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        contract_fail(op, ": shape mismatch ", to_string(a.shape()), " vs ", to_string(b.shape()));
    }
}

}  // namespace detail

inline Tensor conv2d(const Tensor& x, const ConvParams& p) {
    detail::validate_conv(x.shape(), p);
    return detail::conv_forward(x, p.weights, p.bias, p.out_channels(), p.stride, p.padding, p.groups);
}

inline Tensor batch_norm(const Tensor& x, const BNParams& p) {
    detail::validate_bn(x.shape(), p);
    const Shape s = x.shape();
    Tensor y(s);
    for (std::size_t n = 0; n < s.n; ++n) {
        for (std::size_t c = 0; c < s.c; ++c) {
            const double inv = detail::bn_inv_std(p, c);
            for (std::size_t i = 0; i < s.h; ++i) {
                for (std::size_t j = 0; j < s.w; ++j) {
                    y(n, c, i, j) = p.gamma[c] * (x(n, c, i, j) - p.running_mean[c]) * inv + p.beta[c];
                }
            }
        }
    }
    return y;
}

inline Tensor activation(const Tensor& x, Activation kind) {
    return kind == Activation::silu ? detail::map(x, [](double v) { return silu(v); })
                                    : detail::map(x, [](double v) { return sigmoid(v); });
}

inline Tensor concat_channels(std::span<const Tensor> parts) {
    if (parts.empty()) detail::contract_fail("concat_channels: no parts");
    const Shape first = parts.front().shape();
    std::size_t c = 0;
    for (const Tensor& p : parts) {
        const Shape s = p.shape();
        if (s.n != first.n || s.h != first.h || s.w != first.w) {
            detail::contract_fail("concat_channels: part ", to_string(s), " incompatible with ", to_string(first),
                                  " (batch/height/width must match)");
        }
        c += s.c;
    }
    Tensor y(Shape{first.n, c, first.h, first.w});
    const std::size_t plane = first.h * first.w;
    for (std::size_t n = 0; n < first.n; ++n) {
        std::size_t c0 = 0;
        for (const Tensor& p : parts) {
            const auto src = p.data().subspan(n * p.shape().c * plane, p.shape().c * plane);
            std::copy(src.begin(), src.end(), y.data().begin() + static_cast<std::ptrdiff_t>(y.offset(n, c0, 0, 0)));
            c0 += p.shape().c;
        }
    }
    return y;
}

inline Tensor concat_channels(std::initializer_list<Tensor> parts) {
    return concat_channels(std::span<const Tensor>(parts.begin(), parts.size()));
}

inline std::vector<Tensor> split_channels(const Tensor& x, std::span<const std::size_t> sizes) {
    const Shape s = x.shape();
    std::size_t total = 0;
    for (std::size_t k : sizes) total += k;
    if (total != s.c) detail::contract_fail("split_channels: sizes sum to ", total, " but tensor has ", s.c, " channels");
    std::vector<Tensor> out;
    out.reserve(sizes.size());
    const std::size_t plane = s.h * s.w;
    std::size_t c0 = 0;
    for (std::size_t k : sizes) {
        Tensor part(Shape{s.n, k, s.h, s.w});
        for (std::size_t n = 0; n < s.n; ++n) {
            const auto src = x.data().subspan(x.offset(n, c0, 0, 0), k * plane);
            std::copy(src.begin(), src.end(), part.data().begin() + static_cast<std::ptrdiff_t>(n * k * plane));
        }
        out.push_back(std::move(part));
        c0 += k;
    }
    return out;
}

inline std::vector<Tensor> split_channels(const Tensor& x, std::initializer_list<std::size_t> sizes) {
    return split_channels(x, std::span<const std::size_t>(sizes.begin(), sizes.size()));
}

/// Concatenation along the height axis; parts share (n, c, w).
inline Tensor concat_height(std::span<const Tensor> parts) {
    if (parts.empty()) detail::contract_fail("concat_height: no parts");
    const Shape first = parts.front().shape();
    std::size_t h = 0;
    for (const Tensor& p : parts) {
        const Shape s = p.shape();
        if (s.n != first.n || s.c != first.c || s.w != first.w) {
            detail::contract_fail("concat_height: part ", to_string(s), " incompatible with ", to_string(first));
        }
        h += s.h;
    }
    Tensor y(Shape{first.n, first.c, h, first.w});
    for (std::size_t n = 0; n < first.n; ++n) {
        for (std::size_t c = 0; c < first.c; ++c) {
            std::size_t h0 = 0;
            for (const Tensor& p : parts) {
                const std::size_t len = p.shape().h * first.w;
                const auto src = p.data().subspan(p.offset(n, c, 0, 0), len);
                std::copy(src.begin(), src.end(), y.data().begin() + static_cast<std::ptrdiff_t>(y.offset(n, c, h0, 0)));
                h0 += p.shape().h;
            }
        }
    }
    return y;
}

inline std::vector<Tensor> split_height(const Tensor& x, std::span<const std::size_t> sizes) {
    const Shape s = x.shape();
    std::size_t total = 0;
    for (std::size_t k : sizes) total += k;
    if (total != s.h) detail::contract_fail("split_height: sizes sum to ", total, " but tensor height is ", s.h);
    std::vector<Tensor> out;
    std::size_t h0 = 0;
    for (std::size_t k : sizes) {
        Tensor part(Shape{s.n, s.c, k, s.w});
        for (std::size_t n = 0; n < s.n; ++n) {
            for (std::size_t c = 0; c < s.c; ++c) {
                const auto src = x.data().subspan(x.offset(n, c, h0, 0), k * s.w);
                std::copy(src.begin(), src.end(), part.data().begin() + static_cast<std::ptrdiff_t>(part.offset(n, c, 0, 0)));
            }
        }
        out.push_back(std::move(part));
        h0 += k;
    }
    return out;
}

inline Tensor reshape(const Tensor& x, Shape shape) { return x.reshaped(shape); }

/// out channel i = in channel source[i].
inline Tensor gather_channels(const Tensor& x, std::span<const std::size_t> source) {
    const Shape s = x.shape();
    if (source.size() != s.c) detail::contract_fail("gather_channels: map length ", source.size(), " != channels ", s.c);
    Tensor y(s);
    const std::size_t plane = s.h * s.w;
    for (std::size_t n = 0; n < s.n; ++n) {
        for (std::size_t c = 0; c < s.c; ++c) {
            if (source[c] >= s.c) detail::contract_fail("gather_channels: source index ", source[c], " out of range");
            const auto src = x.data().subspan(x.offset(n, source[c], 0, 0), plane);
            std::copy(src.begin(), src.end(), y.data().begin() + static_cast<std::ptrdiff_t>(y.offset(n, c, 0, 0)));
        }
    }
    return y;
}

/// Height strip (n, c, h, 1) and width strip (n, c, 1, w) of mean + max pooling.
struct StripPools {
    Tensor v_h;
    Tensor v_w;
};

namespace detail {

/// Flat indices of the row-wise and column-wise maxima (first occurrence on ties).
struct StripArgmax {
    std::vector<std::size_t> row;
    std::vector<std::size_t> col;
};

inline std::pair<StripPools, StripArgmax> strip_pools_impl(const Tensor& x) {
    const Shape s = x.shape();
    if (s.h == 0 || s.w == 0) contract_fail("strip_pools: height and width must be at least 1, got ", to_string(s));
    StripPools out{Tensor(Shape{s.n, s.c, s.h, 1}), Tensor(Shape{s.n, s.c, 1, s.w})};
    StripArgmax arg{std::vector<std::size_t>(s.n * s.c * s.h), std::vector<std::size_t>(s.n * s.c * s.w)};
    for (std::size_t n = 0; n < s.n; ++n) {
        for (std::size_t c = 0; c < s.c; ++c) {
            for (std::size_t i = 0; i < s.h; ++i) {
                double sum = 0.0;
                std::size_t best = x.offset(n, c, i, 0);
                for (std::size_t j = 0; j < s.w; ++j) {
                    const std::size_t k = x.offset(n, c, i, j);
                    sum += x[k];
                    if (x[k] > x[best]) best = k;
                }
                out.v_h(n, c, i, 0) = sum / static_cast<double>(s.w) + x[best];
                arg.row[(n * s.c + c) * s.h + i] = best;
            }
            for (std::size_t j = 0; j < s.w; ++j) {
                double sum = 0.0;
                std::size_t best = x.offset(n, c, 0, j);
                for (std::size_t i = 0; i < s.h; ++i) {
                    const std::size_t k = x.offset(n, c, i, j);
                    sum += x[k];
                    if (x[k] > x[best]) best = k;
                }
                out.v_w(n, c, 0, j) = sum / static_cast<double>(s.h) + x[best];
                arg.col[(n * s.c + c) * s.w + j] = best;
            }
        }
    }
    return {std::move(out), std::move(arg)};
}

}  // namespace detail

inline StripPools strip_pools(const Tensor& x) { return detail::strip_pools_impl(x).first; }

/// out[n,c,i,j] = a[n,c,i,0] * b[n,c,j,0] for column tensors a (n,c,h,1) and b (n,c,w,1).
inline Tensor outer_hw(const Tensor& a, const Tensor& b) {
    const Shape sa = a.shape(), sb = b.shape();
    if (sa.w != 1 || sb.w != 1 || sa.n != sb.n || sa.c != sb.c) {
        detail::contract_fail("outer_hw: expected (n,c,h,1) and (n,c,w,1), got ", to_string(sa), " and ", to_string(sb));
    }
    Tensor y(Shape{sa.n, sa.c, sa.h, sb.h});
    for (std::size_t n = 0; n < sa.n; ++n)
        for (std::size_t c = 0; c < sa.c; ++c)
            for (std::size_t i = 0; i < sa.h; ++i)
                for (std::size_t j = 0; j < sb.h; ++j) y(n, c, i, j) = a(n, c, i, 0) * b(n, c, j, 0);
    return y;
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
    detail::require_same_shape(a, b, "mul");
    Tensor y(a.shape());
    for (std::size_t i = 0; i < a.numel(); ++i) y[i] = a[i] * b[i];
    return y;
}

inline Tensor add(const Tensor& a, const Tensor& b) {
    detail::require_same_shape(a, b, "add");
    Tensor y(a.shape());
    for (std::size_t i = 0; i < a.numel(); ++i) y[i] = a[i] + b[i];
    return y;
}

inline Tensor scale(const Tensor& x, double k) {
    return detail::map(x, [k](double v) { return k * v; });
}

/// Sum of all elements as a (1,1,1,1) tensor.
inline Tensor sum(const Tensor& x) {
    double acc = 0.0;
    for (double v : x.data()) acc += v;
    return Tensor(Shape{1, 1, 1, 1}, {acc});
}

/// Weighted sum of all elements, sum(x * w), as a (1,1,1,1) tensor.
inline Tensor dot(const Tensor& x, const Tensor& w) {
    detail::require_same_shape(x, w, "dot");
    double acc = 0.0;
    for (std::size_t i = 0; i < x.numel(); ++i) acc += x[i] * w[i];
    return Tensor(Shape{1, 1, 1, 1}, {acc});
}

/// Conv -> BN -> SiLU. Works for plain tensors and for taped variables.
template <class V>
V cbs(const V& x, const ConvParams& conv, const BNParams& bn) {
    return activation(batch_norm(conv2d(x, conv), bn), Activation::silu);
}

}  // namespace amsp

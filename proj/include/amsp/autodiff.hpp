#pragma once

// Reverse-mode gradients with respect to block inputs. Parameters are treated
// as constants; only the data path is differentiated.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "amsp/ops.hpp"

namespace amsp {

class Tape;

/// Handle to a value recorded on a Tape.
class Var {
public:
    Var() = default;
    Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

    [[nodiscard]] Tape& tape() const noexcept { return *tape_; }
    [[nodiscard]] std::size_t id() const noexcept { return id_; }
    [[nodiscard]] const Tensor& value() const;
    [[nodiscard]] const Shape& shape() const { return value().shape(); }

private:
    Tape* tape_ = nullptr;
    std::size_t id_ = 0;
};

/// Append-only record of operations. Backward closures receive the output
/// gradient and accumulate into their parents through `accumulate`.
class Tape {
public:
    using Backward = std::function<void(Tape&, const Tensor& grad_out)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var leaf(Tensor value) { return record("input", std::move(value), nullptr); }

    /// Appends a node. Throws NonFiniteError naming `op` if the value holds NaN/Inf.
    Var record(std::string op, Tensor value, Backward backward) {
        if (!value.all_finite()) {
            throw NonFiniteError("non-finite value produced by " + op + " (node " + std::to_string(nodes_.size()) +
                                 ", shape " + to_string(value.shape()) + ")");
        }
        nodes_.push_back(Node{std::move(op), std::move(value), std::move(backward)});
        return Var(this, nodes_.size() - 1);
    }

    [[nodiscard]] const Tensor& value(std::size_t id) const { return nodes_.at(id).value; }
    [[nodiscard]] const std::string& op(std::size_t id) const { return nodes_.at(id).op; }
    [[nodiscard]] std::size_t size() const noexcept { return nodes_.size(); }

    void accumulate(std::size_t id, const Tensor& grad) {
        Tensor& g = grads_[id];
        if (g.empty() && grad.numel() > 0) {
            g = grad;
            return;
        }
        for (std::size_t i = 0; i < g.numel(); ++i) g[i] += grad[i];
    }

    /// d(output)/d(wrt) for a single-element output. Inputs the output does not
    /// depend on get a zero gradient.
    [[nodiscard]] Tensor gradient(const Var& output, const Var& wrt) {
        if (output.value().numel() != 1) {
            detail::contract_fail("gradient: output must have exactly one element, has shape ",
                                  to_string(output.shape()));
        }
        grads_.assign(nodes_.size(), Tensor{});
        grads_[output.id()] = Tensor(output.shape(), 1.0);
        for (std::size_t k = output.id() + 1; k-- > 0;) {
            if (grads_[k].empty() || !nodes_[k].backward) continue;
            const Tensor g = grads_[k];
            nodes_[k].backward(*this, g);
            if (!grads_[k].all_finite()) {
                throw NonFiniteError("non-finite gradient flowing out of " + nodes_[k].op);
            }
        }
        Tensor result = grads_[wrt.id()].empty() ? Tensor(wrt.shape()) : grads_[wrt.id()];
        grads_.clear();
        return result;
    }

private:
    struct Node {
        std::string op;
        Tensor value;
        Backward backward;
    };
    std::vector<Node> nodes_;
    std::vector<Tensor> grads_;
};

inline const Tensor& Var::value() const { return tape_->value(id_); }

namespace detail {

inline Tape& common_tape(std::span<const Var> vars, const char* op) {
    if (vars.empty()) contract_fail(op, ": no inputs");
    Tape& t = vars.front().tape();
    for (const Var& v : vars) {
        if (&v.tape() != &t) contract_fail(op, ": inputs recorded on different tapes");
    }
    return t;
}

}  // namespace detail

inline Var conv2d(const Var& x, const ConvParams& p) {
    Tensor y = conv2d(x.value(), p);
    const std::size_t parent = x.id();
    const Shape in = x.shape();
    return x.tape().record("conv2d", std::move(y), [parent, in, w = p.weights, s = p.stride, pad = p.padding,
                                                    g = p.groups](Tape& t, const Tensor& go) {
        t.accumulate(parent, detail::conv_backward_input(in, w, go, s, pad, g));
    });
}

inline Var batch_norm(const Var& x, const BNParams& p) {
    Tensor y = batch_norm(x.value(), p);
    std::vector<double> factor(p.channels());
    for (std::size_t c = 0; c < factor.size(); ++c) factor[c] = p.gamma[c] * detail::bn_inv_std(p, c);
    const std::size_t parent = x.id();
    return x.tape().record("batch_norm", std::move(y), [parent, factor = std::move(factor)](Tape& t, const Tensor& go) {
        const Shape s = go.shape();
        Tensor gx(s);
        for (std::size_t n = 0; n < s.n; ++n)
            for (std::size_t c = 0; c < s.c; ++c)
                for (std::size_t i = 0; i < s.h; ++i)
                    for (std::size_t j = 0; j < s.w; ++j) gx(n, c, i, j) = go(n, c, i, j) * factor[c];
        t.accumulate(parent, gx);
    });
}

inline Var activation(const Var& x, Activation kind) {
    Tensor y = activation(x.value(), kind);
    const std::size_t parent = x.id();
    const char* name = kind == Activation::silu ? "silu" : "sigmoid";
    return x.tape().record(name, std::move(y), [parent, kind](Tape& t, const Tensor& go) {
        const Tensor& xv = t.value(parent);
        Tensor gx(xv.shape());
        for (std::size_t i = 0; i < xv.numel(); ++i) {
            const double s = sigmoid(xv[i]);
            const double d = kind == Activation::silu ? s * (1.0 + xv[i] * (1.0 - s)) : s * (1.0 - s);
            gx[i] = go[i] * d;
        }
        t.accumulate(parent, gx);
    });
}

inline Var concat_channels(std::span<const Var> parts) {
    Tape& tape = detail::common_tape(parts, "concat_channels");
    std::vector<Tensor> values;
    std::vector<std::size_t> ids, sizes;
    for (const Var& v : parts) {
        values.push_back(v.value());
        ids.push_back(v.id());
        sizes.push_back(v.shape().c);
    }
    Tensor y = concat_channels(std::span<const Tensor>(values));
    return tape.record("concat_channels", std::move(y), [ids, sizes](Tape& t, const Tensor& go) {
        auto pieces = split_channels(go, sizes);
        for (std::size_t k = 0; k < ids.size(); ++k) t.accumulate(ids[k], pieces[k]);
    });
}

inline Var concat_channels(std::initializer_list<Var> parts) {
    return concat_channels(std::span<const Var>(parts.begin(), parts.size()));
}

inline std::vector<Var> split_channels(const Var& x, std::span<const std::size_t> sizes) {
    auto pieces = split_channels(x.value(), sizes);
    std::vector<Var> out;
    const std::size_t parent = x.id();
    const Shape in = x.shape();
    std::size_t c0 = 0;
    for (Tensor& piece : pieces) {
        const std::size_t k = piece.shape().c;
        out.push_back(x.tape().record("split_channels", std::move(piece), [parent, in, c0, k](Tape& t, const Tensor& go) {
            Tensor gx(in);
            const std::size_t plane = in.h * in.w;
            for (std::size_t n = 0; n < in.n; ++n) {
                const auto src = go.data().subspan(n * k * plane, k * plane);
                std::copy(src.begin(), src.end(), gx.data().begin() + static_cast<std::ptrdiff_t>(gx.offset(n, c0, 0, 0)));
            }
            t.accumulate(parent, gx);
        }));
        c0 += k;
    }
    return out;
}

inline std::vector<Var> split_channels(const Var& x, std::initializer_list<std::size_t> sizes) {
    return split_channels(x, std::span<const std::size_t>(sizes.begin(), sizes.size()));
}

inline Var concat_height(std::span<const Var> parts) {
    Tape& tape = detail::common_tape(parts, "concat_height");
    std::vector<Tensor> values;
    std::vector<std::size_t> ids, sizes;
    for (const Var& v : parts) {
        values.push_back(v.value());
        ids.push_back(v.id());
        sizes.push_back(v.shape().h);
    }
    Tensor y = concat_height(std::span<const Tensor>(values));
    return tape.record("concat_height", std::move(y), [ids, sizes](Tape& t, const Tensor& go) {
        auto pieces = split_height(go, sizes);
        for (std::size_t k = 0; k < ids.size(); ++k) t.accumulate(ids[k], pieces[k]);
    });
}

inline std::vector<Var> split_height(const Var& x, std::span<const std::size_t> sizes) {
    auto pieces = split_height(x.value(), sizes);
    std::vector<Var> out;
    const std::size_t parent = x.id();
    std::vector<std::size_t> all(sizes.begin(), sizes.end());
    for (std::size_t k = 0; k < pieces.size(); ++k) {
        out.push_back(x.tape().record("split_height", std::move(pieces[k]), [parent, all, k](Tape& t, const Tensor& go) {
            const Shape in = t.value(parent).shape();
            std::vector<Tensor> parts;
            for (std::size_t j = 0; j < all.size(); ++j) {
                parts.push_back(j == k ? go : Tensor(Shape{in.n, in.c, all[j], in.w}));
            }
            t.accumulate(parent, concat_height(std::span<const Tensor>(parts)));
        }));
    }
    return out;
}

inline Var reshape(const Var& x, Shape shape) {
    const std::size_t parent = x.id();
    const Shape in = x.shape();
    return x.tape().record("reshape", reshape(x.value(), shape),
                           [parent, in](Tape& t, const Tensor& go) { t.accumulate(parent, go.reshaped(in)); });
}

inline Var gather_channels(const Var& x, std::span<const std::size_t> source) {
    Tensor y = gather_channels(x.value(), source);
    const std::size_t parent = x.id();
    std::vector<std::size_t> src(source.begin(), source.end());
    return x.tape().record("gather_channels", std::move(y), [parent, src](Tape& t, const Tensor& go) {
        const Shape s = go.shape();
        Tensor gx(s);
        const std::size_t plane = s.h * s.w;
        for (std::size_t n = 0; n < s.n; ++n)
            for (std::size_t c = 0; c < s.c; ++c)
                for (std::size_t k = 0; k < plane; ++k)
                    gx[gx.offset(n, src[c], 0, 0) + k] += go[go.offset(n, c, 0, 0) + k];
        t.accumulate(parent, gx);
    });
}

/// Taped counterpart of StripPools.
struct StripPoolVars {
    Var v_h;
    Var v_w;
};

inline StripPoolVars strip_pools(const Var& x) {
    auto [pools, arg] = detail::strip_pools_impl(x.value());
    const std::size_t parent = x.id();
    const Shape in = x.shape();
    Var vh = x.tape().record("strip_pools.h", std::move(pools.v_h), [parent, in, rows = arg.row](Tape& t, const Tensor& go) {
        Tensor gx(in);
        const double inv = 1.0 / static_cast<double>(in.w);
        for (std::size_t n = 0; n < in.n; ++n)
            for (std::size_t c = 0; c < in.c; ++c)
                for (std::size_t i = 0; i < in.h; ++i) {
                    const double g = go(n, c, i, 0);
                    for (std::size_t j = 0; j < in.w; ++j) gx(n, c, i, j) += g * inv;
                    gx[rows[(n * in.c + c) * in.h + i]] += g;
                }
        t.accumulate(parent, gx);
    });
    Var vw = x.tape().record("strip_pools.w", std::move(pools.v_w), [parent, in, cols = arg.col](Tape& t, const Tensor& go) {
        Tensor gx(in);
        const double inv = 1.0 / static_cast<double>(in.h);
        for (std::size_t n = 0; n < in.n; ++n)
            for (std::size_t c = 0; c < in.c; ++c)
                for (std::size_t j = 0; j < in.w; ++j) {
                    const double g = go(n, c, 0, j);
                    for (std::size_t i = 0; i < in.h; ++i) gx(n, c, i, j) += g * inv;
                    gx[cols[(n * in.c + c) * in.w + j]] += g;
                }
        t.accumulate(parent, gx);
    });
    return {vh, vw};
}

inline Var outer_hw(const Var& a, const Var& b) {
    const std::array<Var, 2> both{a, b};
    Tape& tape = detail::common_tape(both, "outer_hw");
    const std::size_t ia = a.id(), ib = b.id();
    return tape.record("outer_hw", outer_hw(a.value(), b.value()), [ia, ib](Tape& t, const Tensor& go) {
        const Tensor& av = t.value(ia);
        const Tensor& bv = t.value(ib);
        Tensor ga(av.shape()), gb(bv.shape());
        const Shape s = go.shape();
        for (std::size_t n = 0; n < s.n; ++n)
            for (std::size_t c = 0; c < s.c; ++c)
                for (std::size_t i = 0; i < s.h; ++i)
                    for (std::size_t j = 0; j < s.w; ++j) {
                        ga(n, c, i, 0) += go(n, c, i, j) * bv(n, c, j, 0);
                        gb(n, c, j, 0) += go(n, c, i, j) * av(n, c, i, 0);
                    }
        t.accumulate(ia, ga);
        t.accumulate(ib, gb);
    });
}

inline Var mul(const Var& a, const Var& b) {
    const std::array<Var, 2> both{a, b};
    Tape& tape = detail::common_tape(both, "mul");
    const std::size_t ia = a.id(), ib = b.id();
    return tape.record("mul", mul(a.value(), b.value()), [ia, ib](Tape& t, const Tensor& go) {
        t.accumulate(ia, mul(go, t.value(ib)));
        t.accumulate(ib, mul(go, t.value(ia)));
    });
}

inline Var add(const Var& a, const Var& b) {
    const std::array<Var, 2> both{a, b};
    Tape& tape = detail::common_tape(both, "add");
    const std::size_t ia = a.id(), ib = b.id();
    return tape.record("add", add(a.value(), b.value()), [ia, ib](Tape& t, const Tensor& go) {
        t.accumulate(ia, go);
        t.accumulate(ib, go);
    });
}

inline Var scale(const Var& x, double k) {
    const std::size_t parent = x.id();
    return x.tape().record("scale", scale(x.value(), k),
                           [parent, k](Tape& t, const Tensor& go) { t.accumulate(parent, scale(go, k)); });
}

inline Var sum(const Var& x) {
    const std::size_t parent = x.id();
    const Shape in = x.shape();
    return x.tape().record("sum", sum(x.value()),
                           [parent, in](Tape& t, const Tensor& go) { t.accumulate(parent, Tensor(in, go.item())); });
}

inline Var dot(const Var& x, const Tensor& w) {
    const std::size_t parent = x.id();
    return x.tape().record("dot", dot(x.value(), w),
                           [parent, w](Tape& t, const Tensor& go) { t.accumulate(parent, scale(w, go.item())); });
}

/// Largest relative disagreement between the taped gradient of `f` at `x` and a
/// central-difference estimate: max |analytic - numeric| / max(1, |numeric|).
///
/// `f` must be callable with both `Tensor` and `Var` and return a one-element value.
template <class F>
double grad_check(F&& f, const Tensor& x, double eps = 1e-5) {
    if (!(eps >= 1e-7 && eps <= 1e-4)) detail::contract_fail("grad_check: eps ", eps, " outside [1e-7, 1e-4]");
    Tape tape;
    const Var input = tape.leaf(x);
    const Var out = f(input);
    const Tensor analytic = tape.gradient(out, input);

    double worst = 0.0;
    Tensor probe = x;
    for (std::size_t i = 0; i < x.numel(); ++i) {
        probe[i] = x[i] + eps;
        const double up = Tensor(f(probe)).item();
        probe[i] = x[i] - eps;
        const double down = Tensor(f(probe)).item();
        probe[i] = x[i];
        const double numeric = (up - down) / (2.0 * eps);
        if (!std::isfinite(numeric)) {
            throw NonFiniteError("grad_check: non-finite objective when perturbing element " + std::to_string(i));
        }
        worst = std::max(worst, std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(numeric)));
    }
    return worst;
}

}  // namespace amsp

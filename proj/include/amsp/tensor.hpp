#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace amsp {

/// Raised when an operation's shape or parameter preconditions do not hold.
class ContractError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Raised when a NaN or Inf appears where finite values are required.
class NonFiniteError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace detail {

template <class... Parts>
[[noreturn]] void contract_fail(const Parts&... parts) {
    std::ostringstream os;
    (os << ... << parts);
    throw ContractError(os.str());
}

}  // namespace detail

/// NCHW extents.
struct Shape {
    std::size_t n = 0;
    std::size_t c = 0;
    std::size_t h = 0;
    std::size_t w = 0;

    [[nodiscard]] constexpr std::size_t numel() const noexcept { return n * c * h * w; }
    [[nodiscard]] constexpr std::array<std::size_t, 4> dims() const noexcept { return {n, c, h, w}; }

    friend constexpr bool operator==(const Shape&, const Shape&) = default;
};

inline std::string to_string(const Shape& s) {
    std::ostringstream os;
    os << '(' << s.n << ", " << s.c << ", " << s.h << ", " << s.w << ')';
    return os.str();
}

/// Dense rank-4 tensor of doubles stored row-major in NCHW order.
///
/// Tensors are plain values: copying copies the data, and every operation in
/// this library returns a fresh tensor instead of mutating its inputs.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(Shape shape, double fill = 0.0) : shape_(shape), data_(shape.numel(), fill) {}

    Tensor(Shape shape, std::vector<double> data) : shape_(shape), data_(std::move(data)) {
        if (data_.size() != shape_.numel()) {
            detail::contract_fail("tensor data length ", data_.size(), " does not match shape ",
                                  to_string(shape_), " (", shape_.numel(), " elements)");
        }
    }

    Tensor(Shape shape, std::initializer_list<double> values)
        : Tensor(shape, std::vector<double>(values)) {}

    [[nodiscard]] const Shape& shape() const noexcept { return shape_; }
    [[nodiscard]] std::size_t numel() const noexcept { return data_.size(); }
    [[nodiscard]] bool empty() const noexcept { return data_.empty(); }

    // Views into a temporary would dangle, so rvalues hand out their storage instead.
    [[nodiscard]] std::span<double> data() & noexcept { return data_; }
    [[nodiscard]] std::span<const double> data() const& noexcept { return data_; }
    std::span<const double> data() && = delete;
    [[nodiscard]] const std::vector<double>& values() const& noexcept { return data_; }
    [[nodiscard]] std::vector<double> values() && noexcept { return std::move(data_); }

    [[nodiscard]] std::size_t offset(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const noexcept {
        return ((n * shape_.c + c) * shape_.h + h) * shape_.w + w;
    }

    double& operator()(std::size_t n, std::size_t c, std::size_t h, std::size_t w) noexcept {
        return data_[offset(n, c, h, w)];
    }
    double operator()(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const noexcept {
        return data_[offset(n, c, h, w)];
    }

    double& operator[](std::size_t i) noexcept { return data_[i]; }
    double operator[](std::size_t i) const noexcept { return data_[i]; }

    /// Same data, different extents with equal element count.
    [[nodiscard]] Tensor reshaped(Shape shape) const {
        if (shape.numel() != numel()) {
            detail::contract_fail("cannot reshape ", to_string(shape_), " to ", to_string(shape));
        }
        return Tensor(shape, data_);
    }

    /// Value of a single-element tensor.
    [[nodiscard]] double item() const {
        if (numel() != 1) detail::contract_fail("item() requires one element, tensor has shape ", to_string(shape_));
        return data_[0];
    }

    [[nodiscard]] bool all_finite() const noexcept {
        return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
    }

    friend bool operator==(const Tensor&, const Tensor&) = default;

private:
    Shape shape_{};
    std::vector<double> data_;
};

/// Convolution weights plus geometry. `weights` is (out_channels, in_per_group, k_h, k_w).
struct ConvParams {
    Tensor weights;
    std::vector<double> bias;  // empty, or one entry per output channel
    std::size_t stride = 1;
    std::size_t padding = 0;
    std::size_t groups = 1;

    [[nodiscard]] std::size_t out_channels() const noexcept { return weights.shape().n; }
    [[nodiscard]] std::size_t in_per_group() const noexcept { return weights.shape().c; }
    [[nodiscard]] std::size_t kernel_h() const noexcept { return weights.shape().h; }
    [[nodiscard]] std::size_t kernel_w() const noexcept { return weights.shape().w; }
    [[nodiscard]] std::size_t in_channels() const noexcept { return in_per_group() * groups; }
};

/// Inference-form batch normalization statistics.
struct BNParams {
    std::vector<double> gamma;
    std::vector<double> beta;
    std::vector<double> running_mean;
    std::vector<double> running_var;
    double eps = 1e-5;

    [[nodiscard]] std::size_t channels() const noexcept { return gamma.size(); }

    /// gamma = 1, beta = 0, mean = 0, var = 1.
    static BNParams identity(std::size_t channels, double eps = 0.0) {
        return BNParams{std::vector<double>(channels, 1.0), std::vector<double>(channels, 0.0),
                        std::vector<double>(channels, 0.0), std::vector<double>(channels, 1.0), eps};
    }
};

enum class Activation { silu, sigmoid };

inline double sigmoid(double x) noexcept {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

inline double silu(double x) noexcept { return x * sigmoid(x); }

}  // namespace amsp

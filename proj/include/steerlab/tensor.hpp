#pragma once

// Dense float64 kernels shared by the runtime, extraction and evaluation code.
// Everything here is a pure function with a fixed accumulation order, so
// results are reproducible bit-for-bit on a given libm.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace steerlab {

using Vector = std::vector<double>;

class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
    /// Throws DimensionError if data.size() != rows * cols.
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

    static Matrix identity(std::size_t n);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const noexcept {
        return {data_.data() + r * cols_, cols_};
    }

    std::vector<double>& data() noexcept { return data_; }
    const std::vector<double>& data() const noexcept { return data_; }

    std::string shape_string() const;

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

/// a · b. Each output entry accumulates over the shared dimension in
/// ascending order.
Matrix matmul(const Matrix& a, const Matrix& b);

/// Row-wise softmax with max subtraction.
Matrix softmax_rows(const Matrix& m);

inline constexpr double kDefaultNormEps = 1e-5;

/// y_i = gain_i * x_i / sqrt(mean(x^2) + eps)
Vector rms_norm(std::span<const double> x, std::span<const double> gain,
                double eps = kDefaultNormEps);

/// x * sigmoid(x)
double silu(double x) noexcept;

double dot(std::span<const double> a, std::span<const double> b);
double l2_norm(std::span<const double> x);
/// Cosine similarity; 0 when either vector is zero.
double cosine(std::span<const double> a, std::span<const double> b);

// splitmix64: 64-bit state, one add + two xor-multiply mixes per draw.
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) noexcept : state_(seed) {}
    std::uint64_t next() noexcept;
    /// Uniform in the open interval (0, 1), 53-bit resolution.
    double uniform_open() noexcept;
    /// Uniform integer in [0, bound). bound must be > 0.
    std::uint64_t below(std::uint64_t bound) noexcept;

private:
    std::uint64_t state_;
};

/// n standard-normal draws. The seed is first scrambled through one
/// splitmix64 step, then pairs of uniforms go through Box-Muller (cosine
/// branch first, then sine).
Vector seeded_gaussian(std::uint64_t seed, std::size_t n);

}  // namespace steerlab

#include "steerlab/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "steerlab/errors.hpp"

namespace steerlab {

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
        throw DimensionError("matrix data length " + std::to_string(data_.size()) +
                             " does not match shape (" + std::to_string(rows) + ", " +
                             std::to_string(cols) + ")");
    }
}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

std::string Matrix::shape_string() const {
    return "(" + std::to_string(rows_) + ", " + std::to_string(cols_) + ")";
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw DimensionError("matmul shape mismatch: " + a.shape_string() + " x " +
                             b.shape_string());
    }
    Matrix out(a.rows(), b.cols());
    // i-k-j loop order: every out(i, j) still sums k = 0..K-1 in order.
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto out_row = out.row(i);
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            auto b_row = b.row(k);
            for (std::size_t j = 0; j < b.cols(); ++j) out_row[j] += aik * b_row[j];
        }
    }
    return out;
}

Matrix softmax_rows(const Matrix& m) {
    Matrix out(m.rows(), m.cols());
    for (std::size_t r = 0; r < m.rows(); ++r) {
        auto in = m.row(r);
        auto o = out.row(r);
        if (in.empty()) continue;
        const double mx = *std::max_element(in.begin(), in.end());
        double sum = 0.0;
        for (std::size_t c = 0; c < in.size(); ++c) {
            o[c] = std::exp(in[c] - mx);
            sum += o[c];
        }
        for (double& v : o) v /= sum;
    }
    return out;
}

Vector rms_norm(std::span<const double> x, std::span<const double> gain, double eps) {
    if (x.size() != gain.size()) {
        throw DimensionError("rms_norm length mismatch: x has " + std::to_string(x.size()) +
                             ", gain has " + std::to_string(gain.size()));
    }
    Vector y(x.size());
    if (x.empty()) return y;
    double ss = 0.0;
    for (double v : x) ss += v * v;
    const double denom = std::sqrt(ss / static_cast<double>(x.size()) + eps);
    // An all-zero input with eps == 0 maps to zero rather than NaN.
    if (denom == 0.0) return y;
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = gain[i] * x[i] / denom;
    return y;
}

double silu(double x) noexcept { return x / (1.0 + std::exp(-x)); }

double dot(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw DimensionError("dot length mismatch: " + std::to_string(a.size()) + " vs " +
                             std::to_string(b.size()));
    }
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double l2_norm(std::span<const double> x) { return std::sqrt(dot(x, x)); }

double cosine(std::span<const double> a, std::span<const double> b) {
    const double na = l2_norm(a);
    const double nb = l2_norm(b);
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot(a, b) / (na * nb);
}

std::uint64_t SplitMix64::next() noexcept {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

double SplitMix64::uniform_open() noexcept {
    return (static_cast<double>(next() >> 11) + 0.5) * 0x1.0p-53;
}

std::uint64_t SplitMix64::below(std::uint64_t bound) noexcept {
    // Rejection sampling keeps the draw exactly uniform.
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % bound);
    std::uint64_t v;
    do {
        v = next();
    } while (v >= limit);
    return v % bound;
}

Vector seeded_gaussian(std::uint64_t seed, std::size_t n) {
    SplitMix64 seeder(seed);
    SplitMix64 rng(seeder.next());
    Vector out(n);
    std::size_t i = 0;
    while (i < n) {
        const double u1 = rng.uniform_open();
        const double u2 = rng.uniform_open();
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * std::numbers::pi * u2;
        out[i++] = radius * std::cos(theta);
        if (i < n) out[i++] = radius * std::sin(theta);
    }
    return out;
}

}  // namespace steerlab

#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "iimlp/errors.hpp"

namespace iimlp {

using Vector = std::vector<double>;

// Dense row-major matrix of 64-bit floats.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    static Matrix scaled_identity(std::size_t n, double scale);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    double* row(std::size_t r) { return data_.data() + r * cols_; }
    const double* row(std::size_t r) const { return data_.data() + r * cols_; }

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    bool all_finite() const;

    bool operator==(const Matrix& o) const {
        return rows_ == o.rows_ && cols_ == o.cols_ && data_ == o.data_;
    }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

// Counter-based RNG (splitmix64). Same seed gives the same stream on every
// platform; pure 64-bit integer arithmetic plus one fixed double conversion.
class SeededRng {
public:
    explicit SeededRng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        state_ += 0x9E3779B97F4A7C15ULL;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // uniform in [0, 1)
    double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // uniform in (0, 1]; safe as a log() argument
    double next_unit_open() {
        return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
    }

    // uniform integer in [0, bound); bound must be positive
    std::uint64_t next_below(std::uint64_t bound) {
        return static_cast<std::uint64_t>(
            (static_cast<unsigned __int128>(next_u64()) * bound) >> 64);
    }

private:
    std::uint64_t state_;
};

Vector matvec(const Matrix& m, const Vector& v);

// hard-tanh: clamp to [-1, 1]
double hard_tanh_scalar(double x);
Vector hard_tanh(const Vector& v);

// derivative of hard-tanh; 1 on |x| < 1, 0 elsewhere (0 at the kinks x = +-1)
double hard_tanh_deriv_scalar(double x);
Vector hard_tanh_deriv(const Vector& v);

double relu_scalar(double x);
double relu_deriv_scalar(double x);

// Error function, rational Chebyshev approximation (Cody 1969), implemented
// in-repo. Absolute error below 1e-15 over the real line.
double erf(double x);

// Numerically stable softmax (max subtraction); entries sum to 1.
Vector softmax(const Vector& v);

// n i.i.d. Gaussian(mean, variance) samples via Box-Muller on the uniform
// counter stream. Each pair of outputs consumes exactly two uniforms.
Vector gauss(SeededRng& rng, double mean, double variance, std::size_t n);

double dot(const Vector& a, const Vector& b);

}  // namespace iimlp

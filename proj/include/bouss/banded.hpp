#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "bouss/error.hpp"

namespace bouss {

/// Square matrix stored by diagonals: entry (i, j) lives in row i at offset j - i + lower.
/// Entries outside the band are implicitly zero.
class BandedMatrix {
public:
    BandedMatrix() = default;
    BandedMatrix(std::size_t order, std::size_t lower, std::size_t upper)
        : order_(order), lower_(lower), upper_(upper), data_(order * (lower + upper + 1), 0.0) {}

    std::size_t order() const noexcept { return order_; }
    std::size_t lower() const noexcept { return lower_; }
    std::size_t upper() const noexcept { return upper_; }
    std::size_t half_bandwidth() const noexcept { return std::max(lower_, upper_); }

    bool in_band(std::size_t i, std::size_t j) const noexcept {
        return i < order_ && j < order_ && j + lower_ >= i && j <= i + upper_;
    }

    double operator()(std::size_t i, std::size_t j) const noexcept {
        return in_band(i, j) ? data_[index(i, j)] : 0.0;
    }

    double& at(std::size_t i, std::size_t j) {
        if (!in_band(i, j))
            throw DimensionMismatch("entry (" + std::to_string(i) + "," + std::to_string(j) +
                                    ") outside band");
        return data_[index(i, j)];
    }

    void add(std::size_t i, std::size_t j, double v) { at(i, j) += v; }

    /// First and one-past-last column stored in row i.
    std::size_t row_begin(std::size_t i) const noexcept { return i > lower_ ? i - lower_ : 0; }
    std::size_t row_end(std::size_t i) const noexcept { return std::min(order_, i + upper_ + 1); }

    std::vector<double> multiply(std::span<const double> x) const {
        if (x.size() != order_)
            throw DimensionMismatch("banded multiply: length mismatch");
        std::vector<double> y(order_, 0.0);
        for (std::size_t i = 0; i < order_; ++i) {
            double acc = 0.0;
            for (std::size_t j = row_begin(i); j < row_end(i); ++j)
                acc += data_[index(i, j)] * x[j];
            y[i] = acc;
        }
        return y;
    }

    /// y = A^T x
    std::vector<double> multiply_transposed(std::span<const double> x) const {
        if (x.size() != order_)
            throw DimensionMismatch("banded multiply: length mismatch");
        std::vector<double> y(order_, 0.0);
        for (std::size_t i = 0; i < order_; ++i)
            for (std::size_t j = row_begin(i); j < row_end(i); ++j)
                y[j] += data_[index(i, j)] * x[i];
        return y;
    }

    double quadratic_form(std::span<const double> x) const {
        const auto y = multiply(x);
        double acc = 0.0;
        for (std::size_t i = 0; i < order_; ++i)
            acc += x[i] * y[i];
        return acc;
    }

    BandedMatrix transposed() const {
        BandedMatrix t(order_, upper_, lower_);
        for (std::size_t i = 0; i < order_; ++i)
            for (std::size_t j = row_begin(i); j < row_end(i); ++j)
                t.at(j, i) = data_[index(i, j)];
        return t;
    }

    /// this += s * other; other's band must fit inside this one.
    void add_scaled(const BandedMatrix& other, double s) {
        if (other.order_ != order_)
            throw DimensionMismatch("banded add: order mismatch");
        for (std::size_t i = 0; i < order_; ++i)
            for (std::size_t j = other.row_begin(i); j < other.row_end(i); ++j)
                add(i, j, s * other(i, j));
    }

    bool is_symmetric(double tol = 0.0) const noexcept {
        for (std::size_t i = 0; i < order_; ++i)
            for (std::size_t j = row_begin(i); j < row_end(i); ++j)
                if (std::abs((*this)(i, j) - (*this)(j, i)) > tol)
                    return false;
        return true;
    }

private:
    std::size_t index(std::size_t i, std::size_t j) const noexcept {
        return i * (lower_ + upper_ + 1) + (j + lower_ - i);
    }

    std::size_t order_{0};
    std::size_t lower_{0};
    std::size_t upper_{0};
    std::vector<double> data_;
};

/// LU factorization with partial pivoting of a banded matrix. Row interchanges are applied
/// step by step (LINPACK ordering), so the upper factor widens to lower + upper diagonals.
class BandedLU {
public:
    explicit BandedLU(const BandedMatrix& a)
        : lu_(a.order(), a.lower(), a.lower() + a.upper()), pivots_(a.order()) {
        const std::size_t n = a.order();
        const std::size_t kl = a.lower();
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = a.row_begin(i); j < a.row_end(i); ++j)
                lu_.at(i, j) = a(i, j);

        for (std::size_t k = 0; k < n; ++k) {
            const std::size_t last_row = std::min(n - 1, k + kl);
            std::size_t p = k;
            double best = std::abs(lu_(k, k));
            for (std::size_t i = k + 1; i <= last_row; ++i)
                if (std::abs(lu_(i, k)) > best) {
                    best = std::abs(lu_(i, k));
                    p = i;
                }
            if (!(best > 0.0) || !std::isfinite(best))
                throw SingularMatrix(k);
            pivots_[k] = p;
            const std::size_t last_col = std::min(n - 1, k + lu_.upper());
            if (p != k)
                for (std::size_t j = k; j <= last_col; ++j)
                    std::swap(lu_.at(k, j), lu_.at(p, j));
            const double pivot = lu_(k, k);
            for (std::size_t i = k + 1; i <= last_row; ++i) {
                double& lik = lu_.at(i, k);
                if (lik == 0.0)
                    continue;
                lik /= pivot;
                for (std::size_t j = k + 1; j <= last_col; ++j)
                    lu_.at(i, j) -= lik * lu_(k, j);
            }
        }
    }

    std::size_t order() const noexcept { return lu_.order(); }

    std::vector<double> solve(std::span<const double> b) const {
        const std::size_t n = lu_.order();
        if (b.size() != n)
            throw DimensionMismatch("banded solve: rhs length mismatch");
        std::vector<double> x(b.begin(), b.end());
        for (std::size_t k = 0; k < n; ++k) {
            if (pivots_[k] != k)
                std::swap(x[k], x[pivots_[k]]);
            const std::size_t last_row = std::min(n - 1, k + lu_.lower());
            for (std::size_t i = k + 1; i <= last_row; ++i)
                x[i] -= lu_(i, k) * x[k];
        }
        for (std::size_t ii = n; ii-- > 0;) {
            double acc = x[ii];
            const std::size_t last_col = std::min(n - 1, ii + lu_.upper());
            for (std::size_t j = ii + 1; j <= last_col; ++j)
                acc -= lu_(ii, j) * x[j];
            x[ii] = acc / lu_(ii, ii);
        }
        return x;
    }

private:
    BandedMatrix lu_;
    std::vector<std::size_t> pivots_;
};

inline std::vector<double> solve_banded(const BandedMatrix& a, std::span<const double> b) {
    return BandedLU(a).solve(b);
}

} // namespace bouss

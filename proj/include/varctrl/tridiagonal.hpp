#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace varctrl {

/**
 * Banded operator on one space slice: tridiagonal plus an optional extra entry
 * in the first row (column 2) and the last row (column n-3). The extra entries
 * carry one-sided boundary stencils; they are zero for the reflecting and
 * absorbing closures.
 *
 * Row i reads  lower[i] u[i-1] + diag[i] u[i] + upper[i] u[i+1];
 * lower[0] and upper[n-1] are unused and kept at zero.
 */
struct TridiagonalOperator {
    std::vector<double> lower;
    std::vector<double> diag;
    std::vector<double> upper;
    double first_row_extra = 0.0;
    double last_row_extra = 0.0;

    TridiagonalOperator() = default;
    explicit TridiagonalOperator(std::size_t n) : lower(n, 0.0), diag(n, 0.0), upper(n, 0.0) {}

    [[nodiscard]] std::size_t size() const noexcept { return diag.size(); }
    [[nodiscard]] bool strictly_tridiagonal() const noexcept {
        return first_row_extra == 0.0 && last_row_extra == 0.0;
    }

    /// out = A u. `out` must not alias `u`.
    void apply(std::span<const double> u, std::span<double> out) const;
    /// out = A^T u. `out` must not alias `u`.
    void apply_transpose(std::span<const double> u, std::span<double> out) const;

    [[nodiscard]] double row_sum(std::size_t i) const;
    [[nodiscard]] double column_sum(std::size_t j) const;

    /// Exact transpose; requires strictly_tridiagonal().
    [[nodiscard]] TridiagonalOperator transposed() const;

    /// I + scale * A.
    [[nodiscard]] TridiagonalOperator shifted_identity(double scale) const;
};

/**
 * Solves M x = rhs in place (Thomas algorithm, no pivoting). Extra boundary
 * entries are eliminated against the neighbouring row first.
 * Returns false when a zero or non-finite pivot is met.
 */
bool solve_in_place(const TridiagonalOperator& m, std::span<double> rhs);

}  // namespace varctrl

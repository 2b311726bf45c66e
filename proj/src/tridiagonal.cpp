#include "varctrl/tridiagonal.hpp"

#include <cmath>
#include <stdexcept>

namespace varctrl {

void TridiagonalOperator::apply(std::span<const double> u, std::span<double> out) const {
    const std::size_t n = size();
    for (std::size_t i = 0; i < n; ++i) {
        double v = diag[i] * u[i];
        if (i > 0) v += lower[i] * u[i - 1];
        if (i + 1 < n) v += upper[i] * u[i + 1];
        out[i] = v;
    }
    if (n >= 3) {
        out[0] += first_row_extra * u[2];
        out[n - 1] += last_row_extra * u[n - 3];
    }
}

void TridiagonalOperator::apply_transpose(std::span<const double> u, std::span<double> out) const {
    const std::size_t n = size();
    for (std::size_t j = 0; j < n; ++j) {
        double v = diag[j] * u[j];
        if (j + 1 < n) v += lower[j + 1] * u[j + 1];
        if (j > 0) v += upper[j - 1] * u[j - 1];
        out[j] = v;
    }
    if (n >= 3) {
        out[2] += first_row_extra * u[0];
        out[n - 3] += last_row_extra * u[n - 1];
    }
}

double TridiagonalOperator::row_sum(std::size_t i) const {
    const std::size_t n = size();
    double s = diag[i];
    if (i > 0) s += lower[i];
    if (i + 1 < n) s += upper[i];
    if (i == 0) s += first_row_extra;
    if (i + 1 == n) s += last_row_extra;
    return s;
}

double TridiagonalOperator::column_sum(std::size_t j) const {
    const std::size_t n = size();
    double s = diag[j];
    if (j + 1 < n) s += lower[j + 1];
    if (j > 0) s += upper[j - 1];
    if (n >= 3 && j == 2) s += first_row_extra;
    if (n >= 3 && j == n - 3) s += last_row_extra;
    return s;
}

TridiagonalOperator TridiagonalOperator::transposed() const {
    if (!strictly_tridiagonal()) {
        throw std::logic_error("transpose of an operator with extra boundary entries");
    }
    const std::size_t n = size();
    TridiagonalOperator t(n);
    t.diag = diag;
    for (std::size_t i = 1; i < n; ++i) {
        t.lower[i] = upper[i - 1];
        t.upper[i - 1] = lower[i];
    }
    return t;
}

TridiagonalOperator TridiagonalOperator::shifted_identity(double scale) const {
    TridiagonalOperator m(size());
    for (std::size_t i = 0; i < size(); ++i) {
        m.lower[i] = scale * lower[i];
        m.diag[i] = 1.0 + scale * diag[i];
        m.upper[i] = scale * upper[i];
    }
    m.first_row_extra = scale * first_row_extra;
    m.last_row_extra = scale * last_row_extra;
    return m;
}

bool solve_in_place(const TridiagonalOperator& m, std::span<double> rhs) {
    const std::size_t n = m.size();
    if (n == 0) return true;
    std::vector<double> a = m.lower;
    std::vector<double> b = m.diag;
    std::vector<double> c = m.upper;

    // Fold the extra first-row entry (column 2) into the tridiagonal band
    // using row 1, and likewise for the last row with row n-2.
    if (n >= 3 && m.first_row_extra != 0.0) {
        if (c[1] == 0.0) return false;
        const double r = m.first_row_extra / c[1];
        b[0] -= r * a[1];
        c[0] -= r * b[1];
        rhs[0] -= r * rhs[1];
    }
    if (n >= 3 && m.last_row_extra != 0.0) {
        if (a[n - 2] == 0.0) return false;
        const double r = m.last_row_extra / a[n - 2];
        b[n - 1] -= r * c[n - 2];
        a[n - 1] -= r * b[n - 2];
        rhs[n - 1] -= r * rhs[n - 2];
    }

    for (std::size_t i = 1; i < n; ++i) {
        if (b[i - 1] == 0.0 || !std::isfinite(b[i - 1])) return false;
        const double w = a[i] / b[i - 1];
        b[i] -= w * c[i - 1];
        rhs[i] -= w * rhs[i - 1];
    }
    if (b[n - 1] == 0.0 || !std::isfinite(b[n - 1])) return false;
    rhs[n - 1] /= b[n - 1];
    for (std::size_t i = n - 1; i-- > 0;) {
        rhs[i] = (rhs[i] - c[i] * rhs[i + 1]) / b[i];
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (!std::isfinite(rhs[i])) return false;
    }
    return true;
}

}  // namespace varctrl

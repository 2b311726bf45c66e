#include "doctest.h"

#include <cmath>
#include <random>
#include <stdexcept>
#include <vector>

#include "varctrl/tridiagonal.hpp"

using namespace varctrl;

namespace {

using Dense = std::vector<std::vector<double>>;

Dense to_dense(const TridiagonalOperator& a) {
    const std::size_t n = a.size();
    Dense d(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i) {
        d[i][i] = a.diag[i];
        if (i > 0) d[i][i - 1] = a.lower[i];
        if (i + 1 < n) d[i][i + 1] = a.upper[i];
    }
    d[0][2] += a.first_row_extra;
    d[n - 1][n - 3] += a.last_row_extra;
    return d;
}

TridiagonalOperator random_operator(std::size_t n, std::mt19937_64& rng, bool extras,
                                    double dominance) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    TridiagonalOperator a(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (i > 0) a.lower[i] = u(rng);
        if (i + 1 < n) a.upper[i] = u(rng);
        a.diag[i] = dominance + std::abs(a.lower[i]) + std::abs(a.upper[i]) + 0.5 * u(rng);
    }
    if (extras) {
        a.first_row_extra = 0.3 * u(rng);
        a.last_row_extra = 0.3 * u(rng);
        a.diag[0] += 0.3;
        a.diag[n - 1] += 0.3;
    }
    return a;
}

std::vector<double> random_vector(std::size_t n, std::mt19937_64& rng) {
    std::normal_distribution<double> z;
    std::vector<double> v(n);
    for (double& x : v) x = z(rng);
    return v;
}

}  // namespace

TEST_CASE("apply and apply_transpose match the dense matrix") {
    std::mt19937_64 rng(1);
    for (std::size_t n : {3u, 4u, 9u, 40u}) {
        for (bool extras : {false, true}) {
            const TridiagonalOperator a = random_operator(n, rng, extras, 1.0);
            const Dense d = to_dense(a);
            const auto u = random_vector(n, rng);
            std::vector<double> out(n);
            std::vector<double> out_t(n);
            a.apply(u, out);
            a.apply_transpose(u, out_t);
            for (std::size_t i = 0; i < n; ++i) {
                double r = 0.0;
                double c = 0.0;
                for (std::size_t j = 0; j < n; ++j) {
                    r += d[i][j] * u[j];
                    c += d[j][i] * u[j];
                }
                CHECK(out[i] == doctest::Approx(r).epsilon(1e-13));
                CHECK(out_t[i] == doctest::Approx(c).epsilon(1e-13));
            }
        }
    }
}

TEST_CASE("row and column sums") {
    std::mt19937_64 rng(2);
    const TridiagonalOperator a = random_operator(7, rng, true, 1.0);
    const Dense d = to_dense(a);
    for (std::size_t i = 0; i < 7; ++i) {
        double r = 0.0;
        double c = 0.0;
        for (std::size_t j = 0; j < 7; ++j) {
            r += d[i][j];
            c += d[j][i];
        }
        CHECK(a.row_sum(i) == doctest::Approx(r));
        CHECK(a.column_sum(i) == doctest::Approx(c));
    }
}

TEST_CASE("transposed is the exact transpose") {
    std::mt19937_64 rng(3);
    const TridiagonalOperator a = random_operator(12, rng, false, 1.0);
    const TridiagonalOperator t = a.transposed();
    const Dense d = to_dense(a);
    const Dense dt = to_dense(t);
    for (std::size_t i = 0; i < 12; ++i) {
        for (std::size_t j = 0; j < 12; ++j) CHECK(dt[i][j] == d[j][i]);
    }
    TridiagonalOperator e = a;
    e.first_row_extra = 1.0;
    CHECK_THROWS_AS((void)e.transposed(), std::logic_error);
}

TEST_CASE("shifted identity") {
    std::mt19937_64 rng(4);
    const TridiagonalOperator a = random_operator(6, rng, true, 1.0);
    const TridiagonalOperator m = a.shifted_identity(-0.25);
    for (std::size_t i = 0; i < 6; ++i) {
        CHECK(m.diag[i] == doctest::Approx(1.0 - 0.25 * a.diag[i]));
        CHECK(m.upper[i] == doctest::Approx(-0.25 * a.upper[i]));
    }
    CHECK(m.first_row_extra == doctest::Approx(-0.25 * a.first_row_extra));
}

TEST_CASE("solve_in_place inverts apply (property, random systems)") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 3 + static_cast<std::size_t>(trial % 50);
        const bool extras = trial % 2 == 1;
        const TridiagonalOperator a = random_operator(n, rng, extras, 0.5);
        const auto x = random_vector(n, rng);
        std::vector<double> b(n);
        a.apply(x, b);
        REQUIRE(solve_in_place(a, b));
        for (std::size_t i = 0; i < n; ++i) CHECK(b[i] == doctest::Approx(x[i]).epsilon(1e-10));
    }
}

TEST_CASE("solve_in_place reports singular systems") {
    TridiagonalOperator a(4);
    std::vector<double> b{1.0, 2.0, 3.0, 4.0};
    CHECK_FALSE(solve_in_place(a, b));

    TridiagonalOperator nan_op(3);
    nan_op.diag = {1.0, NAN, 1.0};
    std::vector<double> c{1.0, 1.0, 1.0};
    CHECK_FALSE(solve_in_place(nan_op, c));
}

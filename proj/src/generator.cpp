#include "varctrl/generator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "varctrl/errors.hpp"

namespace varctrl {

TransformedCoefficients transformed_coefficients(const ControlProblem& problem,
                                                 const SpaceTimeGrid& grid, double t,
                                                 std::size_t i, double c) {
    const double x = grid.node(i);
    const double b = problem.drift(t, x, c);
    const double a = problem.diffusion(t, x, c);
    if (grid.log_space()) {
        const double s = a / x;
        return {b / x - 0.5 * s * s, 0.5 * s * s};
    }
    return {b, 0.5 * a * a};
}

namespace {

struct Couplings {
    double lower;
    double upper;
};

Couplings interior_couplings(const TransformedCoefficients& k, double h) {
    // Central differencing keeps both couplings >= 0 exactly when |beta| h <= 2 D.
    // Beyond that the diffusion is raised to |beta| h / 2, which is pure upwind
    // transport. The switch is continuous: at |beta| h = 2 D the central
    // coupling against the drift is already zero.
    if (k.diffusivity > 0.0 && std::abs(k.drift) * h <= 2.0 * k.diffusivity) {
        const double d = k.diffusivity / (h * h);
        return {d - 0.5 * k.drift / h, d + 0.5 * k.drift / h};
    }
    return {std::max(-k.drift, 0.0) / h, std::max(k.drift, 0.0) / h};
}

}  // namespace

GeneratorRow generator_row(const ControlProblem& problem, const SpaceTimeGrid& grid, double t,
                           std::size_t i, double c, BoundaryPolicy policy) {
    const std::size_t n = grid.n_x();
    const double h = grid.spacing();
    const TransformedCoefficients k = transformed_coefficients(problem, grid, t, i, c);
    const double d = k.diffusivity / (h * h);
    GeneratorRow row;

    const bool first = i == 0;
    const bool last = i + 1 == n;
    if (first || last) {
        switch (policy) {
            case BoundaryPolicy::reflecting:
                // Mirror ghost node; drift towards the wall is blocked.
                if (first) {
                    row.upper = 2.0 * d + std::max(k.drift, 0.0) / h;
                    row.diag = -row.upper;
                } else {
                    row.lower = 2.0 * d + std::max(-k.drift, 0.0) / h;
                    row.diag = -row.lower;
                }
                break;
            case BoundaryPolicy::absorbing:
                break;
            case BoundaryPolicy::extrapolating:
                if (first) {
                    row.diag = d - k.drift / h;
                    row.upper = -2.0 * d + k.drift / h;
                } else {
                    row.diag = d + k.drift / h;
                    row.lower = -2.0 * d - k.drift / h;
                }
                row.extra = d;
                break;
        }
        return row;
    }

    const Couplings cpl = interior_couplings(k, h);
    row.lower = cpl.lower;
    row.upper = cpl.upper;
    row.diag = -(cpl.lower + cpl.upper);
    if (policy == BoundaryPolicy::absorbing) {
        // Killing: the coupling into a boundary node leaves the domain.
        if (i == 1) row.lower = 0.0;
        if (i + 2 == n) row.upper = 0.0;
    }
    return row;
}

GeneratorRow generator_row(const ControlProblem& problem, const SpaceTimeGrid& grid, double t,
                           std::size_t i, double c) {
    return generator_row(problem, grid, t, i, c, grid.boundary());
}

int stencil_branch(const ControlProblem& problem, const SpaceTimeGrid& grid, double t,
                   std::size_t i, double c) {
    const std::size_t n = grid.n_x();
    const double h = grid.spacing();
    const TransformedCoefficients k = transformed_coefficients(problem, grid, t, i, c);
    const int sign = k.drift > 0.0 ? 1 : 0;
    if (i == 0 || i + 1 == n) return grid.boundary() == BoundaryPolicy::reflecting ? sign : 0;
    const bool central = k.diffusivity > 0.0 && std::abs(k.drift) * h <= 2.0 * k.diffusivity;
    return central ? 2 : sign;
}

double apply_row(const GeneratorRow& row, std::span<const double> u, std::size_t i) {
    // Difference form: conservative rows contribute no multiple of u[i], which
    // keeps the result free of cancellation when u is large and smooth.
    const std::size_t n = u.size();
    const double ui = u[i];
    double v = 0.0;
    double sum = row.diag;
    double size = std::abs(row.diag);
    if (i > 0) {
        v += row.lower * (u[i - 1] - ui);
        sum += row.lower;
        size += std::abs(row.lower);
    }
    if (i + 1 < n) {
        v += row.upper * (u[i + 1] - ui);
        sum += row.upper;
        size += std::abs(row.upper);
    }
    if (row.extra != 0.0) {
        v += row.extra * ((i == 0 ? u[2] : u[n - 3]) - ui);
        sum += row.extra;
        size += std::abs(row.extra);
    }
    if (std::abs(sum) > 8.0 * std::numeric_limits<double>::epsilon() * size) v += sum * ui;
    return v;
}

namespace {

TridiagonalOperator assemble(const ControlProblem& problem, const SpaceTimeGrid& grid, double t,
                             std::span<const double> control_slice, BoundaryPolicy policy) {
    const std::size_t n = grid.n_x();
    if (control_slice.size() != n) throw ConfigError("control slice length does not match grid");
    TridiagonalOperator op(n);
    for (std::size_t i = 0; i < n; ++i) {
        const GeneratorRow row = generator_row(problem, grid, t, i, control_slice[i], policy);
        op.lower[i] = i > 0 ? row.lower : 0.0;
        op.diag[i] = row.diag;
        op.upper[i] = i + 1 < n ? row.upper : 0.0;
        if (i == 0) op.first_row_extra = row.extra;
        if (i + 1 == n) op.last_row_extra = row.extra;
    }
    return op;
}

}  // namespace

TridiagonalOperator assemble_generator(const ControlProblem& problem, const SpaceTimeGrid& grid,
                                       double t, std::span<const double> control_slice) {
    return assemble(problem, grid, t, control_slice, grid.boundary());
}

TridiagonalOperator assemble_adjoint(const ControlProblem& problem, const SpaceTimeGrid& grid,
                                     double t, std::span<const double> control_slice) {
    const BoundaryPolicy density_policy = grid.boundary() == BoundaryPolicy::extrapolating
                                              ? BoundaryPolicy::reflecting
                                              : grid.boundary();
    return assemble(problem, grid, t, control_slice, density_policy).transposed();
}

}  // namespace varctrl

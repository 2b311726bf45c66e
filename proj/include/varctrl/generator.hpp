#pragma once

/**
 * @file generator.hpp
 * @brief Discrete generator A_c = b d/dx + 1/2 a^2 d^2/dx^2 and its adjoint.
 *
 * Both operators act on the computational coordinate xi of the grid. On a log
 * mesh the generator is rewritten by the chain rule as
 *
 *     A_c u = beta u_xi + D u_xixi,   beta = b/x - a^2/(2x^2),  D = a^2/(2x^2),
 *
 * and on a linear mesh beta = b, D = a^2/2. Second derivatives use central
 * differences; the first derivative is central while the cell Peclet number
 * |beta| h / D stays at or below 2. Above it the row is pure upwind transport
 * (numerical diffusion |beta| h / 2 replaces D), which matches the central
 * row at the switch, so the entries are continuous in c. Every interior
 * off-diagonal entry is nonnegative and every interior row sums to zero.
 *
 * The adjoint acts on quadrature-weighted densities m_i = w_i p_i and is the
 * exact transpose of the generator, which gives <A u, m> = <u, A^dagger m>
 * in the Euclidean pairing and mass conservation whenever the generator rows
 * sum to zero.
 */

#include <cstddef>
#include <span>

#include "varctrl/problem.hpp"
#include "varctrl/tridiagonal.hpp"

namespace varctrl {

/// Drift and diffusion of the generator in the computational coordinate.
struct TransformedCoefficients {
    double drift = 0.0;      ///< beta
    double diffusivity = 0.0;  ///< D
};

TransformedCoefficients transformed_coefficients(const ControlProblem& problem,
                                                 const SpaceTimeGrid& grid, double t,
                                                 std::size_t i, double c);

/// One row of the generator at node i for control value c.
struct GeneratorRow {
    double lower = 0.0;
    double diag = 0.0;
    double upper = 0.0;
    double extra = 0.0;  ///< column 2 for row 0, column n-3 for row n-1
};

GeneratorRow generator_row(const ControlProblem& problem, const SpaceTimeGrid& grid, double t,
                           std::size_t i, double c);

/// Same row, but with the grid's boundary policy replaced.
GeneratorRow generator_row(const ControlProblem& problem, const SpaceTimeGrid& grid, double t,
                           std::size_t i, double c, BoundaryPolicy policy);

/// Stencil branch used by row i under control c: central or upwind, and the
/// drift sign where it selects a coupling. Rows are smooth in c on any interval
/// where the branch is constant, so branch changes mark the kinks.
int stencil_branch(const ControlProblem& problem, const SpaceTimeGrid& grid, double t,
                   std::size_t i, double c);

/// Row applied to a slice: (A_c u)_i.
double apply_row(const GeneratorRow& row, std::span<const double> u, std::size_t i);

TridiagonalOperator assemble_generator(const ControlProblem& problem, const SpaceTimeGrid& grid,
                                       double t, std::span<const double> control_slice);

/**
 * Adjoint on weighted densities. Reflecting and absorbing grids give the exact
 * transpose of assemble_generator; the extrapolating policy keeps the
 * zero-flux (reflecting) boundary rows for densities, so the transpose holds
 * for every interior row.
 */
TridiagonalOperator assemble_adjoint(const ControlProblem& problem, const SpaceTimeGrid& grid,
                                     double t, std::span<const double> control_slice);

}  // namespace varctrl

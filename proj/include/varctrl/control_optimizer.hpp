#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "varctrl/problem.hpp"

namespace varctrl {

/// Space derivatives of lambda at (t, y), in the physical coordinate.
struct HamiltonianSample {
    double t = 0.0;
    double y = 0.0;
    double dlam = 0.0;
    double d2lam = 0.0;
};

/// f(t, y, c) + b(t, y, c) dlam + 1/2 a(t, y, c)^2 d2lam.
double hamiltonian(const ControlProblem& problem, const HamiltonianSample& sample, double c);

/**
 * Finite-difference sample at node i: central differences in the
 * computational coordinate (one-sided at the two end nodes), mapped back to x.
 */
HamiltonianSample sample_at(const SpaceTimeGrid& grid, double t, std::span<const double> lambda,
                            std::size_t i);

/**
 * Discrete Hamiltonian f + (A_c lambda)_i built from the generator row at node
 * i. Away from the boundary, and while the cell Peclet number stays at or below
 * 2, it coincides with hamiltonian(problem, sample_at(...), c).
 */
double node_hamiltonian(const ControlProblem& problem, const SpaceTimeGrid& grid, double t,
                        std::size_t i, std::span<const double> lambda, double c);

/// Magnitude of the terms making up the node Hamiltonian; used to normalize residuals.
double hamiltonian_scale(const ControlProblem& problem, const SpaceTimeGrid& grid, double t,
                         std::size_t i, std::span<const double> lambda, double c);

struct NodeMaximum {
    double control = 0.0;
    double value = 0.0;
    bool interior = false;  ///< strictly inside the bounds
};

/**
 * Maximizes the node Hamiltonian over [c_lo, c_hi]: a coarse scan, augmented
 * with the controls where the stencil switches branch, locates up to three
 * local maxima, golden-section search refines each bracket and a few
 * Newton steps on dH/dc polish the result. When H is flat to round-off the smallest
 * admissible control is returned.
 *
 * Throws SolverError (with the time index) on a non-finite Hamiltonian.
 */
NodeMaximum maximize_node(const ControlProblem& problem, const SpaceTimeGrid& grid,
                          std::size_t k, std::size_t i, std::span<const double> lambda);

/**
 * Normalized stationarity residual at node i: the steepest one-sided ascent
 * slope of H at c, times (c_hi - c_lo) / scale(H). Equals |dH/dc| where H is
 * smooth and vanishes at a concave kink. Returns 0 when c sits on a bound or
 * H is not concave there.
 */
double node_stationarity(const ControlProblem& problem, const SpaceTimeGrid& grid, double t,
                         std::size_t i, std::span<const double> lambda, double c);

struct SliceUpdate {
    std::vector<double> control;
    double stationarity_residual = 0.0;  ///< max over nodes of node_stationarity
};

/// Pointwise argmax of the node Hamiltonian for the multiplier slice of level k.
SliceUpdate update_control_slice(const ControlProblem& problem, const SpaceTimeGrid& grid,
                                 std::size_t k, std::span<const double> lambda);

}  // namespace varctrl

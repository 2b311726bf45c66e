#pragma once

#include <string>
#include <vector>

#include "varctrl/problem.hpp"

namespace varctrl {

/**
 * Mollified Dirac mass at x0: a Gaussian bump in the computational coordinate
 * with standard deviation width_cells * h, converted to a density in x and
 * normalized to unit trapezoid mass. A width of zero (or a bump too narrow to
 * register on any node) degenerates to the linear hat on the two nodes
 * bracketing x0, which keeps the first moment exact.
 *
 * Throws ConfigError when x0 is not strictly inside the grid.
 */
std::vector<double> initial_delta(const SpaceTimeGrid& grid, double x0, double width_cells);

struct KfeSolution {
    GridFunction density;          ///< p(t_k, x_i), a density in x
    std::vector<double> mass;      ///< trapezoid mass per time level
    std::vector<std::string> warnings;
};

/**
 * Forward Kolmogorov equation under a fixed Markov control.
 *
 * Works on weighted densities m = w * p. Step k freezes the adjoint at
 * (t_k, c_k) and solves
 *
 *     (I - theta dt A_k^dagger) m^{k+1} = (I + (1 - theta) dt A_k^dagger) m^k,
 *
 * so the control slice of level k drives the transition from t_k to t_{k+1}.
 * With theta = 1 the scheme is monotone: densities stay nonnegative and, on a
 * reflecting grid, mass is conserved to round-off.
 *
 * Throws SolverError on a singular step; mass drift above config.mass_tol is
 * reported in `warnings`.
 */
KfeSolution solve_kfe(const ControlProblem& problem, const SpaceTimeGrid& grid,
                      const GridFunction& control, const SolverConfig& config);

}  // namespace varctrl

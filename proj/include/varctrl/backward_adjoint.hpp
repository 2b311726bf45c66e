#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "varctrl/problem.hpp"

namespace varctrl {

/// Result of one backward step from level k+1 to level k.
struct BackwardStep {
    std::vector<double> stage;   ///< implicit stage value; equals `lambda` when theta = 1
    std::vector<double> lambda;  ///< multiplier at level k
};

/**
 * One step of the backward equation under the control slice of level k:
 *
 *     (I - theta dt A_k) stage = lambda^{k+1} + dt f_k,
 *     lambda^k = (I + (1 - theta) dt A_k) stage.
 *
 * This is the transpose of the forward KFE step, so <lambda^k, m^k> equals
 * <lambda^{k+1}, m^{k+1}> + dt <f_k, m^{k+1}> to round-off.
 */
BackwardStep backward_step(const ControlProblem& problem, const SpaceTimeGrid& grid,
                           std::size_t k, std::span<const double> control_slice,
                           std::span<const double> next_lambda, double theta);

/// g sampled on the space nodes.
std::vector<double> terminal_slice(const ControlProblem& problem, const SpaceTimeGrid& grid);

/// Multiplier field lambda for a fixed control; lambda(T, .) = g exactly.
GridFunction solve_adjoint(const ControlProblem& problem, const SpaceTimeGrid& grid,
                           const GridFunction& control, const SolverConfig& config);

}  // namespace varctrl

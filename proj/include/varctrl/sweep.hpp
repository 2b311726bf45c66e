#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "varctrl/problem.hpp"

namespace varctrl {

struct SweepRecord {
    double control_change = 0.0;          ///< sup-norm of the last damped update over all levels
    double objective = 0.0;               ///< J after the forward solve of this sweep
    double stationarity_residual = 0.0;   ///< max normalized |dH/dc| at interior controls
    std::size_t policy_iterations = 0;    ///< total inner updates over all levels
};

struct SweepResult {
    GridFunction control;
    GridFunction lambda;
    GridFunction density;
    double objective = 0.0;
    std::size_t iterations = 0;
    std::vector<SweepRecord> history;
    bool converged = false;
    bool objective_monotone = true;  ///< J never decreased between sweeps
    std::size_t tail_nodes = 0;      ///< nodes where the density is numerically zero
    std::vector<std::string> warnings;
};

/**
 * J = sum_k dt <f(t_k, ., c_k), p_{k+1}>_w + <g, p_N>_w, the quadrature that
 * matches the time stepping of solve_kfe (step k carries the reward of level k
 * against the density it produces).
 */
double evaluate_objective(const ControlProblem& problem, const SpaceTimeGrid& grid,
                          const GridFunction& density, const GridFunction& control);

/**
 * Forward-backward sweep for the optimality system.
 *
 * Each sweep runs backward from lambda(T) = g. At every level k the control
 * slice is refreshed by damped policy iteration,
 *
 *     c <- damping * argmax_c H(c; stage(c)) + (1 - damping) * c,
 *
 * where stage(c) is the backward step solved under c, until the update is
 * below sweep_tol (or max_policy_iterations is hit). If the damped update
 * stops contracting (no 10% drop in 8 updates) the level switches to full
 * policy steps (damping 1). A forward KFE solve under
 * the new control and the objective follow. The sweep stops once a full pass
 * changes no control by more than sweep_tol and the stationarity residual is
 * below stationarity_tol; otherwise the result is returned with
 * converged = false after max_sweeps passes.
 */
SweepResult forward_backward_sweep(const ControlProblem& problem, const SpaceTimeGrid& grid,
                                   const SolverConfig& config, const GridFunction& initial_control);

/// Starts from the midpoint of the control bounds.
SweepResult forward_backward_sweep(const ControlProblem& problem, const SpaceTimeGrid& grid,
                                   const SolverConfig& config);

}  // namespace varctrl

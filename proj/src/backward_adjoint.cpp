#include "varctrl/backward_adjoint.hpp"

#include <algorithm>

#include "varctrl/errors.hpp"
#include "varctrl/generator.hpp"

namespace varctrl {

BackwardStep backward_step(const ControlProblem& problem, const SpaceTimeGrid& grid,
                           std::size_t k, std::span<const double> control_slice,
                           std::span<const double> next_lambda, double theta) {
    const std::size_t n = grid.n_x();
    const double dt = grid.time_step();
    const double t = grid.time(k);
    const TridiagonalOperator gen = assemble_generator(problem, grid, t, control_slice);

    BackwardStep step{std::vector<double>(n), std::vector<double>(n)};
    for (std::size_t i = 0; i < n; ++i) {
        step.stage[i] = next_lambda[i] + dt * problem.running_reward(t, grid.node(i), control_slice[i]);
    }
    if (!solve_in_place(gen.shifted_identity(-theta * dt), step.stage)) {
        throw SolverError("backward adjoint: singular tridiagonal system", k);
    }
    if (theta < 1.0) {
        gen.shifted_identity((1.0 - theta) * dt).apply(step.stage, step.lambda);
    } else {
        step.lambda = step.stage;
    }
    return step;
}

std::vector<double> terminal_slice(const ControlProblem& problem, const SpaceTimeGrid& grid) {
    std::vector<double> g(grid.n_x());
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = problem.terminal_reward(grid.node(i));
    return g;
}

GridFunction solve_adjoint(const ControlProblem& problem, const SpaceTimeGrid& grid,
                           const GridFunction& control, const SolverConfig& config) {
    config.validate();
    if (!control.matches(grid)) throw ConfigError("control does not match the grid shape");
    for (double c : control.values()) {
        if (!problem.bounds().contains(c)) throw ConfigError("control leaves [c_lo, c_hi]");
    }

    GridFunction lambda(grid);
    const std::size_t last = grid.n_t() - 1;
    const std::vector<double> g = terminal_slice(problem, grid);
    std::copy(g.begin(), g.end(), lambda.row(last).begin());
    for (std::size_t k = last; k-- > 0;) {
        BackwardStep step =
            backward_step(problem, grid, k, control.row(k), lambda.row(k + 1), config.theta);
        std::copy(step.lambda.begin(), step.lambda.end(), lambda.row(k).begin());
    }
    if (!lambda.all_finite()) throw SolverError("backward adjoint: non-finite multiplier", 0);
    return lambda;
}

}  // namespace varctrl

#include "varctrl/sweep.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "varctrl/backward_adjoint.hpp"
#include "varctrl/control_optimizer.hpp"
#include "varctrl/errors.hpp"
#include "varctrl/forward_kfe.hpp"

namespace varctrl {

double evaluate_objective(const ControlProblem& problem, const SpaceTimeGrid& grid,
                          const GridFunction& density, const GridFunction& control) {
    if (!density.matches(grid) || !control.matches(grid)) {
        throw ConfigError("evaluate_objective: field shape does not match the grid");
    }
    const std::size_t n = grid.n_x();
    const std::size_t last = grid.n_t() - 1;
    const double dt = grid.time_step();

    double running = 0.0;
    for (std::size_t k = 0; k < last; ++k) {
        const double t = grid.time(k);
        double level = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            level += grid.weight(i) * problem.running_reward(t, grid.node(i), control(k, i)) *
                     density(k + 1, i);
        }
        running += dt * level;
    }
    double terminal = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        terminal += grid.weight(i) * problem.terminal_reward(grid.node(i)) * density(last, i);
    }
    return running + terminal;
}

namespace {

constexpr double kContraction = 0.9;
constexpr std::size_t kStallWindow = 8;

double max_stationarity(const ControlProblem& problem, const SpaceTimeGrid& grid, std::size_t k,
                        std::span<const double> stage, std::span<const double> control) {
    double worst = 0.0;
    const double t = grid.time(k);
    for (std::size_t i = 0; i < grid.n_x(); ++i) {
        worst = std::max(worst, node_stationarity(problem, grid, t, i, stage, control[i]));
    }
    return worst;
}

std::size_t count_tail_nodes(const SpaceTimeGrid& grid, const GridFunction& density) {
    std::size_t count = 0;
    for (std::size_t k = 0; k < grid.n_t(); ++k) {
        const auto row = density.row(k);
        double peak = 0.0;
        for (std::size_t i = 0; i < row.size(); ++i) peak = std::max(peak, grid.weight(i) * row[i]);
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (grid.weight(i) * row[i] <= 1e-12 * peak) ++count;
        }
    }
    return count;
}

}  // namespace

SweepResult forward_backward_sweep(const ControlProblem& problem, const SpaceTimeGrid& grid,
                                   const SolverConfig& config, const GridFunction& initial_control) {
    config.validate();
    if (!initial_control.matches(grid)) {
        throw ConfigError("initial control does not match the grid shape");
    }
    for (double c : initial_control.values()) {
        if (!problem.bounds().contains(c)) throw ConfigError("initial control leaves [c_lo, c_hi]");
    }

    const std::size_t n = grid.n_x();
    const std::size_t last = grid.n_t() - 1;
    const double damping = config.damping;

    SweepResult result;
    result.control = initial_control;
    result.lambda = GridFunction(grid);
    const std::vector<double> g = terminal_slice(problem, grid);
    std::copy(g.begin(), g.end(), result.lambda.row(last).begin());

    // The terminal control slice drives no transition; it is the argmax against g.
    const SliceUpdate terminal = update_control_slice(problem, grid, last, g);
    std::copy(terminal.control.begin(), terminal.control.end(), result.control.row(last).begin());

    std::vector<double> c(n);
    for (std::size_t sweep = 1; sweep <= config.max_sweeps; ++sweep) {
        SweepRecord record;
        for (std::size_t k = last; k-- > 0;) {
            const auto old = result.control.row(k);
            std::copy(old.begin(), old.end(), c.begin());
            double delta = 0.0;
            double weight = damping;
            double reference = std::numeric_limits<double>::infinity();
            std::size_t stalled = 0;
            for (std::size_t it = 0; it < config.max_policy_iterations; ++it) {
                const BackwardStep step =
                    backward_step(problem, grid, k, c, result.lambda.row(k + 1), config.theta);
                const SliceUpdate upd = update_control_slice(problem, grid, k, step.stage);
                delta = 0.0;
                for (std::size_t i = 0; i < n; ++i) {
                    const double blended = problem.bounds().clamp(weight * upd.control[i] +
                                                                  (1.0 - weight) * c[i]);
                    delta = std::max(delta, std::abs(blended - c[i]));
                    c[i] = blended;
                }
                ++record.policy_iterations;
                if (delta <= config.sweep_tol) break;
                // A blend of two separated maxima can land in the valley between
                // them and cycle. Once the damped update stops contracting, take
                // full policy steps, which are monotone for the implicit step.
                if (delta < kContraction * reference) {
                    reference = delta;
                    stalled = 0;
                } else if (++stalled >= kStallWindow) {
                    weight = 1.0;
                }
            }
            const BackwardStep step =
                backward_step(problem, grid, k, c, result.lambda.row(k + 1), config.theta);
            std::copy(step.lambda.begin(), step.lambda.end(), result.lambda.row(k).begin());
            std::copy(c.begin(), c.end(), result.control.row(k).begin());
            record.control_change = std::max(record.control_change, delta);
            record.stationarity_residual = std::max(
                record.stationarity_residual, max_stationarity(problem, grid, k, step.stage, c));
        }

        KfeSolution kfe = solve_kfe(problem, grid, result.control, config);
        result.density = std::move(kfe.density);
        for (auto& w : kfe.warnings) result.warnings.push_back(std::move(w));
        record.objective = evaluate_objective(problem, grid, result.density, result.control);
        if (!result.history.empty() && record.objective < result.history.back().objective) {
            result.objective_monotone = false;
        }
        result.history.push_back(record);
        result.iterations = sweep;
        result.objective = record.objective;

        if (record.control_change <= config.sweep_tol &&
            record.stationarity_residual <= config.stationarity_tol) {
            result.converged = true;
            break;
        }
    }
    result.tail_nodes = count_tail_nodes(grid, result.density);
    if (!result.converged) {
        result.warnings.push_back("sweep did not converge within max_sweeps");
    }
    return result;
}

SweepResult forward_backward_sweep(const ControlProblem& problem, const SpaceTimeGrid& grid,
                                   const SolverConfig& config) {
    const ControlBounds& b = problem.bounds();
    return forward_backward_sweep(problem, grid, config, GridFunction(grid, 0.5 * (b.lo + b.hi)));
}

}  // namespace varctrl

#pragma once

/**
 * @file verification.hpp
 * @brief Independent checks: Merton closed forms, Monte Carlo estimate of J,
 * and finite-difference first variations of the discrete Lagrangian.
 */

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "varctrl/problem.hpp"
#include "varctrl/sweep.hpp"
#include "varctrl/tridiagonal.hpp"

namespace varctrl {

/// Closed-form solution of the power-utility Merton problem (zero interest rate).
struct MertonClosedForm {
    double mu = 0.0;
    double sigma = 0.0;
    double q = 0.0;
    double horizon = 0.0;
    double x0 = 0.0;

    double c_star = 0.0;  ///< mu / ((1 - q) sigma^2)
    double Sigma = 0.0;   ///< volatility of optimal wealth, mu / ((1 - q) sigma)
    double m = 0.0;       ///< growth rate of optimal wealth, mu^2 / ((1 - q) sigma^2)
    double J_star = 0.0;  ///< x0^q / q * h(0)

    /// h(t) = exp(q mu^2 (T - t) / (2 (1 - q) sigma^2)); h(T) = 1.
    [[nodiscard]] double h(double t) const;
    /// lambda*(t, y) = h(t) y^q / q.
    [[nodiscard]] double multiplier(double t, double y) const;
    /**
     * Lognormal transition density of optimal wealth at time t > 0. The
     * optional `extra_log_variance` widens log-wealth by an independent
     * Gaussian, which matches a density started from a mollified delta.
     */
    [[nodiscard]] double density(double t, double y, double extra_log_variance = 0.0) const;
};

/// Throws ConfigError on the same inputs make_merton_problem rejects.
MertonClosedForm merton_closed_form(double mu, double sigma, double q, double horizon, double x0);

/// Node range [first, end) covering the middle half of a space mesh of n nodes.
struct NodeRange {
    std::size_t first = 0;
    std::size_t end = 0;
};
NodeRange central_half(std::size_t n);

/// max |c(t_k, x_i) - c_star| over all times and the central half of the nodes.
double control_error(const GridFunction& control, double c_star);

/// max |lambda - lambda*| / |lambda*| over all times and the central half of the nodes.
double multiplier_error(const SpaceTimeGrid& grid, const GridFunction& lambda,
                        const MertonClosedForm& closed_form);

/**
 * Log-variance of the mollified initial delta: (width_cells h)^2 on a log
 * mesh, and the first-order equivalent (width_cells h / x0)^2 on a linear one.
 */
double mollifier_log_variance(const SpaceTimeGrid& grid, double x0, double width_cells);

/// Trapezoid L1 distance between a density slice at time t and the lognormal oracle.
double density_l1_error(const SpaceTimeGrid& grid, std::span<const double> slice, double t,
                        const MertonClosedForm& closed_form, double extra_log_variance);

struct MCEstimate {
    double mean = 0.0;
    double std_error = 0.0;
    std::size_t n_paths = 0;
    std::size_t n_steps = 0;
    std::uint64_t seed = 0;
    std::size_t exploded = 0;  ///< paths dropped for a non-finite state or reward
};

/**
 * Euler-Maruyama estimate of J(c) for a Markov control given on the grid.
 * The control is interpolated bilinearly in (t, x) and clamped at the domain
 * edges. Path i draws from its own generator seeded with (seed, i), so the
 * estimate does not depend on `threads` (0 = hardware concurrency).
 */
MCEstimate monte_carlo_objective(const ControlProblem& problem, const SpaceTimeGrid& grid,
                                 const GridFunction& control, std::size_t n_paths,
                                 std::size_t n_steps, std::uint64_t seed, std::size_t threads = 1);

/// Bilinear (t, x) interpolation of a grid field, clamped to the grid.
double interpolate(const SpaceTimeGrid& grid, const GridFunction& field, double t, double x);

/**
 * Discrete Lagrangian of the time-stepped problem (implicit Euler):
 *
 *   L = J(p, c) - sum_k <lambda^k, (I - dt A_k^dagger) m^{k+1} - m^k>
 *               - <mu, m^0 - w delta>,        m = w p.
 *
 * `kfe_form` evaluates exactly this expression. `adjoint_form` evaluates the
 * summation-by-parts rearrangement in which the generator acts on lambda:
 *
 *   L = sum_{j>=1} <m^j, dt f_{j-1} + lambda^j - lambda^{j-1} + dt A_{j-1} lambda^{j-1}>
 *       + <lambda^0, m^0> - <lambda^N, m^N> + <g, m^N> - <mu, m^0 - w delta>.
 *
 * The two agree to round-off whenever the adjoint is the transpose of the
 * generator (reflecting and absorbing grids).
 */
class DiscreteLagrangian {
public:
    DiscreteLagrangian(const ControlProblem& problem, const SpaceTimeGrid& grid,
                       std::vector<double> mollified_delta);

    [[nodiscard]] double kfe_form(const GridFunction& p, const GridFunction& c,
                                  const GridFunction& lambda, std::span<const double> mu) const;
    [[nodiscard]] double adjoint_form(const GridFunction& p, const GridFunction& c,
                                      const GridFunction& lambda,
                                      std::span<const double> mu) const;

    /// Variant reusing adjoint operators already assembled for `c`.
    [[nodiscard]] double kfe_form(const GridFunction& p, const GridFunction& c,
                                  const GridFunction& lambda, std::span<const double> mu,
                                  const std::vector<TridiagonalOperator>& adjoints) const;
    /// One adjoint operator per transition, assembled under `c`.
    [[nodiscard]] std::vector<TridiagonalOperator> adjoints(const GridFunction& c) const;

    [[nodiscard]] std::span<const double> mollified_delta() const noexcept { return delta_; }

private:
    const ControlProblem& problem_;
    const SpaceTimeGrid& grid_;
    std::vector<double> delta_;
};

struct VariationReport {
    double lagrangian = 0.0;
    double p_residual = 0.0;       ///< max |dL/deps| / |L| along q with q(0, .) = 0
    double c_residual = 0.0;       ///< steepest one-sided ascent along gamma (off-bound nodes)
    double lambda_residual = 0.0;  ///< along nu
    double mu_residual = 0.0;      ///< along pi
    double initial_l1 = 0.0;       ///< L1 distance of p(0, .) to the mollified delta

    [[nodiscard]] double max_residual() const;
};

/**
 * Central finite differences in eps of the discrete Lagrangian along
 * `n_random` seeded smooth perturbations per slot (products of sine modes in
 * time and space). Requires config.theta == 1.
 */
VariationReport check_first_variations(const ControlProblem& problem, const SpaceTimeGrid& grid,
                                       const SweepResult& candidate, std::size_t n_random,
                                       std::uint64_t seed, const SolverConfig& config);

/// Trapezoid L1 distance sum_i w_i |a_i - b_i| between two space slices.
double l1_distance(const SpaceTimeGrid& grid, std::span<const double> a, std::span<const double> b);

}  // namespace varctrl

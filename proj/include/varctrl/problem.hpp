#pragma once

/**
 * @file problem.hpp
 * @brief Problem definition, space-time grid, grid functions and solver settings.
 *
 * A ControlProblem describes a one-dimensional controlled diffusion
 *
 *     dX = b(t, X, c) dt + a(t, X, c) dW,    X_0 = x0,
 *
 * together with the reward J(c) = E[ int_0^T f(t, X, c) dt + g(X_T) ] that the
 * Markov control c(t, x) in [c_lo, c_hi] should maximize.
 *
 * All types here are immutable after construction and safe to share between
 * threads.
 */

#include <cstddef>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace varctrl {

using CoefficientFn = std::function<double(double t, double x, double c)>;
using TerminalFn = std::function<double(double x)>;

struct ControlBounds {
    double lo = 0.0;
    double hi = 1.0;

    [[nodiscard]] double width() const noexcept { return hi - lo; }
    [[nodiscard]] bool contains(double c) const noexcept { return c >= lo && c <= hi; }
    [[nodiscard]] double clamp(double c) const noexcept { return c < lo ? lo : (c > hi ? hi : c); }
};

struct ProblemSpec {
    std::string name;
    CoefficientFn drift;           ///< b(t, x, c), state per unit time
    CoefficientFn diffusion;       ///< a(t, x, c), state per sqrt(time)
    CoefficientFn running_reward;  ///< f(t, x, c), utility per unit time
    TerminalFn terminal_reward;    ///< g(x)
    double horizon = 1.0;          ///< T
    double initial_state = 0.0;    ///< x0
    ControlBounds bounds;
};

class ControlProblem {
public:
    /// Throws ConfigError if T <= 0, c_lo >= c_hi, or a coefficient is missing.
    explicit ControlProblem(ProblemSpec spec);

    [[nodiscard]] const std::string& name() const noexcept { return spec_.name; }
    [[nodiscard]] double horizon() const noexcept { return spec_.horizon; }
    [[nodiscard]] double initial_state() const noexcept { return spec_.initial_state; }
    [[nodiscard]] const ControlBounds& bounds() const noexcept { return spec_.bounds; }

    [[nodiscard]] double drift(double t, double x, double c) const { return spec_.drift(t, x, c); }
    [[nodiscard]] double diffusion(double t, double x, double c) const {
        return spec_.diffusion(t, x, c);
    }
    [[nodiscard]] double running_reward(double t, double x, double c) const {
        return spec_.running_reward(t, x, c);
    }
    [[nodiscard]] double terminal_reward(double x) const { return spec_.terminal_reward(x); }

    /// Same dynamics with f and g multiplied by `factor`.
    [[nodiscard]] ControlProblem with_scaled_rewards(double factor) const;

private:
    ProblemSpec spec_;
};

/// Merton portfolio problem with power utility U(x) = x^q / q and zero interest rate:
/// b = mu c x, a = sigma c x, f = 0, g = U. The default bounds allow up to 10x leverage.
ControlProblem make_merton_problem(double mu, double sigma, double q, double horizon, double x0,
                                   ControlBounds bounds = {0.0, 10.0});

enum class BoundaryPolicy {
    reflecting,     ///< zero flux; conserves density mass
    absorbing,      ///< paths are killed at the boundary nodes
    extrapolating,  ///< one-sided generator rows, zero-flux density
};

std::string to_string(BoundaryPolicy policy);
BoundaryPolicy boundary_policy_from_string(const std::string& text);

struct GridSpec {
    std::size_t n_t = 2;
    std::size_t n_x = 3;
    double x_min = 0.0;
    double x_max = 1.0;
    bool log_space = false;
    BoundaryPolicy boundary = BoundaryPolicy::reflecting;
};

/**
 * Uniform time mesh on [0, T] times a space mesh that is uniform in the
 * computational coordinate xi (xi = x, or xi = log x when log_space is set).
 *
 * Quadrature weights are trapezoid weights in xi times dx/dxi, so
 * sum_i weight(i) * u[i] approximates int u(x) dx.
 */
class SpaceTimeGrid {
public:
    SpaceTimeGrid(double horizon, const GridSpec& spec);

    [[nodiscard]] std::size_t n_t() const noexcept { return spec_.n_t; }
    [[nodiscard]] std::size_t n_x() const noexcept { return spec_.n_x; }
    [[nodiscard]] double x_min() const noexcept { return spec_.x_min; }
    [[nodiscard]] double x_max() const noexcept { return spec_.x_max; }
    [[nodiscard]] bool log_space() const noexcept { return spec_.log_space; }
    [[nodiscard]] BoundaryPolicy boundary() const noexcept { return spec_.boundary; }
    [[nodiscard]] const GridSpec& spec() const noexcept { return spec_; }

    [[nodiscard]] double horizon() const noexcept { return horizon_; }
    [[nodiscard]] double time_step() const noexcept { return dt_; }
    [[nodiscard]] double time(std::size_t k) const noexcept {
        return k + 1 == spec_.n_t ? horizon_ : static_cast<double>(k) * dt_;
    }

    /// Uniform spacing in the computational coordinate.
    [[nodiscard]] double spacing() const noexcept { return h_; }
    [[nodiscard]] std::span<const double> nodes() const noexcept { return x_; }
    [[nodiscard]] std::span<const double> coordinates() const noexcept { return xi_; }
    [[nodiscard]] std::span<const double> weights() const noexcept { return w_; }
    [[nodiscard]] double node(std::size_t i) const noexcept { return x_[i]; }
    [[nodiscard]] double coordinate(std::size_t i) const noexcept { return xi_[i]; }
    [[nodiscard]] double weight(std::size_t i) const noexcept { return w_[i]; }

    /// dx/dxi at node i (1 on a linear mesh, x_i on a log mesh).
    [[nodiscard]] double jacobian(std::size_t i) const noexcept {
        return spec_.log_space ? x_[i] : 1.0;
    }
    [[nodiscard]] double to_coordinate(double x) const;
    [[nodiscard]] bool strictly_inside(double x) const noexcept {
        return x > spec_.x_min && x < spec_.x_max;
    }

private:
    GridSpec spec_;
    double horizon_;
    double dt_;
    double h_;
    std::vector<double> x_;
    std::vector<double> xi_;
    std::vector<double> w_;
};

/// Validates the grid against the problem (x0 must lie strictly inside).
SpaceTimeGrid make_grid(const ControlProblem& problem, const GridSpec& spec);

/**
 * Dense n_t x n_x field sampled on a SpaceTimeGrid, stored row-major by time.
 * Used for the density p, the multiplier lambda and the control c.
 */
class GridFunction {
public:
    GridFunction() = default;
    GridFunction(std::size_t n_t, std::size_t n_x, double fill = 0.0);
    GridFunction(const SpaceTimeGrid& grid, double fill = 0.0)
        : GridFunction(grid.n_t(), grid.n_x(), fill) {}

    [[nodiscard]] std::size_t n_t() const noexcept { return n_t_; }
    [[nodiscard]] std::size_t n_x() const noexcept { return n_x_; }

    [[nodiscard]] std::span<double> row(std::size_t k) noexcept {
        return {values_.data() + k * n_x_, n_x_};
    }
    [[nodiscard]] std::span<const double> row(std::size_t k) const noexcept {
        return {values_.data() + k * n_x_, n_x_};
    }
    [[nodiscard]] double& operator()(std::size_t k, std::size_t i) noexcept {
        return values_[k * n_x_ + i];
    }
    [[nodiscard]] double operator()(std::size_t k, std::size_t i) const noexcept {
        return values_[k * n_x_ + i];
    }
    [[nodiscard]] std::span<const double> values() const noexcept { return values_; }

    [[nodiscard]] bool matches(const SpaceTimeGrid& grid) const noexcept {
        return n_t_ == grid.n_t() && n_x_ == grid.n_x();
    }
    [[nodiscard]] bool all_finite() const noexcept;

    bool operator==(const GridFunction&) const = default;

private:
    std::size_t n_t_ = 0;
    std::size_t n_x_ = 0;
    std::vector<double> values_;
};

/// Trapezoid mass sum_i w_i u_i of one space slice.
double slice_mass(const SpaceTimeGrid& grid, std::span<const double> slice);

/// Sup-norm of the difference of two fields of the same shape.
double max_abs_difference(const GridFunction& a, const GridFunction& b);

struct SolverConfig {
    double sweep_tol = 1e-7;
    std::size_t max_sweeps = 20;
    std::size_t max_policy_iterations = 100;  ///< per time level, inside one sweep
    double damping = 0.5;                     ///< weight of the fresh control in the blend
    double theta = 1.0;                       ///< 1 = implicit Euler, 1/2 = Crank-Nicolson
    double delta_width_cells = 2.0;           ///< mollifier standard deviation in cells
    double mass_tol = 1e-8;
    double stationarity_tol = 1e-6;
    double variation_tol = 1e-3;

    /// Throws ConfigError when a field is out of range.
    void validate() const;
};

/// Named problem factories. "merton" is always registered.
class ProblemCatalog {
public:
    using Parameters = std::map<std::string, double>;
    using Factory = std::function<ControlProblem(const Parameters&)>;

    ProblemCatalog();

    void add(const std::string& name, Factory factory);
    [[nodiscard]] bool contains(const std::string& name) const;
    [[nodiscard]] std::vector<std::string> names() const;
    [[nodiscard]] ControlProblem make(const std::string& name, const Parameters& parameters) const;

private:
    std::map<std::string, Factory> factories_;
};

}  // namespace varctrl

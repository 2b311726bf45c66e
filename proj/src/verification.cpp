#include "varctrl/verification.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <thread>

#include "varctrl/errors.hpp"
#include "varctrl/forward_kfe.hpp"
#include "varctrl/generator.hpp"

namespace varctrl {

double MertonClosedForm::h(double t) const {
    return std::exp(q * mu * mu * (horizon - t) / (2.0 * (1.0 - q) * sigma * sigma));
}

double MertonClosedForm::multiplier(double t, double y) const {
    return h(t) * std::pow(y, q) / q;
}

double MertonClosedForm::density(double t, double y, double extra_log_variance) const {
    const double var = Sigma * Sigma * t + extra_log_variance;
    if (!(var > 0.0)) throw ConfigError("lognormal density needs a positive log-variance");
    if (!(y > 0.0)) return 0.0;
    const double mean = std::log(x0) + (m - 0.5 * Sigma * Sigma) * t;
    const double z = std::log(y) - mean;
    return std::exp(-z * z / (2.0 * var)) / (y * std::sqrt(2.0 * std::numbers::pi * var));
}

MertonClosedForm merton_closed_form(double mu, double sigma, double q, double horizon, double x0) {
    if (!std::isfinite(mu)) throw ConfigError("merton: mu must be finite");
    if (!(sigma > 0.0) || !std::isfinite(sigma)) throw ConfigError("merton: sigma must be positive");
    if (!(q < 1.0) || q == 0.0) throw ConfigError("merton: q must satisfy q < 1, q != 0");
    if (!(horizon > 0.0)) throw ConfigError("merton: horizon must be positive");
    if (!(x0 > 0.0)) throw ConfigError("merton: x0 must be positive");

    MertonClosedForm cf;
    cf.mu = mu;
    cf.sigma = sigma;
    cf.q = q;
    cf.horizon = horizon;
    cf.x0 = x0;
    cf.c_star = mu / ((1.0 - q) * sigma * sigma);
    cf.Sigma = mu / ((1.0 - q) * sigma);
    cf.m = mu * mu / ((1.0 - q) * sigma * sigma);
    cf.J_star = std::pow(x0, q) / q * cf.h(0.0);
    return cf;
}

NodeRange central_half(std::size_t n) {
    const std::size_t quarter = n / 4;
    return {quarter, n - quarter};
}

double control_error(const GridFunction& control, double c_star) {
    const NodeRange r = central_half(control.n_x());
    double worst = 0.0;
    for (std::size_t k = 0; k < control.n_t(); ++k) {
        for (std::size_t i = r.first; i < r.end; ++i) {
            worst = std::max(worst, std::abs(control(k, i) - c_star));
        }
    }
    return worst;
}

double multiplier_error(const SpaceTimeGrid& grid, const GridFunction& lambda,
                        const MertonClosedForm& closed_form) {
    if (!lambda.matches(grid)) throw ConfigError("multiplier_error: field does not match the grid");
    const NodeRange r = central_half(grid.n_x());
    double worst = 0.0;
    for (std::size_t k = 0; k < grid.n_t(); ++k) {
        for (std::size_t i = r.first; i < r.end; ++i) {
            const double exact = closed_form.multiplier(grid.time(k), grid.node(i));
            worst = std::max(worst, std::abs(lambda(k, i) - exact) / std::abs(exact));
        }
    }
    return worst;
}

double mollifier_log_variance(const SpaceTimeGrid& grid, double x0, double width_cells) {
    const double s = width_cells * grid.spacing();
    return grid.log_space() ? s * s : (s / x0) * (s / x0);
}

double density_l1_error(const SpaceTimeGrid& grid, std::span<const double> slice, double t,
                        const MertonClosedForm& closed_form, double extra_log_variance) {
    if (slice.size() != grid.n_x()) throw ConfigError("density_l1_error: slice length mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < grid.n_x(); ++i) {
        const double exact = closed_form.density(t, grid.node(i), extra_log_variance);
        s += grid.weight(i) * std::abs(slice[i] - exact);
    }
    return s;
}

double interpolate(const SpaceTimeGrid& grid, const GridFunction& field, double t, double x) {
    const std::size_t n = grid.n_x();
    const double s = std::clamp(t / grid.time_step(), 0.0, static_cast<double>(grid.n_t() - 1));
    const std::size_t k0 = std::min(static_cast<std::size_t>(s), grid.n_t() - 2);
    const double ft = std::clamp(s - static_cast<double>(k0), 0.0, 1.0);

    const double xc = std::clamp(x, grid.x_min(), grid.x_max());
    const double u = (grid.to_coordinate(xc) - grid.coordinate(0)) / grid.spacing();
    const std::size_t i0 =
        std::min(static_cast<std::size_t>(std::max(u, 0.0)), n - 2);
    const double xl = grid.node(i0);
    const double xr = grid.node(i0 + 1);
    const double fx = std::clamp((xc - xl) / (xr - xl), 0.0, 1.0);

    const double a = (1.0 - fx) * field(k0, i0) + fx * field(k0, i0 + 1);
    const double b = (1.0 - fx) * field(k0 + 1, i0) + fx * field(k0 + 1, i0 + 1);
    return (1.0 - ft) * a + ft * b;
}

MCEstimate monte_carlo_objective(const ControlProblem& problem, const SpaceTimeGrid& grid,
                                 const GridFunction& control, std::size_t n_paths,
                                 std::size_t n_steps, std::uint64_t seed, std::size_t threads) {
    if (!control.matches(grid)) throw ConfigError("monte carlo: control does not match the grid");
    if (n_paths < 2) throw ConfigError("monte carlo: need at least two paths");
    if (n_steps < 1) throw ConfigError("monte carlo: need at least one time step");

    const double dt = problem.horizon() / static_cast<double>(n_steps);
    const double sqrt_dt = std::sqrt(dt);
    std::vector<double> payoff(n_paths);

    auto run_path = [&](std::size_t path) {
        std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                          static_cast<std::uint32_t>(path),
                          static_cast<std::uint32_t>(static_cast<std::uint64_t>(path) >> 32)};
        std::mt19937_64 rng(seq);
        std::normal_distribution<double> normal;
        double x = problem.initial_state();
        double running = 0.0;
        for (std::size_t j = 0; j < n_steps && std::isfinite(x); ++j) {
            const double t = static_cast<double>(j) * dt;
            const double c = interpolate(grid, control, t, x);
            running += problem.running_reward(t, x, c) * dt;
            x += problem.drift(t, x, c) * dt + problem.diffusion(t, x, c) * sqrt_dt * normal(rng);
        }
        return std::isfinite(x) ? running + problem.terminal_reward(x) : x;
    };

    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    threads = std::min(threads, n_paths);
    if (threads <= 1) {
        for (std::size_t p = 0; p < n_paths; ++p) payoff[p] = run_path(p);
    } else {
        std::vector<std::jthread> pool;
        pool.reserve(threads);
        for (std::size_t w = 0; w < threads; ++w) {
            pool.emplace_back([&, w] {
                for (std::size_t p = w; p < n_paths; p += threads) payoff[p] = run_path(p);
            });
        }
    }

    MCEstimate est;
    est.n_paths = n_paths;
    est.n_steps = n_steps;
    est.seed = seed;
    double sum = 0.0;
    std::size_t valid = 0;
    for (double v : payoff) {
        if (!std::isfinite(v)) {
            ++est.exploded;
            continue;
        }
        sum += v;
        ++valid;
    }
    if (valid < 2) throw SolverError("monte carlo: fewer than two finite paths", 0);
    est.mean = sum / static_cast<double>(valid);
    double ss = 0.0;
    for (double v : payoff) {
        if (std::isfinite(v)) ss += (v - est.mean) * (v - est.mean);
    }
    est.std_error = std::sqrt(ss / static_cast<double>(valid - 1) / static_cast<double>(valid));
    return est;
}

// ---------------------------------------------------------------------------

DiscreteLagrangian::DiscreteLagrangian(const ControlProblem& problem, const SpaceTimeGrid& grid,
                                       std::vector<double> mollified_delta)
    : problem_(problem), grid_(grid), delta_(std::move(mollified_delta)) {
    if (delta_.size() != grid.n_x()) throw ConfigError("mollified delta has the wrong length");
}

std::vector<TridiagonalOperator> DiscreteLagrangian::adjoints(const GridFunction& c) const {
    std::vector<TridiagonalOperator> ops;
    ops.reserve(grid_.n_t() - 1);
    for (std::size_t k = 0; k + 1 < grid_.n_t(); ++k) {
        ops.push_back(assemble_adjoint(problem_, grid_, grid_.time(k), c.row(k)));
    }
    return ops;
}

namespace {

void check_shapes(const SpaceTimeGrid& grid, const GridFunction& p, const GridFunction& c,
                  const GridFunction& lambda, std::span<const double> mu) {
    if (!p.matches(grid) || !c.matches(grid) || !lambda.matches(grid) || mu.size() != grid.n_x()) {
        throw ConfigError("lagrangian: argument shapes do not match the grid");
    }
}

double initial_term(const SpaceTimeGrid& grid, std::span<const double> p0,
                    std::span<const double> delta, std::span<const double> mu) {
    double s = 0.0;
    for (std::size_t i = 0; i < grid.n_x(); ++i) s += mu[i] * grid.weight(i) * (p0[i] - delta[i]);
    return s;
}

}  // namespace

double DiscreteLagrangian::kfe_form(const GridFunction& p, const GridFunction& c,
                                    const GridFunction& lambda, std::span<const double> mu) const {
    check_shapes(grid_, p, c, lambda, mu);
    return kfe_form(p, c, lambda, mu, adjoints(c));
}

double DiscreteLagrangian::kfe_form(const GridFunction& p, const GridFunction& c,
                                    const GridFunction& lambda, std::span<const double> mu,
                                    const std::vector<TridiagonalOperator>& adjoints) const {
    check_shapes(grid_, p, c, lambda, mu);
    const std::size_t n = grid_.n_x();
    const double dt = grid_.time_step();
    std::vector<double> m_next(n);
    std::vector<double> a_m(n);

    double constraint = 0.0;
    for (std::size_t k = 0; k + 1 < grid_.n_t(); ++k) {
        for (std::size_t i = 0; i < n; ++i) m_next[i] = grid_.weight(i) * p(k + 1, i);
        adjoints[k].apply(m_next, a_m);
        for (std::size_t i = 0; i < n; ++i) {
            const double residual = m_next[i] - dt * a_m[i] - grid_.weight(i) * p(k, i);
            constraint += lambda(k, i) * residual;
        }
    }
    return evaluate_objective(problem_, grid_, p, c) - constraint -
           initial_term(grid_, p.row(0), delta_, mu);
}

double DiscreteLagrangian::adjoint_form(const GridFunction& p, const GridFunction& c,
                                        const GridFunction& lambda,
                                        std::span<const double> mu) const {
    check_shapes(grid_, p, c, lambda, mu);
    const std::size_t n = grid_.n_x();
    const std::size_t last = grid_.n_t() - 1;
    const double dt = grid_.time_step();
    std::vector<double> a_lam(n);

    double total = 0.0;
    for (std::size_t j = 1; j <= last; ++j) {
        const double t = grid_.time(j - 1);
        const TridiagonalOperator gen = assemble_generator(problem_, grid_, t, c.row(j - 1));
        gen.apply(lambda.row(j - 1), a_lam);
        for (std::size_t i = 0; i < n; ++i) {
            const double f = problem_.running_reward(t, grid_.node(i), c(j - 1, i));
            const double integrand =
                dt * f + lambda(j, i) - lambda(j - 1, i) + dt * a_lam[i];
            total += grid_.weight(i) * p(j, i) * integrand;
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        const double w = grid_.weight(i);
        total += w * lambda(0, i) * p(0, i);
        total += w * (problem_.terminal_reward(grid_.node(i)) - lambda(last, i)) * p(last, i);
    }
    return total - initial_term(grid_, p.row(0), delta_, mu);
}

// ---------------------------------------------------------------------------

double VariationReport::max_residual() const {
    return std::max({p_residual, c_residual, lambda_residual, mu_residual});
}

double l1_distance(const SpaceTimeGrid& grid, std::span<const double> a,
                   std::span<const double> b) {
    if (a.size() != grid.n_x() || b.size() != grid.n_x()) {
        throw ConfigError("l1_distance: slice length does not match the grid");
    }
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += grid.weight(i) * std::abs(a[i] - b[i]);
    return s;
}

namespace {

constexpr int kModes = 3;

/// Random combination of sin((a - 1/2) pi tau) sin(b pi s) modes, a, b in 1..3,
/// where tau = t / T and s is the normalized computational coordinate. Vanishes
/// at t = 0 and at both boundary nodes but not at t = T, so the terminal
/// condition is probed too.
class SineField {
public:
    explicit SineField(std::mt19937_64& rng) {
        std::normal_distribution<double> normal;
        for (auto& row : coef_) {
            for (double& v : row) v = normal(rng);
        }
    }

    [[nodiscard]] GridFunction sample(const SpaceTimeGrid& grid, bool time_factor) const {
        GridFunction out(grid);
        const double span = grid.coordinate(grid.n_x() - 1) - grid.coordinate(0);
        for (std::size_t k = 0; k < grid.n_t(); ++k) {
            const double tau = grid.time(k) / grid.horizon();
            for (std::size_t i = 0; i < grid.n_x(); ++i) {
                const double s = (grid.coordinate(i) - grid.coordinate(0)) / span;
                out(k, i) = value(tau, s, time_factor);
            }
        }
        // Pin the boundary nodes exactly; sin(b pi) is only zero to round-off.
        for (std::size_t k = 0; k < grid.n_t(); ++k) {
            out(k, 0) = 0.0;
            out(k, grid.n_x() - 1) = 0.0;
        }
        return out;
    }

private:
    [[nodiscard]] double value(double tau, double s, bool time_factor) const {
        double v = 0.0;
        for (int a = 0; a < kModes; ++a) {
            const double ft = time_factor ? std::sin((a + 0.5) * std::numbers::pi * tau) : 1.0;
            for (int b = 0; b < kModes; ++b) {
                v += coef_[a][b] * ft * std::sin((b + 1) * std::numbers::pi * s);
            }
        }
        return v;
    }

    double coef_[kModes][kModes]{};
};

GridFunction axpy(const GridFunction& base, double eps, const GridFunction& dir) {
    GridFunction out = base;
    for (std::size_t k = 0; k < base.n_t(); ++k) {
        auto row = out.row(k);
        const auto d = dir.row(k);
        for (std::size_t i = 0; i < row.size(); ++i) row[i] += eps * d[i];
    }
    return out;
}

}  // namespace

VariationReport check_first_variations(const ControlProblem& problem, const SpaceTimeGrid& grid,
                                       const SweepResult& candidate, std::size_t n_random,
                                       std::uint64_t seed, const SolverConfig& config) {
    config.validate();
    if (config.theta != 1.0) {
        throw ConfigError("first-variation check requires the implicit scheme (theta = 1)");
    }
    if (n_random == 0) throw ConfigError("first-variation check needs at least one perturbation");
    const GridFunction& p = candidate.density;
    const GridFunction& c = candidate.control;
    const GridFunction& lambda = candidate.lambda;
    if (!p.matches(grid) || !c.matches(grid) || !lambda.matches(grid)) {
        throw ConfigError("first-variation check: candidate does not match the grid");
    }

    const std::size_t n = grid.n_x();
    const DiscreteLagrangian lag(
        problem, grid, initial_delta(grid, problem.initial_state(), config.delta_width_cells));
    const std::vector<double> mu(n, 0.0);
    const auto ops = lag.adjoints(c);

    VariationReport report;
    report.lagrangian = lag.kfe_form(p, c, lambda, mu, ops);
    report.initial_l1 = l1_distance(grid, p.row(0), lag.mollified_delta());
    const double norm = std::max(std::abs(report.lagrangian), 1e-300);

    const ControlBounds& b = problem.bounds();
    const double width = b.width();
    const double eps = 1e-4;
    const double eps_c = 1e-6 * width;

    std::mt19937_64 rng(seed);
    for (std::size_t r = 0; r < n_random; ++r) {
        // Density: q(0, .) = 0 keeps the initial condition in place.
        const GridFunction q = SineField(rng).sample(grid, true);
        const double dp = (lag.kfe_form(axpy(p, eps, q), c, lambda, mu, ops) -
                           lag.kfe_form(axpy(p, -eps, q), c, lambda, mu, ops)) /
                          (2.0 * eps);
        report.p_residual = std::max(report.p_residual, std::abs(dp) / norm);

        // Control: only nodes strictly off the bounds may move in both directions.
        GridFunction gamma = SineField(rng).sample(grid, false);
        for (std::size_t k = 0; k < grid.n_t(); ++k) {
            for (std::size_t i = 0; i < n; ++i) {
                const double ci = c(k, i);
                if (ci - b.lo <= 1e-6 * width || b.hi - ci <= 1e-6 * width) gamma(k, i) = 0.0;
            }
        }
        // One-sided slopes in both directions: the control slot is stationary
        // when neither direction increases L (this also covers kinks of the
        // upwind switch, where the two-sided derivative does not exist).
        const double l_plus = lag.kfe_form(p, axpy(c, eps_c, gamma), lambda, mu);
        const double l_minus = lag.kfe_form(p, axpy(c, -eps_c, gamma), lambda, mu);
        const double ascent =
            std::max({0.0, l_plus - report.lagrangian, l_minus - report.lagrangian}) / eps_c;
        report.c_residual = std::max(report.c_residual, ascent * width / norm);

        const GridFunction nu = SineField(rng).sample(grid, false);
        const double dl = (lag.kfe_form(p, c, axpy(lambda, eps, nu), mu, ops) -
                           lag.kfe_form(p, c, axpy(lambda, -eps, nu), mu, ops)) /
                          (2.0 * eps);
        report.lambda_residual = std::max(report.lambda_residual, std::abs(dl) / norm);

        const GridFunction pi_field = SineField(rng).sample(grid, false);
        std::vector<double> mu_plus(n);
        std::vector<double> mu_minus(n);
        for (std::size_t i = 0; i < n; ++i) {
            mu_plus[i] = eps * pi_field(0, i);
            mu_minus[i] = -eps * pi_field(0, i);
        }
        const double dm = (lag.kfe_form(p, c, lambda, mu_plus, ops) -
                           lag.kfe_form(p, c, lambda, mu_minus, ops)) /
                          (2.0 * eps);
        report.mu_residual = std::max(report.mu_residual, std::abs(dm) / norm);
    }
    return report;
}

}  // namespace varctrl

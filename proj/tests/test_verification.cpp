#include "doctest.h"

#include <cmath>
#include <numbers>
#include <random>

#include "support/random_problems.hpp"
#include "varctrl/errors.hpp"
#include "varctrl/forward_kfe.hpp"
#include "varctrl/sweep.hpp"
#include "varctrl/verification.hpp"

using namespace varctrl;

namespace {

// Trapezoid in log y of a function of y over a wide window around x0.
template <class F>
double log_quadrature(F&& f, double lo, double hi, std::size_t n) {
    const double a = std::log(lo);
    const double h = (std::log(hi) - a) / static_cast<double>(n);
    double s = 0.0;
    for (std::size_t j = 0; j <= n; ++j) {
        const double y = std::exp(a + h * static_cast<double>(j));
        s += (j == 0 || j == n ? 0.5 : 1.0) * f(y) * y;
    }
    return s * h;
}

ControlProblem constant_problem(double drift, double diffusion) {
    ProblemSpec spec;
    spec.name = "constant";
    spec.drift = [drift](double, double, double) { return drift; };
    spec.diffusion = [diffusion](double, double, double) { return diffusion; };
    spec.running_reward = [](double, double, double) { return 1.0; };
    spec.terminal_reward = [](double x) { return x * x; };
    spec.horizon = 2.0;
    spec.initial_state = 0.5;
    spec.bounds = {0.0, 1.0};
    return ControlProblem(spec);
}

struct MertonCase {
    ControlProblem problem;
    SpaceTimeGrid grid;
    SolverConfig config;
    SweepResult result;
};

MertonCase converged_merton(std::size_t n) {
    ControlProblem p = make_merton_problem(0.1, 0.2, 0.5, 1.0, 1.0);
    SpaceTimeGrid g = make_grid(p, {n, n, 0.2, 5.0, true, BoundaryPolicy::reflecting});
    const SolverConfig cfg;
    SweepResult r = forward_backward_sweep(p, g, cfg);
    return {std::move(p), std::move(g), cfg, std::move(r)};
}

}  // namespace

TEST_CASE("Merton closed form at the reference parameters") {
    const MertonClosedForm cf = merton_closed_form(0.1, 0.2, 0.5, 1.0, 1.0);
    CHECK(cf.c_star == doctest::Approx(5.0).epsilon(1e-14));
    CHECK(cf.Sigma == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(cf.m == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(cf.J_star == doctest::Approx(2.0 * std::exp(0.125)).epsilon(1e-14));
    CHECK(cf.h(1.0) == 1.0);
    CHECK(cf.multiplier(1.0, 4.0) == doctest::Approx(4.0).epsilon(1e-14));

    const MertonClosedForm neg = merton_closed_form(0.05, 0.3, -1.0, 2.0, 1.0);
    CHECK(neg.c_star == doctest::Approx(0.05 / (2.0 * 0.09)).epsilon(1e-14));
    CHECK(neg.c_star == doctest::Approx(0.277778).epsilon(1e-6));
    CHECK(neg.J_star < 0.0);
}

TEST_CASE("closed-form multiplier satisfies the Bellman equation at c_star") {
    const MertonClosedForm cf = merton_closed_form(0.07, 0.25, 0.3, 1.5, 2.0);
    const double d = 1e-4;
    for (double t : {0.0, 0.4, 1.1}) {
        for (double y : {0.5, 1.0, 3.0}) {
            const double lt = (cf.multiplier(t + d, y) - cf.multiplier(t - d, y)) / (2.0 * d);
            const double ly = (cf.multiplier(t, y + d) - cf.multiplier(t, y - d)) / (2.0 * d);
            const double lyy = (cf.multiplier(t, y + d) - 2.0 * cf.multiplier(t, y) +
                                cf.multiplier(t, y - d)) / (d * d);
            auto H = [&](double c) {
                return c * cf.mu * y * ly + 0.5 * c * c * cf.sigma * cf.sigma * y * y * lyy;
            };
            CHECK(lt + H(cf.c_star) == doctest::Approx(0.0).scale(std::abs(lt)).epsilon(1e-6));
            CHECK(H(cf.c_star) >= H(cf.c_star + 0.1));
            CHECK(H(cf.c_star) >= H(cf.c_star - 0.1));
        }
    }
}

TEST_CASE("lognormal density has unit mass and the optimal-wealth mean") {
    const MertonClosedForm cf = merton_closed_form(0.1, 0.2, 0.5, 1.0, 1.0);
    for (double t : {0.25, 1.0}) {
        for (double extra : {0.0, 0.01}) {
            auto pdf = [&](double y) { return cf.density(t, y, extra); };
            CHECK(log_quadrature(pdf, 1e-6, 1e6, 20000) == doctest::Approx(1.0).epsilon(1e-9));
            const double mean = log_quadrature([&](double y) { return y * pdf(y); }, 1e-6, 1e6, 20000);
            CHECK(mean == doctest::Approx(std::exp(cf.m * t + 0.5 * extra)).epsilon(1e-8));
        }
    }
    CHECK(cf.density(0.5, 0.0) == 0.0);
    CHECK(cf.density(0.5, -1.0) == 0.0);
    CHECK_THROWS_AS((void)cf.density(0.0, 1.0), ConfigError);
}

TEST_CASE("closed form rejects invalid parameters") {
    CHECK_THROWS_AS((void)merton_closed_form(0.1, 0.0, 0.5, 1.0, 1.0), ConfigError);
    CHECK_THROWS_AS((void)merton_closed_form(0.1, 0.2, 0.0, 1.0, 1.0), ConfigError);
    CHECK_THROWS_AS((void)merton_closed_form(0.1, 0.2, 1.0, 1.0, 1.0), ConfigError);
    CHECK_THROWS_AS((void)merton_closed_form(0.1, 0.2, 0.5, 0.0, 1.0), ConfigError);
    CHECK_THROWS_AS((void)merton_closed_form(0.1, 0.2, 0.5, 1.0, -1.0), ConfigError);
    CHECK_THROWS_AS((void)merton_closed_form(NAN, 0.2, 0.5, 1.0, 1.0), ConfigError);
}

TEST_CASE("central half and error norms") {
    CHECK(central_half(8).first == 2);
    CHECK(central_half(8).end == 6);
    CHECK(central_half(10).first == 2);
    CHECK(central_half(10).end == 8);

    GridFunction c(3, 8, 5.0);
    c(1, 0) = 100.0;  // outside the central half
    c(2, 7) = -100.0;
    c(1, 3) = 5.25;
    CHECK(control_error(c, 5.0) == doctest::Approx(0.25));

    const ControlProblem p = make_merton_problem(0.1, 0.2, 0.5, 1.0, 1.0);
    const SpaceTimeGrid g = make_grid(p, {5, 21, 0.2, 5.0, true, BoundaryPolicy::reflecting});
    const MertonClosedForm cf = merton_closed_form(0.1, 0.2, 0.5, 1.0, 1.0);
    GridFunction lam(g);
    for (std::size_t k = 0; k < g.n_t(); ++k) {
        for (std::size_t i = 0; i < g.n_x(); ++i) lam(k, i) = cf.multiplier(g.time(k), g.node(i));
    }
    CHECK(multiplier_error(g, lam, cf) == 0.0);
    lam(2, 10) *= 1.01;
    CHECK(multiplier_error(g, lam, cf) == doctest::Approx(0.01));
    CHECK_THROWS_AS((void)multiplier_error(g, GridFunction(2, 2), cf), ConfigError);

    CHECK(mollifier_log_variance(g, 1.0, 2.0) == doctest::Approx(std::pow(2.0 * g.spacing(), 2)));
    const SpaceTimeGrid lin = make_grid(p, {5, 21, 0.0, 4.0, false, BoundaryPolicy::reflecting});
    CHECK(mollifier_log_variance(lin, 2.0, 1.0) == doctest::Approx(std::pow(0.2 / 2.0, 2)));

    const std::vector<double> a(g.n_x(), 1.0);
    const std::vector<double> b(g.n_x(), 0.5);
    CHECK(l1_distance(g, a, b) == doctest::Approx(0.5 * slice_mass(g, a)).epsilon(1e-15));
    CHECK(l1_distance(g, a, a) == 0.0);
}

TEST_CASE("density L1 error against its own oracle slice is zero") {
    const ControlProblem p = make_merton_problem(0.1, 0.2, 0.5, 1.0, 1.0);
    const SpaceTimeGrid g = make_grid(p, {5, 101, 0.01, 100.0, true, BoundaryPolicy::reflecting});
    const MertonClosedForm cf = merton_closed_form(0.1, 0.2, 0.5, 1.0, 1.0);
    std::vector<double> slice(g.n_x());
    for (std::size_t i = 0; i < g.n_x(); ++i) slice[i] = cf.density(1.0, g.node(i), 0.0);
    CHECK(density_l1_error(g, slice, 1.0, cf, 0.0) == 0.0);
    for (double& v : slice) v *= 1.1;
    CHECK(density_l1_error(g, slice, 1.0, cf, 0.0) == doctest::Approx(0.1).epsilon(1e-3));
}

TEST_CASE("interpolation reproduces bilinear fields and clamps outside") {
    const ControlProblem p = constant_problem(0.0, 0.3);
    const SpaceTimeGrid g = make_grid(p, {9, 13, -1.0, 2.0, false, BoundaryPolicy::reflecting});
    auto f = [](double t, double x) { return 1.0 + 2.0 * t - 0.5 * x + 0.75 * t * x; };
    GridFunction field(g);
    for (std::size_t k = 0; k < g.n_t(); ++k) {
        for (std::size_t i = 0; i < g.n_x(); ++i) field(k, i) = f(g.time(k), g.node(i));
    }
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> ut(0.0, 2.0);
    std::uniform_real_distribution<double> ux(-1.0, 2.0);
    for (int trial = 0; trial < 200; ++trial) {
        const double t = ut(rng);
        const double x = ux(rng);
        CHECK(interpolate(g, field, t, x) == doctest::Approx(f(t, x)).epsilon(1e-12));
    }
    CHECK(interpolate(g, field, 0.7, -5.0) == doctest::Approx(f(0.7, -1.0)).epsilon(1e-12));
    CHECK(interpolate(g, field, 3.0, 9.0) == doctest::Approx(f(2.0, 2.0)).epsilon(1e-12));
}

TEST_CASE("Monte Carlo without noise is exact") {
    // x(t) = x0 + t, J = T + (x0 + T)^2 for f = 1, g = x^2.
    const ControlProblem p = constant_problem(1.0, 0.0);
    const SpaceTimeGrid g = make_grid(p, {5, 11, -1.0, 4.0, false, BoundaryPolicy::reflecting});
    const MCEstimate est = monte_carlo_objective(p, g, GridFunction(g, 0.5), 10, 50, 1);
    CHECK(est.mean == doctest::Approx(2.0 + 2.5 * 2.5).epsilon(1e-12));
    CHECK(est.std_error == doctest::Approx(0.0).scale(1.0).epsilon(1e-12));
    CHECK(est.exploded == 0);
    CHECK(est.n_paths == 10);
    CHECK(est.n_steps == 50);
}

TEST_CASE("Monte Carlo is seeded and independent of the thread count") {
    const ControlProblem p = constant_problem(0.0, 0.5);
    const SpaceTimeGrid g = make_grid(p, {5, 11, -3.0, 3.0, false, BoundaryPolicy::reflecting});
    const GridFunction c(g, 0.5);
    const MCEstimate a = monte_carlo_objective(p, g, c, 4000, 20, 11, 1);
    const MCEstimate b = monte_carlo_objective(p, g, c, 4000, 20, 11, 4);
    const MCEstimate again = monte_carlo_objective(p, g, c, 4000, 20, 11, 1);
    const MCEstimate other = monte_carlo_objective(p, g, c, 4000, 20, 12, 1);
    CHECK(a.mean == b.mean);
    CHECK(a.std_error == b.std_error);
    CHECK(a.mean == again.mean);
    CHECK(a.mean != other.mean);
    // Brownian motion: E[x_T^2] = x0^2 + s^2 T, plus T from the unit running reward.
    const double exact = 2.0 + 0.25 + 0.25 * 2.0;
    CHECK(std::abs(a.mean - exact) <= 4.0 * a.std_error);
    CHECK(std::abs(other.mean - exact) <= 4.0 * other.std_error);
}

TEST_CASE("Monte Carlo under the optimal Merton control matches the closed form") {
    const ControlProblem p = make_merton_problem(0.1, 0.2, 0.5, 1.0, 1.0);
    const SpaceTimeGrid g = make_grid(p, {5, 11, 0.2, 5.0, true, BoundaryPolicy::reflecting});
    const MertonClosedForm cf = merton_closed_form(0.1, 0.2, 0.5, 1.0, 1.0);
    const MCEstimate est = monte_carlo_objective(p, g, GridFunction(g, cf.c_star), 20000, 200, 5);
    CHECK(est.exploded == 0);
    CHECK(std::abs(est.mean - cf.J_star) <= 3.0 * est.std_error);
}

TEST_CASE("Monte Carlo rejects bad arguments") {
    const ControlProblem p = constant_problem(0.0, 0.5);
    const SpaceTimeGrid g = make_grid(p, {5, 11, -3.0, 3.0, false, BoundaryPolicy::reflecting});
    CHECK_THROWS_AS((void)monte_carlo_objective(p, g, GridFunction(g), 1, 10, 1), ConfigError);
    CHECK_THROWS_AS((void)monte_carlo_objective(p, g, GridFunction(g), 10, 0, 1), ConfigError);
    CHECK_THROWS_AS((void)monte_carlo_objective(p, g, GridFunction(2, 2), 10, 10, 1), ConfigError);
}

TEST_CASE("the two Lagrangian forms agree on random inputs (property)") {
    std::mt19937_64 rng(21);
    std::normal_distribution<double> normal;
    for (int trial = 0; trial < 40; ++trial) {
        const BoundaryPolicy policy =
            trial % 2 == 0 ? BoundaryPolicy::reflecting : BoundaryPolicy::absorbing;
        const auto rc = testing::random_case(rng, policy);
        const auto& g = rc.grid;
        const DiscreteLagrangian lag(rc.problem, g,
                                     initial_delta(g, rc.problem.initial_state(), 2.0));
        GridFunction p(g);
        GridFunction lam(g);
        for (std::size_t k = 0; k < g.n_t(); ++k) {
            for (std::size_t i = 0; i < g.n_x(); ++i) {
                p(k, i) = std::abs(normal(rng));
                lam(k, i) = normal(rng);
            }
        }
        const GridFunction c = testing::random_control(rng, g, rc.problem.bounds());
        const std::vector<double> mu = testing::random_slice(rng, g.n_x(), -1.0, 1.0);
        const double a = lag.kfe_form(p, c, lam, mu);
        const double b = lag.adjoint_form(p, c, lam, mu);
        double size = 0.0;
        for (std::size_t k = 0; k < g.n_t(); ++k) {
            for (std::size_t i = 0; i < g.n_x(); ++i) size += g.weight(i) * std::abs(p(k, i) * lam(k, i));
        }
        CHECK(std::abs(a - b) <= 1e-12 * size);
    }
}

TEST_CASE("Lagrangian equals J on the forward solution for any multiplier") {
    std::mt19937_64 rng(22);
    for (int trial = 0; trial < 10; ++trial) {
        const auto rc = testing::random_case(rng, BoundaryPolicy::reflecting);
        const auto& g = rc.grid;
        const SolverConfig cfg;
        const GridFunction c = testing::random_control(rng, g, rc.problem.bounds());
        const KfeSolution kfe = solve_kfe(rc.problem, g, c, cfg);
        const DiscreteLagrangian lag(rc.problem, g,
                                     initial_delta(g, rc.problem.initial_state(), cfg.delta_width_cells));
        GridFunction lam(g);
        for (std::size_t k = 0; k < g.n_t(); ++k) {
            for (double& v : lam.row(k)) v = std::uniform_real_distribution<double>(-5.0, 5.0)(rng);
        }
        const std::vector<double> mu = testing::random_slice(rng, g.n_x(), -5.0, 5.0);
        const double J = evaluate_objective(rc.problem, g, kfe.density, c);
        CHECK(lag.kfe_form(kfe.density, c, lam, mu) ==
              doctest::Approx(J).scale(1.0).epsilon(1e-10));
    }
}

TEST_CASE("first variations vanish at the converged Merton point and detect a shifted control") {
    const MertonCase mc = converged_merton(60);
    REQUIRE(mc.result.converged);
    const VariationReport rep =
        check_first_variations(mc.problem, mc.grid, mc.result, 20, 1, mc.config);
    CHECK(rep.p_residual <= 1e-3);
    CHECK(rep.c_residual <= 1e-3);
    CHECK(rep.lambda_residual <= 1e-3);
    CHECK(rep.mu_residual <= 1e-3);
    CHECK(rep.max_residual() <= 1e-3);
    CHECK(rep.initial_l1 <= 1e-12);
    CHECK(rep.lagrangian == doctest::Approx(mc.result.objective).epsilon(1e-10));

    SweepResult shifted = mc.result;
    for (std::size_t k = 0; k < mc.grid.n_t(); ++k) {
        for (double& v : shifted.control.row(k)) v = mc.problem.bounds().clamp(v + 1.0);
    }
    const VariationReport bad =
        check_first_variations(mc.problem, mc.grid, shifted, 20, 1, mc.config);
    CHECK(bad.c_residual > 1e-3);
    CHECK(bad.c_residual > 10.0 * rep.c_residual);

    // Same seed, same report.
    const VariationReport again =
        check_first_variations(mc.problem, mc.grid, mc.result, 20, 1, mc.config);
    CHECK(again.max_residual() == rep.max_residual());
}

TEST_CASE("a scaled multiplier breaks the terminal condition and leaves a density residual") {
    const MertonCase mc = converged_merton(40);
    SweepResult wrong = mc.result;
    for (std::size_t k = 0; k < mc.grid.n_t(); ++k) {
        for (double& v : wrong.lambda.row(k)) v *= 1.5;
    }
    const VariationReport rep = check_first_variations(mc.problem, mc.grid, wrong, 5, 2, mc.config);
    CHECK(rep.p_residual > 1e-3);
}

TEST_CASE("first-variation check validates its inputs") {
    const MertonCase mc = converged_merton(20);
    SolverConfig cn = mc.config;
    cn.theta = 0.5;
    CHECK_THROWS_AS((void)check_first_variations(mc.problem, mc.grid, mc.result, 5, 1, cn),
                    ConfigError);
    CHECK_THROWS_AS((void)check_first_variations(mc.problem, mc.grid, mc.result, 0, 1, mc.config),
                    ConfigError);
    SweepResult empty;
    CHECK_THROWS_AS((void)check_first_variations(mc.problem, mc.grid, empty, 5, 1, mc.config),
                    ConfigError);
    CHECK_THROWS_AS((void)DiscreteLagrangian(mc.problem, mc.grid, std::vector<double>(3)),
                    ConfigError);
}

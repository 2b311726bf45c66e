#include "varctrl/forward_kfe.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "varctrl/errors.hpp"
#include "varctrl/generator.hpp"

namespace varctrl {

namespace {

void check_control(const ControlProblem& problem, const SpaceTimeGrid& grid,
                   const GridFunction& control) {
    if (!control.matches(grid)) throw ConfigError("control does not match the grid shape");
    for (double c : control.values()) {
        if (!problem.bounds().contains(c)) throw ConfigError("control leaves [c_lo, c_hi]");
    }
}

}  // namespace

std::vector<double> initial_delta(const SpaceTimeGrid& grid, double x0, double width_cells) {
    if (!grid.strictly_inside(x0)) throw ConfigError("initial_delta: x0 must lie strictly inside");
    if (!(width_cells >= 0.0)) throw ConfigError("initial_delta: width must be nonnegative");

    const std::size_t n = grid.n_x();
    const double xi0 = grid.to_coordinate(x0);
    const double sd = width_cells * grid.spacing();
    std::vector<double> p(n, 0.0);

    double mass = 0.0;
    if (sd > 0.0) {
        for (std::size_t i = 0; i < n; ++i) {
            const double z = (grid.coordinate(i) - xi0) / sd;
            p[i] = std::exp(-0.5 * z * z) / grid.jacobian(i);
        }
        mass = slice_mass(grid, p);
    }
    if (!(mass > 0.0)) {
        std::size_t j = 0;
        while (j + 2 < n && grid.node(j + 1) <= x0) ++j;
        const double frac = (x0 - grid.node(j)) / (grid.node(j + 1) - grid.node(j));
        // Hat weights: unit mass and sum w_i p_i x_i = x0.
        std::fill(p.begin(), p.end(), 0.0);
        p[j] = (1.0 - frac) / grid.weight(j);
        p[j + 1] = frac / grid.weight(j + 1);
        return p;
    }
    for (double& v : p) v /= mass;
    return p;
}

KfeSolution solve_kfe(const ControlProblem& problem, const SpaceTimeGrid& grid,
                      const GridFunction& control, const SolverConfig& config) {
    config.validate();
    check_control(problem, grid, control);

    const std::size_t n = grid.n_x();
    const double dt = grid.time_step();
    const double theta = config.theta;

    KfeSolution out{GridFunction(grid), std::vector<double>(grid.n_t(), 0.0), {}};
    const std::vector<double> p0 =
        initial_delta(grid, problem.initial_state(), config.delta_width_cells);

    std::vector<double> m(n), rhs(n);
    for (std::size_t i = 0; i < n; ++i) m[i] = grid.weight(i) * p0[i];
    std::copy(p0.begin(), p0.end(), out.density.row(0).begin());
    out.mass[0] = slice_mass(grid, p0);

    const bool conserving = grid.boundary() != BoundaryPolicy::absorbing;
    for (std::size_t k = 0; k + 1 < grid.n_t(); ++k) {
        const TridiagonalOperator adj =
            assemble_adjoint(problem, grid, grid.time(k), control.row(k));
        if (theta < 1.0) {
            adj.shifted_identity((1.0 - theta) * dt).apply(m, rhs);
        } else {
            rhs = m;
        }
        if (!solve_in_place(adj.shifted_identity(-theta * dt), rhs)) {
            throw SolverError("forward KFE: singular tridiagonal system", k + 1);
        }
        m.swap(rhs);

        auto row = out.density.row(k + 1);
        double mass = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            row[i] = m[i] / grid.weight(i);
            mass += m[i];
        }
        out.mass[k + 1] = mass;
        const double drift = mass - out.mass[k];
        if ((conserving && std::abs(drift) > config.mass_tol) ||
            (!conserving && drift > config.mass_tol)) {
            std::ostringstream msg;
            msg << "mass drift " << drift << " at time index " << k + 1;
            out.warnings.push_back(msg.str());
        }
    }
    if (!out.density.all_finite()) throw SolverError("forward KFE: non-finite density", grid.n_t() - 1);
    return out;
}

}  // namespace varctrl

#include "varctrl/problem.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include "varctrl/errors.hpp"

namespace varctrl {

ControlProblem::ControlProblem(ProblemSpec spec) : spec_(std::move(spec)) {
    if (!(spec_.horizon > 0.0) || !std::isfinite(spec_.horizon)) {
        throw ConfigError("horizon T must be positive and finite");
    }
    if (!(spec_.bounds.lo < spec_.bounds.hi)) {
        throw ConfigError("control bounds require c_lo < c_hi");
    }
    if (!std::isfinite(spec_.bounds.lo) || !std::isfinite(spec_.bounds.hi)) {
        throw ConfigError("control bounds must be finite");
    }
    if (!std::isfinite(spec_.initial_state)) {
        throw ConfigError("initial state must be finite");
    }
    if (!spec_.drift || !spec_.diffusion || !spec_.running_reward || !spec_.terminal_reward) {
        throw ConfigError("problem '" + spec_.name + "' is missing a coefficient function");
    }
}

ControlProblem ControlProblem::with_scaled_rewards(double factor) const {
    ProblemSpec scaled = spec_;
    scaled.running_reward = [f = spec_.running_reward, factor](double t, double x, double c) {
        return factor * f(t, x, c);
    };
    scaled.terminal_reward = [g = spec_.terminal_reward, factor](double x) { return factor * g(x); };
    return ControlProblem(std::move(scaled));
}

ControlProblem make_merton_problem(double mu, double sigma, double q, double horizon, double x0,
                                   ControlBounds bounds) {
    if (!(sigma > 0.0)) throw ConfigError("merton: sigma must be positive");
    if (!(x0 > 0.0)) throw ConfigError("merton: initial wealth must be positive");
    if (!(q < 1.0)) throw ConfigError("merton: risk exponent q must be < 1 for a concave utility");
    if (q == 0.0) throw ConfigError("merton: q = 0 (log utility) is not supported");
    if (!std::isfinite(mu)) throw ConfigError("merton: mu must be finite");
    if (bounds.lo < 0.0) {
        throw ConfigError("merton: c_lo must be >= 0 so that a = sigma c x stays nonnegative");
    }

    ProblemSpec spec;
    spec.name = "merton";
    spec.drift = [mu](double, double x, double c) { return mu * c * x; };
    spec.diffusion = [sigma](double, double x, double c) { return sigma * c * x; };
    spec.running_reward = [](double, double, double) { return 0.0; };
    spec.terminal_reward = [q](double x) { return std::pow(x, q) / q; };
    spec.horizon = horizon;
    spec.initial_state = x0;
    spec.bounds = bounds;
    return ControlProblem(std::move(spec));
}

std::string to_string(BoundaryPolicy policy) {
    switch (policy) {
        case BoundaryPolicy::reflecting: return "reflecting";
        case BoundaryPolicy::absorbing: return "absorbing";
        case BoundaryPolicy::extrapolating: return "extrapolating";
    }
    return "unknown";
}

BoundaryPolicy boundary_policy_from_string(const std::string& text) {
    if (text == "reflecting") return BoundaryPolicy::reflecting;
    if (text == "absorbing") return BoundaryPolicy::absorbing;
    if (text == "extrapolating") return BoundaryPolicy::extrapolating;
    throw ConfigError("unknown boundary policy '" + text + "'");
}

SpaceTimeGrid::SpaceTimeGrid(double horizon, const GridSpec& spec) : spec_(spec), horizon_(horizon) {
    if (!(horizon > 0.0)) throw ConfigError("grid: horizon must be positive");
    if (spec.n_t < 2) throw ConfigError("grid: n_t must be at least 2");
    if (spec.n_x < 3) throw ConfigError("grid: n_x must be at least 3");
    if (!(spec.x_min < spec.x_max)) throw ConfigError("grid: x_min must be below x_max");
    if (spec.log_space && !(spec.x_min > 0.0)) {
        throw ConfigError("grid: log-space mesh requires x_min > 0");
    }

    dt_ = horizon / static_cast<double>(spec.n_t - 1);
    const double xi_lo = spec.log_space ? std::log(spec.x_min) : spec.x_min;
    const double xi_hi = spec.log_space ? std::log(spec.x_max) : spec.x_max;
    h_ = (xi_hi - xi_lo) / static_cast<double>(spec.n_x - 1);

    const std::size_t n = spec.n_x;
    xi_.resize(n);
    x_.resize(n);
    w_.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        xi_[i] = i + 1 == n ? xi_hi : xi_lo + static_cast<double>(i) * h_;
        x_[i] = spec.log_space ? std::exp(xi_[i]) : xi_[i];
    }
    // Pin the end points so they reproduce the inputs exactly.
    x_.front() = spec.x_min;
    x_.back() = spec.x_max;
    for (std::size_t i = 0; i < n; ++i) {
        const double trapezoid = (i == 0 || i + 1 == n) ? 0.5 * h_ : h_;
        w_[i] = trapezoid * jacobian(i);
    }
}

double SpaceTimeGrid::to_coordinate(double x) const {
    return spec_.log_space ? std::log(x) : x;
}

SpaceTimeGrid make_grid(const ControlProblem& problem, const GridSpec& spec) {
    SpaceTimeGrid grid(problem.horizon(), spec);
    if (!grid.strictly_inside(problem.initial_state())) {
        throw ConfigError("grid: initial state lies outside (x_min, x_max)");
    }
    return grid;
}

GridFunction::GridFunction(std::size_t n_t, std::size_t n_x, double fill)
    : n_t_(n_t), n_x_(n_x), values_(n_t * n_x, fill) {}

bool GridFunction::all_finite() const noexcept {
    return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

double slice_mass(const SpaceTimeGrid& grid, std::span<const double> slice) {
    double mass = 0.0;
    for (std::size_t i = 0; i < slice.size(); ++i) mass += grid.weight(i) * slice[i];
    return mass;
}

double max_abs_difference(const GridFunction& a, const GridFunction& b) {
    if (a.n_t() != b.n_t() || a.n_x() != b.n_x()) {
        throw ConfigError("max_abs_difference: shape mismatch");
    }
    double worst = 0.0;
    const auto va = a.values();
    const auto vb = b.values();
    for (std::size_t j = 0; j < va.size(); ++j) worst = std::max(worst, std::abs(va[j] - vb[j]));
    return worst;
}

void SolverConfig::validate() const {
    if (!(sweep_tol > 0.0)) throw ConfigError("solver: sweep_tol must be positive");
    if (!(mass_tol > 0.0)) throw ConfigError("solver: mass_tol must be positive");
    if (!(stationarity_tol > 0.0)) throw ConfigError("solver: stationarity_tol must be positive");
    if (!(variation_tol > 0.0)) throw ConfigError("solver: variation_tol must be positive");
    if (max_sweeps < 1) throw ConfigError("solver: max_sweeps must be at least 1");
    if (max_policy_iterations < 1) {
        throw ConfigError("solver: max_policy_iterations must be at least 1");
    }
    if (!(damping > 0.0 && damping <= 1.0)) throw ConfigError("solver: damping must lie in (0, 1]");
    if (!(theta >= 0.5 && theta <= 1.0)) throw ConfigError("solver: theta must lie in [1/2, 1]");
    if (!(delta_width_cells >= 0.0)) throw ConfigError("solver: delta_width_cells must be >= 0");
}

namespace {

double require(const ProblemCatalog::Parameters& p, const std::string& key) {
    auto it = p.find(key);
    if (it == p.end()) throw ConfigError("missing problem parameter '" + key + "'");
    return it->second;
}

double optional(const ProblemCatalog::Parameters& p, const std::string& key, double fallback) {
    auto it = p.find(key);
    return it == p.end() ? fallback : it->second;
}

void reject_unknown(const ProblemCatalog::Parameters& p, const std::string& problem,
                    std::initializer_list<const char*> known) {
    for (const auto& [key, value] : p) {
        if (std::none_of(known.begin(), known.end(), [&](const char* k) { return key == k; })) {
            throw ConfigError("unknown parameter '" + key + "' for problem '" + problem + "'");
        }
    }
}

}  // namespace

ProblemCatalog::ProblemCatalog() {
    add("merton", [](const Parameters& p) {
        reject_unknown(p, "merton", {"mu", "sigma", "q", "T", "x0", "c_lo", "c_hi"});
        return make_merton_problem(require(p, "mu"), require(p, "sigma"), require(p, "q"),
                                   require(p, "T"), require(p, "x0"),
                                   {optional(p, "c_lo", 0.0), optional(p, "c_hi", 10.0)});
    });
}

void ProblemCatalog::add(const std::string& name, Factory factory) {
    if (!factory) throw ConfigError("catalog: empty factory for '" + name + "'");
    factories_[name] = std::move(factory);
}

bool ProblemCatalog::contains(const std::string& name) const { return factories_.contains(name); }

std::vector<std::string> ProblemCatalog::names() const {
    std::vector<std::string> out;
    for (const auto& [name, factory] : factories_) out.push_back(name);
    return out;
}

ControlProblem ProblemCatalog::make(const std::string& name, const Parameters& parameters) const {
    auto it = factories_.find(name);
    if (it == factories_.end()) throw ConfigError("unknown problem '" + name + "'");
    return it->second(parameters);
}

}  // namespace varctrl

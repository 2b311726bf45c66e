#include "cli.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <set>
#include <thread>

#include "CLI11.hpp"
#include "varctrl/errors.hpp"
#include "varctrl/forward_kfe.hpp"
#include "varctrl/verification.hpp"

namespace varctrl::cli {

using nlohmann::json;

namespace {

void reject_unknown_keys(const json& section, const std::string& where,
                         std::initializer_list<const char*> allowed) {
    if (!section.is_object()) throw ConfigError("'" + where + "' must be an object");
    const std::set<std::string> known(allowed.begin(), allowed.end());
    for (const auto& [key, value] : section.items()) {
        if (!known.contains(key)) throw ConfigError("unknown key '" + where + "." + key + "'");
    }
}

template <typename T>
void read(const json& section, const char* key, T& target) {
    if (!section.contains(key)) return;
    try {
        target = section.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
    }
}

template <typename T>
void read_count(const json& section, const char* key, T& target) {
    if (!section.contains(key)) return;
    const json& v = section.at(key);
    if (!v.is_number_integer() || v.get<long long>() < 0) {
        throw ConfigError(std::string("'") + key + "' must be a nonnegative integer");
    }
    target = v.get<T>();
}

std::string format_number(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json grid_json(const GridSpec& g) {
    return {{"n_t", g.n_t},       {"n_x", g.n_x},
            {"x_min", g.x_min},   {"x_max", g.x_max},
            {"log_space", g.log_space}, {"boundary", to_string(g.boundary)}};
}

void write_json(const std::filesystem::path& path, const json& doc) {
    std::ofstream file(path);
    if (!file) throw ConfigError("cannot write " + path.string());
    file << doc.dump(2) << '\n';
}

struct Prepared {
    ControlProblem problem;
    SpaceTimeGrid grid;
};

Prepared prepare(const RunConfig& config) {
    const ProblemCatalog catalog;
    ControlProblem problem = catalog.make(config.problem_name, config.parameters);
    SpaceTimeGrid grid = make_grid(problem, config.grid);
    config.solver.validate();
    return {std::move(problem), std::move(grid)};
}

void ensure_directory(const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw ConfigError("cannot create output directory " + dir.string() + ": " + ec.message());
}

std::optional<MertonClosedForm> closed_form_for(const RunConfig& config) {
    if (config.problem_name != "merton") return std::nullopt;
    const auto& p = config.parameters;
    return merton_closed_form(p.at("mu"), p.at("sigma"), p.at("q"), p.at("T"), p.at("x0"));
}

void print_warnings(const std::vector<std::string>& warnings, std::ostream& err) {
    for (const auto& w : warnings) err << "warning: " << w << '\n';
}

int cmd_solve(const RunConfig& config, std::ostream& out, std::ostream& err) {
    const Prepared run = prepare(config);
    const SweepResult result = forward_backward_sweep(run.problem, run.grid, config.solver);
    print_warnings(result.warnings, err);

    ensure_directory(config.output_dir);
    write_field_csv(config.output_dir / "c_star.csv", run.grid, result.control);
    write_field_csv(config.output_dir / "lambda.csv", run.grid, result.lambda);
    write_field_csv(config.output_dir / "density.csv", run.grid, result.density);
    write_json(config.output_dir / "report.json", sweep_report(config, result));

    out << "J = " << format_number(result.objective) << " after " << result.iterations
        << " sweep(s), converged = " << (result.converged ? "true" : "false") << '\n';
    out << "wrote " << config.output_dir.string() << '\n';
    return kSuccess;
}

int cmd_verify(const RunConfig& config, std::ostream& out, std::ostream& err) {
    const Prepared run = prepare(config);
    const VerificationSettings& v = config.verification;
    const SweepResult result = forward_backward_sweep(run.problem, run.grid, config.solver);
    print_warnings(result.warnings, err);

    json report = sweep_report(config, result);
    json checks = json::object();
    bool pass = result.converged;
    checks["converged"] = {{"value", result.converged}, {"pass", result.converged}};

    auto check = [&](const char* name, double value, double tol) {
        const bool ok = std::isfinite(value) && value <= tol;
        checks[name] = {{"value", number_or_null(value)}, {"tolerance", tol}, {"pass", ok}};
        report[name] = number_or_null(value);
        pass = pass && ok;
    };

    if (config.solver.theta == 1.0) {
        const VariationReport var =
            check_first_variations(run.problem, run.grid, result, v.n_random, v.seed, config.solver);
        const std::vector<double> residuals{var.p_residual, var.c_residual, var.lambda_residual,
                                            var.mu_residual};
        report["variation_residuals"] = residuals;
        report["initial_density_L1"] = var.initial_l1;
        check("variation_residual_max", var.max_residual(), config.solver.variation_tol);
    } else {
        err << "warning: first-variation check skipped (requires theta = 1)\n";
        report["variation_residuals"] = nullptr;
    }

    if (const auto cf = closed_form_for(config)) {
        report["J_star"] = cf->J_star;
        check("c_star_error", control_error(result.control, cf->c_star), v.control_tol);
        check("lambda_error", multiplier_error(run.grid, result.lambda, *cf), v.multiplier_tol);

        const GridFunction fixed(run.grid, run.problem.bounds().clamp(cf->c_star));
        const KfeSolution kfe = solve_kfe(run.problem, run.grid, fixed, config.solver);
        print_warnings(kfe.warnings, err);
        const double extra = mollifier_log_variance(run.grid, run.problem.initial_state(),
                                                    config.solver.delta_width_cells);
        check("density_L1_error",
              density_l1_error(run.grid, kfe.density.row(run.grid.n_t() - 1),
                               run.grid.horizon(), *cf, extra),
              v.density_tol);
        check("J_error", std::abs(result.objective - cf->J_star) / std::abs(cf->J_star),
              v.objective_tol);

        if (v.mc_paths > 0) {
            const MCEstimate mc =
                monte_carlo_objective(run.problem, run.grid, result.control, v.mc_paths,
                                      v.mc_steps, v.mc_seed, threads_from_env(std::getenv("VARCTRL_THREADS")));
            if (mc.exploded > 0) err << "warning: " << mc.exploded << " Monte Carlo paths exploded\n";
            report["mc"] = {{"mean", mc.mean},       {"std_error", mc.std_error},
                            {"n_paths", mc.n_paths}, {"n_steps", mc.n_steps},
                            {"seed", mc.seed},       {"exploded", mc.exploded}};
            const double z = mc.std_error > 0.0 ? std::abs(mc.mean - cf->J_star) / mc.std_error
                                                : (mc.mean == cf->J_star ? 0.0 : INFINITY);
            check("mc_std_errors", z, v.mc_std_errors);
        }
    } else {
        err << "note: no closed form for problem '" << config.problem_name
            << "'; only first variations are checked\n";
    }

    report["checks"] = checks;
    report["pass"] = pass;
    ensure_directory(config.output_dir);
    write_json(config.output_dir / "report.json", report);

    for (const auto& [name, c] : checks.items()) {
        out << (c.at("pass").get<bool>() ? "PASS " : "FAIL ") << name;
        if (c.contains("tolerance")) {
            out << " = " << c.at("value").dump() << " (tolerance " << c.at("tolerance").dump() << ")";
        }
        out << '\n';
    }
    return pass ? kSuccess : kCheckFailure;
}

int cmd_mc(const RunConfig& config, std::size_t paths, std::size_t steps, std::uint64_t seed,
           std::ostream& out, std::ostream& err) {
    const Prepared run = prepare(config);
    const SweepResult result = forward_backward_sweep(run.problem, run.grid, config.solver);
    print_warnings(result.warnings, err);
    const MCEstimate mc = monte_carlo_objective(run.problem, run.grid, result.control, paths, steps,
                                                seed, threads_from_env(std::getenv("VARCTRL_THREADS")));
    if (mc.exploded > 0) err << "warning: " << mc.exploded << " paths exploded and were excluded\n";
    out << "J_mc = " << format_number(mc.mean) << " +/- " << format_number(mc.std_error) << " ("
        << mc.n_paths << " paths, " << mc.n_steps << " steps, seed " << mc.seed << ")\n";
    out << "J_grid = " << format_number(result.objective) << '\n';
    return kSuccess;
}

}  // namespace

RunConfig parse_config(const json& doc) {
    reject_unknown_keys(doc, "config", {"problem", "grid", "solver", "verification", "outputs"});
    RunConfig config;

    if (!doc.contains("problem")) throw ConfigError("missing 'problem' section");
    const json& problem = doc.at("problem");
    reject_unknown_keys(problem, "problem", {"name", "parameters"});
    read(problem, "name", config.problem_name);
    if (config.problem_name.empty()) throw ConfigError("'problem.name' is required");
    if (problem.contains("parameters")) {
        const json& params = problem.at("parameters");
        if (!params.is_object()) throw ConfigError("'problem.parameters' must be an object");
        for (const auto& [key, value] : params.items()) {
            if (!value.is_number()) throw ConfigError("parameter '" + key + "' must be a number");
            config.parameters[key] = value.get<double>();
        }
    }

    if (!doc.contains("grid")) throw ConfigError("missing 'grid' section");
    const json& grid = doc.at("grid");
    reject_unknown_keys(grid, "grid", {"n_t", "n_x", "x_min", "x_max", "log_space", "boundary"});
    for (const char* key : {"n_t", "n_x", "x_min", "x_max"}) {
        if (!grid.contains(key)) throw ConfigError(std::string("missing 'grid.") + key + "'");
    }
    read_count(grid, "n_t", config.grid.n_t);
    read_count(grid, "n_x", config.grid.n_x);
    read(grid, "x_min", config.grid.x_min);
    read(grid, "x_max", config.grid.x_max);
    read(grid, "log_space", config.grid.log_space);
    if (grid.contains("boundary")) {
        std::string text;
        read(grid, "boundary", text);
        config.grid.boundary = boundary_policy_from_string(text);
    }

    if (doc.contains("solver")) {
        const json& s = doc.at("solver");
        reject_unknown_keys(s, "solver",
                            {"sweep_tol", "max_sweeps", "max_policy_iterations", "damping", "theta",
                             "delta_width_cells", "mass_tol", "stationarity_tol", "variation_tol"});
        read(s, "sweep_tol", config.solver.sweep_tol);
        read_count(s, "max_sweeps", config.solver.max_sweeps);
        read_count(s, "max_policy_iterations", config.solver.max_policy_iterations);
        read(s, "damping", config.solver.damping);
        read(s, "theta", config.solver.theta);
        read(s, "delta_width_cells", config.solver.delta_width_cells);
        read(s, "mass_tol", config.solver.mass_tol);
        read(s, "stationarity_tol", config.solver.stationarity_tol);
        read(s, "variation_tol", config.solver.variation_tol);
    }
    config.solver.validate();

    if (doc.contains("verification")) {
        const json& v = doc.at("verification");
        reject_unknown_keys(v, "verification",
                            {"n_random", "seed", "control_tol", "multiplier_tol", "density_tol",
                             "objective_tol", "mc_paths", "mc_steps", "mc_seed", "mc_std_errors"});
        VerificationSettings& out = config.verification;
        read_count(v, "n_random", out.n_random);
        read_count(v, "seed", out.seed);
        read(v, "control_tol", out.control_tol);
        read(v, "multiplier_tol", out.multiplier_tol);
        read(v, "density_tol", out.density_tol);
        read(v, "objective_tol", out.objective_tol);
        read_count(v, "mc_paths", out.mc_paths);
        read_count(v, "mc_steps", out.mc_steps);
        read_count(v, "mc_seed", out.mc_seed);
        read(v, "mc_std_errors", out.mc_std_errors);
        for (double tol : {out.control_tol, out.multiplier_tol, out.density_tol, out.objective_tol,
                           out.mc_std_errors}) {
            if (!(tol > 0.0)) throw ConfigError("verification tolerances must be positive");
        }
        if (out.n_random == 0) throw ConfigError("'verification.n_random' must be at least 1");
        if (out.mc_paths == 1) throw ConfigError("'verification.mc_paths' must be 0 or at least 2");
    }

    if (doc.contains("outputs")) {
        const json& o = doc.at("outputs");
        reject_unknown_keys(o, "outputs", {"directory"});
        std::string dir;
        read(o, "directory", dir);
        if (!dir.empty()) config.output_dir = dir;
    }
    return config;
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream file(path);
    if (!file) throw ConfigError("cannot open config file " + path.string());
    json doc;
    try {
        doc = json::parse(file);
    } catch (const json::parse_error& e) {
        throw ConfigError("cannot parse " + path.string() + ": " + e.what());
    }
    return parse_config(doc);
}

std::size_t threads_from_env(const char* value) {
    if (value == nullptr || *value == '\0') return 0;
    char* end = nullptr;
    const long long n = std::strtoll(value, &end, 10);
    if (*end != '\0' || n < 0) throw ConfigError("VARCTRL_THREADS must be a nonnegative integer");
    return static_cast<std::size_t>(n);
}

void write_field_csv(const std::filesystem::path& path, const SpaceTimeGrid& grid,
                     const GridFunction& field) {
    if (!field.matches(grid)) throw ConfigError("field does not match the grid");
    std::ofstream file(path);
    if (!file) throw ConfigError("cannot write " + path.string());
    file << "t,x,value\n";
    char buf[96];
    for (std::size_t k = 0; k < grid.n_t(); ++k) {
        for (std::size_t i = 0; i < grid.n_x(); ++i) {
            std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", grid.time(k), grid.node(i),
                          field(k, i));
            file << buf;
        }
    }
}

json sweep_report(const RunConfig& config, const SweepResult& result) {
    json history = json::array();
    for (const SweepRecord& r : result.history) {
        history.push_back({{"control_change", number_or_null(r.control_change)},
                           {"objective", number_or_null(r.objective)},
                           {"stationarity_residual", number_or_null(r.stationarity_residual)},
                           {"policy_iterations", r.policy_iterations}});
    }
    return {{"problem", {{"name", config.problem_name}, {"parameters", config.parameters}}},
            {"grid", grid_json(config.grid)},
            {"boundary_policy", to_string(config.grid.boundary)},
            {"J", number_or_null(result.objective)},
            {"converged", result.converged},
            {"iterations", result.iterations},
            {"objective_monotone", result.objective_monotone},
            {"tail_nodes", result.tail_nodes},
            {"history", history},
            {"warnings", result.warnings}};
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Optimal Markov controls for 1-D stochastic control problems", "varctrl"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir;
    std::size_t paths = 100000;
    std::size_t steps = 200;
    std::uint64_t seed = 7;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "Run configuration (JSON)")->required();
        sub->add_option("--out", out_dir, "Output directory (overrides outputs.directory)");
    };
    CLI::App* solve = app.add_subcommand("solve", "Run the forward-backward sweep and write fields");
    CLI::App* verify = app.add_subcommand("verify", "Sweep, then compare against closed forms and first variations");
    CLI::App* mc = app.add_subcommand("mc", "Monte Carlo estimate of J under the solved control");
    add_common(solve);
    add_common(verify);
    add_common(mc);
    mc->add_option("--paths", paths, "Number of paths")->check(CLI::Range(std::size_t{2}, std::size_t{1} << 40));
    mc->add_option("--steps", steps, "Euler steps per path")->check(CLI::PositiveNumber);
    mc->add_option("--seed", seed, "Random seed");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kSuccess : kConfigFailure;
    }

    try {
        RunConfig config = load_config(config_path);
        if (!out_dir.empty()) config.output_dir = out_dir;
        if (solve->parsed()) return cmd_solve(config, out, err);
        if (verify->parsed()) return cmd_verify(config, out, err);
        return cmd_mc(config, paths, steps, seed, out, err);
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return kConfigFailure;
    } catch (const SolverError& e) {
        err << "solver error: " << e.what() << '\n';
        return kSolverFailure;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kSolverFailure;
    }
}

}  // namespace varctrl::cli

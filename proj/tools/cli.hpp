#pragma once

/**
 * @file cli.hpp
 * @brief Run configuration, output writers and subcommand dispatch for the
 * `varctrl` executable.
 */

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "varctrl/problem.hpp"
#include "varctrl/sweep.hpp"

namespace varctrl::cli {

enum ExitCode : int {
    kSuccess = 0,
    kSolverFailure = 1,
    kConfigFailure = 2,
    kCheckFailure = 3,
};

/// Tolerances and sampling settings of the `verify` subcommand.
struct VerificationSettings {
    std::size_t n_random = 20;
    std::uint64_t seed = 1;
    double control_tol = 0.1;      ///< absolute, central half of the grid
    double multiplier_tol = 0.01;  ///< relative, central half of the grid
    double density_tol = 0.02;     ///< L1 at the horizon
    double objective_tol = 0.01;   ///< relative
    std::size_t mc_paths = 100000;  ///< 0 skips the Monte Carlo comparison
    std::size_t mc_steps = 200;
    std::uint64_t mc_seed = 7;
    double mc_std_errors = 3.0;
};

struct RunConfig {
    std::string problem_name;
    ProblemCatalog::Parameters parameters;
    GridSpec grid;
    SolverConfig solver;
    VerificationSettings verification;
    std::filesystem::path output_dir = "varctrl_out";
};

/// Throws ConfigError on unknown keys, wrong types or invalid values.
RunConfig parse_config(const nlohmann::json& document);
RunConfig load_config(const std::filesystem::path& path);

/// Worker cap from the VARCTRL_THREADS value (unset or "0" = hardware concurrency).
std::size_t threads_from_env(const char* value);

/// `t,x,value` rows, time-major, 17 significant digits.
void write_field_csv(const std::filesystem::path& path, const SpaceTimeGrid& grid,
                     const GridFunction& field);

/// Machine-readable summary of a sweep (no timings, so reruns are byte-identical).
nlohmann::json sweep_report(const RunConfig& config, const SweepResult& result);

/**
 * Parses the command line and runs one subcommand (solve | verify | mc).
 * Results go to `out`, diagnostics to `err`; the return value is an ExitCode.
 */
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace varctrl::cli

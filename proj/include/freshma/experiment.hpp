#pragma once

#include <iosfwd>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace freshma {

// Malformed command line or configuration; maps to exit status 2.
struct ConfigError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// One experiment: a command with its target/scheme, numeric parameters keyed
// by their flag names, and an optional one-dimensional sweep.
struct ExperimentSpec {
    std::string command;  // analyze | simulate | compare | optimize | solve | meanfield
    std::string target;   // analyze: aoii|peak, optimize: fd, solve: xd, meanfield: aoii|peak
    std::string scheme;   // analyze/simulate/compare only
    std::map<std::string, double> params;
    std::string sweep_param;
    std::vector<double> sweep_values;
    std::string output;  // empty: standard output
    std::string format = "csv";
    std::string policy_out;  // solve xd: JSON policy export
    int workers = 0;         // 0: FRESHMA_WORKERS or hardware concurrency

    bool operator==(const ExperimentSpec&) const = default;
};

// Parameter names and defaults for a command/target/scheme combination;
// throws ConfigError for unknown combinations.
std::map<std::string, double> parameter_defaults(const ExperimentSpec& spec);

// Fills defaults and checks names, integrality, sweep parameter and format.
ExperimentSpec normalized(const ExperimentSpec& spec);

ExperimentSpec parse_config_text(const std::string& text);  // throws ConfigError (with line number)
ExperimentSpec load_config(const std::string& path);
std::string to_config_text(const ExperimentSpec& spec);

using Cell = std::variant<double, long long, std::string>;

struct ResultRow {
    std::map<std::string, double> params;
    std::vector<std::pair<std::string, Cell>> metrics;
};

std::vector<ResultRow> run_experiment(const ExperimentSpec& spec);

std::string to_csv(const std::vector<ResultRow>& rows);
std::string to_json(const std::vector<ResultRow>& rows);

int worker_count(int requested);

// Full command-line entry point; returns the process exit status.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace freshma

#pragma once

#include "mhe/dynamics.hpp"
#include "mhe/estimators.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace mhe {

/// Input applied to the plant: a table of (time, value) breakpoints held constant
/// until the next one. A constant input is a single breakpoint at t0.
struct InputSpec {
    std::vector<std::pair<double, Vector>> breakpoints;
};

struct FilterSpec {
    std::vector<FilterKind> kinds;
    double dirty_pole = 0.5;
    double leak = 0.95;
};

struct Scenario {
    std::string name;
    std::string family;
    std::uint64_t seed = 0;

    ModelKind model_kind = ModelKind::lti;
    ParamMap params;
    std::string provenance;  ///< e.g. "reconstructed" when coefficients are not published values

    double t0 = 0.0;
    double tf = 0.0;
    double base_period = 0.1;
    Vector x0;
    InputSpec input;
    double noise_amplitude = 0.0;
    IntegratorConfig truth_integrator;

    MheConfig estimator;  ///< filters already built with period N_Ts * T_s
    FilterSpec filter_spec;
    Vector initial_guess;

    /// Every key=value pair as read, for the run log.
    std::vector<std::pair<std::string, std::string>> echo;
};

/// "section.key" -> value; applied on top of a scenario file.
using ScenarioOverrides = std::vector<std::pair<std::string, std::string>>;

[[nodiscard]] Scenario parse_scenario(const std::string& text, const ScenarioOverrides& overrides = {});
[[nodiscard]] Scenario load_scenario(const std::filesystem::path& path, const ScenarioOverrides& overrides = {});

struct RunMetrics {
    std::string scenario;
    std::string family;
    std::string mode;

    std::uint64_t grid_instants = 0;
    std::uint64_t candidates = 0;
    std::uint64_t integration_substeps = 0;
    std::uint64_t fill_substeps = 0;
    std::uint64_t estimation_substeps = 0;
    std::uint64_t propagation_substeps = 0;
    std::uint64_t optimizer_iterations = 0;
    std::uint64_t estimations_performed = 0;
    std::uint64_t samples_skipped = 0;
    std::uint64_t reinitialisations = 0;
    std::uint64_t failures = 0;

    double final_error = 0.0;
    double rmse = 0.0;
    double wall_time = 0.0;  ///< informational only

    std::vector<double> errors;  ///< per base instant, |xhat - x|

    [[nodiscard]] std::uint64_t total_work() const noexcept { return integration_substeps + optimizer_iterations; }
};

struct RunResult {
    RunMetrics metrics;
    std::string csv;
    std::vector<std::string> log;
    std::vector<double> accepted_times;
    Trajectory truth;
    std::vector<Vector> estimates;  ///< per base instant
};

[[nodiscard]] RunResult run(const Scenario& scenario);

[[nodiscard]] std::string csv_header(std::size_t n, std::size_t filtered_columns);

[[nodiscard]] std::string format_metrics(const RunMetrics& metrics);
[[nodiscard]] RunMetrics parse_metrics(const std::string& text);
[[nodiscard]] std::string format_summary(const RunMetrics& metrics);

/// Writes trace.csv, metrics.txt, summary.txt and run.log into `dir`.
void write_run(const RunResult& result, const std::filesystem::path& dir);

struct ComparisonRow {
    std::string label;
    RunMetrics metrics;
    double iteration_reduction = 0.0;    ///< percent vs the first run
    double substep_reduction = 0.0;
    double work_reduction = 0.0;
    double estimation_reduction = 0.0;
};

struct ComparisonReport {
    std::vector<ComparisonRow> rows;
    std::string text;
};

/// Relative reductions of every run against the first. Throws UsageError for
/// fewer than two runs or runs from different scenario families.
[[nodiscard]] ComparisonReport compare(const std::vector<std::pair<std::string, RunMetrics>>& runs);

[[nodiscard]] std::string format_number(double value);

}  // namespace mhe

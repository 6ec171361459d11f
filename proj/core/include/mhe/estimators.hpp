#pragma once

#include "mhe/common.hpp"
#include "mhe/dynamics.hpp"
#include "mhe/filters.hpp"
#include "mhe/lifting.hpp"
#include "mhe/optimizer.hpp"

#include <cstdint>
#include <deque>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace mhe {

enum class EstimatorMode { standard, filtered, adaptive, filtered_adaptive };

[[nodiscard]] EstimatorMode parse_estimator_mode(std::string_view name);
[[nodiscard]] std::string_view to_string(EstimatorMode mode);

inline constexpr std::size_t unlimited_spacing = std::numeric_limits<std::size_t>::max();

struct MheConfig {
    std::size_t window = 5;          ///< N
    std::size_t downsample = 1;      ///< N_Ts, in base periods
    double base_period = 0.1;        ///< T_s
    EstimatorMode mode = EstimatorMode::standard;
    OptimizerConfig optimizer;       ///< optimizer.iterations is K
    IntegratorConfig integrator;

    double delta_min = 0.0;          ///< richness threshold (AC1)
    double d_min = 0.0;              ///< residual threshold (AC2)
    std::size_t max_spacing = unlimited_spacing;  ///< N_max, in base periods

    FilterBank filters;              ///< used in the filtered modes
    double raw_weight = 1.0;
    double filtered_weight = 1.0;
    std::optional<WeightSet> weights;  ///< overrides raw_weight / filtered_weight

    [[nodiscard]] bool filtered() const noexcept {
        return (mode == EstimatorMode::filtered || mode == EstimatorMode::filtered_adaptive) && !filters.empty();
    }
    [[nodiscard]] bool adaptive() const noexcept {
        return mode == EstimatorMode::adaptive || mode == EstimatorMode::filtered_adaptive;
    }
    [[nodiscard]] double candidate_period() const noexcept {
        return static_cast<double>(downsample) * base_period;
    }
    [[nodiscard]] std::size_t row_width(const ContinuousModel& model) const noexcept {
        return filtered() ? model.p * (1 + filters.size()) : model.p;
    }

    /// Throws ConfigError naming the violated invariant.
    void validate(const ContinuousModel& model) const;
    [[nodiscard]] WeightSet effective_weights(const ContinuousModel& model) const;
};

/// Output richness and fit indices of a window.
struct AdaptiveIndices {
    std::vector<double> sigma;  ///< |Y^{i+1} - Y^i|, i = 1..N-1
    double delta = 0.0;         ///< sum(sigma) + |y_k - Y^1|
    double d_v = 0.0;           ///< Frobenius norm of Y - H
};

[[nodiscard]] AdaptiveIndices adaptive_indices(const SampleBuffer& buffer, const Vector& newest,
                                               const LiftedOutput& predicted);

/// Work attributed to each phase of a run. The substep fields always sum to
/// counters.integration_substeps.
struct EstimatorStats {
    std::uint64_t fill_substeps = 0;
    std::uint64_t estimation_substeps = 0;
    std::uint64_t propagation_substeps = 0;
    std::uint64_t estimations_performed = 0;
    std::uint64_t samples_skipped = 0;
    std::uint64_t reinitialisations = 0;
    std::uint64_t failures = 0;
    std::uint64_t candidates = 0;
};

/// A measurement seen at an estimation instant, kept for buffer re-initialisation.
struct CandidateSample {
    double time = 0.0;
    Vector raw;           ///< y_k
    Vector row;           ///< buffered row: y_k, or [y_k, filtered...] in filtered modes
    Vector input;
    Vector filter_state;  ///< live filter state before consuming y_k
};

struct EstimatorState {
    SampleBuffer buffer;
    Vector zeta;          ///< estimate at the window start
    Vector x_now;         ///< propagated estimate at t_now
    double t_now = 0.0;
    double t_origin = 0.0;
    bool started = false;

    Vector filter_live;   ///< bank state driven by the real measurements
    Vector filter_pred;   ///< bank state driven by predicted outputs
    Vector predicted_row; ///< predicted buffer row at t_now

    WeightSet weights;
    std::optional<LiftedOutput> last_lift;  ///< prediction aligned with the buffer rows
    std::deque<CandidateSample> history;    ///< the latest N candidate samples
    std::map<std::int64_t, Vector> estimates;  ///< state estimate by base-grid index
    double last_accept_stamp = std::numeric_limits<double>::quiet_NaN();

    WorkCounters counters;
    EstimatorStats stats;
    std::vector<std::string> events;  ///< failures and re-initialisations, human-readable

    [[nodiscard]] std::int64_t tick(double t) const;
};

/// Outcome of one estimation instant.
struct StepRecord {
    double time = 0.0;
    bool estimated = false;
    bool skipped = false;
    bool reinitialised = false;
    bool failed = false;
    double delta = std::numeric_limits<double>::quiet_NaN();
    double d_v = std::numeric_limits<double>::quiet_NaN();
    double cost_pre = std::numeric_limits<double>::quiet_NaN();
    double cost_post = std::numeric_limits<double>::quiet_NaN();
};

[[nodiscard]] EstimatorState make_estimator(const ContinuousModel& model, const MheConfig& cfg,
                                            const Vector& initial_guess, double t0);

/// Makes the control applied from `t` on available to the estimator. Must be
/// called for every base instant; the step functions call it for their own instant.
void record_control(EstimatorState& st, double t, const Vector& u);

StepRecord standard_step(EstimatorState& st, const MheConfig& cfg, const Vector& y, const Vector& u, double t,
                         const ContinuousModel& model);
StepRecord filtered_step(EstimatorState& st, const MheConfig& cfg, const Vector& y, const Vector& u, double t,
                         const ContinuousModel& model);
StepRecord adaptive_step(EstimatorState& st, const MheConfig& cfg, const Vector& y, const Vector& u, double t,
                         const ContinuousModel& model);

/// Dispatches on cfg.mode.
StepRecord estimator_step(EstimatorState& st, const MheConfig& cfg, const Vector& y, const Vector& u, double t,
                          const ContinuousModel& model);

struct IntersampleEstimate {
    Vector state;
    Vector filter_state;  ///< predicted bank state at t (empty when unfiltered)
};

/// Estimate at t = t_now + q T_s with |q| < N_Ts. Substeps are charged to `counters`.
[[nodiscard]] IntersampleEstimate intersample_estimate(const EstimatorState& st, const MheConfig& cfg, double t,
                                                       const ContinuousModel& model, WorkCounters* counters = nullptr);

/// Re-derives the current estimate by propagating the window-start estimate
/// through the buffered controls.
[[nodiscard]] Vector repropagate(const EstimatorState& st, const MheConfig& cfg, const ContinuousModel& model);

}  // namespace mhe

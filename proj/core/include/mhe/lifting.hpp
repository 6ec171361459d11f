#pragma once

#include "mhe/common.hpp"
#include "mhe/dynamics.hpp"
#include "mhe/filters.hpp"

#include <deque>
#include <optional>
#include <vector>

namespace mhe {

/// Moving window of the last N output/input samples (oldest first).
///
/// Rows are shifted exactly like a FIFO: pushing onto a full buffer drops row 1
/// and appends the new sample as row N. The buffer also owns the full-rate
/// control history needed to integrate between its stamps, and (in filtered
/// mode) the filter state that was current just before each row was measured.
class SampleBuffer {
public:
    struct Row {
        Vector y;
        Vector u;
        double stamp;
        Vector filter_state;  ///< filter state before consuming y (empty when unfiltered)
    };

    SampleBuffer() = default;
    SampleBuffer(std::size_t capacity, std::size_t row_width, std::size_t input_width, double base_period);

    void push(const Vector& y, const Vector& u, double stamp, const Vector& filter_state = {});

    /// Records the control applied from `time` on. Re-recording an existing time
    /// with the same value is a no-op.
    void record_control(double time, const Vector& u);

    /// Replaces every row (used when re-initialising the window); keeps the control history.
    void rebuild(const std::vector<Row>& rows);

    /// Drops control samples older than the first stamp and `keep_from`, whichever is earlier.
    void trim_controls(double keep_from);

    [[nodiscard]] bool full() const noexcept { return rows_.size() == capacity_; }
    [[nodiscard]] std::size_t fill() const noexcept { return rows_.size(); }
    [[nodiscard]] std::size_t capacity() const noexcept { return capacity_; }
    [[nodiscard]] std::size_t row_width() const noexcept { return row_width_; }
    [[nodiscard]] std::size_t input_width() const noexcept { return input_width_; }

    [[nodiscard]] const Row& row(std::size_t j) const { return rows_.at(j); }
    [[nodiscard]] const Row& front() const { return rows_.front(); }
    [[nodiscard]] const Row& back() const { return rows_.back(); }
    [[nodiscard]] const std::deque<Row>& rows() const noexcept { return rows_; }
    [[nodiscard]] const ControlSignal& controls() const noexcept { return controls_; }

    /// True when consecutive stamps are exactly `spacing` apart (within grid tolerance).
    [[nodiscard]] bool uniformly_spaced(double spacing) const;

private:
    std::size_t capacity_ = 0;
    std::size_t row_width_ = 0;
    std::size_t input_width_ = 0;
    std::deque<Row> rows_;
    ControlSignal controls_;
};

/// Predicted outputs, one row per buffer row.
struct LiftedOutput {
    std::vector<Vector> rows;
};

/// Per-row weighting matrices of the quadratic cost.
class WeightSet {
public:
    WeightSet() = default;
    explicit WeightSet(std::vector<Matrix> weights);

    /// Every row weighted by diag(diagonal).
    static WeightSet uniform(std::size_t rows, const Vector& diagonal);
    static WeightSet identity(std::size_t rows, std::size_t width);

    [[nodiscard]] std::size_t size() const noexcept { return weights_.size(); }
    [[nodiscard]] const Matrix& operator[](std::size_t j) const { return weights_.at(j); }
    [[nodiscard]] const std::vector<Matrix>& matrices() const noexcept { return weights_; }

private:
    std::vector<Matrix> weights_;
};

/// Everything needed to evaluate the window fit for a candidate window-start state.
struct WindowProblem {
    const ContinuousModel* model = nullptr;
    const SampleBuffer* buffer = nullptr;
    const WeightSet* weights = nullptr;
    IntegratorConfig integrator;
    /// When set, predicted raw outputs are replayed through this bank from each
    /// window's stored start state to produce the filtered columns.
    const FilterBank* filters = nullptr;
    WorkCounters* counters = nullptr;
};

/// Lift plus the by-products the estimator needs for propagation.
struct LiftDetail {
    LiftedOutput output;
    std::vector<Vector> chain;   ///< predicted state at every stamp
    Vector filter_state;         ///< replayed filter state after the last row (empty when unfiltered)
};

[[nodiscard]] LiftedOutput lift(const ContinuousModel& model, const Vector& zeta, const SampleBuffer& buffer,
                                const IntegratorConfig& cfg, WorkCounters* counters = nullptr);

[[nodiscard]] LiftDetail lift_detail(const WindowProblem& problem, const Vector& zeta);

[[nodiscard]] double cost(const SampleBuffer& buffer, const LiftedOutput& predicted, const WeightSet& weights);

/// Stacked residual [Y^1 - H^1; ...; Y^N - H^N].
[[nodiscard]] Vector stacked_residual(const SampleBuffer& buffer, const LiftedOutput& predicted);

/// Block-diagonal weight matching stacked_residual.
[[nodiscard]] Matrix stacked_weight(const WeightSet& weights);

/// Per-component finite-difference step: base * (1 + |zeta_i|).
[[nodiscard]] Vector fd_steps(const Vector& zeta, double base);

inline constexpr double default_fd_step = 1e-6;

/// Central-difference gradient of cost(lift(zeta)); 2n lifts.
[[nodiscard]] Vector cost_gradient(const WindowProblem& problem, const Vector& zeta, double fd_step = default_fd_step);

[[nodiscard]] Vector cost_gradient(const ContinuousModel& model, const Vector& zeta, const SampleBuffer& buffer,
                                   const WeightSet& weights, const IntegratorConfig& cfg,
                                   double fd_step = default_fd_step, WorkCounters* counters = nullptr);

[[nodiscard]] double window_cost(const WindowProblem& problem, const Vector& zeta);

}  // namespace mhe

#pragma once

#include "mhe/common.hpp"

#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace mhe {

/// Continuous-time plant  xdot = f(x, u),  y = h(x, u).
struct ContinuousModel {
    using Map = std::function<Vector(const Vector&, const Vector&)>;

    std::string name;
    std::size_t n = 0;  ///< state dimension
    std::size_t m = 0;  ///< input dimension
    std::size_t p = 0;  ///< output dimension
    Map f;
    Map h;
    /// Non-fatal remarks raised while building the model (e.g. frozen dynamics).
    std::vector<std::string> warnings;

    [[nodiscard]] Vector derivative(const Vector& x, const Vector& u) const;
    [[nodiscard]] Vector output(const Vector& x, const Vector& u) const;
};

/// Piecewise-constant input history sampled on a fixed base period.
///
/// The value on [t_j, t_{j+1}) is the sample recorded at t_j. Sample times are
/// strictly increasing and lie on the grid origin + j * period, where the origin
/// is the time of the first sample ever appended.
class ControlSignal {
public:
    struct Sample {
        double time;
        Vector value;
    };

    ControlSignal() = default;
    ControlSignal(double period, std::size_t width);

    /// A signal holding `value` from `t0` onwards.
    static ControlSignal constant(double period, Vector value, double t0 = 0.0);

    void append(double time, Vector value);
    [[nodiscard]] const Vector& at(double time) const;

    /// Drops samples that are no longer needed to evaluate the signal at or after `time`.
    void discard_before(double time);

    [[nodiscard]] double period() const noexcept { return period_; }
    [[nodiscard]] double origin() const noexcept { return origin_; }
    [[nodiscard]] std::size_t width() const noexcept { return width_; }
    [[nodiscard]] bool empty() const noexcept { return samples_.empty(); }
    [[nodiscard]] const std::vector<Sample>& samples() const noexcept { return samples_; }

    /// Grid index of `time`, rounding to the nearest grid point.
    [[nodiscard]] std::int64_t grid_index(double time) const;
    [[nodiscard]] double grid_time(std::int64_t index) const { return origin_ + static_cast<double>(index) * period_; }
    [[nodiscard]] double tolerance() const noexcept { return 1e-9 * period_; }

private:
    double period_ = 1.0;
    double origin_ = 0.0;
    std::size_t width_ = 0;
    bool has_origin_ = false;
    std::vector<Sample> samples_;
};

enum class IntegrationMethod { rk4, euler };

struct IntegratorConfig {
    IntegrationMethod method = IntegrationMethod::rk4;
    int substeps_per_period = 10;  ///< substeps per base period of the control signal
};

struct Trajectory {
    std::vector<double> times;
    std::vector<Vector> states;
    std::vector<Vector> outputs;
};

/// Numerical flow map: the state at `t1` starting from `x0` at `t0`.
///
/// Integration is split at every grid point of `u` so each segment sees a
/// constant input; full segments use exactly `substeps_per_period` steps.
/// Increments `counters->integration_substeps` by the number of steps taken.
[[nodiscard]] Vector flow(const ContinuousModel& model, const Vector& x0, const ControlSignal& u, double t0,
                          double t1, const IntegratorConfig& cfg, WorkCounters* counters = nullptr);

/// Samples the plant every `sample_period` seconds on [t0, tf].
[[nodiscard]] Trajectory simulate(const ContinuousModel& model, const Vector& x0, const ControlSignal& u, double t0,
                                  double tf, double sample_period, const IntegratorConfig& cfg,
                                  WorkCounters* counters = nullptr);

enum class ModelKind { van_der_pol, runaway, double_pendulum, lti };

/// Named model coefficients. Scalars are stored as 1x1 matrices.
using ParamMap = std::map<std::string, Matrix, std::less<>>;

struct ModelInfo {
    ModelKind kind;
    std::string_view name;
    std::vector<std::string_view> required;
    std::vector<std::string_view> optional;
    std::string_view summary;
};

[[nodiscard]] const std::vector<ModelInfo>& model_catalog();
[[nodiscard]] const ModelInfo& model_info(ModelKind kind);
[[nodiscard]] ModelKind parse_model_kind(std::string_view name);

/// Builds one of the benchmark plants. Throws ConfigError on missing, unknown
/// or non-physical parameters.
[[nodiscard]] ContinuousModel make_model(ModelKind kind, const ParamMap& params);

}  // namespace mhe

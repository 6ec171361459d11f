#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace mhe {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Raised when the scenario, model parameters or estimator tuning are invalid.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised on dimension mismatches and violated call preconditions.
class UsageError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A numerical routine produced an unusable result (singular system, non-finite step).
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A numerical integration produced a non-finite state.
class DivergenceError : public NumericalError {
public:
    DivergenceError(double time, const std::string& what) : NumericalError(what), time_(time) {}

    [[nodiscard]] double time() const noexcept { return time_; }

private:
    double time_;
};

/// Machine-independent work counters. Owned per run and passed down by pointer;
/// a null pointer disables counting.
struct WorkCounters {
    std::uint64_t integration_substeps = 0;
    std::uint64_t optimizer_iterations = 0;

    WorkCounters& operator+=(const WorkCounters& other) {
        integration_substeps += other.integration_substeps;
        optimizer_iterations += other.optimizer_iterations;
        return *this;
    }
};

[[nodiscard]] inline bool all_finite(const Vector& v) { return v.allFinite(); }

}  // namespace mhe

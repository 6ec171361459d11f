#pragma once

#include "mhe/common.hpp"

#include <span>
#include <string_view>
#include <vector>

namespace mhe {

enum class FilterKind { dirty_derivative, lossy_integrator };

[[nodiscard]] FilterKind parse_filter_kind(std::string_view name);
[[nodiscard]] std::string_view to_string(FilterKind kind);

/// Discrete-time scalar filter  xf(k+1) = gamma(xf(k), y(k)),  yf(k+1) = beta(xf(k+1)).
///
/// dirty derivative:  state [d, y_prev],  d+ = a d + (1 - a)(y - y_prev) / dt
/// lossy integrator:  state [s],          s+ = leak s + dt y
/// In both cases the filtered output is the first state component.
class DiscreteFilter {
public:
    static DiscreteFilter dirty_derivative(double pole, double period);
    static DiscreteFilter lossy_integrator(double leak, double period);

    [[nodiscard]] FilterKind kind() const noexcept { return kind_; }
    [[nodiscard]] double coefficient() const noexcept { return coefficient_; }
    [[nodiscard]] double period() const noexcept { return period_; }
    [[nodiscard]] std::size_t state_size() const noexcept { return kind_ == FilterKind::dirty_derivative ? 2 : 1; }

    /// Rest state. The dirty derivative remembers `y0` as the previous sample so a
    /// nonzero first measurement does not produce a spurious spike.
    [[nodiscard]] Vector initial_state(double y0 = 0.0) const;

    [[nodiscard]] Vector advance(const Vector& state, double y) const;   // gamma
    [[nodiscard]] double output(const Vector& state) const;              // beta

private:
    DiscreteFilter(FilterKind kind, double coefficient, double period);

    FilterKind kind_;
    double coefficient_;
    double period_;
};

struct FilterStep {
    Vector state;
    double output;
};

struct FilterTrace {
    Vector state;
    std::vector<double> outputs;
};

[[nodiscard]] FilterStep filter_step(const DiscreteFilter& filter, const Vector& state, double y);

/// Runs the recursion over `inputs` in order, starting from `start`.
[[nodiscard]] FilterTrace filter_replay(const DiscreteFilter& filter, const Vector& start, std::span<const double> inputs);

/// Several filters on the same scalar channel; the joint state is the
/// concatenation of the member states.
class FilterBank {
public:
    struct Step {
        Vector state;
        Vector outputs;  ///< one filtered value per member
    };

    FilterBank() = default;
    explicit FilterBank(std::vector<DiscreteFilter> filters);

    [[nodiscard]] bool empty() const noexcept { return filters_.empty(); }
    [[nodiscard]] std::size_t size() const noexcept { return filters_.size(); }
    [[nodiscard]] std::size_t state_size() const noexcept { return state_size_; }
    [[nodiscard]] const std::vector<DiscreteFilter>& filters() const noexcept { return filters_; }

    [[nodiscard]] Vector initial_state(double y0 = 0.0) const;
    [[nodiscard]] Step step(const Vector& state, double y) const;

    /// [y, yf_1, ..., yf_q]
    [[nodiscard]] static Vector augment(double y, const Vector& filtered);

private:
    std::vector<DiscreteFilter> filters_;
    std::size_t state_size_ = 0;
};

}  // namespace mhe

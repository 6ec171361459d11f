#include "mhe/filters.hpp"

#include <cmath>
#include <string>

namespace mhe {

FilterKind parse_filter_kind(std::string_view name) {
    if (name == "dirty_derivative") {
        return FilterKind::dirty_derivative;
    }
    if (name == "lossy_integrator") {
        return FilterKind::lossy_integrator;
    }
    throw ConfigError("unknown filter kind '" + std::string(name) + "'");
}

std::string_view to_string(FilterKind kind) {
    return kind == FilterKind::dirty_derivative ? "dirty_derivative" : "lossy_integrator";
}

DiscreteFilter::DiscreteFilter(FilterKind kind, double coefficient, double period)
    : kind_(kind), coefficient_(coefficient), period_(period) {
    if (!(period > 0.0) || !std::isfinite(period)) {
        throw ConfigError("filter period must be positive");
    }
}

DiscreteFilter DiscreteFilter::dirty_derivative(double pole, double period) {
    if (!(pole >= 0.0 && pole < 1.0)) {
        throw ConfigError("dirty derivative pole must lie in [0, 1)");
    }
    return {FilterKind::dirty_derivative, pole, period};
}

DiscreteFilter DiscreteFilter::lossy_integrator(double leak, double period) {
    if (!(leak >= 0.0 && leak <= 1.0)) {
        throw ConfigError("lossy integrator leak must lie in [0, 1]");
    }
    return {FilterKind::lossy_integrator, leak, period};
}

Vector DiscreteFilter::initial_state(double y0) const {
    if (kind_ == FilterKind::dirty_derivative) {
        return Eigen::Vector2d(0.0, y0);
    }
    return Vector::Zero(1);
}

Vector DiscreteFilter::advance(const Vector& state, double y) const {
    if (static_cast<std::size_t>(state.size()) != state_size()) {
        throw UsageError("filter state has the wrong size");
    }
    if (kind_ == FilterKind::dirty_derivative) {
        const double a = coefficient_;
        Vector next(2);
        next(0) = a * state(0) + (1.0 - a) * (y - state(1)) / period_;
        next(1) = y;
        return next;
    }
    return Vector::Constant(1, coefficient_ * state(0) + period_ * y);
}

double DiscreteFilter::output(const Vector& state) const { return state(0); }

FilterStep filter_step(const DiscreteFilter& filter, const Vector& state, double y) {
    Vector next = filter.advance(state, y);
    const double out = filter.output(next);
    return {std::move(next), out};
}

FilterTrace filter_replay(const DiscreteFilter& filter, const Vector& start, std::span<const double> inputs) {
    FilterTrace trace{start, {}};
    trace.outputs.reserve(inputs.size());
    for (const double y : inputs) {
        auto [next, out] = filter_step(filter, trace.state, y);
        trace.state = std::move(next);
        trace.outputs.push_back(out);
    }
    return trace;
}

FilterBank::FilterBank(std::vector<DiscreteFilter> filters) : filters_(std::move(filters)) {
    for (const auto& f : filters_) {
        state_size_ += f.state_size();
    }
}

Vector FilterBank::initial_state(double y0) const {
    Vector state(static_cast<Eigen::Index>(state_size_));
    Eigen::Index offset = 0;
    for (const auto& f : filters_) {
        const auto l = static_cast<Eigen::Index>(f.state_size());
        state.segment(offset, l) = f.initial_state(y0);
        offset += l;
    }
    return state;
}

FilterBank::Step FilterBank::step(const Vector& state, double y) const {
    if (static_cast<std::size_t>(state.size()) != state_size_) {
        throw UsageError("filter bank state has the wrong size");
    }
    Step result{Vector(state.size()), Vector(static_cast<Eigen::Index>(filters_.size()))};
    Eigen::Index offset = 0;
    for (std::size_t i = 0; i < filters_.size(); ++i) {
        const auto l = static_cast<Eigen::Index>(filters_[i].state_size());
        auto [next, out] = filter_step(filters_[i], state.segment(offset, l), y);
        result.state.segment(offset, l) = next;
        result.outputs(static_cast<Eigen::Index>(i)) = out;
        offset += l;
    }
    return result;
}

Vector FilterBank::augment(double y, const Vector& filtered) {
    Vector row(filtered.size() + 1);
    row(0) = y;
    row.tail(filtered.size()) = filtered;
    return row;
}

}  // namespace mhe

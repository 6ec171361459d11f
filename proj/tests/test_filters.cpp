#include "mhe/filters.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace mhe;

TEST(LossyIntegrator, UnitLeakSumsConstantInput) {
    const auto filter = DiscreteFilter::lossy_integrator(1.0, 0.25);
    Vector state = filter.initial_state();
    const double c = 1.7;
    for (int k = 1; k <= 12; ++k) {
        state = filter.advance(state, c);
        EXPECT_NEAR(filter.output(state), k * 0.25 * c, 1e-12);
    }
}

TEST(LossyIntegrator, HalfLeakReplay) {
    const auto filter = DiscreteFilter::lossy_integrator(0.5, 1.0);
    const std::vector<double> ys{1.0, 1.0, 1.0};
    const auto trace = filter_replay(filter, filter.initial_state(), ys);
    ASSERT_EQ(trace.outputs.size(), 3u);
    EXPECT_DOUBLE_EQ(trace.outputs[0], 1.0);
    EXPECT_DOUBLE_EQ(trace.outputs[1], 1.5);
    EXPECT_DOUBLE_EQ(trace.outputs[2], 1.75);
}

TEST(LossyIntegrator, BoundedInputBoundedState) {
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int trial = 0; trial < 200; ++trial) {
        const double leak = 0.999 * unit(rng);
        const double dt = 0.01 + unit(rng);
        const double bound = 0.1 + 5.0 * unit(rng);
        const auto filter = DiscreteFilter::lossy_integrator(leak, dt);
        Vector state = filter.initial_state();
        for (int k = 0; k < 300; ++k) {
            state = filter.advance(state, bound * (2.0 * unit(rng) - 1.0));
            ASSERT_LE(std::abs(filter.output(state)), dt * bound / (1.0 - leak) + 1e-12);
        }
    }
}

TEST(DirtyDerivative, ConstantSignalDecaysGeometrically) {
    for (const double pole : {0.0, 0.3, 0.9}) {
        const auto filter = DiscreteFilter::dirty_derivative(pole, 0.1);
        Vector state(2);
        state << 4.0, 2.0;
        double previous = std::abs(filter.output(state));
        for (int k = 0; k < 40; ++k) {
            state = filter.advance(state, 2.0);
            const double now = std::abs(filter.output(state));
            EXPECT_NEAR(now, pole * previous, 1e-12);
            previous = now;
        }
    }
}

TEST(DirtyDerivative, RampWithZeroPoleGivesSlope) {
    const double dt = 0.2;
    const double slope = 3.0;
    const auto filter = DiscreteFilter::dirty_derivative(0.0, dt);
    Vector state = filter.initial_state(0.0);
    state = filter.advance(state, slope * dt);
    EXPECT_NEAR(filter.output(state), slope, 1e-12);
    state = filter.advance(state, slope * 2.0 * dt);
    EXPECT_NEAR(filter.output(state), slope, 1e-12);
}

TEST(DirtyDerivative, FirstSampleDoesNotSpike) {
    const auto filter = DiscreteFilter::dirty_derivative(0.5, 0.1);
    const Vector state = filter.advance(filter.initial_state(5.0), 5.0);
    EXPECT_EQ(filter.output(state), 0.0);
}

TEST(Filters, CoefficientsValidated) {
    EXPECT_THROW((void)DiscreteFilter::dirty_derivative(1.0, 0.1), ConfigError);
    EXPECT_THROW((void)DiscreteFilter::dirty_derivative(-0.1, 0.1), ConfigError);
    EXPECT_THROW((void)DiscreteFilter::lossy_integrator(1.1, 0.1), ConfigError);
    EXPECT_THROW((void)DiscreteFilter::lossy_integrator(0.5, 0.0), ConfigError);
    EXPECT_THROW((void)parse_filter_kind("butterworth"), ConfigError);
    EXPECT_EQ(parse_filter_kind(to_string(FilterKind::lossy_integrator)), FilterKind::lossy_integrator);
}

TEST(Filters, WrongStateSizeRejected) {
    const auto filter = DiscreteFilter::dirty_derivative(0.5, 0.1);
    EXPECT_THROW((void)filter.advance(Vector::Zero(1), 1.0), UsageError);
}

TEST(Replay, SingleElementIsOneStep) {
    const auto filter = DiscreteFilter::dirty_derivative(0.4, 0.1);
    Vector start(2);
    start << 0.3, 1.0;
    const std::vector<double> ys{1.4};
    const auto trace = filter_replay(filter, start, ys);
    const auto step = filter_step(filter, start, 1.4);
    EXPECT_EQ(trace.state, step.state);
    ASSERT_EQ(trace.outputs.size(), 1u);
    EXPECT_EQ(trace.outputs[0], step.output);
}

TEST(Replay, ReproducesLiveHistory) {
    const auto filter = DiscreteFilter::dirty_derivative(0.6, 0.05);
    std::vector<double> ys;
    std::vector<double> live;
    Vector state = filter.initial_state(0.0);
    for (int k = 0; k < 50; ++k) {
        ys.push_back(std::sin(0.2 * k));
        state = filter.advance(state, ys.back());
        live.push_back(filter.output(state));
    }
    const auto trace = filter_replay(filter, filter.initial_state(0.0), ys);
    EXPECT_EQ(trace.outputs, live);
    EXPECT_EQ(trace.state, state);
}

TEST(Replay, CompositionIsExact) {
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> value(-3.0, 3.0);
    std::uniform_real_distribution<double> unit(0.0, 0.99);
    std::uniform_int_distribution<int> length(0, 20);
    for (int trial = 0; trial < 1000; ++trial) {
        const auto filter = trial % 2 == 0 ? DiscreteFilter::dirty_derivative(unit(rng), 0.01 + unit(rng))
                                           : DiscreteFilter::lossy_integrator(unit(rng), 0.01 + unit(rng));
        std::vector<double> a(static_cast<std::size_t>(length(rng)));
        std::vector<double> b(static_cast<std::size_t>(length(rng)));
        for (auto& v : a) v = value(rng);
        for (auto& v : b) v = value(rng);
        Vector start = filter.initial_state(value(rng));
        std::vector<double> ab = a;
        ab.insert(ab.end(), b.begin(), b.end());
        const auto whole = filter_replay(filter, start, ab);
        const auto first = filter_replay(filter, start, a);
        const auto second = filter_replay(filter, first.state, b);
        ASSERT_EQ(whole.state, second.state);
        std::vector<double> joined = first.outputs;
        joined.insert(joined.end(), second.outputs.begin(), second.outputs.end());
        ASSERT_EQ(whole.outputs, joined);
    }
}

TEST(Bank, ConcatenatesMembers) {
    const FilterBank bank({DiscreteFilter::dirty_derivative(0.5, 0.1), DiscreteFilter::lossy_integrator(0.9, 0.1)});
    EXPECT_EQ(bank.size(), 2u);
    EXPECT_EQ(bank.state_size(), 3u);
    const Vector s0 = bank.initial_state(1.0);
    ASSERT_EQ(s0.size(), 3);
    const auto step = bank.step(s0, 2.0);
    const auto d = filter_step(bank.filters()[0], s0.head(2), 2.0);
    const auto l = filter_step(bank.filters()[1], s0.tail(1), 2.0);
    EXPECT_EQ(step.state.head(2), d.state);
    EXPECT_EQ(step.state.tail(1), l.state);
    EXPECT_EQ(step.outputs(0), d.output);
    EXPECT_EQ(step.outputs(1), l.output);
    const Vector row = FilterBank::augment(2.0, step.outputs);
    ASSERT_EQ(row.size(), 3);
    EXPECT_EQ(row(0), 2.0);
    EXPECT_EQ(row(2), l.output);
}

#include "mhe/dynamics.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace mhe;

namespace {

IntegratorConfig rk4(int substeps) { return {IntegrationMethod::rk4, substeps}; }

// Mechanical energy of the two-link pendulum from Cartesian tip positions.
double pendulum_energy(const Vector& x, double len, double mass, double g) {
    const double q1 = x(0);
    const double q12 = x(0) + x(1);
    const double w1 = x(2);
    const double w12 = x(2) + x(3);
    const double vx1 = len * std::cos(q1) * w1;
    const double vy1 = len * std::sin(q1) * w1;
    const double vx2 = vx1 + len * std::cos(q12) * w12;
    const double vy2 = vy1 + len * std::sin(q12) * w12;
    const double y1 = -len * std::cos(q1);
    const double y2 = y1 - len * std::cos(q12);
    return 0.5 * mass * (vx1 * vx1 + vy1 * vy1 + vx2 * vx2 + vy2 * vy2) + mass * g * (y1 + y2);
}

}  // namespace

TEST(Flow, VanDerPolEquilibriumIsFixed) {
    const auto model = test::van_der_pol();
    const auto u = ControlSignal::constant(0.1, Vector::Zero(1));
    const Vector x = flow(model, Vector::Zero(2), u, 0.0, 7.3, rk4(10));
    EXPECT_EQ(x, Vector::Zero(2));
}

TEST(Flow, ExponentialDecayMatchesClosedForm) {
    const auto model = test::scalar_model(-1.0);
    const auto u = ControlSignal::constant(1.0, Vector());
    const Vector x = flow(model, Vector::Constant(1, 1.0), u, 0.0, 1.0, rk4(100));
    EXPECT_NEAR(x(0), std::exp(-1.0), 1e-6);
    EXPECT_NEAR(x(0), 0.367879, 1e-6);
}

TEST(Flow, RunawayThirdComponentIsConstant) {
    const auto model = test::runaway();
    const auto u = ControlSignal::constant(0.2, Vector());
    Vector x0(3);
    x0 << 1.0, 0.1, 0.8371;
    const Vector x = flow(model, x0, u, 0.0, 12.6, rk4(10));
    EXPECT_EQ(x(2), 0.8371);
    EXPECT_EQ(model.derivative(x, Vector())(2), 0.0);
}

TEST(Flow, CountsSubsteps) {
    const auto model = test::scalar_model(-1.0);
    const auto u = ControlSignal::constant(0.5, Vector());
    WorkCounters counters;
    (void)flow(model, Vector::Constant(1, 1.0), u, 0.0, 2.0, rk4(7), &counters);
    EXPECT_EQ(counters.integration_substeps, 28u);
    (void)flow(model, Vector::Constant(1, 1.0), u, 1.0, 1.0, rk4(7), &counters);
    EXPECT_EQ(counters.integration_substeps, 28u);
}

TEST(Flow, SemigroupIsExactOnGridPoints) {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> dist(-2.0, 2.0);
    const auto model = test::van_der_pol(1.5);
    ControlSignal u(0.1, 1);
    for (int j = 0; j < 200; ++j) {
        u.append(0.1 * j, Vector::Constant(1, dist(rng)));
    }
    for (int trial = 0; trial < 100; ++trial) {
        Vector x0(2);
        x0 << dist(rng), dist(rng);
        std::uniform_int_distribution<int> idx(0, 60);
        int a = idx(rng);
        int b = idx(rng);
        int c = idx(rng);
        if (a > b) std::swap(a, b);
        if (b > c) std::swap(b, c);
        if (a > b) std::swap(a, b);
        const double t0 = 0.1 * a;
        const double t1 = 0.1 * b;
        const double t2 = 0.1 * c;
        const Vector direct = flow(model, x0, u, t0, t2, rk4(10));
        const Vector split = flow(model, flow(model, x0, u, t0, t1, rk4(10)), u, t1, t2, rk4(10));
        EXPECT_EQ(direct, split);
    }
}

TEST(Flow, Rk4ErrorRatioShowsFourthOrder) {
    const auto model = test::scalar_model(-1.0);
    const auto u = ControlSignal::constant(1.0, Vector());
    const double exact = std::exp(-2.0);
    const double coarse = std::abs(flow(model, Vector::Constant(1, 1.0), u, 0.0, 2.0, rk4(4))(0) - exact);
    const double fine = std::abs(flow(model, Vector::Constant(1, 1.0), u, 0.0, 2.0, rk4(8))(0) - exact);
    const double ratio = coarse / fine;
    EXPECT_GE(ratio, 12.0);
    EXPECT_LE(ratio, 20.0);
}

TEST(Flow, EulerIsFirstOrder) {
    const auto model = test::scalar_model(-1.0);
    const auto u = ControlSignal::constant(1.0, Vector());
    const IntegratorConfig coarse{IntegrationMethod::euler, 100};
    const IntegratorConfig fine{IntegrationMethod::euler, 200};
    const double e1 = std::abs(flow(model, Vector::Constant(1, 1.0), u, 0.0, 1.0, coarse)(0) - std::exp(-1.0));
    const double e2 = std::abs(flow(model, Vector::Constant(1, 1.0), u, 0.0, 1.0, fine)(0) - std::exp(-1.0));
    EXPECT_NEAR(e1 / e2, 2.0, 0.05);
}

TEST(Flow, NonFiniteStateRaisesDivergenceWithTime) {
    ContinuousModel model = test::scalar_model(1.0);
    model.f = [](const Vector& x, const Vector&) {
        return Vector::Constant(1, x(0) > 5.0 ? std::numeric_limits<double>::quiet_NaN() : 1.0);
    };
    const auto u = ControlSignal::constant(1.0, Vector());
    try {
        (void)flow(model, Vector::Zero(1), u, 0.0, 10.0, rk4(10));
        FAIL() << "expected divergence";
    } catch (const DivergenceError& e) {
        EXPECT_GT(e.time(), 4.9);
        EXPECT_LT(e.time(), 5.3);
    }
}

TEST(Flow, RejectsBackwardsHorizon) {
    const auto model = test::scalar_model(-1.0);
    const auto u = ControlSignal::constant(1.0, Vector());
    EXPECT_THROW((void)flow(model, Vector::Zero(1), u, 1.0, 0.5, rk4(10)), UsageError);
    EXPECT_THROW((void)flow(model, Vector::Zero(2), u, 0.0, 1.0, rk4(10)), UsageError);
}

TEST(Flow, ZeroLtiIsIdentity) {
    const auto model = test::lti_model(Matrix::Zero(3, 3), Matrix::Zero(3, 1), Matrix::Identity(3, 3));
    const auto u = ControlSignal::constant(0.1, Vector::Constant(1, 4.0));
    Vector x0(3);
    x0 << 1.0, -2.0, 3.5;
    EXPECT_EQ(flow(model, x0, u, 0.0, 9.0, rk4(10)), x0);
}

TEST(Flow, PendulumConservesEnergyWithoutFriction) {
    ParamMap params = test::scalar_params({{"L", 1.0}, {"M", 1.0}});
    const auto model = make_model(ModelKind::double_pendulum, params);
    const auto u = ControlSignal::constant(0.01, Vector::Zero(2));
    Vector x0(4);
    x0 << 0.9, -0.5, 0.3, 0.0;
    const Vector x = flow(model, x0, u, 0.0, 10.0, rk4(10));
    const double e0 = pendulum_energy(x0, 1.0, 1.0, 9.81);
    const double e1 = pendulum_energy(x, 1.0, 1.0, 9.81);
    EXPECT_LT(std::abs(e1 - e0) / std::abs(e0), 1e-4);
}

TEST(Flow, PendulumFrictionDissipates) {
    ParamMap params = test::scalar_params({{"L", 1.0}, {"M", 1.0}, {"friction", 0.5}});
    const auto model = make_model(ModelKind::double_pendulum, params);
    const auto u = ControlSignal::constant(0.01, Vector::Zero(2));
    Vector x0(4);
    x0 << 0.9, -0.5, 0.3, 0.0;
    const Vector x = flow(model, x0, u, 0.0, 5.0, rk4(10));
    EXPECT_LT(pendulum_energy(x, 1.0, 1.0, 9.81), pendulum_energy(x0, 1.0, 1.0, 9.81));
}

TEST(Simulate, ExponentialSamples) {
    const auto model = test::scalar_model(-1.0);
    const auto u = ControlSignal::constant(1.0, Vector());
    const auto traj = simulate(model, Vector::Constant(1, 1.0), u, 0.0, 1.0, 1.0, rk4(100));
    ASSERT_EQ(traj.states.size(), 2u);
    EXPECT_EQ(traj.states[0](0), 1.0);
    EXPECT_NEAR(traj.states[1](0), 0.367879, 1e-6);
}

TEST(Simulate, EmptyHorizonGivesInitialSample) {
    const auto model = test::van_der_pol();
    const auto u = ControlSignal::constant(0.1, Vector::Zero(1));
    Vector x0(2);
    x0 << 1.0, 2.0;
    const auto traj = simulate(model, x0, u, 3.0, 3.0, 0.1, rk4(10));
    ASSERT_EQ(traj.states.size(), 1u);
    EXPECT_EQ(traj.states[0], x0);
    EXPECT_EQ(traj.outputs[0], model.output(x0, Vector::Zero(1)));
}

TEST(Simulate, OutputsAreMappedStates) {
    const auto model = test::van_der_pol();
    ControlSignal u(0.1, 1);
    for (int j = 0; j <= 50; ++j) {
        u.append(0.1 * j, Vector::Constant(1, std::sin(0.3 * j)));
    }
    Vector x0(2);
    x0 << 2.0, 0.0;
    const auto traj = simulate(model, x0, u, 0.0, 5.0, 0.2, rk4(10));
    ASSERT_EQ(traj.states.size(), 26u);
    for (std::size_t i = 0; i < traj.states.size(); ++i) {
        EXPECT_EQ(traj.outputs[i], model.output(traj.states[i], u.at(traj.times[i])));
    }
}

TEST(ControlSignalTest, PiecewiseConstantLookup) {
    ControlSignal u(0.5, 1);
    u.append(0.0, Vector::Constant(1, 1.0));
    u.append(1.0, Vector::Constant(1, 2.0));
    EXPECT_EQ(u.at(0.0)(0), 1.0);
    EXPECT_EQ(u.at(0.99)(0), 1.0);
    EXPECT_EQ(u.at(1.0)(0), 2.0);
    EXPECT_EQ(u.at(50.0)(0), 2.0);
    EXPECT_THROW((void)u.at(-0.5), UsageError);
    EXPECT_THROW(u.append(1.0, Vector::Constant(1, 3.0)), UsageError);
    EXPECT_THROW(u.append(1.7, Vector::Constant(1, 3.0)), UsageError);
    EXPECT_THROW(u.append(2.0, Vector::Zero(2)), UsageError);
}

TEST(Models, PendulumDimensions) {
    const auto model = make_model(ModelKind::double_pendulum, test::scalar_params({{"L", 1.0}, {"M", 1.0}}));
    EXPECT_EQ(model.n, 4u);
    EXPECT_EQ(model.m, 2u);
    EXPECT_EQ(model.p, 1u);
}

TEST(Models, RunawayDimensions) {
    const auto model = test::runaway();
    EXPECT_EQ(model.n, 3u);
    EXPECT_EQ(model.p, 1u);
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> dist(0.0, 2.0);
    for (int i = 0; i < 50; ++i) {
        Vector x(3);
        x << dist(rng), dist(rng), dist(rng);
        EXPECT_EQ(model.derivative(x, Vector())(2), 0.0);
        EXPECT_EQ(model.output(x, Vector())(0), x(1));
    }
}

TEST(Models, ZeroEpsilonWarns) {
    const auto model = make_model(
        ModelKind::runaway,
        test::scalar_params({{"eps", 0}, {"nu", 1}, {"gamma1", 3}, {"Wt", 0.5}, {"S", 0.01}, {"Q", 1}}));
    EXPECT_FALSE(model.warnings.empty());
}

TEST(Models, UnknownParameterRejected) {
    auto params = test::scalar_params({{"mu", 1.0}, {"nu", 2.0}});
    EXPECT_THROW((void)make_model(ModelKind::van_der_pol, params), ConfigError);
}

TEST(Models, MissingParametersListedTogether) {
    try {
        (void)make_model(ModelKind::runaway, test::scalar_params({{"eps", 1.0}}));
        FAIL() << "expected a configuration error";
    } catch (const ConfigError& e) {
        const std::string msg = e.what();
        for (const char* key : {"nu", "gamma1", "Wt", "S", "Q"}) {
            EXPECT_NE(msg.find(key), std::string::npos) << key;
        }
    }
}

TEST(Models, LtiShapeChecked) {
    EXPECT_THROW((void)test::lti_model(Matrix::Zero(2, 3), Matrix::Zero(2, 1), Matrix::Zero(1, 2)), ConfigError);
    EXPECT_THROW((void)test::lti_model(Matrix::Zero(2, 2), Matrix::Zero(3, 1), Matrix::Zero(1, 2)), ConfigError);
    EXPECT_THROW((void)test::lti_model(Matrix::Zero(2, 2), Matrix::Zero(2, 1), Matrix::Zero(1, 3)), ConfigError);
}

TEST(Models, CatalogNamesRoundTrip) {
    for (const auto& info : model_catalog()) {
        EXPECT_EQ(parse_model_kind(info.name), info.kind);
    }
    EXPECT_THROW((void)parse_model_kind("lorenz"), ConfigError);
}

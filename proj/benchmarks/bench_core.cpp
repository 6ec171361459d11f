#include "mhe/estimators.hpp"
#include "mhe/lifting.hpp"

#include <benchmark/benchmark.h>

using namespace mhe;

namespace {

ContinuousModel vdp() {
    ParamMap params;
    params["mu"] = Matrix::Constant(1, 1, 1.0);
    return make_model(ModelKind::van_der_pol, params);
}

SampleBuffer window(const ContinuousModel& model, std::size_t rows, const IntegratorConfig& integ) {
    SampleBuffer buf(rows, 1, 1, 0.1);
    Vector x(2);
    x << 2.0, 0.0;
    const Vector u = Vector::Zero(1);
    for (std::size_t j = 0; j < rows; ++j) {
        const double t = 0.1 * static_cast<double>(j);
        buf.record_control(t, u);
        if (j > 0) {
            x = flow(model, x, buf.controls(), t - 0.1, t, integ);
        }
        buf.push(model.output(x, u), u, t);
    }
    return buf;
}

void BM_Flow(benchmark::State& state) {
    const auto model = vdp();
    const IntegratorConfig integ{IntegrationMethod::rk4, static_cast<int>(state.range(0))};
    const auto u = ControlSignal::constant(0.1, Vector::Zero(1));
    Vector x(2);
    x << 2.0, 0.0;
    for (auto _ : state) {
        benchmark::DoNotOptimize(flow(model, x, u, 0.0, 1.0, integ));
    }
    state.SetItemsProcessed(state.iterations() * 10 * state.range(0));
}
BENCHMARK(BM_Flow)->Arg(1)->Arg(10)->Arg(100);

void BM_Lift(benchmark::State& state) {
    const auto model = vdp();
    const IntegratorConfig integ{IntegrationMethod::rk4, 10};
    const auto rows = static_cast<std::size_t>(state.range(0));
    const auto buf = window(model, rows, integ);
    Vector zeta(2);
    zeta << 1.5, 0.3;
    for (auto _ : state) {
        benchmark::DoNotOptimize(lift(model, zeta, buf, integ));
    }
}
BENCHMARK(BM_Lift)->Arg(4)->Arg(8)->Arg(16);

void BM_PsiStep(benchmark::State& state) {
    const auto model = vdp();
    const IntegratorConfig integ{IntegrationMethod::rk4, 10};
    const auto buf = window(model, 8, integ);
    const WeightSet weights = WeightSet::identity(8, 1);
    WindowProblem problem{&model, &buf, &weights, integ, nullptr, nullptr};
    Objective obj;
    obj.dimension = 2;
    obj.residual = [&](const Vector& z) { return stacked_residual(buf, lift_detail(problem, z).output); };
    obj.weight = stacked_weight(weights);
    OptimizerConfig cfg;
    cfg.kind = static_cast<OptimizerKind>(state.range(0));
    cfg.damping = 1e-6;
    cfg.step_size = 1e-3;
    Vector zeta(2);
    zeta << 1.5, 0.3;
    for (auto _ : state) {
        benchmark::DoNotOptimize(psi_step(obj, zeta, cfg));
    }
    state.SetLabel(std::string(to_string(cfg.kind)));
}
BENCHMARK(BM_PsiStep)->DenseRange(0, 2);

}  // namespace

BENCHMARK_MAIN();

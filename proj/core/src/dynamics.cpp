#include "mhe/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace mhe {

Vector ContinuousModel::derivative(const Vector& x, const Vector& u) const {
    if (static_cast<std::size_t>(x.size()) != n || static_cast<std::size_t>(u.size()) != m) {
        throw UsageError(name + ": derivative called with state/input of wrong size");
    }
    return f(x, u);
}

Vector ContinuousModel::output(const Vector& x, const Vector& u) const {
    if (static_cast<std::size_t>(x.size()) != n || static_cast<std::size_t>(u.size()) != m) {
        throw UsageError(name + ": output called with state/input of wrong size");
    }
    return h(x, u);
}

// ---------------------------------------------------------------------------
// ControlSignal

ControlSignal::ControlSignal(double period, std::size_t width) : period_(period), width_(width) {
    if (!(period > 0.0) || !std::isfinite(period)) {
        throw UsageError("control signal period must be positive");
    }
}

ControlSignal ControlSignal::constant(double period, Vector value, double t0) {
    ControlSignal signal(period, static_cast<std::size_t>(value.size()));
    signal.append(t0, std::move(value));
    return signal;
}

std::int64_t ControlSignal::grid_index(double time) const {
    return static_cast<std::int64_t>(std::llround((time - origin_) / period_));
}

void ControlSignal::append(double time, Vector value) {
    if (static_cast<std::size_t>(value.size()) != width_) {
        throw UsageError("control sample has the wrong width");
    }
    if (!has_origin_) {
        origin_ = time;
        has_origin_ = true;
    } else {
        if (std::abs(grid_time(grid_index(time)) - time) > tolerance()) {
            throw UsageError("control sample time is not aligned to the base period");
        }
        if (!samples_.empty() && time <= samples_.back().time + tolerance()) {
            throw UsageError("control sample times must be strictly increasing");
        }
    }
    samples_.push_back({time, std::move(value)});
}

const Vector& ControlSignal::at(double time) const {
    if (samples_.empty() || time < samples_.front().time - tolerance()) {
        std::ostringstream msg;
        msg << "control signal undefined at t=" << time;
        throw UsageError(msg.str());
    }
    auto it = std::upper_bound(samples_.begin(), samples_.end(), time + tolerance(),
                               [](double t, const Sample& s) { return t < s.time; });
    return std::prev(it)->value;
}

void ControlSignal::discard_before(double time) {
    auto it = std::upper_bound(samples_.begin(), samples_.end(), time + tolerance(),
                               [](double t, const Sample& s) { return t < s.time; });
    if (it == samples_.begin()) {
        return;
    }
    samples_.erase(samples_.begin(), std::prev(it));
}

// ---------------------------------------------------------------------------
// Integration

namespace {

Vector rk4_step(const ContinuousModel& model, const Vector& x, const Vector& u, double h) {
    const Vector k1 = model.f(x, u);
    const Vector k2 = model.f(x + 0.5 * h * k1, u);
    const Vector k3 = model.f(x + 0.5 * h * k2, u);
    const Vector k4 = model.f(x + h * k3, u);
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

Vector euler_step(const ContinuousModel& model, const Vector& x, const Vector& u, double h) {
    return x + h * model.f(x, u);
}

}  // namespace

Vector flow(const ContinuousModel& model, const Vector& x0, const ControlSignal& u, double t0, double t1,
            const IntegratorConfig& cfg, WorkCounters* counters) {
    if (static_cast<std::size_t>(x0.size()) != model.n) {
        throw UsageError("flow: initial state has the wrong size");
    }
    if (cfg.substeps_per_period < 1) {
        throw UsageError("flow: substeps_per_period must be >= 1");
    }
    if (u.width() != model.m) {
        throw UsageError("flow: control signal width does not match the model input dimension");
    }
    const double tol = u.tolerance();
    if (t1 < t0 - tol) {
        throw UsageError("flow: t1 must not precede t0");
    }

    const double nominal = u.period() / cfg.substeps_per_period;
    Vector x = x0;
    double t = t0;
    std::uint64_t steps_taken = 0;

    while (t < t1 - tol) {
        // Snap onto the grid so repeated calls see identical segment bounds.
        std::int64_t j = u.grid_index(t);
        if (std::abs(u.grid_time(j) - t) <= tol) {
            t = u.grid_time(j);
        } else if (u.grid_time(j) > t) {
            --j;
        }
        double seg_end = u.grid_time(j + 1);
        if (seg_end > t1 - tol) {
            seg_end = t1;
        }
        const double length = seg_end - t;
        const auto steps = std::max<std::int64_t>(1, static_cast<std::int64_t>(std::ceil(length / nominal - 1e-9)));
        const double h = length / static_cast<double>(steps);
        const Vector& input = u.at(t);

        for (std::int64_t s = 0; s < steps; ++s) {
            x = cfg.method == IntegrationMethod::rk4 ? rk4_step(model, x, input, h) : euler_step(model, x, input, h);
            if (!x.allFinite()) {
                const double t_fail = t + static_cast<double>(s + 1) * h;
                std::ostringstream msg;
                msg << model.name << ": integration diverged at t=" << t_fail;
                throw DivergenceError(t_fail, msg.str());
            }
        }
        steps_taken += static_cast<std::uint64_t>(steps);
        t = seg_end;
    }

    if (counters != nullptr) {
        counters->integration_substeps += steps_taken;
    }
    return x;
}

Trajectory simulate(const ContinuousModel& model, const Vector& x0, const ControlSignal& u, double t0, double tf,
                    double sample_period, const IntegratorConfig& cfg, WorkCounters* counters) {
    const double ratio = sample_period / u.period();
    if (!(sample_period > 0.0) || std::abs(ratio - std::round(ratio)) > 1e-9 || std::round(ratio) < 1.0) {
        throw UsageError("simulate: sample period must be a positive multiple of the control period");
    }
    if (tf < t0) {
        throw UsageError("simulate: tf must not precede t0");
    }
    const auto count = static_cast<std::int64_t>(std::floor((tf - t0) / sample_period + 1e-9)) + 1;

    Trajectory traj;
    traj.times.reserve(static_cast<std::size_t>(count));
    Vector x = x0;
    for (std::int64_t i = 0; i < count; ++i) {
        const double t = t0 + static_cast<double>(i) * sample_period;
        if (i > 0) {
            x = flow(model, x, u, traj.times.back(), t, cfg, counters);
        }
        traj.times.push_back(t);
        traj.states.push_back(x);
        traj.outputs.push_back(model.output(x, u.at(t)));
    }
    return traj;
}

// ---------------------------------------------------------------------------
// Model catalog

namespace {

const std::vector<ModelInfo>& catalog_storage() {
    static const std::vector<ModelInfo> catalog = {
        {ModelKind::van_der_pol, "van_der_pol", {"mu"}, {}, "x1' = x2, x2' = mu(1 - x1^2)x2 - x1 + u, y = x1"},
        {ModelKind::runaway,
         "runaway",
         {"eps", "nu", "gamma1", "Wt", "S", "Q"},
         {},
         "plasma wave amplitude / runaway anisotropy, x3 constant, y = x2"},
        {ModelKind::double_pendulum,
         "double_pendulum",
         {"L", "M"},
         {"g", "friction"},
         "two-link planar pendulum, state [q1 q2 dq1 dq2], torques u, y = q1"},
        {ModelKind::lti, "lti", {"A", "B", "C"}, {}, "x' = A x + B u, y = C x"},
    };
    return catalog;
}

double scalar(const ParamMap& params, std::string_view key) {
    const auto it = params.find(key);
    if (it == params.end()) {
        throw ConfigError("missing model parameter '" + std::string(key) + "'");
    }
    if (it->second.size() != 1) {
        throw ConfigError("model parameter '" + std::string(key) + "' must be a scalar");
    }
    const double v = it->second(0, 0);
    if (!std::isfinite(v)) {
        throw ConfigError("model parameter '" + std::string(key) + "' is not finite");
    }
    return v;
}

double scalar_or(const ParamMap& params, std::string_view key, double fallback) {
    return params.contains(key) ? scalar(params, key) : fallback;
}

void check_keys(const ModelInfo& info, const ParamMap& params) {
    std::vector<std::string> missing;
    for (const auto key : info.required) {
        if (!params.contains(key)) {
            missing.emplace_back(key);
        }
    }
    if (!missing.empty()) {
        std::string msg = std::string(info.name) + ": missing parameter(s):";
        for (const auto& key : missing) {
            msg += " " + key;
        }
        throw ConfigError(msg);
    }
    for (const auto& [key, value] : params) {
        const bool known = std::find(info.required.begin(), info.required.end(), key) != info.required.end() ||
                           std::find(info.optional.begin(), info.optional.end(), key) != info.optional.end();
        if (!known) {
            throw ConfigError(std::string(info.name) + ": unknown parameter '" + key + "'");
        }
    }
}

ContinuousModel make_van_der_pol(const ParamMap& params) {
    const double mu = scalar(params, "mu");
    ContinuousModel model;
    model.name = "van_der_pol";
    model.n = 2;
    model.m = 1;
    model.p = 1;
    model.f = [mu](const Vector& x, const Vector& u) {
        Vector dx(2);
        dx(0) = x(1);
        dx(1) = mu * (1.0 - x(0) * x(0)) * x(1) - x(0) + u(0);
        return dx;
    };
    model.h = [](const Vector& x, const Vector&) { return Vector::Constant(1, x(0)); };
    return model;
}

ContinuousModel make_runaway(const ParamMap& params) {
    const double eps = scalar(params, "eps");
    const double nu = scalar(params, "nu");
    const double gamma1 = scalar(params, "gamma1");
    const double wt = scalar(params, "Wt");
    const double s = scalar(params, "S");
    const double q = scalar(params, "Q");
    if (wt == 0.0) {
        throw ConfigError("runaway: Wt must be nonzero");
    }
    ContinuousModel model;
    model.name = "runaway";
    model.n = 3;
    model.m = 0;
    model.p = 1;
    if (eps == 0.0) {
        model.warnings.emplace_back("runaway: eps = 0 freezes the dynamics");
    }
    model.f = [=](const Vector& x, const Vector&) {
        Vector dx(3);
        dx(0) = eps * (-2.0 * x(0) * x(1) - 2.0 * s + q);
        dx(1) = eps * (-nu * x(1) + x(2) * (x(0) * x(1) + s) - gamma1 * x(1) / (1.0 + x(1) / wt));
        dx(2) = 0.0;
        return dx;
    };
    model.h = [](const Vector& x, const Vector&) { return Vector::Constant(1, x(1)); };
    return model;
}

// Relative joint angles, point masses at the link tips, angles measured from
// the downward vertical.
ContinuousModel make_double_pendulum(const ParamMap& params) {
    const double len = scalar(params, "L");
    const double mass = scalar(params, "M");
    const double g = scalar_or(params, "g", 9.81);
    const double friction = scalar_or(params, "friction", 0.0);
    if (len <= 0.0 || mass <= 0.0) {
        throw ConfigError("double_pendulum: L and M must be positive");
    }
    if (friction < 0.0) {
        throw ConfigError("double_pendulum: friction must be nonnegative");
    }
    ContinuousModel model;
    model.name = "double_pendulum";
    model.n = 4;
    model.m = 2;
    model.p = 1;
    model.f = [=](const Vector& x, const Vector& u) {
        const double q1 = x(0);
        const double q2 = x(1);
        const double dq1 = x(2);
        const double dq2 = x(3);
        const double c2 = std::cos(q2);
        const double s2 = std::sin(q2);
        const double l2 = len * len;

        Eigen::Matrix2d inertia;
        inertia(0, 0) = mass * l2 + mass * (2.0 * l2 + 2.0 * l2 * c2);
        inertia(0, 1) = mass * (l2 + l2 * c2);
        inertia(1, 0) = inertia(0, 1);
        inertia(1, 1) = mass * l2;

        Eigen::Vector2d coriolis;
        coriolis(0) = -mass * l2 * s2 * (2.0 * dq1 * dq2 + dq2 * dq2) + friction * dq1;
        coriolis(1) = mass * l2 * s2 * dq1 * dq1 + friction * dq2;

        Eigen::Vector2d gravity;
        gravity(0) = 2.0 * mass * g * len * std::sin(q1) + mass * g * len * std::sin(q1 + q2);
        gravity(1) = mass * g * len * std::sin(q1 + q2);

        const Eigen::Vector2d rhs = Eigen::Vector2d(u(0), u(1)) - coriolis - gravity;
        const Eigen::Vector2d ddq = inertia.ldlt().solve(rhs);

        Vector dx(4);
        dx << dq1, dq2, ddq(0), ddq(1);
        return dx;
    };
    model.h = [](const Vector& x, const Vector&) { return Vector::Constant(1, x(0)); };
    return model;
}

ContinuousModel make_lti(const ParamMap& params) {
    const Matrix a = params.find("A")->second;
    const Matrix b = params.find("B")->second;
    const Matrix c = params.find("C")->second;
    if (a.rows() != a.cols() || a.rows() == 0) {
        throw ConfigError("lti: A must be square and nonempty");
    }
    if (b.rows() != a.rows()) {
        throw ConfigError("lti: B must have as many rows as A");
    }
    if (c.cols() != a.cols() || c.rows() == 0) {
        throw ConfigError("lti: C must have as many columns as A");
    }
    if (!a.allFinite() || !b.allFinite() || !c.allFinite()) {
        throw ConfigError("lti: matrices must be finite");
    }
    ContinuousModel model;
    model.name = "lti";
    model.n = static_cast<std::size_t>(a.rows());
    model.m = static_cast<std::size_t>(b.cols());
    model.p = static_cast<std::size_t>(c.rows());
    model.f = [a, b](const Vector& x, const Vector& u) -> Vector { return a * x + b * u; };
    model.h = [c](const Vector& x, const Vector&) -> Vector { return c * x; };
    return model;
}

}  // namespace

const std::vector<ModelInfo>& model_catalog() { return catalog_storage(); }

const ModelInfo& model_info(ModelKind kind) {
    for (const auto& info : catalog_storage()) {
        if (info.kind == kind) {
            return info;
        }
    }
    throw UsageError("unknown model kind");
}

ModelKind parse_model_kind(std::string_view name) {
    for (const auto& info : catalog_storage()) {
        if (info.name == name) {
            return info.kind;
        }
    }
    throw ConfigError("unknown model kind '" + std::string(name) + "'");
}

ContinuousModel make_model(ModelKind kind, const ParamMap& params) {
    check_keys(model_info(kind), params);
    switch (kind) {
        case ModelKind::van_der_pol: return make_van_der_pol(params);
        case ModelKind::runaway: return make_runaway(params);
        case ModelKind::double_pendulum: return make_double_pendulum(params);
        case ModelKind::lti: return make_lti(params);
    }
    throw ConfigError("unknown model kind");
}

}  // namespace mhe

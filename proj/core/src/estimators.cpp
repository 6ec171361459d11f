#include "mhe/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace mhe {

EstimatorMode parse_estimator_mode(std::string_view name) {
    if (name == "standard") {
        return EstimatorMode::standard;
    }
    if (name == "filtered") {
        return EstimatorMode::filtered;
    }
    if (name == "adaptive") {
        return EstimatorMode::adaptive;
    }
    if (name == "filtered_adaptive") {
        return EstimatorMode::filtered_adaptive;
    }
    throw ConfigError("unknown estimator mode '" + std::string(name) + "'");
}

std::string_view to_string(EstimatorMode mode) {
    switch (mode) {
        case EstimatorMode::standard: return "standard";
        case EstimatorMode::filtered: return "filtered";
        case EstimatorMode::adaptive: return "adaptive";
        case EstimatorMode::filtered_adaptive: return "filtered_adaptive";
    }
    return "unknown";
}

void MheConfig::validate(const ContinuousModel& model) const {
    if (window < 1) {
        throw ConfigError("estimator: N must be >= 1");
    }
    if (downsample < 1) {
        throw ConfigError("estimator: N_Ts must be >= 1");
    }
    if (!(base_period > 0.0) || !std::isfinite(base_period)) {
        throw ConfigError("estimator: T_s must be positive");
    }
    if (max_spacing < downsample) {
        throw ConfigError("estimator: N_max must be >= N_Ts");
    }
    if (!(delta_min >= 0.0) || !(d_min >= 0.0)) {
        throw ConfigError("estimator: thresholds must be nonnegative");
    }
    if (integrator.substeps_per_period < 1) {
        throw ConfigError("estimator: integrator substeps must be >= 1");
    }
    optimizer.validate();
    if (filtered()) {
        if (model.p != 1) {
            throw ConfigError("estimator: filtered modes need a single output channel (p = 1)");
        }
        for (const auto& f : filters.filters()) {
            if (std::abs(f.period() - candidate_period()) > 1e-9 * candidate_period()) {
                throw ConfigError("estimator: filter period must equal N_Ts * T_s");
            }
        }
    }
    if (!(raw_weight > 0.0) || !(filtered_weight > 0.0)) {
        throw ConfigError("estimator: weights must be positive");
    }
    if (weights) {
        if (weights->size() != window) {
            throw ConfigError("estimator: weight set must have N matrices");
        }
        for (const auto& w : weights->matrices()) {
            if (static_cast<std::size_t>(w.rows()) != row_width(model)) {
                throw ConfigError("estimator: weight matrix size does not match the buffer row width");
            }
        }
    }
}

WeightSet MheConfig::effective_weights(const ContinuousModel& model) const {
    if (weights) {
        return *weights;
    }
    Vector diagonal = Vector::Constant(static_cast<Eigen::Index>(row_width(model)), filtered_weight);
    diagonal.head(static_cast<Eigen::Index>(model.p)).setConstant(raw_weight);
    return WeightSet::uniform(window, diagonal);
}

// ---------------------------------------------------------------------------
// Indices

namespace {

std::vector<double> increments(const SampleBuffer& buffer) {
    std::vector<double> sigma;
    for (std::size_t i = 1; i < buffer.fill(); ++i) {
        sigma.push_back((buffer.row(i).y - buffer.row(i - 1).y).norm());
    }
    return sigma;
}

}  // namespace

AdaptiveIndices adaptive_indices(const SampleBuffer& buffer, const Vector& newest, const LiftedOutput& predicted) {
    if (buffer.fill() == 0) {
        throw UsageError("adaptive_indices: empty buffer");
    }
    if (newest.size() != buffer.front().y.size()) {
        throw UsageError("adaptive_indices: newest sample has the wrong width");
    }
    AdaptiveIndices idx;
    idx.sigma = increments(buffer);
    for (const double s : idx.sigma) {
        idx.delta += s;
    }
    idx.delta += (newest - buffer.front().y).norm();
    idx.d_v = stacked_residual(buffer, predicted).norm();
    return idx;
}

// ---------------------------------------------------------------------------
// Estimator state

std::int64_t EstimatorState::tick(double t) const {
    return static_cast<std::int64_t>(std::llround((t - t_origin) / buffer.controls().period()));
}

EstimatorState make_estimator(const ContinuousModel& model, const MheConfig& cfg, const Vector& initial_guess,
                              double t0) {
    cfg.validate(model);
    if (static_cast<std::size_t>(initial_guess.size()) != model.n) {
        throw ConfigError("estimator: initial guess has the wrong size");
    }
    EstimatorState st;
    st.buffer = SampleBuffer(cfg.window, cfg.row_width(model), model.m, cfg.base_period);
    st.zeta = initial_guess;
    st.x_now = initial_guess;
    st.t_now = t0;
    st.t_origin = t0;
    st.weights = cfg.effective_weights(model);
    return st;
}

void record_control(EstimatorState& st, double t, const Vector& u) { st.buffer.record_control(t, u); }

namespace {

/// Charges the substeps taken during its lifetime to one phase.
class PhaseMeter {
public:
    PhaseMeter(const WorkCounters& counters, std::uint64_t& slot)
        : counters_(counters), slot_(slot), start_(counters.integration_substeps) {}
    PhaseMeter(const PhaseMeter&) = delete;
    PhaseMeter& operator=(const PhaseMeter&) = delete;
    ~PhaseMeter() { slot_ += counters_.integration_substeps - start_; }

private:
    const WorkCounters& counters_;
    std::uint64_t& slot_;
    std::uint64_t start_;
};

Vector predicted_row_at(EstimatorState& st, const MheConfig& cfg, const ContinuousModel& model, const Vector& x,
                        double t) {
    const Vector y_hat = model.output(x, st.buffer.controls().at(t));
    if (!cfg.filtered()) {
        return y_hat;
    }
    if (st.filter_pred.size() == 0) {
        st.filter_pred = cfg.filters.initial_state(y_hat(0));
    }
    auto step = cfg.filters.step(st.filter_pred, y_hat(0));
    st.filter_pred = step.state;
    return FilterBank::augment(y_hat(0), step.outputs);
}

CandidateSample observe(EstimatorState& st, const MheConfig& cfg, const ContinuousModel& model, const Vector& y,
                        const Vector& u, double t) {
    if (static_cast<std::size_t>(y.size()) != model.p || static_cast<std::size_t>(u.size()) != model.m) {
        throw UsageError("estimator: measurement or input has the wrong size");
    }
    const std::int64_t k = st.tick(t);
    if (std::abs(t - st.t_origin - static_cast<double>(k) * cfg.base_period) > 1e-9 * cfg.base_period ||
        k % static_cast<std::int64_t>(cfg.downsample) != 0) {
        throw UsageError("estimator: sample time is not on the N_Ts * T_s grid");
    }
    if (st.started && !(t > st.t_now)) {
        throw UsageError("estimator: sample times must be strictly increasing");
    }
    record_control(st, t, u);

    CandidateSample sample{t, y, y, u, {}};
    if (cfg.filtered()) {
        if (st.filter_live.size() == 0) {
            st.filter_live = cfg.filters.initial_state(y(0));
        }
        sample.filter_state = st.filter_live;
        auto step = cfg.filters.step(st.filter_live, y(0));
        st.filter_live = step.state;
        sample.row = FilterBank::augment(y(0), step.outputs);
    }
    st.history.push_back(sample);
    while (st.history.size() > cfg.window) {
        st.history.pop_front();
    }
    ++st.stats.candidates;
    return sample;
}

void begin(EstimatorState& st, const MheConfig& cfg, const ContinuousModel& model, double t) {
    st.started = true;
    if (t > st.t_now) {
        st.x_now = flow(model, st.x_now, st.buffer.controls(), st.t_now, t, cfg.integrator, &st.counters);
    }
    st.t_now = t;
    st.estimates[st.tick(t)] = st.x_now;
    st.predicted_row = predicted_row_at(st, cfg, model, st.x_now, t);
}

void propagate_open_loop(EstimatorState& st, const MheConfig& cfg, const ContinuousModel& model, double t) {
    Vector x = flow(model, st.x_now, st.buffer.controls(), st.t_now, t, cfg.integrator, &st.counters);
    st.x_now = std::move(x);
    st.t_now = t;
    st.estimates[st.tick(t)] = st.x_now;
    st.predicted_row = predicted_row_at(st, cfg, model, st.x_now, t);
}

Vector window_start_guess(EstimatorState& st, const MheConfig& cfg, const ContinuousModel& model) {
    const double start = st.buffer.front().stamp;
    const auto it = st.estimates.upper_bound(st.tick(start));
    if (it == st.estimates.begin()) {
        throw UsageError("estimator: no estimate available at the window start");
    }
    const auto& [k, x] = *std::prev(it);
    if (k == st.tick(start)) {
        return x;
    }
    const double from = st.t_origin + static_cast<double>(k) * cfg.base_period;
    return flow(model, x, st.buffer.controls(), from, start, cfg.integrator, &st.counters);
}

void estimate(EstimatorState& st, const MheConfig& cfg, const ContinuousModel& model, StepRecord& rec) {
    WindowProblem problem;
    problem.model = &model;
    problem.buffer = &st.buffer;
    problem.weights = &st.weights;
    problem.integrator = cfg.integrator;
    problem.filters = cfg.filtered() ? &cfg.filters : nullptr;
    problem.counters = &st.counters;

    Objective objective;
    objective.dimension = model.n;
    objective.residual = [&problem](const Vector& z) {
        return stacked_residual(*problem.buffer, lift_detail(problem, z).output);
    };
    objective.weight = stacked_weight(st.weights);
    const double fd_step = cfg.optimizer.fd_step;
    objective.gradient_override = [&problem, fd_step](const Vector& z) { return cost_gradient(problem, z, fd_step); };

    OptimizeResult result;
    {
        PhaseMeter meter(st.counters, st.stats.estimation_substeps);
        const Vector zeta0 = window_start_guess(st, cfg, model);
        result = optimize(objective, zeta0, cfg.optimizer, &st.counters);
    }
    LiftDetail detail;
    {
        PhaseMeter meter(st.counters, st.stats.propagation_substeps);
        detail = lift_detail(problem, result.solution);
    }

    st.zeta = result.solution;
    for (std::size_t j = 0; j < st.buffer.fill(); ++j) {
        st.estimates[st.tick(st.buffer.row(j).stamp)] = detail.chain[j];
    }
    st.x_now = detail.chain.back();
    st.t_now = st.buffer.back().stamp;
    st.predicted_row = detail.output.rows.back();
    if (cfg.filtered()) {
        st.filter_pred = detail.filter_state;
    }
    st.last_lift = std::move(detail.output);
    st.last_accept_stamp = st.t_now;
    ++st.stats.estimations_performed;

    rec.estimated = true;
    rec.cost_pre = result.cost_trace.front();
    rec.cost_post = result.cost_trace.back();
}

/// Freeze-and-flag: keep the last finite estimate, relabelled to the current instant.
template <class Fn>
void guarded(EstimatorState& st, StepRecord& rec, double t, Fn&& fn) {
    try {
        fn();
    } catch (const NumericalError& e) {
        rec.failed = true;
        rec.estimated = false;
        ++st.stats.failures;
        std::ostringstream msg;
        msg << "t=" << t << ": estimation failed: " << e.what();
        st.events.push_back(msg.str());
        st.started = true;
        st.t_now = t;
        st.estimates[st.tick(t)] = st.x_now;
        st.last_lift.reset();
    }
}

void prune(EstimatorState& st, const MheConfig& cfg) {
    double keep = st.t_now - cfg.candidate_period();
    if (!st.history.empty()) {
        keep = std::min(keep, st.history.front().time);
    }
    if (st.buffer.fill() > 0) {
        keep = std::min(keep, st.buffer.front().stamp);
    }
    const std::int64_t keep_tick = st.tick(keep);
    // Keep the last estimate at or before the horizon start so it can seed re-propagation.
    auto it = st.estimates.upper_bound(keep_tick);
    if (it != st.estimates.begin()) {
        st.estimates.erase(st.estimates.begin(), std::prev(it));
    }
    double control_keep = keep;
    if (!st.estimates.empty()) {
        control_keep = std::min(control_keep, st.t_origin + static_cast<double>(st.estimates.begin()->first) *
                                                                cfg.base_period);
    }
    st.buffer.trim_controls(control_keep);
}

void fill_phase(EstimatorState& st, const MheConfig& cfg, const ContinuousModel& model,
                const CandidateSample& sample, StepRecord& rec) {
    guarded(st, rec, sample.time, [&] {
        PhaseMeter meter(st.counters, st.stats.fill_substeps);
        if (!st.started) {
            begin(st, cfg, model, sample.time);
        } else {
            propagate_open_loop(st, cfg, model, sample.time);
        }
    });
    st.buffer.push(sample.row, sample.input, sample.time, sample.filter_state);
    if (st.buffer.full() && !rec.failed) {
        guarded(st, rec, sample.time, [&] { estimate(st, cfg, model, rec); });
    }
}

StepRecord fixed_schedule_step(EstimatorState& st, const MheConfig& cfg, const Vector& y, const Vector& u, double t,
                               const ContinuousModel& model) {
    StepRecord rec;
    rec.time = t;
    const CandidateSample sample = observe(st, cfg, model, y, u, t);
    if (!st.buffer.full()) {
        fill_phase(st, cfg, model, sample, rec);
    } else {
        st.buffer.push(sample.row, sample.input, sample.time, sample.filter_state);
        guarded(st, rec, t, [&] { estimate(st, cfg, model, rec); });
    }
    prune(st, cfg);
    return rec;
}

}  // namespace

StepRecord standard_step(EstimatorState& st, const MheConfig& cfg, const Vector& y, const Vector& u, double t,
                         const ContinuousModel& model) {
    if (cfg.filtered()) {
        throw UsageError("standard_step: configuration has output filters; use filtered_step");
    }
    return fixed_schedule_step(st, cfg, y, u, t, model);
}

StepRecord filtered_step(EstimatorState& st, const MheConfig& cfg, const Vector& y, const Vector& u, double t,
                         const ContinuousModel& model) {
    if (!cfg.filters.empty() && model.p != 1) {
        throw UsageError("filtered_step: filtered windows require p = 1");
    }
    if (!cfg.filters.empty() && !cfg.filtered()) {
        throw UsageError("filtered_step: estimator mode is not a filtered mode");
    }
    return fixed_schedule_step(st, cfg, y, u, t, model);
}

StepRecord adaptive_step(EstimatorState& st, const MheConfig& cfg, const Vector& y, const Vector& u, double t,
                         const ContinuousModel& model) {
    StepRecord rec;
    rec.time = t;
    const CandidateSample sample = observe(st, cfg, model, y, u, t);
    if (!st.buffer.full()) {
        fill_phase(st, cfg, model, sample, rec);
        prune(st, cfg);
        return rec;
    }

    guarded(st, rec, t, [&] {
        PhaseMeter meter(st.counters, st.stats.propagation_substeps);
        propagate_open_loop(st, cfg, model, t);
    });

    // Richness of the current window against the incoming sample; residual of
    // the window that accepting the sample would produce, predicted from the
    // cached lift plus the open-loop estimate (no extra integration).
    double delta = 0.0;
    for (const double s : increments(st.buffer)) {
        delta += s;
    }
    delta += (sample.row - st.buffer.front().y).norm();
    double d_v = std::numeric_limits<double>::infinity();
    if (st.last_lift && !rec.failed) {
        double sum = (sample.row - st.predicted_row).squaredNorm();
        for (std::size_t j = 1; j < st.buffer.fill(); ++j) {
            sum += (st.buffer.row(j).y - st.last_lift->rows[j]).squaredNorm();
        }
        d_v = std::sqrt(sum);
    }
    rec.delta = delta;
    rec.d_v = d_v;

    const bool rich = delta >= cfg.delta_min;        // AC1
    const bool imprecise = d_v >= cfg.d_min;          // AC2
    if (rich && imprecise) {
        const std::int64_t gap = st.tick(t) - st.tick(st.buffer.back().stamp);
        if (cfg.max_spacing != unlimited_spacing && gap >= static_cast<std::int64_t>(cfg.max_spacing)) {
            std::vector<SampleBuffer::Row> rows;
            rows.reserve(st.history.size());
            for (const auto& s : st.history) {
                rows.push_back({s.row, s.input, s.time, s.filter_state});
            }
            for (std::size_t j = 1; j < rows.size(); ++j) {
                const double spacing = rows[j].stamp - rows[j - 1].stamp;
                if (std::abs(spacing - cfg.candidate_period()) > 1e-9 * cfg.candidate_period()) {
                    throw UsageError("adaptive_step: raw history is not aligned to the N_Ts grid");
                }
            }
            st.buffer.rebuild(rows);
            st.last_lift.reset();
            ++st.stats.reinitialisations;
            rec.reinitialised = true;
            std::ostringstream msg;
            msg << "t=" << t << ": window re-initialised after " << gap << " base periods without estimation";
            st.events.push_back(msg.str());
        } else {
            st.buffer.push(sample.row, sample.input, sample.time, sample.filter_state);
        }
        guarded(st, rec, t, [&] { estimate(st, cfg, model, rec); });
    } else {
        ++st.stats.samples_skipped;
        rec.skipped = true;
    }
    prune(st, cfg);
    return rec;
}

StepRecord estimator_step(EstimatorState& st, const MheConfig& cfg, const Vector& y, const Vector& u, double t,
                          const ContinuousModel& model) {
    switch (cfg.mode) {
        case EstimatorMode::standard: return standard_step(st, cfg, y, u, t, model);
        case EstimatorMode::filtered: return filtered_step(st, cfg, y, u, t, model);
        case EstimatorMode::adaptive:
        case EstimatorMode::filtered_adaptive: return adaptive_step(st, cfg, y, u, t, model);
    }
    throw UsageError("unknown estimator mode");
}

IntersampleEstimate intersample_estimate(const EstimatorState& st, const MheConfig& cfg, double t,
                                         const ContinuousModel& model, WorkCounters* counters) {
    if (!st.started) {
        throw UsageError("intersample_estimate: estimator has not received a sample yet");
    }
    const std::int64_t q = st.tick(t) - st.tick(st.t_now);
    const auto limit = static_cast<std::int64_t>(cfg.downsample);
    if (q >= limit || q <= -limit ||
        std::abs(t - st.t_origin - static_cast<double>(st.tick(t)) * cfg.base_period) > 1e-9 * cfg.base_period) {
        throw UsageError("intersample_estimate: t is outside the covered horizon (|q| < N_Ts)");
    }
    IntersampleEstimate out{st.x_now, cfg.filtered() ? st.filter_pred : Vector()};
    if (q == 0) {
        return out;
    }

    double from = st.t_now;
    if (q < 0) {
        const auto it = st.estimates.find(st.tick(st.t_now) - limit);
        if (it == st.estimates.end()) {
            throw UsageError("intersample_estimate: no stored estimate before t");
        }
        out.state = it->second;
        from = st.t_now - cfg.candidate_period();
        if (cfg.filtered()) {
            // The predicted bank state is only kept at the newest instant.
            out.filter_state = Vector();
        }
    }
    const ControlSignal& controls = st.buffer.controls();
    const std::int64_t hops = st.tick(t) - st.tick(from);
    for (std::int64_t s = 1; s <= hops; ++s) {
        const double next = from + static_cast<double>(s) * cfg.base_period;
        const double prev = from + static_cast<double>(s - 1) * cfg.base_period;
        out.state = flow(model, out.state, controls, prev, next, cfg.integrator, counters);
        if (out.filter_state.size() > 0) {
            const Vector y_hat = model.output(out.state, controls.at(next));
            out.filter_state = cfg.filters.step(out.filter_state, y_hat(0)).state;
        }
    }
    return out;
}

Vector repropagate(const EstimatorState& st, const MheConfig& cfg, const ContinuousModel& model) {
    if (!st.buffer.full()) {
        throw UsageError("repropagate: buffer not full");
    }
    return flow(model, st.zeta, st.buffer.controls(), st.buffer.front().stamp, st.buffer.back().stamp,
                cfg.integrator, nullptr);
}

}  // namespace mhe

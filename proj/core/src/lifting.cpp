#include "mhe/lifting.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <string>

namespace mhe {

// ---------------------------------------------------------------------------
// SampleBuffer

SampleBuffer::SampleBuffer(std::size_t capacity, std::size_t row_width, std::size_t input_width, double base_period)
    : capacity_(capacity), row_width_(row_width), input_width_(input_width), controls_(base_period, input_width) {
    if (capacity == 0) {
        throw UsageError("sample buffer capacity must be >= 1");
    }
}

void SampleBuffer::record_control(double time, const Vector& u) {
    if (static_cast<std::size_t>(u.size()) != input_width_) {
        throw UsageError("control sample width does not match the buffer");
    }
    if (!controls_.empty() && std::abs(controls_.samples().back().time - time) <= controls_.tolerance()) {
        if (controls_.samples().back().value != u) {
            throw UsageError("conflicting control values recorded for the same instant");
        }
        return;
    }
    controls_.append(time, u);
}

void SampleBuffer::push(const Vector& y, const Vector& u, double stamp, const Vector& filter_state) {
    if (static_cast<std::size_t>(y.size()) != row_width_ || static_cast<std::size_t>(u.size()) != input_width_) {
        throw UsageError("sample does not match the buffer row width");
    }
    if (!rows_.empty() && !(stamp > rows_.back().stamp)) {
        throw UsageError("sample stamps must be strictly increasing");
    }
    if (!controls_.empty() && stamp < controls_.samples().back().time - controls_.tolerance()) {
        throw UsageError("sample predates the recorded control history");
    }
    record_control(stamp, u);
    if (rows_.size() == capacity_) {
        rows_.pop_front();
    }
    rows_.push_back({y, u, stamp, filter_state});
}

void SampleBuffer::rebuild(const std::vector<Row>& rows) {
    if (rows.size() > capacity_) {
        throw UsageError("rebuild: more rows than the buffer capacity");
    }
    for (std::size_t j = 0; j < rows.size(); ++j) {
        if (static_cast<std::size_t>(rows[j].y.size()) != row_width_ ||
            static_cast<std::size_t>(rows[j].u.size()) != input_width_) {
            throw UsageError("rebuild: row width mismatch");
        }
        if (j > 0 && !(rows[j].stamp > rows[j - 1].stamp)) {
            throw UsageError("rebuild: stamps must be strictly increasing");
        }
    }
    rows_.assign(rows.begin(), rows.end());
}

void SampleBuffer::trim_controls(double keep_from) {
    double limit = keep_from;
    if (!rows_.empty()) {
        limit = std::min(limit, rows_.front().stamp);
    }
    controls_.discard_before(limit);
}

bool SampleBuffer::uniformly_spaced(double spacing) const {
    const double tol = controls_.tolerance() * 10.0;
    for (std::size_t j = 1; j < rows_.size(); ++j) {
        if (std::abs(rows_[j].stamp - rows_[j - 1].stamp - spacing) > tol) {
            return false;
        }
    }
    return true;
}

// ---------------------------------------------------------------------------
// WeightSet

WeightSet::WeightSet(std::vector<Matrix> weights) : weights_(std::move(weights)) {
    for (std::size_t j = 0; j < weights_.size(); ++j) {
        const Matrix& w = weights_[j];
        if (w.rows() != w.cols()) {
            throw ConfigError("weight matrix " + std::to_string(j + 1) + " is not square");
        }
        if ((w - w.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, w.cwiseAbs().maxCoeff())) {
            throw ConfigError("weight matrix " + std::to_string(j + 1) + " is not symmetric");
        }
        const Eigen::SelfAdjointEigenSolver<Matrix> eig(w, Eigen::EigenvaluesOnly);
        if (eig.eigenvalues().minCoeff() <= 1e-12) {
            throw ConfigError("weight matrix " + std::to_string(j + 1) + " is not positive definite");
        }
    }
}

WeightSet WeightSet::uniform(std::size_t rows, const Vector& diagonal) {
    return WeightSet(std::vector<Matrix>(rows, diagonal.asDiagonal().toDenseMatrix()));
}

WeightSet WeightSet::identity(std::size_t rows, std::size_t width) {
    return uniform(rows, Vector::Ones(static_cast<Eigen::Index>(width)));
}

// ---------------------------------------------------------------------------
// Lift

namespace {

Vector flow_row(const WindowProblem& problem, const Vector& x, double t0, double t1, std::size_t row) {
    try {
        return flow(*problem.model, x, problem.buffer->controls(), t0, t1, problem.integrator, problem.counters);
    } catch (const DivergenceError& e) {
        throw DivergenceError(e.time(), std::string(e.what()) + " (lift row " + std::to_string(row + 1) + ")");
    }
}

}  // namespace

LiftDetail lift_detail(const WindowProblem& problem, const Vector& zeta) {
    const SampleBuffer& buffer = *problem.buffer;
    const ContinuousModel& model = *problem.model;
    if (buffer.fill() == 0) {
        throw UsageError("lift: empty buffer");
    }
    if (static_cast<std::size_t>(zeta.size()) != model.n) {
        throw UsageError("lift: window-start state has the wrong size");
    }
    const bool filtered = problem.filters != nullptr && !problem.filters->empty();
    const std::size_t width = filtered ? model.p * (1 + problem.filters->size()) : model.p;
    if (width != buffer.row_width()) {
        throw UsageError("lift: buffer row width does not match the model outputs");
    }
    if (filtered && model.p != 1) {
        throw UsageError("lift: filtered windows require a single output channel");
    }

    LiftDetail detail;
    detail.output.rows.reserve(buffer.fill());
    detail.chain.reserve(buffer.fill());

    const ControlSignal& controls = buffer.controls();
    Vector x = zeta;
    Vector filter_state;
    double filter_period = 0.0;
    if (filtered) {
        filter_state = buffer.front().filter_state;
        if (static_cast<std::size_t>(filter_state.size()) != problem.filters->state_size()) {
            throw UsageError("lift: buffer rows carry no filter state");
        }
        filter_period = problem.filters->filters().front().period();
    }

    for (std::size_t j = 0; j < buffer.fill(); ++j) {
        const auto& row = buffer.row(j);
        if (!filtered) {
            if (j > 0) {
                x = flow_row(problem, x, buffer.row(j - 1).stamp, row.stamp, j);
            }
            detail.chain.push_back(x);
            detail.output.rows.push_back(model.output(x, row.u));
            continue;
        }

        // Filtered: the bank runs on every filter instant, so walk the gap one
        // filter period at a time and feed each predicted output through it.
        Vector y_hat = model.output(x, row.u);
        if (j > 0) {
            const double t_prev = buffer.row(j - 1).stamp;
            const double gap = row.stamp - t_prev;
            const auto hops = static_cast<std::int64_t>(std::llround(gap / filter_period));
            if (hops < 1 || std::abs(static_cast<double>(hops) * filter_period - gap) > 1e-6 * filter_period) {
                throw UsageError("lift: stamp spacing is not a multiple of the filter period");
            }
            double t = t_prev;
            for (std::int64_t s = 1; s <= hops; ++s) {
                const double t_next = s == hops ? row.stamp : t_prev + static_cast<double>(s) * filter_period;
                x = flow_row(problem, x, t, t_next, j);
                t = t_next;
                y_hat = model.output(x, s == hops ? row.u : controls.at(t));
                if (s < hops) {
                    filter_state = problem.filters->step(filter_state, y_hat(0)).state;
                }
            }
        }
        const auto step = problem.filters->step(filter_state, y_hat(0));
        filter_state = step.state;
        detail.chain.push_back(x);
        detail.output.rows.push_back(FilterBank::augment(y_hat(0), step.outputs));
    }
    detail.filter_state = std::move(filter_state);
    return detail;
}

LiftedOutput lift(const ContinuousModel& model, const Vector& zeta, const SampleBuffer& buffer,
                  const IntegratorConfig& cfg, WorkCounters* counters) {
    WindowProblem problem;
    problem.model = &model;
    problem.buffer = &buffer;
    problem.integrator = cfg;
    problem.counters = counters;
    return lift_detail(problem, zeta).output;
}

// ---------------------------------------------------------------------------
// Cost

Vector stacked_residual(const SampleBuffer& buffer, const LiftedOutput& predicted) {
    if (predicted.rows.size() != buffer.fill()) {
        throw UsageError("residual: row count mismatch");
    }
    const auto width = static_cast<Eigen::Index>(buffer.row_width());
    Vector r(width * static_cast<Eigen::Index>(buffer.fill()));
    for (std::size_t j = 0; j < buffer.fill(); ++j) {
        if (predicted.rows[j].size() != width) {
            throw UsageError("residual: row width mismatch");
        }
        r.segment(static_cast<Eigen::Index>(j) * width, width) = buffer.row(j).y - predicted.rows[j];
    }
    return r;
}

Matrix stacked_weight(const WeightSet& weights) {
    Eigen::Index total = 0;
    for (const auto& w : weights.matrices()) {
        total += w.rows();
    }
    Matrix stacked = Matrix::Zero(total, total);
    Eigen::Index offset = 0;
    for (const auto& w : weights.matrices()) {
        stacked.block(offset, offset, w.rows(), w.cols()) = w;
        offset += w.rows();
    }
    return stacked;
}

double cost(const SampleBuffer& buffer, const LiftedOutput& predicted, const WeightSet& weights) {
    if (predicted.rows.size() != buffer.fill() || weights.size() != buffer.fill()) {
        throw UsageError("cost: row count mismatch between buffer, prediction and weights");
    }
    double total = 0.0;
    for (std::size_t j = 0; j < buffer.fill(); ++j) {
        const Vector& y = buffer.row(j).y;
        if (predicted.rows[j].size() != y.size() || weights[j].rows() != y.size()) {
            throw UsageError("cost: row width mismatch");
        }
        const Vector e = y - predicted.rows[j];
        total += e.dot(weights[j] * e);
    }
    return total;
}

double window_cost(const WindowProblem& problem, const Vector& zeta) {
    return cost(*problem.buffer, lift_detail(problem, zeta).output, *problem.weights);
}

Vector fd_steps(const Vector& zeta, double base) {
    return base * (Vector::Ones(zeta.size()) + zeta.cwiseAbs());
}

Vector cost_gradient(const WindowProblem& problem, const Vector& zeta, double fd_step) {
    if (!(fd_step > 0.0)) {
        throw UsageError("cost_gradient: fd_step must be positive");
    }
    const Vector steps = fd_steps(zeta, fd_step);
    Vector grad(zeta.size());
    for (Eigen::Index i = 0; i < zeta.size(); ++i) {
        Vector plus = zeta;
        Vector minus = zeta;
        plus(i) += steps(i);
        minus(i) -= steps(i);
        grad(i) = (window_cost(problem, plus) - window_cost(problem, minus)) / (plus(i) - minus(i));
    }
    return grad;
}

Vector cost_gradient(const ContinuousModel& model, const Vector& zeta, const SampleBuffer& buffer,
                     const WeightSet& weights, const IntegratorConfig& cfg, double fd_step, WorkCounters* counters) {
    WindowProblem problem;
    problem.model = &model;
    problem.buffer = &buffer;
    problem.weights = &weights;
    problem.integrator = cfg;
    problem.counters = counters;
    return cost_gradient(problem, zeta, fd_step);
}

}  // namespace mhe

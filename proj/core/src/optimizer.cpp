#include "mhe/optimizer.hpp"

#include <cmath>
#include <sstream>
#include <string>

namespace mhe {

OptimizerKind parse_optimizer_kind(std::string_view name) {
    if (name == "gradient_descent") {
        return OptimizerKind::gradient_descent;
    }
    if (name == "gauss_newton") {
        return OptimizerKind::gauss_newton;
    }
    if (name == "newton_fd") {
        return OptimizerKind::newton_fd;
    }
    throw ConfigError("unknown optimizer '" + std::string(name) + "'");
}

std::string_view to_string(OptimizerKind kind) {
    switch (kind) {
        case OptimizerKind::gradient_descent: return "gradient_descent";
        case OptimizerKind::gauss_newton: return "gauss_newton";
        case OptimizerKind::newton_fd: return "newton_fd";
    }
    return "unknown";
}

void OptimizerConfig::validate() const {
    if (iterations < 1) {
        throw ConfigError("optimizer: K must be >= 1");
    }
    if (!(step_size > 0.0)) {
        throw ConfigError("optimizer: step size must be positive");
    }
    if (!(damping >= 0.0)) {
        throw ConfigError("optimizer: damping must be nonnegative");
    }
    if (!(fd_step > 0.0) || !(hessian_fd_step > 0.0)) {
        throw ConfigError("optimizer: finite-difference steps must be positive");
    }
}

namespace {

Vector relative_steps(const Vector& z, double base) { return base * (Vector::Ones(z.size()) + z.cwiseAbs()); }

Vector solve_regularized(const Matrix& a, const Vector& b, double damping) {
    const Matrix lhs = a + damping * Matrix::Identity(a.rows(), a.cols());
    if (damping == 0.0) {
        Eigen::FullPivLU<Matrix> lu(lhs);
        if (!lu.isInvertible()) {
            throw NumericalError("optimizer: singular normal equations; use damping > 0");
        }
        return lu.solve(b);
    }
    Eigen::LDLT<Matrix> ldlt(lhs);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) {
        // Indefinite FD Hessians fall back to a general solve.
        return lhs.fullPivLu().solve(b);
    }
    return ldlt.solve(b);
}

}  // namespace

double Objective::evaluate(const Vector& z) const { return evaluate_residual(residual(z)); }

Vector Objective::gradient(const Vector& z, double fd_step) const {
    if (gradient_override) {
        return gradient_override(z);
    }
    const Vector steps = relative_steps(z, fd_step);
    Vector g(z.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) {
        Vector plus = z;
        Vector minus = z;
        plus(i) += steps(i);
        minus(i) -= steps(i);
        g(i) = (evaluate(plus) - evaluate(minus)) / (plus(i) - minus(i));
    }
    return g;
}

Matrix Objective::jacobian(const Vector& z, const Vector& r0, double fd_step) const {
    const Vector steps = relative_steps(z, fd_step);
    Matrix jac(r0.size(), z.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) {
        Vector shifted = z;
        shifted(i) += steps(i);
        jac.col(i) = (residual(shifted) - r0) / (shifted(i) - z(i));
    }
    return jac;
}

Matrix Objective::hessian(const Vector& z, double fd_step) const {
    const Vector steps = relative_steps(z, fd_step);
    const Eigen::Index n = z.size();
    const Vector r0 = residual(z);
    const Vector c = weight * r0;
    std::vector<Vector> plus(static_cast<std::size_t>(n));
    std::vector<Vector> minus(static_cast<std::size_t>(n));
    Matrix jac(r0.size(), n);
    Matrix curvature(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto ui = static_cast<std::size_t>(i);
        Vector zp = z;
        Vector zm = z;
        zp(i) += steps(i);
        zm(i) -= steps(i);
        plus[ui] = residual(zp);
        minus[ui] = residual(zm);
        jac.col(i) = (plus[ui] - minus[ui]) / (zp(i) - zm(i));
        curvature(i, i) = c.dot(plus[ui] - 2.0 * r0 + minus[ui]) / (steps(i) * steps(i));
        for (Eigen::Index j = 0; j < i; ++j) {
            Vector pp = z;
            Vector pm = z;
            Vector mp = z;
            Vector mm = z;
            pp(i) += steps(i), pp(j) += steps(j);
            pm(i) += steps(i), pm(j) -= steps(j);
            mp(i) -= steps(i), mp(j) += steps(j);
            mm(i) -= steps(i), mm(j) -= steps(j);
            const double value =
                c.dot(residual(pp) - residual(pm) - residual(mp) + residual(mm)) / (4.0 * steps(i) * steps(j));
            curvature(i, j) = value;
            curvature(j, i) = value;
        }
    }
    return 2.0 * (jac.transpose() * weight * jac + curvature);
}

Vector psi_step(const Objective& objective, const Vector& z, const OptimizerConfig& cfg, WorkCounters* counters) {
    if (!z.allFinite()) {
        throw UsageError("psi_step: iterate is not finite");
    }
    Vector next;
    switch (cfg.kind) {
        case OptimizerKind::gradient_descent:
            next = z - cfg.step_size * objective.gradient(z, cfg.fd_step);
            break;
        case OptimizerKind::gauss_newton: {
            const Vector r = objective.residual(z);
            const Matrix jac = objective.jacobian(z, r, cfg.fd_step);
            const Matrix jtw = jac.transpose() * objective.weight;
            next = z - solve_regularized(jtw * jac, jtw * r, cfg.damping);
            break;
        }
        case OptimizerKind::newton_fd: {
            const Vector g = objective.gradient(z, cfg.fd_step);
            const Matrix hess = objective.hessian(z, cfg.hessian_fd_step);
            next = z - solve_regularized(hess, g, cfg.damping);
            break;
        }
    }
    if (counters != nullptr) {
        ++counters->optimizer_iterations;
    }
    if (!next.allFinite()) {
        throw NumericalError("optimizer: non-finite step");
    }
    return next;
}

OptimizeResult optimize(const Objective& objective, const Vector& z0, const OptimizerConfig& cfg,
                        WorkCounters* counters) {
    cfg.validate();
    OptimizeResult result{z0, {}};
    result.cost_trace.reserve(static_cast<std::size_t>(cfg.iterations) + 1);
    result.cost_trace.push_back(objective.evaluate(z0));
    for (int i = 0; i < cfg.iterations; ++i) {
        if (cfg.early_exit_tolerance > 0.0 && result.cost_trace.back() < cfg.early_exit_tolerance) {
            break;
        }
        try {
            result.solution = psi_step(objective, result.solution, cfg, counters);
        } catch (const DivergenceError& e) {
            std::ostringstream msg;
            msg << e.what() << " (optimizer iteration " << i + 1 << ")";
            throw DivergenceError(e.time(), msg.str());
        } catch (const NumericalError& e) {
            std::ostringstream msg;
            msg << e.what() << " (optimizer iteration " << i + 1 << ")";
            throw NumericalError(msg.str());
        }
        result.cost_trace.push_back(objective.evaluate(result.solution));
    }
    return result;
}

}  // namespace mhe

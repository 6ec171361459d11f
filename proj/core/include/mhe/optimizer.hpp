#pragma once

#include "mhe/common.hpp"

#include <functional>
#include <string_view>
#include <vector>

namespace mhe {

enum class OptimizerKind { gradient_descent, gauss_newton, newton_fd };

[[nodiscard]] OptimizerKind parse_optimizer_kind(std::string_view name);
[[nodiscard]] std::string_view to_string(OptimizerKind kind);

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::gauss_newton;
    int iterations = 1;            ///< K, applied exactly unless early_exit_tolerance > 0
    double step_size = 1e-2;       ///< gradient descent step
    double damping = 1e-8;         ///< Levenberg term on the normal equations / Hessian
    double fd_step = 1e-6;         ///< relative FD step for gradients and Jacobians
    double hessian_fd_step = 1e-4; ///< relative FD step for second differences (newton_fd)
    double early_exit_tolerance = 0.0;  ///< stop once the cost drops below this; 0 disables

    void validate() const;
};

/// Weighted least-squares objective  V(z) = r(z)' W r(z).
///
/// `gradient` may be supplied directly; otherwise it is taken by central
/// differences of `evaluate`.
struct Objective {
    std::size_t dimension = 0;
    std::function<Vector(const Vector&)> residual;
    Matrix weight;
    std::function<Vector(const Vector&)> gradient_override;

    [[nodiscard]] double evaluate(const Vector& z) const;
    [[nodiscard]] double evaluate_residual(const Vector& r) const { return r.dot(weight * r); }
    [[nodiscard]] Vector gradient(const Vector& z, double fd_step) const;
    /// Forward-difference Jacobian of the residual; reuses `r0 = residual(z)`.
    [[nodiscard]] Matrix jacobian(const Vector& z, const Vector& r0, double fd_step) const;
    /// Hessian of evaluate as 2 (J' W J + sum_k (W r)_k d2r_k), with J and the
    /// residual curvature taken by central differences.
    [[nodiscard]] Matrix hessian(const Vector& z, double fd_step) const;
};

/// One application of the update map. Counts one optimizer iteration.
[[nodiscard]] Vector psi_step(const Objective& objective, const Vector& z, const OptimizerConfig& cfg,
                              WorkCounters* counters = nullptr);

struct OptimizeResult {
    Vector solution;
    std::vector<double> cost_trace;  ///< cost at z0, then after every step
};

/// Applies psi_step `cfg.iterations` times from `z0`.
[[nodiscard]] OptimizeResult optimize(const Objective& objective, const Vector& z0, const OptimizerConfig& cfg,
                                      WorkCounters* counters = nullptr);

}  // namespace mhe

#pragma once

#include "rcs/transforms.hpp"

#include <optional>

namespace rcs {

struct SolverOptions {
  int max_iters = 20000;
  /// Relative tolerance for primal/dual residuals, feasibility and the
  /// duality gap (the gap is accepted up to 10 * tol).
  double tol = 1e-8;
  /// Initial ADMM penalty, adapted by residual balancing: it is scaled by
  /// `balance_factor` whenever one residual exceeds the other by more than
  /// `balance_ratio`.
  double penalty = 1.0;
  double balance_ratio = 10.0;
  double balance_factor = 2.0;
  /// Balancing is checked every `balance_every` iterations and switched off
  /// once the penalty has reversed direction `balance_reversals` times, so a
  /// penalty that cycles up and down eventually stays fixed.
  int balance_every = 10;
  int balance_reversals = 100;
  double relaxation = 1.6;
  /// Try to finish by solving least squares on the current support.
  bool polish = true;
  int polish_every = 20;
  double success_threshold = 1e-3;
};

/// Result of min ||z||_1 s.t. Bz = y (or ||Bz - y|| <= sigma).
struct L1Solution {
  Vec z;
  /// Dual vector with ||B* dual||_inf <= 1; certifies optimality through
  /// <dual, y> - sigma ||dual|| >= ||z||_1 (1 - 10 tol).
  Vec dual;
  int iterations = 0;
  double primal_residual = 0.0;  // ||Bz - y||
  double dual_residual = 0.0;    // last ADMM dual residual, relative
  double objective = 0.0;        // ||z||_1
  double dual_objective = 0.0;
  bool polished = false;
  bool converged = false;
};

/// Basis pursuit. Non-convergence is reported through `converged`, never thrown.
L1Solution solve_bp(const LinearOperator& b, const Vec& y, const SolverOptions& opts = {});

/// Basis pursuit denoising with a noise ball of radius sigma >= 0.
L1Solution solve_bpdn(const LinearOperator& b, const Vec& y, double sigma,
                      const SolverOptions& opts = {});

struct GroundTruth {
  Vec x;
  Vec e;
};

struct RecoveryMetrics {
  double relative_error = 0.0;  // ||xhat - x*|| / ||x*|| (absolute when x* = 0)
  double rms_x = 0.0;           // ||xhat - x*|| / n
  double rms_e = 0.0;           // ||ehat - e*|| / n
  bool success = false;
};

struct RecoveryResult {
  Vec xhat;
  Vec ehat;
  int iterations = 0;
  double primal_residual = 0.0;  // ||y - A xhat - ehat||
  double dual_residual = 0.0;
  double objective = 0.0;  // ||xhat||_1 + lambda ||ehat||_1
  bool converged = false;
  std::optional<RecoveryMetrics> metrics;
};

/// Extended l1 recovery: min ||x||_1 + lambda ||e||_1 subject to
/// y = A x + e (sigma == 0) or ||y - A x - e|| <= sigma, solved through the
/// augmented operator [A, I/lambda] acting on z = [x; lambda e].
RecoveryResult recover(OperatorPtr sampled, const Vec& y, double lambda, double sigma,
                       const SolverOptions& opts = {},
                       const std::optional<GroundTruth>& truth = std::nullopt);

}  // namespace rcs

#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>

namespace rcs {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using Index = Eigen::Index;

/// Base class for the library's recoverable errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

void require_size(const Vec& v, Index expected, const char* what);

/// A real linear map M : R^cols -> R^rows together with its adjoint.
///
/// Implementations must be reentrant: `apply` and `apply_adjoint` may be
/// called concurrently from several threads on the same object.
class LinearOperator {
 public:
  virtual ~LinearOperator() = default;

  virtual Index rows() const = 0;
  virtual Index cols() const = 0;

  virtual void apply(const Vec& x, Vec& out) const = 0;
  virtual void apply_adjoint(const Vec& y, Vec& out) const = 0;

  /// Returns c when M M* = c I (rows form a scaled orthonormal system).
  virtual std::optional<double> row_gram_scale() const { return std::nullopt; }

  Vec apply(const Vec& x) const {
    Vec out;
    apply(x, out);
    return out;
  }
  Vec apply_adjoint(const Vec& y) const {
    Vec out;
    apply_adjoint(y, out);
    return out;
  }

  /// Dense rows x cols matrix, built column by column. Test-sized maps only.
  Mat materialize() const;
};

using OperatorPtr = std::shared_ptr<const LinearOperator>;

class DenseOperator final : public LinearOperator {
 public:
  using LinearOperator::apply;
  using LinearOperator::apply_adjoint;

  explicit DenseOperator(Mat m) : m_(std::move(m)) {}

  Index rows() const override { return m_.rows(); }
  Index cols() const override { return m_.cols(); }
  void apply(const Vec& x, Vec& out) const override;
  void apply_adjoint(const Vec& y, Vec& out) const override;

  const Mat& matrix() const { return m_; }

 private:
  Mat m_;
};

/// Operator defined by a pair of callables. Used for restricted and
/// composed maps that only exist for the duration of a computation.
class FunctionOperator final : public LinearOperator {
 public:
  using LinearOperator::apply;
  using LinearOperator::apply_adjoint;

  using Fn = std::function<void(const Vec&, Vec&)>;

  FunctionOperator(Index rows, Index cols, Fn apply, Fn adjoint,
                   std::optional<double> gram = std::nullopt)
      : rows_(rows), cols_(cols), apply_(std::move(apply)),
        adjoint_(std::move(adjoint)), gram_(gram) {}

  Index rows() const override { return rows_; }
  Index cols() const override { return cols_; }
  void apply(const Vec& x, Vec& out) const override;
  void apply_adjoint(const Vec& y, Vec& out) const override;
  std::optional<double> row_gram_scale() const override { return gram_; }

 private:
  Index rows_;
  Index cols_;
  Fn apply_;
  Fn adjoint_;
  std::optional<double> gram_;
};

struct SpectralEstimate {
  double value = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Largest singular value of `op` by power iteration on op* op.
///
/// Stops once the relative change of the estimate drops below `tol` or after
/// `max_iters` iterations. The start vector is drawn from `seed`, so the
/// result is reproducible. A zero operator returns 0 with converged set.
SpectralEstimate spectral_norm(const LinearOperator& op, int max_iters = 1000,
                               double tol = 1e-10, std::uint64_t seed = 7);

struct CgResult {
  int iterations = 0;
  double relative_residual = 0.0;
  bool converged = false;
};

/// Preconditioned conjugate gradient for a symmetric positive (semi)definite
/// system. `x` holds the initial guess on entry and the solution on return.
/// Convergence is measured as ||b - Mx|| <= tol * ||b||.
CgResult conjugate_gradient(const std::function<void(const Vec&, Vec&)>& apply_spd,
                            const Vec& b, Vec& x, double tol, int max_iters,
                            const std::function<void(const Vec&, Vec&)>& precondition = {});

}  // namespace rcs

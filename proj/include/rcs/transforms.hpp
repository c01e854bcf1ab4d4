#pragma once

#include "rcs/linear_operator.hpp"

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

namespace rcs {

enum class TransformKind { hadamard, dct2, hartley, dense };

std::string to_string(TransformKind kind);
TransformKind parse_transform_kind(const std::string& name);

namespace detail {
struct FftPlan;
}

/// An n x n orthonormal matrix A applied through a fast algorithm.
///
/// Hadamard (Sylvester ordering) and Hartley require n to be a power of two;
/// DCT-II accepts any n >= 2. Dense wraps an explicit orthonormal matrix.
/// Values are immutable and cheap to copy; forward/adjoint are thread-safe.
class OrthoTransform {
 public:
  static OrthoTransform hadamard(Index n);
  static OrthoTransform dct2(Index n);
  static OrthoTransform hartley(Index n);
  /// Throws if `m` is not square and orthonormal to 1e-8.
  static OrthoTransform dense(Mat m);
  static OrthoTransform identity(Index n);
  static OrthoTransform make(TransformKind kind, Index n);

  TransformKind kind() const { return kind_; }
  Index size() const { return n_; }

  void forward(const Vec& x, Vec& out) const;
  void adjoint(const Vec& y, Vec& out) const;
  Vec forward(const Vec& x) const {
    Vec out;
    forward(x, out);
    return out;
  }
  Vec adjoint(const Vec& y) const {
    Vec out;
    adjoint(y, out);
    return out;
  }

  Mat materialize() const;

 private:
  OrthoTransform(TransformKind kind, Index n) : kind_(kind), n_(n) {}

  TransformKind kind_;
  Index n_;
  std::shared_ptr<const Mat> dense_;
  std::shared_ptr<const detail::FftPlan> plan_fwd_;
  std::shared_ptr<const detail::FftPlan> plan_adj_;
};

enum class SamplingMode { uniform, bernoulli };

/// Observed row indices Omega, strictly increasing and < n.
struct RowSubset {
  std::vector<Index> indices;
  SamplingMode mode = SamplingMode::uniform;

  Index size() const { return static_cast<Index>(indices.size()); }
};

struct SamplingSpec {
  SamplingMode mode = SamplingMode::uniform;
  Index m = 0;       // uniform: exact count
  double eta = 1.0;  // bernoulli: inclusion probability

  static SamplingSpec uniform(Index m) { return {SamplingMode::uniform, m, 0.0}; }
  static SamplingSpec bernoulli(double eta) { return {SamplingMode::bernoulli, 0, eta}; }
};

/// Draws Omega from [0, n): exactly m indices uniformly, or each index
/// independently with probability eta. Deterministic in `seed`.
RowSubset subsample_rows(Index n, const SamplingSpec& spec, std::uint64_t seed);

/// Uniformly random size-k subset of `from`, returned sorted.
std::vector<Index> sample_subset(const std::vector<Index>& from, Index k, std::mt19937_64& rng);

/// mu = n max_ij A_ij^2, in closed form for the structured kinds.
double coherence(const OrthoTransform& a);

/// A_{Omega .}: rows of an orthonormal transform. Rows are orthonormal, so
/// row_gram_scale() == 1.
class SubsampledOperator final : public LinearOperator {
 public:
  using LinearOperator::apply;
  using LinearOperator::apply_adjoint;

  SubsampledOperator(OrthoTransform a, RowSubset rows);

  Index rows() const override { return rows_.size(); }
  Index cols() const override { return a_.size(); }
  void apply(const Vec& x, Vec& out) const override;
  void apply_adjoint(const Vec& y, Vec& out) const override;
  std::optional<double> row_gram_scale() const override { return 1.0; }

  const OrthoTransform& transform() const { return a_; }
  const RowSubset& subset() const { return rows_; }

 private:
  OrthoTransform a_;
  RowSubset rows_;
};

/// A_{RC}: the submatrix of A with rows R and columns C, matrix-free.
class RestrictedOperator final : public LinearOperator {
 public:
  using LinearOperator::apply;
  using LinearOperator::apply_adjoint;

  RestrictedOperator(OrthoTransform a, std::vector<Index> row_set, std::vector<Index> col_set);

  Index rows() const override { return static_cast<Index>(rows_.size()); }
  Index cols() const override { return static_cast<Index>(cols_.size()); }
  void apply(const Vec& x, Vec& out) const override;
  void apply_adjoint(const Vec& y, Vec& out) const override;

 private:
  OrthoTransform a_;
  std::vector<Index> rows_;
  std::vector<Index> cols_;
};

/// B = [base, (1/lambda) I]. Applied to z = [x; lambda e] it yields base x + e.
class AugmentedOperator final : public LinearOperator {
 public:
  using LinearOperator::apply;
  using LinearOperator::apply_adjoint;

  AugmentedOperator(OperatorPtr base, double lambda);

  Index rows() const override { return base_->rows(); }
  Index cols() const override { return base_->cols() + base_->rows(); }
  void apply(const Vec& z, Vec& out) const override;
  void apply_adjoint(const Vec& y, Vec& out) const override;
  std::optional<double> row_gram_scale() const override;

  double lambda() const { return lambda_; }
  const LinearOperator& base() const { return *base_; }

 private:
  OperatorPtr base_;
  double lambda_;
};

/// mu = n max_{i,j} |<a_i, d_j>| where a_i are the columns of A_{Omega .} and
/// d_j the columns of D (|Omega| x |Omega|). Dense scan: |Omega| forward
/// applications of D and adjoint applications of A, O(m n log n) overall.
double mutual_coherence(const SubsampledOperator& a, const OrthoTransform& d);

struct Presparsified {
  Vec y;
  OperatorPtr op;  // D* A_{Omega .}
};

/// Rotates the observation into the basis where the error is sparse:
/// returns D* y and the composed operator D* A_{Omega .}.
Presparsified presparsify_error(const Vec& y, OperatorPtr sampled, const OrthoTransform& d);

/// Separable 2-D Hartley transform on height x width images (row-major),
/// orthonormal and self-adjoint.
class Transform2D {
 public:
  Transform2D(Index height, Index width);

  Index height() const { return h_; }
  Index width() const { return w_; }
  Index size() const { return h_ * w_; }

  void forward(const Vec& x, Vec& out) const;
  void adjoint(const Vec& y, Vec& out) const { forward(y, out); }

  /// Eigenvalues of the periodic 5-point negative Laplacian in this basis,
  /// laid out like the coefficient vector.
  Vec periodic_laplacian_symbol() const;

 private:
  Index h_;
  Index w_;
  std::shared_ptr<const detail::FftPlan> plan_;
};

}  // namespace rcs

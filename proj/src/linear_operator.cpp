#include "rcs/linear_operator.hpp"

#include <cmath>
#include <random>

namespace rcs {

void require_size(const Vec& v, Index expected, const char* what) {
  if (v.size() != expected) {
    throw DimensionError(std::string(what) + ": expected length " + std::to_string(expected) +
                         ", got " + std::to_string(v.size()));
  }
}

Mat LinearOperator::materialize() const {
  Mat m(rows(), cols());
  Vec e = Vec::Zero(cols());
  Vec col;
  for (Index j = 0; j < cols(); ++j) {
    e[j] = 1.0;
    apply(e, col);
    m.col(j) = col;
    e[j] = 0.0;
  }
  return m;
}

void DenseOperator::apply(const Vec& x, Vec& out) const {
  require_size(x, m_.cols(), "DenseOperator::apply");
  out.noalias() = m_ * x;
}

void DenseOperator::apply_adjoint(const Vec& y, Vec& out) const {
  require_size(y, m_.rows(), "DenseOperator::apply_adjoint");
  out.noalias() = m_.transpose() * y;
}

void FunctionOperator::apply(const Vec& x, Vec& out) const {
  require_size(x, cols_, "FunctionOperator::apply");
  apply_(x, out);
}

void FunctionOperator::apply_adjoint(const Vec& y, Vec& out) const {
  require_size(y, rows_, "FunctionOperator::apply_adjoint");
  adjoint_(y, out);
}

SpectralEstimate spectral_norm(const LinearOperator& op, int max_iters, double tol,
                               std::uint64_t seed) {
  SpectralEstimate est;
  if (op.rows() == 0 || op.cols() == 0) {
    est.converged = true;
    return est;
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  Vec v(op.cols());
  for (Index i = 0; i < v.size(); ++i) v[i] = normal(rng);
  v.normalize();

  Vec mv, w;
  double prev = -1.0;
  for (int it = 1; it <= max_iters; ++it) {
    op.apply(v, mv);
    const double value = mv.norm();
    est.value = value;
    est.iterations = it;
    if (value == 0.0) {
      // v lies in the null space; only trust it if the operator is zero.
      if (it == 1) {
        // A second random direction rules out an unlucky start.
        for (Index i = 0; i < v.size(); ++i) v[i] = normal(rng);
        v.normalize();
        op.apply(v, mv);
        if (mv.norm() == 0.0) {
          est.converged = true;
          return est;
        }
        continue;
      }
      est.converged = true;
      return est;
    }
    if (prev > 0.0 && std::abs(value - prev) <= tol * value) {
      est.converged = true;
      return est;
    }
    prev = value;
    op.apply_adjoint(mv, w);
    const double wn = w.norm();
    if (wn == 0.0) {
      est.converged = true;
      return est;
    }
    v = w / wn;
  }
  return est;
}

CgResult conjugate_gradient(const std::function<void(const Vec&, Vec&)>& apply_spd, const Vec& b,
                            Vec& x, double tol, int max_iters,
                            const std::function<void(const Vec&, Vec&)>& precondition) {
  CgResult res;
  if (x.size() != b.size()) x = Vec::Zero(b.size());
  const double bnorm = b.norm();
  if (bnorm == 0.0) {
    x.setZero();
    res.converged = true;
    return res;
  }
  Vec r(b.size()), ax(b.size()), z(b.size()), p, ap(b.size());
  apply_spd(x, ax);
  r = b - ax;
  double rnorm = r.norm();
  if (rnorm <= tol * bnorm) {
    res.relative_residual = rnorm / bnorm;
    res.converged = true;
    return res;
  }
  if (precondition) {
    precondition(r, z);
  } else {
    z = r;
  }
  p = z;
  double rz = r.dot(z);
  for (int it = 1; it <= max_iters; ++it) {
    apply_spd(p, ap);
    const double pap = p.dot(ap);
    if (!(pap > 0.0)) break;  // breakdown: operator singular along p
    const double alpha = rz / pap;
    x.noalias() += alpha * p;
    r.noalias() -= alpha * ap;
    rnorm = r.norm();
    res.iterations = it;
    if (rnorm <= tol * bnorm) {
      res.converged = true;
      break;
    }
    if (precondition) {
      precondition(r, z);
    } else {
      z = r;
    }
    const double rz_next = r.dot(z);
    p = z + (rz_next / rz) * p;
    rz = rz_next;
  }
  res.relative_residual = rnorm / bnorm;
  return res;
}

}  // namespace rcs

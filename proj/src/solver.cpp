#include "rcs/solver.hpp"

#include <cmath>
#include <memory>
#include <vector>

namespace rcs {

namespace {

// Euclidean projection onto {z : Bz = y} or {z : ||Bz - y|| <= sigma}.
// When B B* = c I both projections are closed form; otherwise the Gram
// systems are solved by conjugate gradients.
class Projector {
 public:
  Projector(const LinearOperator& b, const Vec& y, double sigma, bool equality)
      : b_(b), y_(y), sigma_(sigma), equality_(equality), gram_(b.row_gram_scale()) {}

  void project(const Vec& v, Vec& out) {
    b_.apply(v, bv_);
    r_ = bv_ - y_;
    if (equality_) {
      solve_gram(r_, t_, 0.0);
    } else {
      const double rn = r_.norm();
      if (rn <= sigma_) {
        out = v;
        return;
      }
      if (gram_) {
        t_ = r_ * ((1.0 - sigma_ / rn) / *gram_);
      } else {
        ball_multiplier(rn);
      }
    }
    b_.apply_adjoint(t_, bt_);
    out = v - bt_;
  }

  // Least-squares w with B* w close to g.
  Vec dual_from(const Vec& g) {
    Vec bg = b_.apply(g);
    Vec w;
    solve_gram(bg, w, 0.0);
    return w;
  }

 private:
  void solve_gram(const Vec& rhs, Vec& t, double shift) {
    if (gram_) {
      t = rhs / (*gram_ + shift);
      return;
    }
    if (warm_.size() != rhs.size()) warm_ = Vec::Zero(rhs.size());
    t = warm_;
    Vec tmp;
    auto gram = [&](const Vec& p, Vec& o) {
      b_.apply_adjoint(p, tmp);
      b_.apply(tmp, o);
      if (shift != 0.0) o += shift * p;
    };
    conjugate_gradient(gram, rhs, t, 1e-13, 20 * static_cast<int>(rhs.size()) + 100);
    warm_ = t;
  }

  // Finds tau > 0 with tau ||t(tau)|| = sigma where (B B* + tau I) t = r.
  // tau ||t(tau)|| increases from 0 to ||r|| (> sigma), so bisection in
  // log(tau) brackets the root.
  void ball_multiplier(double rn) {
    double lo = std::log(1e-14), hi = std::log(1e14);
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (lo + hi);
      const double tau = std::exp(mid);
      solve_gram(r_, t_, tau);
      const double phi = tau * t_.norm();
      if (std::abs(phi - sigma_) <= 1e-13 * rn) break;
      if (phi < sigma_) {
        lo = mid;
      } else {
        hi = mid;
      }
      if (hi - lo < 1e-15) break;
    }
  }

  const LinearOperator& b_;
  const Vec& y_;
  double sigma_;
  bool equality_;
  std::optional<double> gram_;
  Vec bv_, r_, t_, bt_, warm_;
};

void soft_threshold(const Vec& v, double kappa, Vec& out) {
  out = v.unaryExpr([kappa](double a) {
    if (a > kappa) return a - kappa;
    if (a < -kappa) return a + kappa;
    return 0.0;
  });
}

std::vector<Index> support_of(const Vec& z) {
  std::vector<Index> s;
  for (Index i = 0; i < z.size(); ++i) {
    if (z[i] != 0.0) s.push_back(i);
  }
  return s;
}

struct Certificate {
  Vec dual;
  double dual_objective = 0.0;
  double dual_inf = 0.0;
};

// Scales a dual candidate into the feasible set ||B* w||_inf <= 1 and
// evaluates the dual objective <w, y> - sigma ||w||.
Certificate finish_dual(const LinearOperator& b, Vec w, const Vec& y, double sigma) {
  Certificate c;
  const Vec g = b.apply_adjoint(w);
  c.dual_inf = g.size() ? g.cwiseAbs().maxCoeff() : 0.0;
  if (c.dual_inf > 1.0) w /= c.dual_inf;
  c.dual_objective = w.dot(y) - sigma * w.norm();
  c.dual = std::move(w);
  return c;
}

class L1Admm {
 public:
  // With `linear` set the objective is ||z||_1 - <linear, z>. It is bounded
  // below only when some w has ||B* w + linear||_inf <= 1; otherwise the
  // iterates drift and the run ends unconverged.
  L1Admm(const LinearOperator& b, const Vec& y, double sigma, bool equality,
         const SolverOptions& opts, const Vec* linear = nullptr)
      : b_(b), y_(y), sigma_(sigma), equality_(equality), opts_(opts),
        proj_(b, y_, sigma, equality), g_(linear ? *linear : Vec()) {}

  L1Solution run() {
    const Index n = b_.cols();
    Vec x = Vec::Zero(n), z = Vec::Zero(n), u = Vec::Zero(n);
    Vec z_old, xh, v;
    double rho = opts_.penalty;
    const double tol = opts_.tol;
    const double alpha = opts_.relaxation;

    std::vector<Index> last_support;
    int stable_for = 0;
    int last_step = 0, reversals = 0;
    bool finished = false;
    L1Solution out;
    double r = 0.0, s = 0.0;
    int it = 0;
    for (it = 1; it <= opts_.max_iters; ++it) {
      v = z - u;
      proj_.project(v, x);
      xh = alpha * x + (1.0 - alpha) * z;
      z_old = z;
      if (g_.size()) {
        soft_threshold(xh + u + g_ / rho, 1.0 / rho, z);
      } else {
        soft_threshold(xh + u, 1.0 / rho, z);
      }
      u += xh - z;

      r = (x - z).norm();
      s = rho * (z - z_old).norm();
      const double scale_p = std::max({x.norm(), z.norm(), 1e-12});
      const double scale_d = std::max(rho * u.norm(), 1e-12);
      const bool done = r <= tol * scale_p && s <= tol * scale_d;

      if (equality_ && opts_.polish && !g_.size()) {
        std::vector<Index> supp = support_of(z);
        stable_for = supp == last_support ? stable_for + 1 : 0;
        if (!supp.empty() && (stable_for == opts_.polish_every || done)) {
          if (auto p = polish(supp, z, rho * u)) {
            p->iterations = it;
            p->dual_residual = s / scale_d;
            return *p;
          }
        }
        last_support = std::move(supp);
      }
      if (done) {
        finished = true;
        break;
      }

      if (it % opts_.balance_every != 0 || reversals >= opts_.balance_reversals) continue;
      int step = 0;
      if (r > opts_.balance_ratio * s) {
        step = 1;
        rho *= opts_.balance_factor;
        u /= opts_.balance_factor;
      } else if (s > opts_.balance_ratio * r) {
        step = -1;
        rho /= opts_.balance_factor;
        u *= opts_.balance_factor;
      }
      if (step != 0) {
        reversals += last_step != 0 && step != last_step;
        last_step = step;
      }
    }

    out.iterations = std::min(it, opts_.max_iters);
    out.dual_residual = s / std::max(rho * u.norm(), 1e-12);
    // Prefer the sparse iterate; fall back to its projection if it is not
    // feasible to tolerance.
    Vec bz = b_.apply(z);
    double res = (bz - y_).norm();
    if (res > allowed_residual()) {
      proj_.project(z, x);
      z = x;
      res = (b_.apply(z) - y_).norm();
    }
    out.z = z;
    out.primal_residual = res;
    out.objective = z.lpNorm<1>();
    if (g_.size()) {
      // The dual of the shifted program is not checked here; the caller
      // certifies the assembled solution on the original one.
      out.objective -= g_.dot(z);
      out.dual = proj_.dual_from(rho * u);
      out.converged = finished && res <= allowed_residual() * (1.0 + 1e-12);
      return out;
    }
    Certificate cert = finish_dual(b_, proj_.dual_from(rho * u), y_, equality_ ? 0.0 : sigma_);
    out.dual = std::move(cert.dual);
    out.dual_objective = cert.dual_objective;
    out.converged = res <= allowed_residual() * (1.0 + 1e-12) &&
                    out.dual_objective >= out.objective * (1.0 - 10.0 * tol);
    return out;
  }

  // Least squares restricted to the support of z, then the dual guess w
  // corrected to match the signs exactly on it. Accepted only when the pair
  // certifies optimality of the equality-constrained program.
  std::optional<L1Solution> certify(const std::vector<Index>& supp, const Vec& z, Vec w) {
    const Index k = static_cast<Index>(supp.size());
    if (k > b_.rows()) return std::nullopt;
    const Index n = b_.cols();
    Vec full(n), tmp;
    auto embed = [&](const Vec& a) {
      full.setZero();
      for (Index i = 0; i < k; ++i) full[supp[static_cast<std::size_t>(i)]] = a[i];
      return full;
    };
    auto gather = [&](const Vec& a) {
      Vec g(k);
      for (Index i = 0; i < k; ++i) g[i] = a[supp[static_cast<std::size_t>(i)]];
      return g;
    };
    auto normal = [&](const Vec& a, Vec& o) {
      b_.apply(embed(a), tmp);
      o = gather(b_.apply_adjoint(tmp));
    };
    const int cg_iters = 10 * static_cast<int>(k) + 100;

    Vec zs = gather(z);
    const CgResult cg = conjugate_gradient(normal, gather(b_.apply_adjoint(y_)), zs, 1e-14, cg_iters);
    (void)cg;
    for (Index i = 0; i < k; ++i) {
      if ((zs[i] > 0.0) != (z[supp[static_cast<std::size_t>(i)]] > 0.0) || zs[i] == 0.0) {
        return std::nullopt;
      }
    }
    Vec zp = embed(zs);
    const double res = (b_.apply(zp) - y_).norm();
    if (res > opts_.tol) return std::nullopt;

    Vec sign_gap = zs.unaryExpr([](double a) { return a > 0.0 ? 1.0 : -1.0; }) -
                   gather(b_.apply_adjoint(w));
    Vec c = Vec::Zero(k);
    conjugate_gradient(normal, sign_gap, c, 1e-14, cg_iters);
    w += b_.apply(embed(c));

    Certificate cert = finish_dual(b_, std::move(w), y_, 0.0);
    if (cert.dual_inf > 1.0 + 10.0 * opts_.tol) return std::nullopt;
    L1Solution out;
    out.z = std::move(zp);
    out.objective = out.z.lpNorm<1>();
    out.dual_objective = cert.dual_objective;
    if (out.dual_objective < out.objective * (1.0 - 10.0 * opts_.tol)) return std::nullopt;
    out.dual = std::move(cert.dual);
    out.primal_residual = res;
    out.polished = true;
    out.converged = true;
    return out;
  }

 private:
  std::optional<L1Solution> polish(const std::vector<Index>& supp, const Vec& z,
                                   const Vec& subgrad) {
    return certify(supp, z, proj_.dual_from(subgrad));
  }

  // y is normalised to unit norm before the solve.
  double allowed_residual() const { return equality_ ? opts_.tol : sigma_ + opts_.tol; }

  const LinearOperator& b_;
  Vec y_;
  double sigma_;
  bool equality_;
  SolverOptions opts_;
  Projector proj_;
  Vec g_;
};

L1Solution solve(const LinearOperator& b, const Vec& y, double sigma, bool equality,
                 const SolverOptions& opts, const Vec* linear = nullptr) {
  require_size(y, b.rows(), "l1 solver: observation");
  if (!(opts.tol > 0.0)) throw Error("l1 solver: tolerance must be positive");
  const double ynorm = y.norm();
  if (ynorm == 0.0 || (!equality && sigma >= ynorm)) {
    // z = 0 is feasible and w = 0 closes the gap.
    L1Solution out;
    out.z = Vec::Zero(b.cols());
    out.dual = Vec::Zero(b.rows());
    out.primal_residual = ynorm;
    out.converged = true;
    return out;
  }
  L1Admm admm(b, y / ynorm, sigma / ynorm, equality, opts, linear);
  L1Solution out = admm.run();
  out.z *= ynorm;
  out.objective *= ynorm;
  out.dual_objective *= ynorm;
  out.primal_residual *= ynorm;
  return out;
}

// When e has entries far above the scale of A x, the first-order solver
// resolves x only to tol * ||e||. Rows whose error clearly dominates are
// eliminated: with their signs s_L fixed, lambda |e_i| = lambda s_i (y_i -
// (A x)_i), which leaves a linear term lambda <A_L* s_L, x> and a well-scaled
// program on the remaining rows. A solution of that program whose
// eliminated errors keep their signs is a local, hence global, minimizer of
// the original one; it is then certified on the full program as a check.
std::optional<L1Solution> eliminate_large_errors(const OperatorPtr& a, const AugmentedOperator& b,
                                                 const Vec& y, const L1Solution& first,
                                                 const SolverOptions& opts) {
  const Index n = a->cols(), m = a->rows();
  const double lambda = b.lambda();
  const Vec x0 = first.z.head(n);
  const Vec e0 = first.z.tail(m) / lambda;
  const double floor = x0.norm();
  std::vector<Index> big, rest;
  for (Index i = 0; i < m; ++i) (std::abs(e0[i]) > floor ? big : rest).push_back(i);
  if (floor == 0.0 || big.empty() || rest.empty()) return std::nullopt;

  Vec sgn = Vec::Zero(m);
  for (Index i : big) sgn[i] = e0[i] > 0.0 ? 1.0 : -1.0;
  const Index r = static_cast<Index>(rest.size());
  Vec g = Vec::Zero(n + r);
  g.head(n) = lambda * a->apply_adjoint(sgn);

  auto restricted = std::make_shared<FunctionOperator>(
      r, n,
      [a, rest](const Vec& x, Vec& out) {
        const Vec full = a->apply(x);
        out.resize(static_cast<Index>(rest.size()));
        for (std::size_t j = 0; j < rest.size(); ++j) out[static_cast<Index>(j)] = full[rest[j]];
      },
      [a, rest, m](const Vec& w, Vec& out) {
        Vec full = Vec::Zero(m);
        for (std::size_t j = 0; j < rest.size(); ++j) full[rest[j]] = w[static_cast<Index>(j)];
        a->apply_adjoint(full, out);
      },
      a->row_gram_scale());
  const AugmentedOperator br(restricted, lambda);
  Vec yr(r);
  for (Index j = 0; j < r; ++j) yr[j] = y[rest[static_cast<std::size_t>(j)]];
  SolverOptions sub_opts = opts;
  sub_opts.polish = false;
  const L1Solution sub = solve(br, yr, 0.0, true, sub_opts, &g);
  if (!sub.converged) return std::nullopt;

  Vec z(n + m);
  z.head(n) = sub.z.head(n);
  const Vec ax = a->apply(z.head(n));
  for (Index j = 0; j < r; ++j) z[n + rest[static_cast<std::size_t>(j)]] = sub.z[n + j];
  for (Index i : big) {
    const double e = y[i] - ax[i];
    if (e * sgn[i] <= 0.0) return std::nullopt;
    z[n + i] = lambda * e;
  }
  Vec w(m);
  for (Index j = 0; j < r; ++j) w[rest[static_cast<std::size_t>(j)]] = sub.dual[j];
  for (Index i : big) w[i] = lambda * sgn[i];

  const double ynorm = y.norm();
  L1Admm full(b, y / ynorm, 0.0, true, opts);
  std::vector<Index> supp = support_of(z);
  std::optional<L1Solution> out = full.certify(supp, z / ynorm, w);
  if (out) {
    out->z *= ynorm;
    out->objective *= ynorm;
    out->dual_objective *= ynorm;
    out->primal_residual *= ynorm;
  } else {
    out = L1Solution{};
    out->z = std::move(z);
    out->dual = std::move(w);
    out->primal_residual = (b.apply(out->z) - y).norm();
    out->objective = out->z.lpNorm<1>();
    out->dual_objective = out->dual.dot(y);
    out->converged = out->primal_residual <= opts.tol * ynorm * (1.0 + 1e-12);
  }
  out->iterations = first.iterations + sub.iterations;
  out->dual_residual = sub.dual_residual;
  return out;
}

}  // namespace

L1Solution solve_bp(const LinearOperator& b, const Vec& y, const SolverOptions& opts) {
  return solve(b, y, 0.0, true, opts);
}

L1Solution solve_bpdn(const LinearOperator& b, const Vec& y, double sigma,
                      const SolverOptions& opts) {
  if (!(sigma >= 0.0)) throw Error("solve_bpdn: sigma must be non-negative");
  if (sigma == 0.0) return solve_bp(b, y, opts);
  return solve(b, y, sigma, false, opts);
}

RecoveryResult recover(OperatorPtr sampled, const Vec& y, double lambda, double sigma,
                       const SolverOptions& opts, const std::optional<GroundTruth>& truth) {
  if (!sampled) throw Error("recover: null operator");
  if (!(lambda > 0.0)) throw Error("recover: lambda must be positive");
  const Index n = sampled->cols();
  const Index m = sampled->rows();
  AugmentedOperator b(sampled, lambda);
  L1Solution sol = solve_bpdn(b, y, sigma, opts);
  // A certificate to tol bounds the objective, which e dominates when it is
  // much larger than x; x then needs the rescaled second pass as well.
  const bool lopsided = sol.z.tail(m).norm() > 100.0 * sol.z.head(n).norm();
  if (sigma == 0.0 && (!sol.polished || lopsided) && y.norm() > 0.0) {
    if (auto refined = eliminate_large_errors(sampled, b, y, sol, opts)) sol = std::move(*refined);
  }

  RecoveryResult out;
  out.xhat = sol.z.head(n);
  out.ehat = sol.z.tail(m) / lambda;
  out.iterations = sol.iterations;
  out.dual_residual = sol.dual_residual;
  out.converged = sol.converged;
  out.primal_residual = (y - sampled->apply(out.xhat) - out.ehat).norm();
  out.objective = out.xhat.lpNorm<1>() + lambda * out.ehat.lpNorm<1>();
  if (truth) {
    require_size(truth->x, n, "recover: ground-truth x");
    require_size(truth->e, m, "recover: ground-truth e");
    RecoveryMetrics mt;
    const double xerr = (out.xhat - truth->x).norm();
    const double xn = truth->x.norm();
    mt.relative_error = xn > 0.0 ? xerr / xn : xerr;
    mt.rms_x = xerr / static_cast<double>(n);
    mt.rms_e = (out.ehat - truth->e).norm() / static_cast<double>(n);
    mt.success = mt.relative_error <= opts.success_threshold;
    out.metrics = mt;
  }
  return out;
}

}  // namespace rcs

#include "rcs/tv.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

namespace rcs {

Image::Image(Index h, Index w, Vec data) : height(h), width(w), pixels(std::move(data)) {
  if (h < 0 || w < 0 || pixels.size() != h * w) throw DimensionError("Image: size mismatch");
}

namespace {

void grad_flat(const Vec& x, Index h, Index w, Vec& dh, Vec& dv) {
  dh.setZero(h * w);
  dv.setZero(h * w);
  for (Index r = 0; r < h; ++r) {
    const Index row = r * w;
    for (Index c = 0; c + 1 < w; ++c) dh[row + c] = x[row + c + 1] - x[row + c];
    if (r + 1 < h) {
      for (Index c = 0; c < w; ++c) dv[row + c] = x[row + w + c] - x[row + c];
    }
  }
}

void div_flat(const Vec& dh, const Vec& dv, Index h, Index w, Vec& out) {
  out.setZero(h * w);
  for (Index r = 0; r < h; ++r) {
    const Index row = r * w;
    for (Index c = 0; c < w; ++c) {
      double v = 0.0;
      if (c + 1 < w) v += dh[row + c];
      if (c > 0) v -= dh[row + c - 1];
      if (r + 1 < h) v += dv[row + c];
      if (r > 0) v -= dv[row - w + c];
      out[row + c] = v;
    }
  }
}

}  // namespace

GradientField grad(const Image& img) {
  GradientField g;
  g.height = img.height;
  g.width = img.width;
  grad_flat(img.pixels, img.height, img.width, g.dh, g.dv);
  return g;
}

Image div(const GradientField& field) {
  const Index n = field.height * field.width;
  if (field.dh.size() != n || field.dv.size() != n) throw DimensionError("div: field size mismatch");
  Image out(field.height, field.width);
  div_flat(field.dh, field.dv, field.height, field.width, out.pixels);
  return out;
}

double tv_norm(const Image& img) {
  const GradientField g = grad(img);
  return (g.dh.array().square() + g.dv.array().square()).sqrt().sum();
}

Image shepp_logan(Index size) {
  if (size < 32) throw Error("shepp_logan: size must be at least 32");
  struct Ellipse {
    double value, a, b, x0, y0, phi_deg;
  };
  static constexpr std::array<Ellipse, 10> table{{
      {1.0, 0.69, 0.92, 0.0, 0.0, 0.0},
      {-0.8, 0.6624, 0.8740, 0.0, -0.0184, 0.0},
      {-0.2, 0.1100, 0.3100, 0.22, 0.0, -18.0},
      {-0.2, 0.1600, 0.4100, -0.22, 0.0, 18.0},
      {0.1, 0.2100, 0.2500, 0.0, 0.35, 0.0},
      {0.1, 0.0460, 0.0460, 0.0, 0.1, 0.0},
      {0.1, 0.0460, 0.0460, 0.0, -0.1, 0.0},
      {0.1, 0.0460, 0.0230, -0.08, -0.605, 0.0},
      {0.1, 0.0230, 0.0230, 0.0, -0.606, 0.0},
      {0.1, 0.0230, 0.0460, 0.06, -0.605, 0.0},
  }};
  Image img(size, size);
  const double sd = static_cast<double>(size);
  for (Index r = 0; r < size; ++r) {
    const double y = 1.0 - (2.0 * static_cast<double>(r) + 1.0) / sd;
    for (Index c = 0; c < size; ++c) {
      const double x = (2.0 * static_cast<double>(c) + 1.0) / sd - 1.0;
      double v = 0.0;
      for (const Ellipse& e : table) {
        const double phi = e.phi_deg * M_PI / 180.0;
        const double dx = x - e.x0, dy = y - e.y0;
        const double u = dx * std::cos(phi) + dy * std::sin(phi);
        const double t = -dx * std::sin(phi) + dy * std::cos(phi);
        if ((u * u) / (e.a * e.a) + (t * t) / (e.b * e.b) <= 1.0) v += e.value;
      }
      img(r, c) = v;
    }
  }
  return img;
}

SamplingMask radial_mask(Index size, Index lines, std::uint64_t seed) {
  if (size < 2) throw Error("radial_mask: size must be at least 2");
  if (lines < 1) throw Error("radial_mask: need at least one line");
  double offset = 0.0;
  if (seed != 0) {
    std::mt19937_64 rng(seed);
    offset = std::uniform_real_distribution<double>(0.0, M_PI / static_cast<double>(lines))(rng);
  }
  const Index half = size / 2;
  const double radius = static_cast<double>(half);
  // Round half away from zero so that t and -t land on opposite points.
  auto round_sym = [](double v) { return static_cast<Index>(std::lround(v)); };
  std::set<Index> chosen;
  for (Index l = 0; l < lines; ++l) {
    const double theta = offset + M_PI * static_cast<double>(l) / static_cast<double>(lines);
    const double cs = std::cos(theta), sn = std::sin(theta);
    const Index steps = static_cast<Index>(std::floor(2.0 * radius));
    for (Index i = -steps; i <= steps; ++i) {
      const double t = 0.5 * static_cast<double>(i);
      const Index a = round_sym(t * sn);
      const Index b = round_sym(t * cs);
      if (a < -half || a >= half || b < -half || b >= half) continue;
      // Keep the set closed under negation even at the -size/2 edge.
      if (a == -half || b == -half) continue;
      const Index r = ((a % size) + size) % size;
      const Index c = ((b % size) + size) % size;
      chosen.insert(r * size + c);
    }
  }
  SamplingMask mask;
  mask.height = size;
  mask.width = size;
  mask.indices.assign(chosen.begin(), chosen.end());
  return mask;
}

SampledTransform2D::SampledTransform2D(Index height, Index width, std::vector<Index> indices)
    : t_(height, width), indices_(std::move(indices)) {
  for (std::size_t i = 0; i < indices_.size(); ++i) {
    if (indices_[i] < 0 || indices_[i] >= t_.size() || (i > 0 && indices_[i] <= indices_[i - 1])) {
      throw DimensionError("SampledTransform2D: indices must be increasing and inside the grid");
    }
  }
}

void SampledTransform2D::apply(const Vec& x, Vec& out) const {
  require_size(x, cols(), "SampledTransform2D::apply");
  Vec full;
  t_.forward(x, full);
  out.resize(rows());
  for (std::size_t i = 0; i < indices_.size(); ++i) out[static_cast<Index>(i)] = full[indices_[i]];
}

void SampledTransform2D::apply_adjoint(const Vec& y, Vec& out) const {
  require_size(y, rows(), "SampledTransform2D::apply_adjoint");
  Vec full = Vec::Zero(cols());
  for (std::size_t i = 0; i < indices_.size(); ++i) full[indices_[i]] = y[static_cast<Index>(i)];
  t_.adjoint(full, out);
}

SampledTransform2D SampledTransform2D::restrict_rows(const std::vector<Index>& positions) const {
  std::vector<Index> sub;
  sub.reserve(positions.size());
  for (Index p : positions) {
    if (p < 0 || p >= rows()) throw DimensionError("restrict_rows: position out of range");
    sub.push_back(indices_[static_cast<std::size_t>(p)]);
  }
  return SampledTransform2D(t_.height(), t_.width(), std::move(sub));
}

namespace {

void shrink2(const Vec& ah, const Vec& av, double tau, Vec& wh, Vec& wv) {
  wh.resize(ah.size());
  wv.resize(av.size());
  for (Index i = 0; i < ah.size(); ++i) {
    const double nrm = std::hypot(ah[i], av[i]);
    const double f = nrm > tau ? 1.0 - tau / nrm : 0.0;
    wh[i] = f * ah[i];
    wv[i] = f * av[i];
  }
}

void soft(const Vec& a, double tau, Vec& out) {
  out = a.unaryExpr([tau](double v) {
    if (v > tau) return v - tau;
    if (v < -tau) return v + tau;
    return 0.0;
  });
}

void project_ball(const Vec& u, const Vec& y, double sigma, Vec& out) {
  out = u - y;
  const double nrm = out.norm();
  if (nrm > sigma) out *= sigma / nrm;
  out += y;
}

class TvAdmm {
 public:
  TvAdmm(const SampledTransform2D& op, const Vec& y, double lambda, double sigma, bool with_e,
         const TvOptions& opts)
      : op_(op), y_(y), lambda_(lambda), sigma_(sigma), with_e_(with_e), opts_(opts),
        h_(op.transform().height()), w_(op.transform().width()) {
    symbol_ = op.transform().periodic_laplacian_symbol();
    sampled_ = Vec::Zero(op.cols());
    for (Index i : op.indices()) sampled_[i] = 1.0;
  }

  TvResult run() {
    const Index n = op_.cols();
    const Index m = op_.rows();
    TvResult res;
    if (y_.norm() <= sigma_) {
      res.xhat = Image(h_, w_);
      if (with_e_) res.ehat = Vec::Zero(m);
      res.data_residual = y_.norm();
      res.converged = true;
      return res;
    }
    double beta = opts_.beta, gamma = opts_.gamma, delta = opts_.delta;

    Vec x = op_.apply_adjoint(y_);
    Vec ax = op_.apply(x);
    Vec e = Vec::Zero(m), eps = Vec::Zero(m);
    Vec gh, gv;
    grad_flat(x, h_, w_, gh, gv);
    Vec wh = gh, wv = gv, v;
    project_ball(ax, y_, sigma_, v);
    Vec ph = Vec::Zero(n), pv = Vec::Zero(n), q = Vec::Zero(m), r = Vec::Zero(m);
    Vec wh_old, wv_old, v_old, eps_old, rhs, tmp, dtmp;

    bool done = false;
    int it = 0;
    double rel_p = 0.0, rel_d = 0.0;
    for (it = 1; it <= opts_.max_iters; ++it) {
      const double kappa = with_e_ ? gamma * delta / (gamma + delta) : gamma;
      // x update: (beta grad* grad + kappa A* A) x = beta grad* (w - p) + kappa A* target.
      Vec target = v - q;
      if (with_e_) target -= eps - r;
      div_flat(wh - ph, wv - pv, h_, w_, dtmp);
      rhs = -beta * dtmp + kappa * op_.apply_adjoint(target);
      auto normal = [&](const Vec& u, Vec& out) {
        Vec uh, uv;
        grad_flat(u, h_, w_, uh, uv);
        div_flat(uh, uv, h_, w_, out);
        out *= -beta;
        out += kappa * op_.apply_adjoint(op_.apply(u));
      };
      const Vec diag = (beta * symbol_ + kappa * sampled_).array() + 1e-12 * (beta + kappa);
      auto precondition = [&](const Vec& u, Vec& out) {
        op_.transform().forward(u, tmp);
        tmp.array() /= diag.array();
        op_.transform().adjoint(tmp, out);
      };
      conjugate_gradient(normal, rhs, x, 1e-10, opts_.inner_iters, precondition);

      op_.apply(x, ax);
      if (with_e_) e = (gamma * (v - q - ax) + delta * (eps - r)) / (gamma + delta);
      grad_flat(x, h_, w_, gh, gv);

      wh_old = wh;
      wv_old = wv;
      v_old = v;
      eps_old = eps;
      shrink2(gh + ph, gv + pv, 1.0 / beta, wh, wv);
      project_ball(ax + e + q, y_, sigma_, v);
      if (with_e_) soft(e + r, lambda_ / delta, eps);

      const Vec rw_h = gh - wh, rw_v = gv - wv;
      const Vec rv = ax + e - v;
      ph += rw_h;
      pv += rw_v;
      q += rv;
      double rp_e = 0.0, sd_e = 0.0;
      if (with_e_) {
        const Vec re = e - eps;
        r += re;
        rp_e = re.norm();
        sd_e = delta * (eps - eps_old).norm();
      }
      const double rp_w = std::sqrt(rw_h.squaredNorm() + rw_v.squaredNorm());
      const double rp_v = rv.norm();
      div_flat(wh - wh_old, wv - wv_old, h_, w_, dtmp);
      const double sd_w = beta * dtmp.norm();
      const double sd_v = gamma * (v - v_old).norm();

      const double scale_p = std::max(
          {std::sqrt(gh.squaredNorm() + gv.squaredNorm()), (ax + e).norm(), y_.norm() * 1e-12});
      const double scale_d = std::max(
          {beta * std::sqrt(ph.squaredNorm() + pv.squaredNorm()), gamma * q.norm(),
           with_e_ ? delta * r.norm() : 0.0, 1e-12});
      rel_p = std::sqrt(rp_w * rp_w + rp_v * rp_v + rp_e * rp_e) / scale_p;
      rel_d = std::sqrt(sd_w * sd_w + sd_v * sd_v + sd_e * sd_e) / scale_d;
      if (rel_p <= opts_.tol && rel_d <= opts_.tol) {
        done = true;
        break;
      }

      if (opts_.balance_every > 0 && it % opts_.balance_every == 0) {
        const double f = opts_.balance_factor, ratio = opts_.balance_ratio;
        auto balance = [&](double rp, double sd, double& pen, auto rescale) {
          if (rp > ratio * sd) {
            pen *= f;
            rescale(1.0 / f);
          } else if (sd > ratio * rp) {
            pen /= f;
            rescale(f);
          }
        };
        balance(rp_w, sd_w, beta, [&](double s) {
          ph *= s;
          pv *= s;
        });
        balance(rp_v, sd_v, gamma, [&](double s) { q *= s; });
        if (with_e_) balance(rp_e, sd_e, delta, [&](double s) { r *= s; });
      }
    }

    res.iterations = std::min(it, opts_.max_iters);
    res.primal_residual = rel_p;
    res.dual_residual = rel_d;
    res.xhat = Image(h_, w_, x);
    if (with_e_) {
      res.ehat = eps;
      res.data_residual = (y_ - ax - eps).norm();
    } else {
      res.data_residual = (y_ - ax).norm();
    }
    res.objective = tv_norm(res.xhat) + (with_e_ ? lambda_ * eps.lpNorm<1>() : 0.0);
    res.converged = done && res.data_residual <= sigma_ + opts_.tol * std::max(1.0, y_.norm());
    return res;
  }

 private:
  const SampledTransform2D& op_;
  const Vec& y_;
  double lambda_;
  double sigma_;
  bool with_e_;
  TvOptions opts_;
  Index h_, w_;
  Vec symbol_;
  Vec sampled_;
};

void check_inputs(const SampledTransform2D& op, const Vec& y, double sigma) {
  require_size(y, op.rows(), "tv solver: observation");
  if (!(sigma >= 0.0)) throw Error("tv solver: sigma must be non-negative");
}

}  // namespace

TvResult solve_tv_l1(const SampledTransform2D& op, const Vec& y, double lambda, double sigma,
                     const TvOptions& opts) {
  check_inputs(op, y, sigma);
  if (!(lambda > 0.0)) throw Error("solve_tv_l1: lambda must be positive");
  return TvAdmm(op, y, lambda, sigma, true, opts).run();
}

TvResult solve_tv(const SampledTransform2D& op, const Vec& y, double sigma, const TvOptions& opts) {
  check_inputs(op, y, sigma);
  return TvAdmm(op, y, 1.0, sigma, false, opts).run();
}

TwoStepResult two_step_recover(const SampledTransform2D& op, const Vec& y, double lambda,
                               double sigma, double zero_threshold, const TvOptions& opts) {
  if (!(zero_threshold >= 0.0)) throw Error("two_step_recover: threshold must be non-negative");
  TwoStepResult out;
  out.step1 = solve_tv_l1(op, y, lambda, sigma, opts);
  for (Index i = 0; i < y.size(); ++i) {
    if (std::abs(out.step1.ehat[i]) <= zero_threshold) out.kept.push_back(i);
  }
  if (out.kept.empty()) throw Error("two_step_recover: every measurement was flagged as corrupted");
  const SampledTransform2D sub = op.restrict_rows(out.kept);
  Vec y_sub(static_cast<Index>(out.kept.size()));
  for (std::size_t i = 0; i < out.kept.size(); ++i) y_sub[static_cast<Index>(i)] = y[out.kept[i]];
  out.step2 = solve_tv(sub, y_sub, sigma, opts);
  return out;
}

double default_zero_threshold(const Vec& y) {
  if (y.size() == 0) return 0.0;
  std::vector<double> mags(static_cast<std::size_t>(y.size()));
  for (Index i = 0; i < y.size(); ++i) mags[static_cast<std::size_t>(i)] = std::abs(y[i]);
  const std::size_t mid = mags.size() / 2;
  std::nth_element(mags.begin(), mags.begin() + static_cast<std::ptrdiff_t>(mid), mags.end());
  double med = mags[mid];
  if (mags.size() % 2 == 0) {
    const double lower = *std::max_element(mags.begin(), mags.begin() + static_cast<std::ptrdiff_t>(mid));
    med = 0.5 * (med + lower);
  }
  return 1e-3 * med;
}

double lambda_tv(Index n, Index m) {
  if (n < 2 || m < 1) throw Error("lambda_tv: need n >= 2 and m >= 1");
  const double nd = static_cast<double>(n);
  return std::sqrt(nd / (static_cast<double>(m) * std::log(nd)));
}

Corruption corrupt_measurements(const Vec& clean, double fraction, double factor,
                                std::uint64_t seed) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) throw Error("corrupt_measurements: fraction must lie in [0, 1]");
  const Index m = clean.size();
  const Index count = static_cast<Index>(std::llround(fraction * static_cast<double>(m)));
  std::mt19937_64 rng(seed);
  std::vector<Index> all(static_cast<std::size_t>(m));
  std::iota(all.begin(), all.end(), Index{0});
  Corruption out;
  out.support = sample_subset(all, count, rng);
  out.error = Vec::Zero(m);
  std::bernoulli_distribution coin(0.5);
  for (Index i : out.support) {
    const double mag = factor * std::abs(clean[i]);
    out.error[i] = coin(rng) ? mag : -mag;
  }
  return out;
}

double relative_error(const Vec& estimate, const Vec& truth) {
  if (estimate.size() != truth.size()) throw DimensionError("relative_error: size mismatch");
  const double tn = truth.norm();
  const double en = (estimate - truth).norm();
  return tn > 0.0 ? en / tn : en;
}

}  // namespace rcs

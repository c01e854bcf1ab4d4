#include "rcs/certificate.hpp"

#include "rcs/kv_config.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

namespace rcs {

namespace {

constexpr double kCgTol = 1e-12;

std::vector<Index> complement(Index n, const std::vector<Index>& sorted) {
  std::vector<Index> out;
  out.reserve(static_cast<std::size_t>(n) - sorted.size());
  std::size_t c = 0;
  for (Index i = 0; i < n; ++i) {
    if (c < sorted.size() && sorted[c] == i) {
      ++c;
    } else {
      out.push_back(i);
    }
  }
  return out;
}

Vec gather(const Vec& v, const std::vector<Index>& idx) {
  Vec out(static_cast<Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) out[static_cast<Index>(i)] = v[idx[i]];
  return out;
}

void scatter(const Vec& v, const std::vector<Index>& idx, Vec& into) {
  for (std::size_t i = 0; i < idx.size(); ++i) into[idx[i]] = v[static_cast<Index>(i)];
}

double sup_norm(const Vec& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

Vec signs_on(const Vec& v, const std::vector<Index>& idx) {
  Vec s = gather(v, idx);
  for (Index i = 0; i < s.size(); ++i) s[i] = s[i] > 0.0 ? 1.0 : (s[i] < 0.0 ? -1.0 : 0.0);
  return s;
}

// Solves (A*_{JT} A_{JT}) c = rhs matrix-free.
Vec solve_clean_gram(const OrthoTransform& a, const SupportSets& sets, const Vec& rhs) {
  const Index k = static_cast<Index>(sets.signal.size());
  if (k == 0) return Vec();
  if (sets.clean.size() < sets.signal.size()) {
    throw CertificateInapplicable("A*_JT A_JT is singular: fewer clean rows than signal entries");
  }
  RestrictedOperator ajt(a, sets.clean, sets.signal);
  Vec tmp;
  auto gram = [&](const Vec& c, Vec& out) {
    ajt.apply(c, tmp);
    ajt.apply_adjoint(tmp, out);
  };
  Vec c = Vec::Zero(k);
  const CgResult cg = conjugate_gradient(gram, rhs, c, kCgTol, 50 * static_cast<int>(k) + 200);
  if (!cg.converged || !c.allFinite()) {
    throw CertificateInapplicable("A*_JT A_JT is singular to working precision");
  }
  return c;
}

}  // namespace

Vec construct_we(const OrthoTransform& a, const SupportSets& sets, double lambda,
                 const Vec& sgn_e) {
  const Index n = a.size();
  require_size(sgn_e, static_cast<Index>(sets.error.size()), "construct_we: sgn_e");
  if (sets.error.empty()) return Vec::Zero(n);

  const std::vector<Index> jc = complement(n, sets.clean);
  if (!sets.signal.empty()) {
    const SpectralEstimate norm = spectral_norm(RestrictedOperator(a, jc, sets.signal));
    if (norm.value >= 1.0 - 1e-10) {
      throw CertificateInapplicable("certificate inapplicable: ||A_{J^c T}|| >= 1");
    }
  }

  // Right-hand side over J^c: sgn_e on the S rows, zero on Omega^c.
  Vec rhs = Vec::Zero(static_cast<Index>(jc.size()));
  {
    std::size_t c = 0;
    for (std::size_t i = 0; i < jc.size(); ++i) {
      while (c < sets.error.size() && sets.error[c] < jc[i]) ++c;
      if (c < sets.error.size() && sets.error[c] == jc[i]) rhs[static_cast<Index>(i)] = sgn_e[static_cast<Index>(c)];
    }
  }

  // A_{J^c T^c} A*_{J^c T^c} t, formed as rows J^c of A applied to A*t with T zeroed.
  Vec full(n), back;
  auto adjoint_tc = [&](const Vec& t, Vec& out) {
    full.setZero();
    scatter(t, jc, full);
    a.adjoint(full, out);
    for (Index i : sets.signal) out[i] = 0.0;
  };
  Vec u;
  auto gram = [&](const Vec& t, Vec& out) {
    adjoint_tc(t, u);
    a.forward(u, back);
    out = gather(back, jc);
  };
  Vec t = rhs;
  const CgResult cg = conjugate_gradient(gram, rhs, t, kCgTol, 10 * static_cast<int>(jc.size()) + 200);
  if (!cg.converged) throw CertificateInapplicable("construct_we: Gram system did not converge");
  Vec we;
  adjoint_tc(t, we);
  return lambda * we;
}

Vec construct_vx(const OrthoTransform& a, const SupportSets& sets, const Vec& sgn_x) {
  const Index n = a.size();
  require_size(sgn_x, static_cast<Index>(sets.signal.size()), "construct_vx: sgn_x");
  if (sets.signal.empty()) return Vec::Zero(n);
  const Vec c = solve_clean_gram(a, sets, sgn_x);
  RestrictedOperator ajt(a, sets.clean, sets.signal);
  Vec full = Vec::Zero(n);
  scatter(ajt.apply(c), sets.clean, full);
  return a.adjoint(full);
}

CertificateReport check_certificate(const OrthoTransform& a, const ProblemInstance& inst,
                                    double lambda) {
  if (!(lambda > 0.0)) throw Error("check_certificate: lambda must be positive");
  const SupportSets& sets = inst.sets;
  const Index n = a.size();
  CertificateReport rep;
  rep.pair.lambda = lambda;

  const std::vector<Index> jc = complement(n, sets.clean);
  if (!sets.signal.empty()) {
    rep.norm_jc_t = spectral_norm(RestrictedOperator(a, jc, sets.signal)).value;
  }
  const Vec sgn_x = signs_on(inst.xstar, sets.signal);
  const Vec sgn_e = signs_on(inst.estar, sets.error_pos);
  rep.pair.vx = construct_vx(a, sets, sgn_x);
  rep.pair.we = construct_we(a, sets, lambda, sgn_e);

  const std::vector<Index> tc = complement(n, sets.signal);
  const std::vector<Index> omega_c = complement(n, sets.omega);
  const Vec av = a.forward(rep.pair.vx);
  const Vec aw = a.forward(rep.pair.we);
  const double tol = kIdentityTolerance;
  const double bound = 3.0 / 8.0;
  const double bound_l = 3.0 * lambda / 8.0;

  auto identity = [&](const char* name, double value) {
    rep.conditions.push_back({name, value, tol, value <= tol});
  };
  auto strict = [&](const char* name, double value, double thr) {
    rep.conditions.push_back({name, value, thr, value < thr});
  };

  identity("vx_T=sgn_x", sup_norm(gather(rep.pair.vx, sets.signal) - sgn_x));
  strict("vx_Tc<3/8", sup_norm(gather(rep.pair.vx, tc)), bound);
  identity("A_S.vx=0", sup_norm(gather(av, sets.error)));
  strict("A_J.vx<3l/8", sup_norm(gather(av, sets.clean)), bound_l);
  identity("A_Oc.vx=0", sup_norm(gather(av, omega_c)));
  identity("we_T=0", sup_norm(gather(rep.pair.we, sets.signal)));
  strict("we_Tc<3/8", sup_norm(gather(rep.pair.we, tc)), bound);
  identity("A_S.we=l*sgn_e", sup_norm(gather(aw, sets.error) - lambda * sgn_e));
  strict("A_J.we<3l/8", sup_norm(gather(aw, sets.clean)), bound_l);
  identity("A_Oc.we=0", sup_norm(gather(aw, omega_c)));

  rep.identities_pass = true;
  rep.pass = true;
  for (const ConditionCheck& c : rep.conditions) {
    rep.pass = rep.pass && c.pass;
    if (c.threshold == tol) rep.identities_pass = rep.identities_pass && c.pass;
  }
  return rep;
}

Lemma2Report check_lemma2(const OrthoTransform& a, const ProblemInstance& inst,
                          const CertificatePair& pair, int trials, std::uint64_t seed) {
  const SupportSets& sets = inst.sets;
  const Index n = a.size();
  const double lambda = pair.lambda;
  const std::vector<Index> tc = complement(n, sets.signal);

  const Vec zx = pair.vx + pair.we;
  const Vec ze_full = a.forward(zx) / lambda;
  const Vec zx_tc = gather(zx, tc);
  const Vec ze_j = gather(ze_full, sets.clean);

  const double base = inst.xstar.lpNorm<1>() + lambda * inst.estar.lpNorm<1>();
  SubsampledOperator a_omega(a, RowSubset{sets.omega, SamplingMode::uniform});

  Lemma2Report rep;
  rep.trials = trials;
  rep.min_margin = std::numeric_limits<double>::infinity();
  rep.min_witness_margin = std::numeric_limits<double>::infinity();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> log_scale(-6.0, 2.0);
  Vec h(n);
  for (int t = 0; t < trials; ++t) {
    if (t == 0) {
      h.setZero();
    } else {
      const double scale = std::pow(10.0, log_scale(rng));
      for (Index i = 0; i < n; ++i) h[i] = scale * normal(rng);
    }
    const Vec ah = a_omega.apply(h);  // A_Omega h = -f
    const double lhs = (inst.xstar + h).lpNorm<1>() + lambda * (inst.estar - ah).lpNorm<1>();
    const Vec h_tc = gather(h, tc);
    const Vec ajh = gather(ah, sets.clean_pos);
    const double quarter = 0.25 * (h_tc.lpNorm<1>() + lambda * ajh.lpNorm<1>());
    const double excess =
        h_tc.lpNorm<1>() - zx_tc.dot(h_tc) + lambda * ajh.lpNorm<1>() + lambda * ze_j.dot(ajh);

    const double slack = 1e-12 * (lhs + base) + 1e-14;
    const double margin = lhs - base - quarter;
    const double witness = std::min(lhs - base - excess, excess - quarter);
    rep.min_margin = std::min(rep.min_margin, margin);
    rep.min_witness_margin = std::min(rep.min_witness_margin, witness);
    if (margin < -slack) ++rep.inequality_violations;
    if (margin < -slack || witness < -slack) ++rep.violations;
  }
  if (trials == 0) rep.min_margin = rep.min_witness_margin = 0.0;
  return rep;
}

IsometryReport check_isometry(const OrthoTransform& a, const SupportSets& sets, double rho0) {
  if (sets.signal.empty()) throw Error("check_isometry: T must be non-empty");
  if (!(rho0 > 0.0)) throw Error("check_isometry: rho0 must be positive");
  const Index n = a.size();
  const Index k = static_cast<Index>(sets.signal.size());
  IsometryReport rep;

  RestrictedOperator ajt(a, sets.clean, sets.signal);
  Vec tmp;
  FunctionOperator deviation(
      k, k,
      [&](const Vec& x, Vec& out) {
        ajt.apply(x, tmp);
        out = x - ajt.apply_adjoint(tmp) / rho0;
      },
      [&](const Vec& x, Vec& out) {
        ajt.apply(x, tmp);
        out = x - ajt.apply_adjoint(tmp) / rho0;
      });
  const SpectralEstimate eps = spectral_norm(deviation);
  rep.epsilon = eps.value;

  const std::vector<Index> jc = complement(n, sets.clean);
  const SpectralEstimate jct = spectral_norm(RestrictedOperator(a, jc, sets.signal));
  rep.norm_jc_t = jct.value;
  rep.jct_bound = std::sqrt(std::max(0.0, 1.0 - rho0 / 2.0));
  rep.jct_holds = rep.norm_jc_t <= rep.jct_bound;

  bool st_converged = true;
  const double nd = static_cast<double>(n);
  const double m = static_cast<double>(sets.omega.size());
  const double s = static_cast<double>(sets.error.size());
  if (sets.error.empty()) {
    rep.norm_st_gram = 0.0;
    rep.st_gram_bound = std::numeric_limits<double>::infinity();
    rep.st_gram_holds = true;
  } else {
    const SpectralEstimate st = spectral_norm(RestrictedOperator(a, sets.error, sets.signal));
    st_converged = st.converged;
    rep.norm_st_gram = st.value * st.value;
    const double mu = coherence(a);
    const double eta = m / nd;
    const double rho = s / m;
    rep.st_gram_bound = (1.0 + std::sqrt(mu * static_cast<double>(k) * std::log(nd) / s)) * eta * rho;
    rep.st_gram_holds = rep.norm_st_gram <= rep.st_gram_bound;
  }
  rep.converged = eps.converged && jct.converged && st_converged;
  return rep;
}

OracleEstimate oracle_estimate(const OrthoTransform& a, const SupportSets& sets, const Vec& y) {
  const Index n = a.size();
  require_size(y, static_cast<Index>(sets.omega.size()), "oracle_estimate: y");
  OracleEstimate out;
  out.x = Vec::Zero(n);
  out.e = Vec::Zero(y.size());
  const Vec y_j = gather(y, sets.clean_pos);
  if (!sets.signal.empty()) {
    RestrictedOperator ajt(a, sets.clean, sets.signal);
    const Vec xt = solve_clean_gram(a, sets, ajt.apply_adjoint(y_j));
    scatter(xt, sets.signal, out.x);
  }
  if (!sets.error.empty()) {
    const Vec ax = a.forward(out.x);
    for (std::size_t i = 0; i < sets.error.size(); ++i) {
      out.e[sets.error_pos[i]] = y[sets.error_pos[i]] - ax[sets.error[i]];
    }
  }
  return out;
}

std::string certificate_csv_header() {
  return "seed,pass,identities_pass,vx_T,vx_Tc,A_S_vx,A_J_vx,A_Oc_vx,we_T,we_Tc,A_S_we,A_J_we,"
         "A_Oc_we,lambda,norm_jc_t,epsilon,jct_bound,jct_holds,st_gram,st_gram_bound,"
         "st_gram_holds,lemma2_trials,lemma2_violations";
}

std::string certificate_csv_row(std::uint64_t seed, const CertificateReport& cert,
                                const IsometryReport& iso, const Lemma2Report* lemma2) {
  std::ostringstream os;
  os << seed << ',' << int(cert.pass) << ',' << int(cert.identities_pass);
  for (const ConditionCheck& c : cert.conditions) os << ',' << format_double(c.value);
  os << ',' << format_double(cert.pair.lambda) << ',' << format_double(iso.norm_jc_t) << ','
     << format_double(iso.epsilon) << ',' << format_double(iso.jct_bound) << ','
     << int(iso.jct_holds) << ',' << format_double(iso.norm_st_gram) << ','
     << format_double(iso.st_gram_bound) << ',' << int(iso.st_gram_holds) << ',';
  if (lemma2 != nullptr) {
    os << lemma2->trials << ',' << lemma2->violations;
  } else {
    os << "0,";
  }
  return os.str();
}

}  // namespace rcs

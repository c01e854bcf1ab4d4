#include "oracles.hpp"
#include "rcs/certificate.hpp"
#include "rcs/synth.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>

using namespace rcs;

namespace {

Mat pick(const Mat& a, const std::vector<Index>& rows, const std::vector<Index>& cols) {
  Mat out(static_cast<Index>(rows.size()), static_cast<Index>(cols.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < cols.size(); ++j) {
      out(static_cast<Index>(i), static_cast<Index>(j)) = a(rows[i], cols[j]);
    }
  }
  return out;
}

std::vector<Index> complement(Index n, const std::vector<Index>& s) {
  std::vector<Index> out;
  for (Index i = 0; i < n; ++i) {
    if (!std::binary_search(s.begin(), s.end(), i)) out.push_back(i);
  }
  return out;
}

Vec signs(const Vec& v, const std::vector<Index>& at) {
  Vec s(static_cast<Index>(at.size()));
  for (std::size_t i = 0; i < at.size(); ++i) s[static_cast<Index>(i)] = v[at[i]] > 0 ? 1.0 : -1.0;
  return s;
}

std::vector<Index> all(Index n) {
  std::vector<Index> v;
  for (Index i = 0; i < n; ++i) v.push_back(i);
  return v;
}

ModelConfig small_model(std::uint64_t seed) {
  ModelConfig c;
  c.n = 64;
  c.m = 40;
  c.k = 3;
  c.s = 4;
  c.seed = seed;
  return c;
}

}  // namespace

TEST_SUITE("certificate") {

TEST_CASE("dense oracle for both constructions at n = 64") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const ModelConfig c = small_model(seed);
    const OrthoTransform a = OrthoTransform::make(c.transform, c.n);
    const Mat am = oracle::hadamard_matrix(c.n);
    const ProblemInstance inst = generate(c, a);
    const SupportSets& s = inst.sets;
    const double lambda = 0.8;

    const Vec sgn_x = signs(inst.xstar, s.signal);
    const Mat ajt = pick(am, s.clean, s.signal);
    const Mat aj = pick(am, s.clean, all(c.n));
    const Vec vx_ref = aj.transpose() * (ajt * (ajt.transpose() * ajt).ldlt().solve(sgn_x));
    CHECK((construct_vx(a, s, sgn_x) - vx_ref).cwiseAbs().maxCoeff() < 1e-8);

    const Vec sgn_e = signs(inst.estar, s.error_pos);
    const std::vector<Index> jc = complement(c.n, s.clean), tc = complement(c.n, s.signal);
    const Mat m = pick(am, jc, tc);
    Vec rhs = Vec::Zero(static_cast<Index>(jc.size()));
    for (std::size_t i = 0; i < jc.size(); ++i) {
      auto it = std::find(s.error.begin(), s.error.end(), jc[i]);
      if (it != s.error.end()) rhs[static_cast<Index>(i)] = sgn_e[it - s.error.begin()];
    }
    const Vec wtc = lambda * m.transpose() * (m * m.transpose()).ldlt().solve(rhs);
    Vec we_ref = Vec::Zero(c.n);
    for (std::size_t j = 0; j < tc.size(); ++j) we_ref[tc[j]] = wtc[static_cast<Index>(j)];
    CHECK((construct_we(a, s, lambda, sgn_e) - we_ref).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("degenerate constructions") {
  ModelConfig c;
  c.n = 64;
  c.m = 64;
  c.k = 64;
  c.s = 0;
  const OrthoTransform a = OrthoTransform::make(c.transform, c.n);
  const ProblemInstance full = generate(c, a);
  const Vec sgn = signs(full.xstar, full.sets.signal);
  CHECK((construct_vx(a, full.sets, sgn) - sgn).cwiseAbs().maxCoeff() < 1e-8);
  CHECK(construct_we(a, full.sets, 1.0, Vec()).norm() == 0.0);

  ModelConfig one = small_model(3);
  one.k = 1;
  one.s = 0;
  const ProblemInstance inst = generate(one, a);
  const CertificateReport rep = check_certificate(a, inst, 0.7);
  REQUIRE(rep.conditions.size() == 10);
  for (std::size_t i = 5; i < 10; ++i) CHECK(rep.conditions[i].pass);
}

TEST_CASE("defining identities hold on random instances") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    ModelConfig c;
    c.n = 512;
    c.m = 256;
    c.k = 5;
    c.s = 25;
    c.seed = seed;
    const OrthoTransform a = OrthoTransform::make(c.transform, c.n);
    const ProblemInstance inst = generate(c, a);
    const CertificateReport rep = check_certificate(a, inst, lambda_theorem(c.n, c.m, 1.0, 0.9));
    CHECK(rep.identities_pass);
    for (const ConditionCheck& cc : rep.conditions) {
      if (cc.name.find('=') != std::string::npos) CHECK(cc.value <= kIdentityTolerance);
    }
    const Vec aw = a.forward(rep.pair.we);
    for (std::size_t i = 0; i < inst.sets.error.size(); ++i) {
      const double sgn = inst.estar[inst.sets.error_pos[i]] > 0 ? 1.0 : -1.0;
      CHECK(std::abs(aw[inst.sets.error[i]] - rep.pair.lambda * sgn) < 1e-8);
    }
    for (Index t : inst.sets.signal) CHECK(rep.pair.we[t] == 0.0);
  }
}

TEST_CASE("inapplicable when A_{J^c T} has unit norm") {
  // identity transform: rows J^c contain T's own unit columns
  ModelConfig c = small_model(2);
  const OrthoTransform id = OrthoTransform::dense(Mat::Identity(64, 64));
  c.transform = TransformKind::dense;
  ProblemInstance inst = generate(c, OrthoTransform::hadamard(64));
  inst.config = c;
  // force a signal index outside the clean rows
  inst.sets.signal = {inst.sets.error.front()};
  Vec sgn_e = Vec::Ones(static_cast<Index>(inst.sets.error.size()));
  CHECK_THROWS_AS(construct_we(id, inst.sets, 1.0, sgn_e), CertificateInapplicable);
}

TEST_CASE("spectral quantities against a dense SVD at n = 64") {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    ModelConfig c = small_model(seed);
    c.k = 5;
    const OrthoTransform a = OrthoTransform::make(c.transform, c.n);
    const Mat am = oracle::hadamard_matrix(c.n);
    const ProblemInstance inst = generate(c, a);
    const SupportSets& s = inst.sets;
    const IsometryReport iso = check_isometry(a, s, c.rho0());
    const Mat ajt = pick(am, s.clean, s.signal);
    const Mat g = Mat::Identity(c.k, c.k) - ajt.transpose() * ajt / c.rho0();
    CHECK(std::abs(iso.epsilon - oracle::top_singular_value(g)) < 1e-6);
    CHECK(std::abs(iso.norm_jc_t - oracle::top_singular_value(pick(am, complement(c.n, s.clean), s.signal))) < 1e-6);
    const Mat ast = pick(am, s.error, s.signal);
    CHECK(std::abs(iso.norm_st_gram - oracle::top_singular_value(ast.transpose() * ast)) < 1e-6);
    CHECK(iso.jct_bound == doctest::Approx(std::sqrt(1 - c.rho0() / 2)));
    const double mu = 1.0;
    CHECK(iso.st_gram_bound ==
          doctest::Approx((1 + std::sqrt(mu * c.k * std::log(64.0) / c.s)) * c.eta() * c.rho()));
  }
}

TEST_CASE("full sampling gives epsilon = 0") {
  ModelConfig c;
  c.n = 128;
  c.m = 128;
  c.k = 6;
  c.s = 0;
  const OrthoTransform a = OrthoTransform::make(c.transform, c.n);
  const ProblemInstance inst = generate(c, a);
  const IsometryReport iso = check_isometry(a, inst.sets, c.rho0());
  CHECK(iso.epsilon < 1e-12);
}

TEST_CASE("oracle estimator") {
  ModelConfig c;
  c.n = 512;
  c.m = 256;
  c.k = 5;
  c.s = 25;
  const OrthoTransform a = OrthoTransform::make(c.transform, c.n);
  ProblemInstance inst = generate(c, a);
  OracleEstimate o = oracle_estimate(a, inst.sets, inst.y);
  CHECK((o.x - inst.xstar).norm() <= 1e-9 * inst.xstar.norm());
  CHECK((o.e - inst.estar).norm() <= 1e-9 * inst.estar.norm());

  c.sigma = 0.5;
  int within = 0, within3 = 0;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    c.seed = seed;
    inst = generate(c, a);
    o = oracle_estimate(a, inst.sets, inst.y);
    const double bound = c.sigma * std::sqrt(6.0 / c.rho0());
    const double ex = (o.x - inst.xstar).norm();
    within += ex <= bound;
    within3 += ex + (o.e - inst.estar).norm() <= 3 * bound;
  }
  CHECK(within == 100);
  CHECK(within3 == 100);
}

TEST_CASE("perturbation inequality for a passing dual pair") {
  ModelConfig c;
  c.n = 4096;
  c.m = 2048;
  c.k = 5;
  c.s = 25;
  c.seed = 1;
  const OrthoTransform a = OrthoTransform::make(c.transform, c.n);
  const ProblemInstance inst = generate(c, a);
  const CertificateReport rep = check_certificate(a, inst, lambda_theorem(c.n, c.m, 1.0, 0.9));
  REQUIRE(rep.pass);
  const Lemma2Report good = check_lemma2(a, inst, rep.pair, 1000, 17);
  CHECK(good.trials == 1000);
  CHECK(good.violations == 0);
  CHECK(good.inequality_violations == 0);
  // trial 0 is h = 0: both sides agree, so the smallest margin is ~0
  CHECK(std::abs(good.min_margin) < 1e-9 * (inst.xstar.lpNorm<1>() + inst.estar.lpNorm<1>()));

  CertificatePair bad = rep.pair;
  bad.we *= 3.0;
  const Lemma2Report broken = check_lemma2(a, inst, bad, 200, 17);
  CHECK(broken.violations > 0);
}

TEST_CASE("csv row has one field per header column") {
  ModelConfig c = small_model(1);
  const OrthoTransform a = OrthoTransform::make(c.transform, c.n);
  const ProblemInstance inst = generate(c, a);
  const CertificateReport rep = check_certificate(a, inst, 1.0);
  const IsometryReport iso = check_isometry(a, inst.sets, c.rho0());
  const std::string header = certificate_csv_header(), row = certificate_csv_row(1, rep, iso, nullptr);
  CHECK(std::count(header.begin(), header.end(), ',') == std::count(row.begin(), row.end(), ','));
}

}  // TEST_SUITE

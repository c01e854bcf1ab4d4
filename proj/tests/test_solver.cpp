#include "oracles.hpp"
#include "rcs/solver.hpp"
#include "rcs/synth.hpp"
#include "tiny_cases.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace rcs;

namespace {

struct Setup {
  OrthoTransform a;
  ProblemInstance inst;
  std::shared_ptr<SubsampledOperator> op;
};

Setup make(const ModelConfig& c) {
  OrthoTransform a = OrthoTransform::make(c.transform, c.n);
  ProblemInstance inst = generate(c, a);
  auto op = std::make_shared<SubsampledOperator>(a, RowSubset{inst.sets.omega, c.sampling});
  return {a, inst, op};
}

// ||B* w||_inf for the augmented operator.
double dual_sup(const LinearOperator& b, const Vec& w) { return b.apply_adjoint(w).cwiseAbs().maxCoeff(); }

}  // namespace

TEST_SUITE("solver") {

TEST_CASE("y = 0 gives z = 0") {
  const DenseOperator b(oracle::hadamard_matrix(8).topRows(5));
  const L1Solution sol = solve_bp(b, Vec::Zero(5));
  CHECK(sol.z.norm() == 0.0);
  CHECK(sol.converged);
}

TEST_CASE("full sampling without error recovers x exactly") {
  for (Index k : {1, 10, 60}) {
    ModelConfig c;
    c.n = 256;
    c.m = 256;
    c.s = 0;
    c.k = k;
    const Setup st = make(c);
    const RecoveryResult r = recover(st.op, st.inst.y, 10.0, 0.0, {}, GroundTruth{st.inst.xstar, st.inst.estar});
    CHECK((r.xhat - st.inst.xstar).norm() <= 1e-6 * std::max(1.0, st.inst.xstar.norm()));
  }
}

TEST_CASE("basis pursuit feasibility and duality certificate") {
  ModelConfig c;
  c.n = 256;
  c.m = 128;
  c.k = 8;
  c.s = 16;
  const Setup st = make(c);
  const double lambda = lambda_default(c.n, c.m);
  const AugmentedOperator b(st.op, lambda);
  SolverOptions opts;
  const L1Solution sol = solve_bp(b, st.inst.y, opts);
  REQUIRE(sol.converged);
  CHECK((b.apply(sol.z) - st.inst.y).norm() <= opts.tol * st.inst.y.norm());
  CHECK(dual_sup(b, sol.dual) <= 1.0 + 10 * opts.tol);
  CHECK(sol.dual.dot(st.inst.y) >= sol.objective * (1.0 - 10 * opts.tol));
}

TEST_CASE("tiny instances match exact vertex enumeration") {
  int worst_case = -1;
  double worst = 0.0;
  for (int i = 0; i < 50; ++i) {
    const tiny::Outcome o = tiny::run_case(i);
    CHECK(o.converged);
    if (o.gap() > worst) {
      worst = o.gap();
      worst_case = i;
    }
  }
  INFO("worst case " << worst_case);
  CHECK(worst <= 1e-6);
}

TEST_CASE("simplex and vertex enumeration agree on tiny instances") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g;
  for (int t = 0; t < 20; ++t) {
    Mat b(5, 13);
    b << oracle::hadamard_matrix(8).topRows(5), Mat::Identity(5, 5);
    Vec y(5), w(13);
    for (Index i = 0; i < 5; ++i) y[i] = g(rng);
    for (Index j = 0; j < 13; ++j) w[j] = 0.5 + std::abs(g(rng));
    const double v = oracle::weighted_l1_vertex_min(b, y, w);
    CHECK(std::abs(oracle::weighted_l1_lp_min(b, y, w) - v) <= 1e-9 * std::max(1.0, v));
  }
}

TEST_CASE("n=16, m=12, k=2, s=2 against small-support enumeration") {
  // Supports of size <= 4 only give an upper bound: the l1 optimum of the
  // augmented program can have up to 12 nonzeros.
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    ModelConfig c;
    c.n = 16;
    c.m = 12;
    c.k = 2;
    c.s = 2;
    c.seed = seed;
    const Setup st = make(c);
    const double lambda = lambda_default(c.n, c.m);
    const RecoveryResult r = recover(st.op, st.inst.y, lambda, 0.0);
    Mat b(12, 28);
    b << st.op->materialize(), Mat::Identity(12, 12);
    Vec w(28);
    w << Vec::Ones(16), Vec::Constant(12, lambda);
    const double small = oracle::weighted_l1_small_support_min(b, st.inst.y, w, 4);
    const double exact = oracle::weighted_l1_lp_min(b, st.inst.y, w);
    const double obj = r.xhat.lpNorm<1>() + lambda * r.ehat.lpNorm<1>();
    CHECK(obj <= small + 1e-6);
    CHECK(std::abs(obj - exact) <= 1e-6);
    Index support = 0;
    for (Index i = 0; i < 16; ++i) support += std::abs(r.xhat[i]) > 1e-9;
    for (Index i = 0; i < 12; ++i) support += std::abs(r.ehat[i]) > 1e-9;
    if (support <= 4) CHECK(std::abs(obj - small) <= 1e-6);
  }
}

TEST_CASE("bpdn: zero is optimal once sigma >= ||y||") {
  ModelConfig c;
  c.n = 64;
  c.m = 32;
  c.k = 3;
  c.s = 4;
  const Setup st = make(c);
  const AugmentedOperator b(st.op, 1.0);
  const L1Solution sol = solve_bpdn(b, st.inst.y, st.inst.y.norm() * 1.01);
  CHECK(sol.z.norm() == 0.0);
  CHECK_THROWS(solve_bpdn(b, st.inst.y, -1.0));
}

TEST_CASE("bpdn with sigma = 0 agrees with bp") {
  ModelConfig c;
  c.n = 16;
  c.m = 12;
  c.k = 2;
  c.s = 2;
  const Setup st = make(c);
  const AugmentedOperator b(st.op, lambda_default(16, 12));
  const L1Solution bp = solve_bp(b, st.inst.y);
  const L1Solution dn = solve_bpdn(b, st.inst.y, 0.0);
  CHECK(std::abs(bp.objective - dn.objective) <= 1e-6);
}

TEST_CASE("bpdn: feasible ball, certificate and objective below the truth") {
  ModelConfig c;
  c.n = 512;
  c.m = 256;
  c.k = 10;
  c.s = 30;
  c.sigma = 0.5;
  const Setup st = make(c);
  const double lambda = lambda_default(c.n, c.m);
  const AugmentedOperator b(st.op, lambda);
  SolverOptions opts;
  const L1Solution sol = solve_bpdn(b, st.inst.y, c.sigma, opts);
  REQUIRE(sol.converged);
  CHECK((b.apply(sol.z) - st.inst.y).norm() <= c.sigma + opts.tol * std::max(1.0, st.inst.y.norm()));
  CHECK(dual_sup(b, sol.dual) <= 1.0 + 10 * opts.tol);
  const double truth = st.inst.xstar.lpNorm<1>() + lambda * st.inst.estar.lpNorm<1>();
  CHECK(sol.objective <= truth * (1 + 1e-8));
}

TEST_CASE("bpdn objective is non-increasing in sigma") {
  ModelConfig c;
  c.n = 256;
  c.m = 128;
  c.k = 6;
  c.s = 10;
  c.sigma = 0.2;
  const Setup st = make(c);
  const AugmentedOperator b(st.op, lambda_default(c.n, c.m));
  double last = std::numeric_limits<double>::infinity();
  for (double sigma : {0.0, 0.05, 0.1, 0.2, 0.4, 0.8}) {
    const L1Solution sol = solve_bpdn(b, st.inst.y, sigma);
    CHECK(sol.objective <= last * (1 + 1e-7));
    last = sol.objective;
  }
}

TEST_CASE("recover in the exact regime and the plain-CS reduction") {
  ModelConfig c;  // n=1024, m=500, k=10, s=125
  c.seed = 3;
  Setup st = make(c);
  RecoveryResult r = recover(st.op, st.inst.y, lambda_default(c.n, c.m), 0.0, {},
                             GroundTruth{st.inst.xstar, st.inst.estar});
  REQUIRE(r.metrics.has_value());
  CHECK(r.metrics->success);
  CHECK(r.converged);
  CHECK(r.primal_residual <= 1e-6 * st.inst.y.norm());

  ModelConfig p;
  p.n = 512;
  p.m = 256;
  p.k = 5;
  p.s = 0;
  st = make(p);
  r = recover(st.op, st.inst.y, lambda_default(p.n, p.m), 0.0, {}, GroundTruth{st.inst.xstar, st.inst.estar});
  CHECK(r.metrics->success);
  CHECK(!recover(st.op, st.inst.y, 1.0, 0.0).metrics.has_value());
}

TEST_CASE("error magnitude does not change the outcome") {
  for (std::uint64_t seed : {1, 2, 3}) {
    ModelConfig c;
    c.seed = seed;
    c.k = 20;
    ModelConfig big = c;
    big.error.ratio = 10 * c.error.ratio;
    const Setup a = make(c), b = make(big);
    CHECK(a.inst.sets.error == b.inst.sets.error);
    const double lambda = lambda_default(c.n, c.m);
    const auto ra = recover(a.op, a.inst.y, lambda, 0.0, {}, GroundTruth{a.inst.xstar, a.inst.estar});
    const auto rb = recover(b.op, b.inst.y, lambda, 0.0, {}, GroundTruth{b.inst.xstar, b.inst.estar});
    CHECK(ra.metrics->success == rb.metrics->success);
  }
}

TEST_CASE("errors a million times larger than the signal") {
  for (std::uint64_t seed : {1, 2, 3}) {
    ModelConfig c;
    c.seed = seed;
    c.k = 20;
    c.error.ratio = 1e6;
    const Setup st = make(c);
    const auto r = recover(st.op, st.inst.y, lambda_default(c.n, c.m), 0.0, {},
                           GroundTruth{st.inst.xstar, st.inst.estar});
    CHECK(r.converged);
    CHECK(r.metrics->relative_error <= 1e-6);
  }
}

TEST_CASE("rms metrics follow their definitions") {
  ModelConfig c;
  c.n = 256;
  c.m = 128;
  c.k = 4;
  c.s = 8;
  c.sigma = 0.1;
  const Setup st = make(c);
  const RecoveryResult r = recover(st.op, st.inst.y, 1.0, c.sigma, {}, GroundTruth{st.inst.xstar, st.inst.estar});
  CHECK(r.metrics->rms_x == doctest::Approx((r.xhat - st.inst.xstar).norm() / 256.0));
  CHECK(r.metrics->rms_e == doctest::Approx((r.ehat - st.inst.estar).norm() / 256.0));
  CHECK(r.metrics->relative_error ==
        doctest::Approx((r.xhat - st.inst.xstar).norm() / st.inst.xstar.norm()));
}

}  // TEST_SUITE

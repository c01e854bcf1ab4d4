#pragma once

// Tiny noiseless instances (n <= 16, k + s <= 4) checked against exact
// vertex enumeration of the extended l1 program.

#include "oracles.hpp"
#include "rcs/solver.hpp"
#include "rcs/synth.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace tiny {

using namespace rcs;

struct Outcome {
  Index n = 0, m = 0, k = 0, s = 0;
  double solver_objective = 0.0;
  double oracle_objective = 0.0;
  bool converged = false;

  double gap() const { return std::abs(solver_objective - oracle_objective); }
};

// Case i: n = 8 with m in 5..7, or n = 16 with m = 6, alternating. Vertex
// enumeration over C(n + m, m) column sets stays below 1e5 solves.
inline Outcome run_case(int i) {
  std::mt19937_64 rng(1000 + static_cast<std::uint64_t>(i));
  ModelConfig c;
  c.n = i % 2 == 0 ? 8 : 16;
  c.m = c.n == 8 ? std::uniform_int_distribution<Index>(5, 7)(rng) : 6;
  c.k = std::uniform_int_distribution<Index>(0, 4)(rng);
  c.s = std::uniform_int_distribution<Index>(0, 4 - c.k)(rng);
  c.transform = i % 3 == 0 ? TransformKind::dct2 : TransformKind::hadamard;
  c.seed = rng();
  const OrthoTransform a = OrthoTransform::make(c.transform, c.n);
  const ProblemInstance inst = generate(c, a);
  auto op = std::make_shared<SubsampledOperator>(a, RowSubset{inst.sets.omega, c.sampling});
  const double lambda = lambda_default(c.n, c.m);
  // Some optima are not unique (a face, not a vertex), so polishing cannot
  // snap to them; the objective is then only as good as the tolerance.
  SolverOptions opts;
  opts.tol = 1e-11;
  opts.max_iters = 200000;
  const RecoveryResult r = recover(op, inst.y, lambda, 0.0, opts);

  Mat b(c.m, c.n + c.m);
  b << op->materialize(), Mat::Identity(c.m, c.m);
  Vec w(c.n + c.m);
  w << Vec::Ones(c.n), Vec::Constant(c.m, lambda);

  Outcome out;
  out.n = c.n;
  out.m = c.m;
  out.k = c.k;
  out.s = c.s;
  out.converged = r.converged;
  out.solver_objective = r.xhat.lpNorm<1>() + lambda * r.ehat.lpNorm<1>();
  out.oracle_objective = oracle::weighted_l1_vertex_min(b, inst.y, w);
  return out;
}

}  // namespace tiny

#pragma once

#include "rcs/kv_config.hpp"
#include "rcs/linear_operator.hpp"
#include "rcs/transforms.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace rcs {

struct SignalLaw {
  enum class Kind { gaussian, rademacher } kind = Kind::gaussian;
  double std = 1.0;
};

struct ErrorLaw {
  enum class Kind { gaussian, ratio } kind = Kind::ratio;
  double std = 1.0;
  double ratio = 100.0;  // ||e*||_2 = ratio * ||x*||_2
};

/// Parameters of the (k,s)-sparse measurement model.
struct ModelConfig {
  Index n = 1024;
  Index m = 500;
  Index k = 10;
  Index s = 125;
  double gamma = 0.9;
  double sigma = 0.0;  // ||nu||_2, imposed exactly when positive
  SignalLaw signal;
  ErrorLaw error;
  SamplingMode sampling = SamplingMode::uniform;
  TransformKind transform = TransformKind::hadamard;
  std::uint64_t seed = 1;

  double eta() const { return static_cast<double>(m) / static_cast<double>(n); }
  double rho() const { return m == 0 ? 0.0 : static_cast<double>(s) / static_cast<double>(m); }
  double rho0() const { return eta() * (1.0 - rho()); }

  /// Throws ConfigError when k > n, s > m, m > n or gamma/sigma are out of range.
  void validate() const;

  std::map<std::string, std::string> to_kv() const;
  /// Reads recognised keys from `kv` over the defaults; unknown keys are ignored.
  static ModelConfig from_kv(const std::map<std::string, std::string>& kv);
};

/// Omega (observed rows), T (signal support), S (corrupted rows, subset of
/// Omega) and J = Omega \ S, all as sorted global indices. The *_pos vectors
/// give the positions of S and J inside Omega, i.e. inside y.
struct SupportSets {
  std::vector<Index> omega;
  std::vector<Index> signal;
  std::vector<Index> error;
  std::vector<Index> clean;
  std::vector<Index> error_pos;
  std::vector<Index> clean_pos;
};

struct ProblemInstance {
  ModelConfig config;
  SupportSets sets;
  Vec xstar;  // length n
  Vec estar;  // length |Omega|, ordered like omega
  Vec nu;     // length |Omega|
  Vec y;      // A_{Omega .} xstar + estar + nu
};

/// Draws an instance. Deterministic in config.seed.
ProblemInstance generate(const ModelConfig& config, const OrthoTransform& a);
ProblemInstance generate(const ModelConfig& config);

/// sqrt(n / (m sqrt(ln n))), the good-for-all balance weight.
double lambda_default(Index n, Index m);

/// sqrt(n / (gamma ln(n) mu m)).
double lambda_theorem(Index n, Index m, double mu, double gamma);

}  // namespace rcs

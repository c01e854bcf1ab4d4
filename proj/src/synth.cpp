#include "rcs/synth.hpp"

#include "rcs/kv_config.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace rcs {

void ModelConfig::validate() const {
  if (n < 1) throw ConfigError("n must be positive");
  if (m < 1 || m > n) throw ConfigError("need 0 < m <= n");
  if (k < 0 || k > n) throw ConfigError("need 0 <= k <= n");
  if (s < 0 || s > m) throw ConfigError("need 0 <= s <= m");
  if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("gamma must lie in (0, 1)");
  if (!(sigma >= 0.0)) throw ConfigError("sigma must be non-negative");
  if (!(signal.std > 0.0)) throw ConfigError("signal_std must be positive");
  if (!(error.std > 0.0) || !(error.ratio > 0.0)) {
    throw ConfigError("error_std and error_ratio must be positive");
  }
}

std::map<std::string, std::string> ModelConfig::to_kv() const {
  std::map<std::string, std::string> kv;
  kv["n"] = std::to_string(n);
  kv["m"] = std::to_string(m);
  kv["k"] = std::to_string(k);
  kv["s"] = std::to_string(s);
  kv["gamma"] = format_double(gamma);
  kv["sigma"] = format_double(sigma);
  kv["signal_law"] = signal.kind == SignalLaw::Kind::gaussian ? "gaussian" : "rademacher";
  kv["signal_std"] = format_double(signal.std);
  kv["error_law"] = error.kind == ErrorLaw::Kind::gaussian ? "gaussian" : "ratio";
  kv["error_std"] = format_double(error.std);
  kv["error_ratio"] = format_double(error.ratio);
  kv["sampling"] = sampling == SamplingMode::uniform ? "uniform" : "bernoulli";
  kv["transform"] = to_string(transform);
  kv["seed"] = std::to_string(seed);
  return kv;
}

ModelConfig ModelConfig::from_kv(const std::map<std::string, std::string>& kv) {
  ModelConfig c;
  auto get = [&](const char* key) -> const std::string* {
    auto it = kv.find(key);
    return it == kv.end() ? nullptr : &it->second;
  };
  if (auto v = get("n")) c.n = parse_index(*v, "n");
  if (auto v = get("m")) c.m = parse_index(*v, "m");
  if (auto v = get("k")) c.k = parse_index(*v, "k");
  if (auto v = get("s")) c.s = parse_index(*v, "s");
  if (auto v = get("gamma")) c.gamma = parse_double(*v, "gamma");
  if (auto v = get("sigma")) c.sigma = parse_double(*v, "sigma");
  if (auto v = get("signal_law")) {
    if (*v == "gaussian") {
      c.signal.kind = SignalLaw::Kind::gaussian;
    } else if (*v == "rademacher") {
      c.signal.kind = SignalLaw::Kind::rademacher;
    } else {
      throw ConfigError("signal_law must be gaussian or rademacher");
    }
  }
  if (auto v = get("signal_std")) c.signal.std = parse_double(*v, "signal_std");
  if (auto v = get("error_law")) {
    if (*v == "gaussian") {
      c.error.kind = ErrorLaw::Kind::gaussian;
    } else if (*v == "ratio") {
      c.error.kind = ErrorLaw::Kind::ratio;
    } else {
      throw ConfigError("error_law must be gaussian or ratio");
    }
  }
  if (auto v = get("error_std")) c.error.std = parse_double(*v, "error_std");
  if (auto v = get("error_ratio")) c.error.ratio = parse_double(*v, "error_ratio");
  if (auto v = get("sampling")) {
    if (*v == "uniform") {
      c.sampling = SamplingMode::uniform;
    } else if (*v == "bernoulli") {
      c.sampling = SamplingMode::bernoulli;
    } else {
      throw ConfigError("sampling must be uniform or bernoulli");
    }
  }
  if (auto v = get("transform")) {
    try {
      c.transform = parse_transform_kind(*v);
    } catch (const Error& e) {
      throw ConfigError(e.what());
    }
  }
  if (auto v = get("seed")) c.seed = parse_u64(*v, "seed");
  return c;
}

namespace {

double signed_magnitude(std::mt19937_64& rng, double std) {
  std::normal_distribution<double> normal(0.0, std);
  std::bernoulli_distribution coin(0.5);
  const double mag = std::abs(normal(rng));
  return coin(rng) ? mag : -mag;
}

}  // namespace

ProblemInstance generate(const ModelConfig& config, const OrthoTransform& a) {
  config.validate();
  if (a.size() != config.n) throw DimensionError("generate: transform size differs from n");

  ProblemInstance inst;
  inst.config = config;
  std::mt19937_64 rng(config.seed);
  std::bernoulli_distribution coin(0.5);

  const SamplingSpec spec = config.sampling == SamplingMode::uniform
                                ? SamplingSpec::uniform(config.m)
                                : SamplingSpec::bernoulli(config.eta());
  RowSubset omega = subsample_rows(config.n, spec, rng());
  SupportSets& sets = inst.sets;
  sets.omega = omega.indices;
  const Index m_obs = static_cast<Index>(sets.omega.size());

  std::vector<Index> all(static_cast<std::size_t>(config.n));
  std::iota(all.begin(), all.end(), Index{0});
  sets.signal = sample_subset(all, config.k, rng);

  // S lives inside Omega; sample positions within y.
  std::vector<Index> positions(static_cast<std::size_t>(m_obs));
  std::iota(positions.begin(), positions.end(), Index{0});
  if (config.sampling == SamplingMode::uniform) {
    sets.error_pos = sample_subset(positions, std::min(config.s, m_obs), rng);
  } else {
    std::bernoulli_distribution in_s(config.rho());
    for (Index p : positions) {
      if (in_s(rng)) sets.error_pos.push_back(p);
    }
  }
  std::size_t cursor = 0;
  for (Index p : positions) {
    if (cursor < sets.error_pos.size() && sets.error_pos[cursor] == p) {
      sets.error.push_back(sets.omega[static_cast<std::size_t>(p)]);
      ++cursor;
    } else {
      sets.clean_pos.push_back(p);
      sets.clean.push_back(sets.omega[static_cast<std::size_t>(p)]);
    }
  }

  inst.xstar = Vec::Zero(config.n);
  for (Index t : sets.signal) {
    inst.xstar[t] = config.signal.kind == SignalLaw::Kind::gaussian
                        ? signed_magnitude(rng, config.signal.std)
                        : (coin(rng) ? config.signal.std : -config.signal.std);
  }

  inst.estar = Vec::Zero(m_obs);
  const double err_std = config.error.kind == ErrorLaw::Kind::gaussian ? config.error.std : 1.0;
  for (Index p : sets.error_pos) inst.estar[p] = signed_magnitude(rng, err_std);
  if (config.error.kind == ErrorLaw::Kind::ratio) {
    const double xn = inst.xstar.norm();
    const double en = inst.estar.norm();
    // With x* = 0 there is nothing to scale against; keep unit-std magnitudes.
    if (xn > 0.0 && en > 0.0) inst.estar *= config.error.ratio * xn / en;
  }

  inst.nu = Vec::Zero(m_obs);
  if (config.sigma > 0.0 && m_obs > 0) {
    std::normal_distribution<double> normal;
    for (Index i = 0; i < m_obs; ++i) inst.nu[i] = normal(rng);
    inst.nu *= config.sigma / inst.nu.norm();
  }

  SubsampledOperator sampled(a, omega);
  inst.y = sampled.apply(inst.xstar) + inst.estar + inst.nu;
  return inst;
}

ProblemInstance generate(const ModelConfig& config) {
  return generate(config, OrthoTransform::make(config.transform, config.n));
}

double lambda_default(Index n, Index m) {
  if (n < 2) throw Error("lambda_default: need n >= 2");
  if (m < 1 || m > n) throw Error("lambda_default: need 1 <= m <= n");
  const double nd = static_cast<double>(n);
  return std::sqrt(nd / (static_cast<double>(m) * std::sqrt(std::log(nd))));
}

double lambda_theorem(Index n, Index m, double mu, double gamma) {
  if (!(gamma > 0.0 && gamma < 1.0)) throw Error("lambda_theorem: gamma must lie in (0, 1)");
  if (!(mu >= 1.0)) throw Error("lambda_theorem: mu must be at least 1");
  if (n < 2 || m < 1) throw Error("lambda_theorem: need n >= 2 and m >= 1");
  const double nd = static_cast<double>(n);
  return std::sqrt(nd / (gamma * std::log(nd) * mu * static_cast<double>(m)));
}

}  // namespace rcs

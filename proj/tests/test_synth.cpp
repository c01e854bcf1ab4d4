#include "rcs/kv_config.hpp"
#include "rcs/synth.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

using namespace rcs;

TEST_SUITE("synth") {

TEST_CASE("k = s = sigma = 0 gives y = 0") {
  ModelConfig c;
  c.k = 0;
  c.s = 0;
  const ProblemInstance inst = generate(c);
  CHECK(inst.xstar.norm() == 0.0);
  CHECK(inst.y.norm() == 0.0);
}

TEST_CASE("supports, sizes and the construction identity") {
  ModelConfig c;  // n=1024, m=500, s=125
  c.sigma = 0.3;
  const OrthoTransform a = OrthoTransform::make(c.transform, c.n);
  const ProblemInstance inst = generate(c, a);
  const SupportSets& s = inst.sets;
  CHECK(s.omega.size() == 500);
  CHECK(s.signal.size() == 10);
  CHECK(s.error.size() == 125);
  CHECK(s.clean.size() == 375);
  CHECK(std::includes(s.omega.begin(), s.omega.end(), s.error.begin(), s.error.end()));
  CHECK(std::is_sorted(s.signal.begin(), s.signal.end()));
  for (std::size_t i = 0; i < s.error_pos.size(); ++i) {
    CHECK(s.omega[static_cast<std::size_t>(s.error_pos[i])] == s.error[i]);
  }
  Index nnz_x = 0, nnz_e = 0;
  for (Index i = 0; i < inst.xstar.size(); ++i) nnz_x += inst.xstar[i] != 0.0;
  for (Index i = 0; i < inst.estar.size(); ++i) nnz_e += inst.estar[i] != 0.0;
  CHECK(nnz_x == 10);
  CHECK(nnz_e == 125);

  const SubsampledOperator op(a, RowSubset{s.omega, SamplingMode::uniform});
  const Vec resid = inst.y - op.apply(inst.xstar) - inst.estar - inst.nu;
  CHECK(resid.cwiseAbs().maxCoeff() <= 1e-12);
  CHECK(inst.nu.norm() == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(inst.estar.norm() >= 100.0 * inst.xstar.norm() * (1 - 1e-12));
}

TEST_CASE("same seed reproduces, different seed differs") {
  ModelConfig c;
  c.seed = 77;
  const ProblemInstance a = generate(c), b = generate(c);
  CHECK(a.sets.signal == b.sets.signal);
  CHECK(a.sets.error == b.sets.error);
  CHECK((a.y - b.y).norm() == 0.0);
  c.seed = 78;
  CHECK(generate(c).sets.signal != a.sets.signal);
}

TEST_CASE("signs of x* on T are balanced") {
  ModelConfig c;
  c.n = 256;
  c.m = 64;
  c.s = 8;
  c.k = 10;
  const OrthoTransform a = OrthoTransform::make(c.transform, c.n);
  int plus = 0, total = 0;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    c.seed = seed;
    const ProblemInstance inst = generate(c, a);
    for (Index t : inst.sets.signal) {
      plus += inst.xstar[t] > 0.0;
      ++total;
    }
  }
  const double freq = static_cast<double>(plus) / total;
  CHECK(freq >= 0.45);
  CHECK(freq <= 0.55);
}

TEST_CASE("rademacher signal and gaussian error laws") {
  ModelConfig c;
  c.signal.kind = SignalLaw::Kind::rademacher;
  c.signal.std = 2.0;
  c.error.kind = ErrorLaw::Kind::gaussian;
  const ProblemInstance inst = generate(c);
  for (Index t : inst.sets.signal) CHECK(std::abs(inst.xstar[t]) == 2.0);
}

TEST_CASE("bernoulli sampling draws Omega at rate m/n") {
  ModelConfig c;
  c.sampling = SamplingMode::bernoulli;
  c.n = 4096;
  c.m = 1024;
  c.s = 100;
  const ProblemInstance inst = generate(c);
  const double mean = 1024.0, sd = std::sqrt(4096 * 0.25 * 0.75);
  CHECK(std::abs(static_cast<double>(inst.sets.omega.size()) - mean) < 5 * sd);
  CHECK(inst.y.size() == static_cast<Index>(inst.sets.omega.size()));
}

TEST_CASE("invalid configs") {
  ModelConfig c;
  c.k = 2000;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = ModelConfig{};
  c.s = 501;
  CHECK_THROWS_AS(generate(c), ConfigError);
  c = ModelConfig{};
  c.gamma = 1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = ModelConfig{};
  c.sigma = -1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("derived ratios") {
  ModelConfig c;
  CHECK(c.eta() == doctest::Approx(500.0 / 1024.0));
  CHECK(c.rho() == doctest::Approx(0.25));
  CHECK(c.rho0() == doctest::Approx(500.0 / 1024.0 * 0.75));
}

TEST_CASE("lambda formulas") {
  CHECK(lambda_default(3, 3) == doctest::Approx(std::sqrt(1.0 / std::sqrt(std::log(3.0)))).epsilon(1e-12));
  CHECK(lambda_default(3, 3) == doctest::Approx(0.9768).epsilon(1e-4));
  CHECK(lambda_default(1024, 500) == doctest::Approx(0.8820).epsilon(1e-4));
  CHECK(lambda_default(1024, 400) > lambda_default(1024, 500));
  CHECK_THROWS(lambda_default(1024, 0));

  // 0.572969 by the formula; the quoted 0.5726 is rounded
  CHECK(std::abs(lambda_theorem(1024, 500, 1.0, 0.9) - 0.5726) < 1e-3);
  CHECK(lambda_theorem(1024, 500, 2.0, 0.9) ==
        doctest::Approx(lambda_theorem(1024, 500, 1.0, 0.9) / std::sqrt(2.0)).epsilon(1e-12));
  const double plain = std::sqrt(1024.0 / (500.0 * std::log(1024.0)));
  CHECK(lambda_theorem(1024, 500, 1.0, 0.9) == doctest::Approx(plain / std::sqrt(0.9)).epsilon(1e-12));
  CHECK_THROWS(lambda_theorem(1024, 500, 1.0, 1.0));
  CHECK_THROWS(lambda_theorem(1024, 500, 1.0, 0.0));
}

TEST_CASE("model config key-value round trip") {
  ModelConfig c;
  c.n = 2048;
  c.sigma = 0.25;
  c.signal.kind = SignalLaw::Kind::rademacher;
  c.transform = TransformKind::dct2;
  c.seed = 123456789012345ULL;
  const ModelConfig back = ModelConfig::from_kv(c.to_kv());
  CHECK(back.to_kv() == c.to_kv());
  CHECK_THROWS_AS(ModelConfig::from_kv({{"signal_law", "cauchy"}}), ConfigError);
  CHECK_THROWS_AS(ModelConfig::from_kv({{"n", "abc"}}), ConfigError);
}

}  // TEST_SUITE

TEST_SUITE("cli") {

TEST_CASE("kv parser") {
  std::istringstream in("# comment\n n = 10 \n\nlist = 1, 2,3  # trailing\nn = 12\n");
  const KeyValues kv = parse_kv(in);
  CHECK(kv.at("n") == "12");
  CHECK(parse_index_list(kv.at("list"), "list") == std::vector<Index>{1, 2, 3});
  std::istringstream bad("no equals sign\n");
  CHECK_THROWS_AS(parse_kv(bad), ConfigError);
  CHECK_THROWS_AS(parse_double("1.5x", "v"), ConfigError);
  CHECK_THROWS_AS(parse_index("-3", "v"), ConfigError);
  for (double v : {0.1, 1.0 / 3.0, 1e-300, 12345.678}) CHECK(parse_double(format_double(v), "v") == v);
}

}  // TEST_SUITE

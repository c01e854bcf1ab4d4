#include "rcs/experiment.hpp"

#include "rcs/image_io.hpp"
#include "rcs/svg_plot.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

namespace rcs {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

const std::set<std::string>& model_keys() {
  static const std::set<std::string> keys = {
      "n", "m", "k", "s", "gamma", "sigma", "signal_law", "signal_std", "error_law",
      "error_std", "error_ratio", "sampling", "transform"};
  return keys;
}

const std::set<std::string>& experiment_keys() {
  static const std::set<std::string> keys = {
      "experiment", "seed", "n_grid", "k_grid", "s_grid", "fraction_grid", "sigma_grid", "s_fraction",
      "trials", "jobs", "out", "lambda", "solver_max_iters", "solver_tol", "solver_polish",
      "image_size", "lines", "mask_seed", "corruption", "corruption_factor", "noise_std",
      "zero_threshold", "tv_max_iters", "tv_tol", "tv_inner_iters", "lemma2_trials"};
  return keys;
}

std::vector<Index> index_range(Index from, Index to, Index step) {
  std::vector<Index> out;
  for (Index v = from; v <= to; v += step) out.push_back(v);
  return out;
}

template <class T>
std::string join(const std::vector<T>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ",";
    if constexpr (std::is_floating_point_v<T>) {
      out += format_double(values[i]);
    } else {
      out += std::to_string(values[i]);
    }
  }
  return out;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v) { return std::isnan(v) ? "nan" : format_double(v); }

// Runs fn(0..count-1) on up to `jobs` threads. The first exception is
// rethrown after every worker has stopped.
void parallel_for(std::size_t count, int jobs, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(std::max(jobs, 1)), count);
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count && !failed; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
          failed = true;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

struct GridPoint {
  std::string series;
  double x = 0.0;
  ModelConfig model;
};

TrialRecord run_trial(const ExperimentConfig& cfg, const GridPoint& gp, std::size_t point,
                      std::size_t trial, bool with_oracle) {
  const auto t0 = std::chrono::steady_clock::now();
  TrialRecord rec;
  rec.point = point;
  rec.trial = trial;
  rec.series = gp.series;
  rec.x = gp.x;
  rec.config = gp.model;
  rec.config.seed = trial_seed(cfg.seed_base, point, trial);
  rec.lambda = lambda_for(cfg, rec.config);

  const OrthoTransform a = OrthoTransform::make(rec.config.transform, rec.config.n);
  const ProblemInstance inst = generate(rec.config, a);
  auto op = std::make_shared<SubsampledOperator>(a, RowSubset{inst.sets.omega, rec.config.sampling});
  SolverOptions opts = cfg.solver;
  const RecoveryResult res =
      recover(op, inst.y, rec.lambda, rec.config.sigma, opts, GroundTruth{inst.xstar, inst.estar});
  rec.success = res.metrics->success;
  rec.converged = res.converged;
  rec.relative_error = res.metrics->relative_error;
  rec.rms_x = res.metrics->rms_x;
  rec.rms_e = res.metrics->rms_e;
  rec.iterations = res.iterations;
  rec.oracle_rms_x = kNaN;
  rec.oracle_rms_e = kNaN;
  if (with_oracle && rec.config.k > 0) {
    try {
      const OracleEstimate orc = oracle_estimate(a, inst.sets, inst.y);
      const double n = static_cast<double>(rec.config.n);
      const double xerr = (orc.x - inst.xstar).norm();
      rec.oracle_rms_x = xerr / n;
      rec.oracle_rms_e = (orc.e - inst.estar).norm() / n;
      rec.oracle_within_bound = xerr <= rec.config.sigma * std::sqrt(6.0 / rec.config.rho0());
    } catch (const Error&) {
      // singular A_JT: leave the oracle columns NaN
    }
  }
  rec.wall_time = seconds_since(t0);
  return rec;
}

std::vector<TrialRecord> run_grid(const ExperimentConfig& cfg, const std::vector<GridPoint>& grid,
                                  bool with_oracle) {
  const std::size_t per = static_cast<std::size_t>(cfg.trials);
  std::vector<TrialRecord> records(grid.size() * per);
  parallel_for(records.size(), cfg.jobs, [&](std::size_t i) {
    records[i] = run_trial(cfg, grid[i / per], i / per, i % per, with_oracle);
  });
  return records;
}

// Success fraction per grid point, in grid order.
std::vector<SummaryPoint> success_summary(const std::vector<GridPoint>& grid,
                                          const std::vector<TrialRecord>& records) {
  std::vector<SummaryPoint> out;
  for (std::size_t p = 0; p < grid.size(); ++p) {
    SummaryPoint sp{grid[p].series, grid[p].x, 0.0, 0};
    for (const TrialRecord& r : records) {
      if (r.point != p) continue;
      ++sp.count;
      sp.y += r.success ? 1.0 : 0.0;
    }
    if (sp.count) sp.y /= sp.count;
    out.push_back(sp);
  }
  return out;
}

ExperimentResult rms_result(ExperimentKind kind, const std::vector<GridPoint>& grid,
                            std::vector<TrialRecord> records) {
  ExperimentResult res;
  res.kind = kind;
  const char* names[4] = {"l1_x", "oracle_x", "l1_e", "oracle_e"};
  std::vector<SummaryPoint> rows[4];
  std::vector<double> xs, l1x;
  double worst_ratio = 0.0;
  int within = 0, with_oracle = 0;
  for (std::size_t p = 0; p < grid.size(); ++p) {
    double sum[4] = {0, 0, 0, 0};
    int cnt[4] = {0, 0, 0, 0};
    for (const TrialRecord& r : records) {
      if (r.point != p) continue;
      const double v[4] = {r.rms_x, r.oracle_rms_x, r.rms_e, r.oracle_rms_e};
      for (int j = 0; j < 4; ++j) {
        if (std::isnan(v[j])) continue;
        sum[j] += v[j];
        ++cnt[j];
      }
      if (!std::isnan(r.oracle_rms_x)) {
        ++with_oracle;
        within += r.oracle_within_bound ? 1 : 0;
      }
    }
    for (int j = 0; j < 4; ++j) {
      rows[j].push_back({names[j], grid[p].x, cnt[j] ? sum[j] / cnt[j] : kNaN, cnt[j]});
    }
    xs.push_back(grid[p].x);
    l1x.push_back(rows[0].back().y);
    const double ratio = rows[0].back().y / rows[1].back().y;
    if (std::isfinite(ratio)) worst_ratio = std::max(worst_ratio, ratio);
  }
  for (auto& r : rows) res.summary.insert(res.summary.end(), r.begin(), r.end());
  if (xs.size() >= 2) {
    const auto fit = linear_fit(xs, l1x);
    res.metrics["fit_slope"] = fit[0];
    res.metrics["fit_intercept"] = fit[1];
    res.metrics["fit_r2"] = fit[2];
  }
  res.metrics["max_ratio_x"] = worst_ratio;
  res.metrics["oracle_bound_fraction"] = with_oracle ? static_cast<double>(within) / with_oracle : kNaN;
  res.trials = std::move(records);
  return res;
}

ModelConfig rms_model() {
  ModelConfig m;
  m.n = 1024;
  m.m = 500;
  m.k = 20;
  m.s = 125;
  m.signal.kind = SignalLaw::Kind::gaussian;
  m.signal.std = std::sqrt(10.0);
  m.error.kind = ErrorLaw::Kind::gaussian;
  m.error.std = std::sqrt(10.0);
  return m;
}

// Moves the zero frequency to the image center for display.
Image centered_mask(const SamplingMask& mask) {
  Image img(mask.height, mask.width);
  for (Index idx : mask.indices) {
    const Index r = (idx / mask.width + mask.height / 2) % mask.height;
    const Index c = (idx % mask.width + mask.width / 2) % mask.width;
    img(r, c) = 1.0;
  }
  return img;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("write failed: " + path.string());
}

}  // namespace

std::string to_string(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::recover: return "recover";
    case ExperimentKind::phase_k: return "phase-k";
    case ExperimentKind::phase_fraction: return "phase-fraction";
    case ExperimentKind::rms_sigma: return "rms-sigma";
    case ExperimentKind::rms_s: return "rms-s";
    case ExperimentKind::phantom: return "phantom";
    case ExperimentKind::certify: return "certify";
  }
  return "?";
}

ExperimentKind parse_experiment_kind(const std::string& name) {
  for (auto k : {ExperimentKind::recover, ExperimentKind::phase_k, ExperimentKind::phase_fraction,
                 ExperimentKind::rms_sigma, ExperimentKind::rms_s, ExperimentKind::phantom,
                 ExperimentKind::certify}) {
    if (to_string(k) == name) return k;
  }
  throw ConfigError("unknown experiment: " + name);
}

std::uint64_t trial_seed(std::uint64_t seed_base, std::size_t point, std::size_t trial) {
  // splitmix64 finalizer over the packed pair
  std::uint64_t z = (static_cast<std::uint64_t>(point) << 32) ^ static_cast<std::uint64_t>(trial);
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  z ^= z >> 31;
  return seed_base + z;
}

ExperimentConfig ExperimentConfig::defaults(ExperimentKind kind) {
  ExperimentConfig c;
  c.kind = kind;
  switch (kind) {
    case ExperimentKind::recover:
      c.trials = 1;
      break;
    case ExperimentKind::phase_k:
      c.model.m = 500;
      c.n_grid = {1024, 2048, 4096, 8192};
      c.k_grid = index_range(1, 59, 2);
      break;
    case ExperimentKind::phase_fraction:
      c.model.n = 1024;
      c.model.m = 500;
      c.k_grid = {25, 30, 35};
      for (int i = 0; i <= 10; ++i) c.fraction_grid.push_back(0.05 * i);
      break;
    case ExperimentKind::rms_sigma:
      c.model = rms_model();
      c.sigma_grid = {0.1, 0.25, 0.5, 0.75, 1.0};
      break;
    case ExperimentKind::rms_s:
      c.model = rms_model();
      c.model.sigma = 1.0;
      c.s_grid = index_range(0, 250, 25);
      break;
    case ExperimentKind::phantom:
      c.trials = 1;
      break;
    case ExperimentKind::certify:
      c.model.n = 512;
      c.model.m = 256;
      c.k_grid = {5};
      c.s_grid = {25};
      c.trials = 50;
      c.lambda_rule = LambdaRule::theorem;
      break;
  }
  return c;
}

ExperimentConfig ExperimentConfig::from_kv(ExperimentKind kind, const KeyValues& kv) {
  ExperimentConfig c = defaults(kind);
  KeyValues model_kv = c.model.to_kv();
  for (const auto& [key, value] : kv) {
    if (model_keys().count(key)) {
      model_kv[key] = value;
    } else if (!experiment_keys().count(key)) {
      throw ConfigError("unknown config key: " + key);
    }
  }
  c.model = ModelConfig::from_kv(model_kv);

  auto get = [&](const char* key) -> const std::string* {
    auto it = kv.find(key);
    return it == kv.end() ? nullptr : &it->second;
  };
  auto get_int = [&](const char* key, int& out) {
    if (auto v = get(key)) {
      const Index i = parse_index(*v, key);
      if (i > std::numeric_limits<int>::max()) throw ConfigError(std::string(key) + " too large");
      out = static_cast<int>(i);
    }
  };
  if (auto v = get("seed")) c.seed_base = parse_u64(*v, "seed");
  if (auto v = get("n_grid")) c.n_grid = parse_index_list(*v, "n_grid");
  if (auto v = get("k_grid")) c.k_grid = parse_index_list(*v, "k_grid");
  if (auto v = get("s_grid")) c.s_grid = parse_index_list(*v, "s_grid");
  if (auto v = get("fraction_grid")) c.fraction_grid = parse_double_list(*v, "fraction_grid");
  if (auto v = get("sigma_grid")) c.sigma_grid = parse_double_list(*v, "sigma_grid");
  if (auto v = get("s_fraction")) c.s_fraction = parse_double(*v, "s_fraction");
  get_int("trials", c.trials);
  get_int("jobs", c.jobs);
  if (auto v = get("out")) c.out_dir = *v;
  if (auto v = get("lambda")) {
    if (*v == "default") {
      c.lambda_rule = LambdaRule::good_for_all;
    } else if (*v == "theorem") {
      c.lambda_rule = LambdaRule::theorem;
    } else {
      c.lambda_rule = LambdaRule::fixed;
      c.lambda = parse_double(*v, "lambda");
    }
  }
  get_int("solver_max_iters", c.solver.max_iters);
  if (auto v = get("solver_tol")) c.solver.tol = parse_double(*v, "solver_tol");
  if (auto v = get("solver_polish")) {
    if (*v != "true" && *v != "false") throw ConfigError("solver_polish must be true or false");
    c.solver.polish = *v == "true";
  }
  if (auto v = get("image_size")) c.phantom.size = parse_index(*v, "image_size");
  if (auto v = get("lines")) c.phantom.lines = parse_index(*v, "lines");
  if (auto v = get("mask_seed")) c.phantom.mask_seed = parse_u64(*v, "mask_seed");
  if (auto v = get("corruption")) c.phantom.corruption = parse_double(*v, "corruption");
  if (auto v = get("corruption_factor")) c.phantom.corruption_factor = parse_double(*v, "corruption_factor");
  if (auto v = get("noise_std")) c.phantom.noise_std = parse_double(*v, "noise_std");
  if (auto v = get("zero_threshold")) c.phantom.zero_threshold = parse_double(*v, "zero_threshold");
  get_int("tv_max_iters", c.phantom.tv.max_iters);
  if (auto v = get("tv_tol")) c.phantom.tv.tol = parse_double(*v, "tv_tol");
  get_int("tv_inner_iters", c.phantom.tv.inner_iters);
  get_int("lemma2_trials", c.lemma2_trials);
  return c;
}

KeyValues ExperimentConfig::to_kv() const {
  KeyValues kv = model.to_kv();
  kv.erase("seed");
  kv["experiment"] = to_string(kind);
  kv["seed"] = std::to_string(seed_base);
  if (!n_grid.empty()) kv["n_grid"] = join(n_grid);
  if (!k_grid.empty()) kv["k_grid"] = join(k_grid);
  if (!s_grid.empty()) kv["s_grid"] = join(s_grid);
  if (!fraction_grid.empty()) kv["fraction_grid"] = join(fraction_grid);
  if (!sigma_grid.empty()) kv["sigma_grid"] = join(sigma_grid);
  kv["s_fraction"] = format_double(s_fraction);
  kv["trials"] = std::to_string(trials);
  kv["jobs"] = std::to_string(jobs);
  kv["out"] = out_dir;
  switch (lambda_rule) {
    case LambdaRule::fixed: kv["lambda"] = format_double(lambda); break;
    case LambdaRule::good_for_all: kv["lambda"] = "default"; break;
    case LambdaRule::theorem: kv["lambda"] = "theorem"; break;
  }
  kv["solver_max_iters"] = std::to_string(solver.max_iters);
  kv["solver_tol"] = format_double(solver.tol);
  kv["solver_polish"] = solver.polish ? "true" : "false";
  if (kind == ExperimentKind::phantom) {
    kv["image_size"] = std::to_string(phantom.size);
    kv["lines"] = std::to_string(phantom.lines);
    kv["mask_seed"] = std::to_string(phantom.mask_seed);
    kv["corruption"] = format_double(phantom.corruption);
    kv["corruption_factor"] = format_double(phantom.corruption_factor);
    kv["noise_std"] = format_double(phantom.noise_std);
    kv["zero_threshold"] = format_double(phantom.zero_threshold);
    kv["tv_max_iters"] = std::to_string(phantom.tv.max_iters);
    kv["tv_tol"] = format_double(phantom.tv.tol);
    kv["tv_inner_iters"] = std::to_string(phantom.tv.inner_iters);
  }
  if (kind == ExperimentKind::certify) kv["lemma2_trials"] = std::to_string(lemma2_trials);
  return kv;
}

void ExperimentConfig::validate() const {
  if (trials < 1) throw ConfigError("trials must be >= 1");
  if (jobs < 1) throw ConfigError("jobs must be >= 1");
  if (lambda_rule == LambdaRule::fixed && !(lambda > 0.0)) throw ConfigError("lambda must be positive");
  auto nonempty = [](bool empty, const char* name) {
    if (empty) throw ConfigError(std::string(name) + " must not be empty");
  };
  ModelConfig probe = model;
  switch (kind) {
    case ExperimentKind::recover:
      model.validate();
      break;
    case ExperimentKind::phase_k:
      nonempty(n_grid.empty(), "n_grid");
      nonempty(k_grid.empty(), "k_grid");
      if (!(s_fraction >= 0.0 && s_fraction <= 1.0)) throw ConfigError("s_fraction must be in [0, 1]");
      for (Index n : n_grid) {
        for (Index k : k_grid) {
          probe.n = n;
          probe.k = k;
          probe.s = static_cast<Index>(std::lround(s_fraction * static_cast<double>(probe.m)));
          probe.validate();
        }
      }
      break;
    case ExperimentKind::phase_fraction:
      nonempty(k_grid.empty(), "k_grid");
      nonempty(fraction_grid.empty(), "fraction_grid");
      for (Index k : k_grid) {
        for (double f : fraction_grid) {
          if (!(f >= 0.0 && f <= 1.0)) throw ConfigError("fraction_grid entries must be in [0, 1]");
          probe.k = k;
          probe.s = static_cast<Index>(std::lround(f * static_cast<double>(probe.m)));
          probe.validate();
        }
      }
      break;
    case ExperimentKind::rms_sigma:
      nonempty(sigma_grid.empty(), "sigma_grid");
      for (double s : sigma_grid) {
        probe.sigma = s;
        probe.validate();
      }
      break;
    case ExperimentKind::rms_s:
      nonempty(s_grid.empty(), "s_grid");
      for (Index s : s_grid) {
        probe.s = s;
        probe.validate();
      }
      break;
    case ExperimentKind::phantom:
      if (phantom.size < 32) throw ConfigError("image_size must be >= 32");
      if (phantom.lines < 1) throw ConfigError("lines must be >= 1");
      if (!(phantom.corruption >= 0.0 && phantom.corruption < 1.0)) {
        throw ConfigError("corruption must be in [0, 1)");
      }
      if (!(phantom.corruption_factor >= 0.0)) throw ConfigError("corruption_factor must be >= 0");
      if (!(phantom.noise_std >= 0.0)) throw ConfigError("noise_std must be >= 0");
      if (phantom.tv.max_iters < 1 || phantom.tv.inner_iters < 1) {
        throw ConfigError("tv_max_iters and tv_inner_iters must be >= 1");
      }
      break;
    case ExperimentKind::certify:
      nonempty(k_grid.empty(), "k_grid");
      nonempty(s_grid.empty(), "s_grid");
      if (lemma2_trials < 0) throw ConfigError("lemma2_trials must be >= 0");
      for (Index k : k_grid) {
        if (k < 1) throw ConfigError("certify needs k >= 1");
        for (Index s : s_grid) {
          probe.k = k;
          probe.s = s;
          probe.validate();
        }
      }
      break;
  }
}

double lambda_for(const ExperimentConfig& cfg, const ModelConfig& model) {
  switch (cfg.lambda_rule) {
    case LambdaRule::fixed: return cfg.lambda;
    case LambdaRule::good_for_all: return lambda_default(model.n, model.m);
    case LambdaRule::theorem: {
      const double mu = coherence(OrthoTransform::make(model.transform, model.n));
      return lambda_theorem(model.n, model.m, mu, model.gamma);
    }
  }
  return 0.0;
}

std::string trial_csv_header() {
  return "point,trial,series,x,n,m,k,s,gamma,sigma,signal_law,signal_std,error_law,error_std,"
         "error_ratio,sampling,transform,seed,lambda,success,converged,relative_error,rms_x,rms_e,"
         "oracle_rms_x,oracle_rms_e,oracle_within_bound,iterations,wall_time";
}

std::string trial_csv_row(const TrialRecord& r) {
  const KeyValues m = r.config.to_kv();
  std::ostringstream os;
  os << r.point << ',' << r.trial << ',' << r.series << ',' << fmt(r.x) << ',' << m.at("n") << ','
     << m.at("m") << ',' << m.at("k") << ',' << m.at("s") << ',' << m.at("gamma") << ','
     << m.at("sigma") << ',' << m.at("signal_law") << ',' << m.at("signal_std") << ','
     << m.at("error_law") << ',' << m.at("error_std") << ',' << m.at("error_ratio") << ','
     << m.at("sampling") << ',' << m.at("transform") << ',' << m.at("seed") << ',' << fmt(r.lambda)
     << ',' << (r.success ? 1 : 0) << ',' << (r.converged ? 1 : 0) << ',' << fmt(r.relative_error)
     << ',' << fmt(r.rms_x) << ',' << fmt(r.rms_e) << ',' << fmt(r.oracle_rms_x) << ','
     << fmt(r.oracle_rms_e) << ',' << (r.oracle_within_bound ? 1 : 0) << ',' << r.iterations << ','
     << fmt(r.wall_time);
  return os.str();
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  switch (cfg.kind) {
    case ExperimentKind::recover: return run_recover(cfg);
    case ExperimentKind::phase_k: return run_phase_k(cfg);
    case ExperimentKind::phase_fraction: return run_phase_fraction(cfg);
    case ExperimentKind::rms_sigma: return run_rms_sigma(cfg);
    case ExperimentKind::rms_s: return run_rms_s(cfg);
    case ExperimentKind::phantom: return run_phantom(cfg);
    case ExperimentKind::certify: return run_certify(cfg);
  }
  throw Error("unreachable");
}

ExperimentResult run_recover(const ExperimentConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  ExperimentResult res;
  res.kind = ExperimentKind::recover;
  TrialRecord rec;
  rec.series = "recover";
  rec.config = cfg.model;
  rec.config.seed = cfg.seed_base;
  rec.lambda = lambda_for(cfg, rec.config);
  const OrthoTransform a = OrthoTransform::make(rec.config.transform, rec.config.n);
  const ProblemInstance inst = generate(rec.config, a);
  auto op = std::make_shared<SubsampledOperator>(a, RowSubset{inst.sets.omega, rec.config.sampling});
  const RecoveryResult r = recover(op, inst.y, rec.lambda, rec.config.sigma, cfg.solver,
                                   GroundTruth{inst.xstar, inst.estar});
  rec.success = r.metrics->success;
  rec.converged = r.converged;
  rec.relative_error = r.metrics->relative_error;
  rec.rms_x = r.metrics->rms_x;
  rec.rms_e = r.metrics->rms_e;
  rec.iterations = r.iterations;
  rec.oracle_rms_x = kNaN;
  rec.oracle_rms_e = kNaN;
  rec.wall_time = seconds_since(t0);
  res.trials.push_back(rec);
  res.summary.push_back({"relative_error", 0.0, rec.relative_error, 1});
  res.metrics["relative_error"] = rec.relative_error;
  res.metrics["objective"] = r.objective;
  res.xhat = r.xhat;
  res.xstar = inst.xstar;
  return res;
}

ExperimentResult run_phase_k(const ExperimentConfig& cfg) {
  std::vector<GridPoint> grid;
  for (Index n : cfg.n_grid) {
    for (Index k : cfg.k_grid) {
      GridPoint gp{"n=" + std::to_string(n), static_cast<double>(k), cfg.model};
      gp.model.n = n;
      gp.model.k = k;
      gp.model.s = static_cast<Index>(std::lround(cfg.s_fraction * static_cast<double>(cfg.model.m)));
      grid.push_back(gp);
    }
  }
  ExperimentResult res;
  res.kind = ExperimentKind::phase_k;
  res.trials = run_grid(cfg, grid, false);
  res.summary = success_summary(grid, res.trials);
  return res;
}

ExperimentResult run_phase_fraction(const ExperimentConfig& cfg) {
  std::vector<GridPoint> grid;
  for (Index k : cfg.k_grid) {
    for (double f : cfg.fraction_grid) {
      GridPoint gp{"k=" + std::to_string(k), f, cfg.model};
      gp.model.k = k;
      gp.model.s = static_cast<Index>(std::lround(f * static_cast<double>(cfg.model.m)));
      grid.push_back(gp);
    }
  }
  ExperimentResult res;
  res.kind = ExperimentKind::phase_fraction;
  res.trials = run_grid(cfg, grid, false);
  res.summary = success_summary(grid, res.trials);
  return res;
}

ExperimentResult run_rms_sigma(const ExperimentConfig& cfg) {
  std::vector<GridPoint> grid;
  for (double sigma : cfg.sigma_grid) {
    GridPoint gp{"sigma", sigma, cfg.model};
    gp.model.sigma = sigma;
    grid.push_back(gp);
  }
  return rms_result(ExperimentKind::rms_sigma, grid, run_grid(cfg, grid, true));
}

ExperimentResult run_rms_s(const ExperimentConfig& cfg) {
  std::vector<GridPoint> grid;
  for (Index s : cfg.s_grid) {
    GridPoint gp{"s", static_cast<double>(s), cfg.model};
    gp.model.s = s;
    grid.push_back(gp);
  }
  return rms_result(ExperimentKind::rms_s, grid, run_grid(cfg, grid, true));
}

ExperimentResult run_phantom(const ExperimentConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  const PhantomSettings& ps = cfg.phantom;
  PhantomOutcome out;
  out.truth = shepp_logan(ps.size);
  const SamplingMask mask = radial_mask(ps.size, ps.lines, ps.mask_seed);
  out.mask = centered_mask(mask);
  const SampledTransform2D op(mask);
  const Vec clean = op.apply(out.truth.pixels);
  const Corruption corr = corrupt_measurements(clean, ps.corruption, ps.corruption_factor,
                                               trial_seed(cfg.seed_base, 0, 0));
  std::mt19937_64 rng(trial_seed(cfg.seed_base, 0, 1));
  std::normal_distribution<double> gauss(0.0, ps.noise_std);
  Vec noise(clean.size());
  for (Index i = 0; i < noise.size(); ++i) noise[i] = ps.noise_std > 0.0 ? gauss(rng) : 0.0;
  const Vec y = clean + corr.error + noise;

  out.measurements = op.rows();
  out.corrupted = static_cast<Index>(corr.support.size());
  out.sigma = noise.norm();
  out.lambda = cfg.lambda_rule == LambdaRule::fixed ? cfg.lambda : lambda_tv(op.cols(), op.rows());
  out.zero_threshold = ps.zero_threshold >= 0.0 ? ps.zero_threshold : default_zero_threshold(y);

  const TwoStepResult two = two_step_recover(op, y, out.lambda, out.sigma, out.zero_threshold, ps.tv);
  const TvResult baseline = solve_tv(op, y, out.sigma, ps.tv);
  out.step1 = two.step1.xhat;
  out.two_step = two.step2.xhat;
  out.tv_only = baseline.xhat;
  out.step1_error = relative_error(two.step1.xhat.pixels, out.truth.pixels);
  out.two_step_error = relative_error(two.step2.xhat.pixels, out.truth.pixels);
  out.tv_only_error = relative_error(baseline.xhat.pixels, out.truth.pixels);
  out.kept = static_cast<Index>(two.kept.size());
  std::vector<Index> inter;
  std::set_intersection(two.kept.begin(), two.kept.end(), corr.support.begin(), corr.support.end(),
                        std::back_inserter(inter));
  out.corrupted_kept = static_cast<Index>(inter.size());
  out.step1_converged = two.step1.converged;
  out.step2_converged = two.step2.converged;
  out.tv_only_converged = baseline.converged;
  out.wall_time = seconds_since(t0);

  ExperimentResult res;
  res.kind = ExperimentKind::phantom;
  res.metrics["two_step_error"] = out.two_step_error;
  res.metrics["step1_error"] = out.step1_error;
  res.metrics["tv_only_error"] = out.tv_only_error;
  res.summary.push_back({"two_step", 0.0, out.two_step_error, 1});
  res.summary.push_back({"step1", 0.0, out.step1_error, 1});
  res.summary.push_back({"tv_only", 0.0, out.tv_only_error, 1});
  res.phantom.push_back(std::move(out));
  return res;
}

ExperimentResult run_certify(const ExperimentConfig& cfg) {
  struct Point {
    Index k, s;
  };
  std::vector<Point> grid;
  for (Index k : cfg.k_grid) {
    for (Index s : cfg.s_grid) grid.push_back({k, s});
  }
  const std::size_t per = static_cast<std::size_t>(cfg.trials);
  std::vector<CertifyRecord> records(grid.size() * per);
  parallel_for(records.size(), cfg.jobs, [&](std::size_t i) {
    CertifyRecord& rec = records[i];
    rec.point = i / per;
    rec.k = grid[rec.point].k;
    rec.s = grid[rec.point].s;
    rec.seed = trial_seed(cfg.seed_base, rec.point, i % per);
    ModelConfig model = cfg.model;
    model.k = rec.k;
    model.s = rec.s;
    model.seed = rec.seed;
    const OrthoTransform a = OrthoTransform::make(model.transform, model.n);
    const ProblemInstance inst = generate(model, a);
    try {
      rec.cert = check_certificate(a, inst, lambda_for(cfg, model));
    } catch (const CertificateInapplicable&) {
      rec.applicable = false;
    }
    rec.iso = check_isometry(a, inst.sets, model.rho0());
    if (rec.applicable && rec.cert.pass && cfg.lemma2_trials > 0) {
      rec.lemma2 = check_lemma2(a, inst, rec.cert.pair, cfg.lemma2_trials, rec.seed ^ 0x5bd1e995ULL);
      rec.lemma2_run = true;
    }
  });

  ExperimentResult res;
  res.kind = ExperimentKind::certify;
  int pass = 0, ident = 0, p1 = 0, p2 = 0, l2viol = 0, l2run = 0;
  for (std::size_t p = 0; p < grid.size(); ++p) {
    double rate[4] = {0, 0, 0, 0};
    int cnt = 0;
    for (const CertifyRecord& r : records) {
      if (r.point != p) continue;
      ++cnt;
      rate[0] += r.applicable && r.cert.pass;
      rate[1] += r.applicable && r.cert.identities_pass;
      rate[2] += r.iso.jct_holds;
      rate[3] += r.iso.st_gram_holds;
      l2run += r.lemma2_run;
      l2viol += r.lemma2_run ? r.lemma2.violations : 0;
    }
    pass += static_cast<int>(rate[0]);
    ident += static_cast<int>(rate[1]);
    p1 += static_cast<int>(rate[2]);
    p2 += static_cast<int>(rate[3]);
    const std::string tag = " s=" + std::to_string(grid[p].s);
    const char* names[4] = {"pass", "identities", "jct", "st_gram"};
    for (int j = 0; j < 4; ++j) {
      res.summary.push_back({names[j] + tag, static_cast<double>(grid[p].k), rate[j] / cnt, cnt});
    }
  }
  const double total = static_cast<double>(records.size());
  res.metrics["pass_rate"] = pass / total;
  res.metrics["identities_rate"] = ident / total;
  res.metrics["jct_rate"] = p1 / total;
  res.metrics["st_gram_rate"] = p2 / total;
  res.metrics["lemma2_runs"] = l2run;
  res.metrics["lemma2_violations"] = l2viol;
  // keep rows of one (k, s) point together in the summary order
  std::stable_sort(res.summary.begin(), res.summary.end(), [](const SummaryPoint& a, const SummaryPoint& b) {
    return a.series < b.series;
  });
  res.certificates = std::move(records);
  return res;
}

FigureLabels figure_labels(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::recover: return {"Single recovery", "", "relative error", true};
    case ExperimentKind::phase_k:
      return {"Probability of success vs signal sparsity", "k", "success probability", false};
    case ExperimentKind::phase_fraction:
      return {"Probability of success vs fraction of corrupted measurements", "s/m",
              "success probability", false};
    case ExperimentKind::rms_sigma: return {"RMS error vs noise level", "sigma", "RMS error", false};
    case ExperimentKind::rms_s: return {"RMS error vs number of corruptions", "s", "RMS error", false};
    case ExperimentKind::phantom: return {"Phantom relative error", "", "relative error", false};
    case ExperimentKind::certify: return {"Certificate pass rate", "k", "pass rate", false};
  }
  return {};
}

std::array<double, 3> linear_fit(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw DimensionError("linear_fit needs >= 2 paired points");
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0) throw Error("linear_fit: x is constant");
  const double slope = sxy / sxx;
  const double intercept = my - slope * mx;
  const double r2 = syy == 0.0 ? 1.0 : sxy * sxy / (sxx * syy);
  return {slope, intercept, r2};
}

void write_outputs(const ExperimentConfig& cfg, const ExperimentResult& result) {
  namespace fs = std::filesystem;
  const fs::path dir(cfg.out_dir);
  fs::create_directories(dir);

  {
    std::ofstream out(dir / "config.txt");
    if (!out) throw Error("cannot write " + (dir / "config.txt").string());
    write_kv(out, cfg.to_kv());
  }

  std::ostringstream records;
  if (result.kind == ExperimentKind::certify) {
    records << "point,k,s,applicable," << certificate_csv_header() << '\n';
    for (const CertifyRecord& r : result.certificates) {
      records << r.point << ',' << r.k << ',' << r.s << ',' << (r.applicable ? 1 : 0) << ','
              << certificate_csv_row(r.seed, r.cert, r.iso, r.lemma2_run ? &r.lemma2 : nullptr)
              << '\n';
    }
  } else if (result.kind == ExperimentKind::phantom) {
    records << "measurements,corrupted,kept,corrupted_kept,lambda,sigma,zero_threshold,"
               "two_step_error,step1_error,tv_only_error,step1_converged,step2_converged,"
               "tv_only_converged,wall_time\n";
    for (const PhantomOutcome& p : result.phantom) {
      records << p.measurements << ',' << p.corrupted << ',' << p.kept << ',' << p.corrupted_kept
              << ',' << fmt(p.lambda) << ',' << fmt(p.sigma) << ',' << fmt(p.zero_threshold) << ','
              << fmt(p.two_step_error) << ',' << fmt(p.step1_error) << ',' << fmt(p.tv_only_error)
              << ',' << p.step1_converged << ',' << p.step2_converged << ',' << p.tv_only_converged
              << ',' << fmt(p.wall_time) << '\n';
    }
  } else {
    records << trial_csv_header() << '\n';
    for (const TrialRecord& r : result.trials) records << trial_csv_row(r) << '\n';
  }
  write_text(dir / "records.csv", records.str());

  std::ostringstream summary;
  summary << "series,x,y,count\n";
  for (const SummaryPoint& p : result.summary) {
    summary << p.series << ',' << fmt(p.x) << ',' << fmt(p.y) << ',' << p.count << '\n';
  }
  write_text(dir / "summary.csv", summary.str());

  if (!result.metrics.empty()) {
    std::ostringstream metrics;
    metrics << "metric,value\n";
    for (const auto& [k, v] : result.metrics) metrics << k << ',' << fmt(v) << '\n';
    write_text(dir / "metrics.csv", metrics.str());
  }

  if (result.kind == ExperimentKind::recover) {
    std::ostringstream sol;
    sol << "index,xhat,xstar\n";
    for (Index i = 0; i < result.xhat.size(); ++i) {
      sol << i << ',' << fmt(result.xhat[i]) << ',' << fmt(result.xstar[i]) << '\n';
    }
    write_text(dir / "solution.csv", sol.str());
  }

  if (result.kind == ExperimentKind::phantom) {
    for (const PhantomOutcome& p : result.phantom) {
      write_pgm((dir / "truth.pgm").string(), p.truth);
      write_pgm((dir / "two_step.pgm").string(), p.two_step);
      write_pgm((dir / "step1.pgm").string(), p.step1);
      write_pgm((dir / "tv_only.pgm").string(), p.tv_only);
      write_pgm((dir / "mask.pgm").string(), p.mask);
      write_raw((dir / "two_step.f64").string(), p.two_step);
      write_raw((dir / "tv_only.f64").string(), p.tv_only);
    }
    return;
  }

  if (result.kind != ExperimentKind::recover) {
    const FigureLabels labels = figure_labels(result.kind);
    PlotSpec spec{labels.title, labels.xlabel, labels.ylabel, 640, 420, labels.log_y};
    write_text(dir / (to_string(result.kind) + ".svg"),
               line_chart_svg(spec, series_from_csv(summary.str())));
  }
}

}  // namespace rcs

#pragma once

#include "rcs/certificate.hpp"
#include "rcs/kv_config.hpp"
#include "rcs/solver.hpp"
#include "rcs/synth.hpp"
#include "rcs/tv.hpp"

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace rcs {

enum class ExperimentKind { recover, phase_k, phase_fraction, rms_sigma, rms_s, phantom, certify };

std::string to_string(ExperimentKind kind);
/// Accepts the subcommand spelling, e.g. "phase-k".
ExperimentKind parse_experiment_kind(const std::string& name);

enum class LambdaRule { fixed, good_for_all, theorem };

struct PhantomSettings {
  Index size = 256;
  Index lines = 45;
  std::uint64_t mask_seed = 0;
  double corruption = 0.5;
  double corruption_factor = 2.0;
  double noise_std = 0.01;
  double zero_threshold = -1.0;  // negative: 1e-3 * median |y|
  TvOptions tv;
};

/// One experiment. Grids that do not apply to `kind` are ignored.
struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::recover;
  ModelConfig model;
  std::vector<Index> n_grid;
  std::vector<Index> k_grid;
  std::vector<Index> s_grid;
  std::vector<double> fraction_grid;  // s / m
  std::vector<double> sigma_grid;
  double s_fraction = 0.25;           // phase-k: s = round(s_fraction * m)
  int trials = 100;
  std::uint64_t seed_base = 1;
  int jobs = 1;
  std::string out_dir = ".";
  LambdaRule lambda_rule = LambdaRule::good_for_all;
  double lambda = 0.0;  // used when lambda_rule == fixed
  SolverOptions solver;
  PhantomSettings phantom;
  int lemma2_trials = 1000;

  /// Defaults reproducing the corresponding figure or table.
  static ExperimentConfig defaults(ExperimentKind kind);
  /// Applies `key = value` overrides on top of defaults(kind). Unknown keys
  /// raise ConfigError.
  static ExperimentConfig from_kv(ExperimentKind kind, const KeyValues& kv);
  KeyValues to_kv() const;
  /// Throws ConfigError for empty grids, trials < 1, jobs < 1 or an invalid model.
  void validate() const;
};

/// Per-trial seed: seed_base + splitmix64 mix of (grid point, trial).
std::uint64_t trial_seed(std::uint64_t seed_base, std::size_t point, std::size_t trial);

struct TrialRecord {
  std::size_t point = 0;
  std::size_t trial = 0;
  std::string series;
  double x = 0.0;  // abscissa of the grid point
  ModelConfig config;
  double lambda = 0.0;
  bool success = false;
  bool converged = false;
  double relative_error = 0.0;
  double rms_x = 0.0;
  double rms_e = 0.0;
  double oracle_rms_x = 0.0;  // NaN when not computed
  double oracle_rms_e = 0.0;
  bool oracle_within_bound = false;  // ||x_or - x*|| <= sigma sqrt(6 / rho0)
  int iterations = 0;
  double wall_time = 0.0;
};

std::string trial_csv_header();
std::string trial_csv_row(const TrialRecord& r);

/// A plotted point of summary.csv: long format (series, x, y, count).
struct SummaryPoint {
  std::string series;
  double x = 0.0;
  double y = 0.0;
  int count = 0;
};

struct CertifyRecord {
  std::size_t point = 0;
  Index k = 0;
  Index s = 0;
  std::uint64_t seed = 0;
  bool applicable = true;  // false when construction raised CertificateInapplicable
  CertificateReport cert;
  IsometryReport iso;
  Lemma2Report lemma2;
  bool lemma2_run = false;
};

struct PhantomOutcome {
  double two_step_error = 0.0;
  double step1_error = 0.0;
  double tv_only_error = 0.0;
  Index measurements = 0;
  Index corrupted = 0;
  Index kept = 0;
  Index corrupted_kept = 0;
  double lambda = 0.0;
  double sigma = 0.0;
  double zero_threshold = 0.0;
  bool step1_converged = false;
  bool step2_converged = false;
  bool tv_only_converged = false;
  double wall_time = 0.0;
  Image truth, two_step, step1, tv_only, mask;
};

struct ExperimentResult {
  ExperimentKind kind = ExperimentKind::recover;
  std::vector<TrialRecord> trials;
  std::vector<CertifyRecord> certificates;
  std::vector<PhantomOutcome> phantom;
  std::vector<SummaryPoint> summary;
  /// Scalar diagnostics, e.g. the R^2 of the RMS fit.
  std::map<std::string, double> metrics;
  /// recover: the estimate and ground truth.
  Vec xhat, xstar;
};

double lambda_for(const ExperimentConfig& cfg, const ModelConfig& model);

/// Runs every trial of the configured sweep on up to cfg.jobs threads.
/// Records come back in grid order whatever the completion order.
ExperimentResult run_experiment(const ExperimentConfig& cfg);

ExperimentResult run_recover(const ExperimentConfig& cfg);
ExperimentResult run_phase_k(const ExperimentConfig& cfg);
ExperimentResult run_phase_fraction(const ExperimentConfig& cfg);
ExperimentResult run_rms_sigma(const ExperimentConfig& cfg);
ExperimentResult run_rms_s(const ExperimentConfig& cfg);
ExperimentResult run_phantom(const ExperimentConfig& cfg);
ExperimentResult run_certify(const ExperimentConfig& cfg);

/// Writes records.csv, summary.csv, config.txt and the figures into cfg.out_dir.
void write_outputs(const ExperimentConfig& cfg, const ExperimentResult& result);

/// Axis labels and title for the figure of `kind`.
struct FigureLabels {
  std::string title, xlabel, ylabel;
  bool log_y = false;
};
FigureLabels figure_labels(ExperimentKind kind);

/// Least-squares line through (x, y); returns {slope, intercept, r2}.
std::array<double, 3> linear_fit(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace rcs

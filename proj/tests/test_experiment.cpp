#include "rcs/experiment.hpp"
#include "rcs/svg_plot.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

using namespace rcs;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Drops the last CSV column (wall time) from every line.
std::string without_last_column(const std::string& csv) {
  std::istringstream in(csv);
  std::string line, out;
  while (std::getline(in, line)) out += line.substr(0, line.rfind(',')) + "\n";
  return out;
}

ExperimentConfig small_phase_k() {
  ExperimentConfig cfg = ExperimentConfig::defaults(ExperimentKind::phase_k);
  cfg.n_grid = {256};
  cfg.k_grid = {0, 4, 40};
  cfg.model.m = 128;
  cfg.trials = 3;
  return cfg;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("experiment names") {
  for (auto k : {ExperimentKind::recover, ExperimentKind::phase_k, ExperimentKind::phase_fraction,
                 ExperimentKind::rms_sigma, ExperimentKind::rms_s, ExperimentKind::phantom,
                 ExperimentKind::certify}) {
    CHECK(parse_experiment_kind(to_string(k)) == k);
  }
  CHECK_THROWS_AS(parse_experiment_kind("phase_k"), ConfigError);
}

TEST_CASE("trial seeds are stable and distinct") {
  CHECK(trial_seed(1, 0, 0) == trial_seed(1, 0, 0));
  CHECK(trial_seed(2, 3, 4) - trial_seed(1, 3, 4) == 1);
  std::set<std::uint64_t> seen;
  for (std::size_t p = 0; p < 50; ++p) {
    for (std::size_t t = 0; t < 100; ++t) seen.insert(trial_seed(7, p, t));
  }
  CHECK(seen.size() == 5000);
}

TEST_CASE("defaults encode the published setups") {
  const auto pk = ExperimentConfig::defaults(ExperimentKind::phase_k);
  CHECK(pk.n_grid == std::vector<Index>{1024, 2048, 4096, 8192});
  CHECK(pk.model.m == 500);
  CHECK(pk.k_grid.front() == 1);
  CHECK(pk.k_grid.back() == 59);
  CHECK(pk.k_grid.size() == 30);
  const auto pf = ExperimentConfig::defaults(ExperimentKind::phase_fraction);
  CHECK(pf.k_grid == std::vector<Index>{25, 30, 35});
  const auto rs = ExperimentConfig::defaults(ExperimentKind::rms_sigma);
  CHECK(rs.model.k == 20);
  CHECK(rs.model.s == 125);
  CHECK(rs.sigma_grid.size() == 5);
  const auto ph = ExperimentConfig::defaults(ExperimentKind::phantom);
  CHECK(ph.phantom.size == 256);
  CHECK(ph.phantom.lines == 45);
  for (auto k : {ExperimentKind::recover, ExperimentKind::phase_k, ExperimentKind::phase_fraction,
                 ExperimentKind::rms_sigma, ExperimentKind::rms_s, ExperimentKind::phantom,
                 ExperimentKind::certify}) {
    CHECK_NOTHROW(ExperimentConfig::defaults(k).validate());
  }
}

TEST_CASE("config overrides, round trip and validation") {
  const KeyValues kv = {{"n_grid", "512"}, {"k_grid", "1,2,3"}, {"trials", "7"},
                        {"lambda", "0.5"}, {"m", "200"}, {"seed", "99"}};
  const ExperimentConfig cfg = ExperimentConfig::from_kv(ExperimentKind::phase_k, kv);
  CHECK(cfg.n_grid == std::vector<Index>{512});
  CHECK(cfg.trials == 7);
  CHECK(cfg.model.m == 200);
  CHECK(cfg.model.n == 1024);  // untouched default
  CHECK(cfg.lambda_rule == LambdaRule::fixed);
  CHECK(cfg.seed_base == 99);
  const ExperimentConfig back = ExperimentConfig::from_kv(ExperimentKind::phase_k, cfg.to_kv());
  CHECK(back.to_kv() == cfg.to_kv());

  // model keys start from the experiment's own defaults
  const auto rms = ExperimentConfig::from_kv(ExperimentKind::rms_s, {{"trials", "2"}});
  CHECK(rms.model.sigma == 1.0);
  CHECK(rms.model.k == 20);

  CHECK_THROWS_AS(ExperimentConfig::from_kv(ExperimentKind::phase_k, {{"nn", "3"}}), ConfigError);
  ExperimentConfig bad = cfg;
  bad.k_grid.clear();
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.trials = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.k_grid = {5000};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("k = 0 succeeds with probability one") {
  ExperimentConfig cfg = ExperimentConfig::defaults(ExperimentKind::phase_k);
  cfg.n_grid = {1024};
  cfg.k_grid = {0};
  cfg.trials = 1;
  const ExperimentResult res = run_experiment(cfg);
  REQUIRE(res.summary.size() == 1);
  CHECK(res.summary[0].y == 1.0);
}

TEST_CASE("records are reproducible and independent of the job count") {
  namespace fs = std::filesystem;
  const fs::path root = fs::temp_directory_path() / "rcs_experiment_test";
  fs::remove_all(root);
  ExperimentConfig cfg = small_phase_k();
  cfg.out_dir = (root / "a").string();
  write_outputs(cfg, run_experiment(cfg));
  cfg.out_dir = (root / "b").string();
  cfg.jobs = 3;
  write_outputs(cfg, run_experiment(cfg));

  const std::string a = slurp(root / "a" / "records.csv"), b = slurp(root / "b" / "records.csv");
  CHECK(!a.empty());
  CHECK(without_last_column(a) == without_last_column(b));
  CHECK(slurp(root / "a" / "summary.csv") == slurp(root / "b" / "summary.csv"));
  CHECK(fs::exists(root / "a" / "phase-k.svg"));
  CHECK(fs::exists(root / "a" / "config.txt"));

  // the figure is regenerable from summary.csv alone
  const FigureLabels l = figure_labels(ExperimentKind::phase_k);
  const std::string svg = line_chart_svg(PlotSpec{l.title, l.xlabel, l.ylabel, 640, 420, l.log_y},
                                         series_from_csv(slurp(root / "a" / "summary.csv")));
  CHECK(svg == slurp(root / "a" / "phase-k.svg"));

  // and the written config reproduces the run
  const ExperimentConfig again =
      ExperimentConfig::from_kv(ExperimentKind::phase_k, parse_kv_file((root / "a" / "config.txt").string()));
  CHECK(again.k_grid == cfg.k_grid);
  CHECK(again.trials == cfg.trials);
  fs::remove_all(root);
}

TEST_CASE("records have one row per grid point and trial") {
  const ExperimentConfig cfg = small_phase_k();
  const ExperimentResult res = run_experiment(cfg);
  CHECK(res.trials.size() == 9);
  for (std::size_t i = 0; i < res.trials.size(); ++i) {
    CHECK(res.trials[i].point == i / 3);
    CHECK(res.trials[i].trial == i % 3);
  }
  const std::string header = trial_csv_header(), row = trial_csv_row(res.trials[0]);
  CHECK(std::count(header.begin(), header.end(), ',') == std::count(row.begin(), row.end(), ','));
  CHECK(res.summary[0].y >= res.summary[2].y);
}

TEST_CASE("rms summary carries the oracle columns") {
  ExperimentConfig cfg = ExperimentConfig::defaults(ExperimentKind::rms_sigma);
  cfg.model.n = 256;
  cfg.model.m = 128;
  cfg.model.k = 4;
  cfg.model.s = 16;
  cfg.sigma_grid = {0.0, 0.5, 1.0};
  cfg.trials = 2;
  const ExperimentResult res = run_experiment(cfg);
  std::set<std::string> series;
  for (const auto& p : res.summary) series.insert(p.series);
  CHECK(series == std::set<std::string>{"l1_x", "oracle_x", "l1_e", "oracle_e"});
  CHECK(res.summary[0].y < 1e-8);  // sigma = 0: exact recovery
  CHECK(res.metrics.count("fit_r2") == 1);
}

TEST_CASE("linear fit") {
  const auto f = linear_fit({0, 1, 2, 3}, {1, 3, 5, 7});
  CHECK(f[0] == doctest::Approx(2.0));
  CHECK(f[1] == doctest::Approx(1.0));
  CHECK(f[2] == doctest::Approx(1.0));
  CHECK_THROWS(linear_fit({1}, {1}));
}

TEST_CASE("svg chart") {
  const auto series = series_from_csv("series,x,y,count\na,0,1,1\na,1,2,1\nb,0,nan,1\n");
  REQUIRE(series.size() == 2);
  CHECK(series[0].x.size() == 2);
  const std::string svg = line_chart_svg(PlotSpec{"t", "x", "y"}, series);
  CHECK(svg.rfind("<svg", 0) == 0);
  CHECK(svg.find("</svg>") != std::string::npos);
  CHECK(svg.find("<polyline") != std::string::npos);
  CHECK_THROWS(series_from_csv("a,b\n1,2\n"));
}

}  // TEST_SUITE

// rcs: run recovery experiments and write records.csv, summary.csv and figures.

#include "rcs/experiment.hpp"
#include "rcs/svg_plot.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

namespace {

struct RunFlags {
  std::string config;
  std::optional<std::string> out;
  std::optional<int> jobs;
  std::optional<std::uint64_t> seed;
  std::optional<int> trials;
  std::vector<std::string> set;
};

void print_summary(const rcs::ExperimentConfig& cfg, const rcs::ExperimentResult& res) {
  std::printf("%-16s %12s %14s %6s\n", "series", "x", "y", "count");
  for (const auto& p : res.summary) {
    std::printf("%-16s %12.6g %14.6g %6d\n", p.series.c_str(), p.x, p.y, p.count);
  }
  for (const auto& [key, value] : res.metrics) std::printf("%s = %.6g\n", key.c_str(), value);
  std::printf("outputs written to %s\n", cfg.out_dir.c_str());
}

int run(rcs::ExperimentKind kind, const RunFlags& flags) {
  rcs::KeyValues kv;
  if (!flags.config.empty()) kv = rcs::parse_kv_file(flags.config);
  for (const std::string& item : flags.set) {
    std::istringstream line(item);
    for (const auto& [k, v] : rcs::parse_kv(line)) kv[k] = v;
  }
  auto it = kv.find("experiment");
  if (it != kv.end() && it->second != rcs::to_string(kind)) {
    throw rcs::ConfigError("config is for experiment " + it->second);
  }
  rcs::ExperimentConfig cfg = rcs::ExperimentConfig::from_kv(kind, kv);
  if (flags.out) cfg.out_dir = *flags.out;
  if (flags.jobs) cfg.jobs = *flags.jobs;
  if (flags.seed) cfg.seed_base = *flags.seed;
  if (flags.trials) cfg.trials = *flags.trials;
  cfg.validate();

  const rcs::ExperimentResult res = rcs::run_experiment(cfg);
  rcs::write_outputs(cfg, res);
  print_summary(cfg, res);
  return 0;
}

int plot(const std::string& summary_path, const std::string& kind_name, const std::string& out) {
  std::ifstream in(summary_path, std::ios::binary);
  if (!in) throw rcs::Error("cannot read " + summary_path);
  std::stringstream text;
  text << in.rdbuf();
  const rcs::FigureLabels labels = rcs::figure_labels(rcs::parse_experiment_kind(kind_name));
  rcs::PlotSpec spec{labels.title, labels.xlabel, labels.ylabel, 640, 420, labels.log_y};
  std::ofstream svg(out, std::ios::binary);
  if (!svg) throw rcs::Error("cannot write " + out);
  svg << rcs::line_chart_svg(spec, rcs::series_from_csv(text.str()));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse recovery from densely corrupted measurements"};
  app.require_subcommand(1);

  struct Command {
    rcs::ExperimentKind kind;
    const char* help;
  };
  const Command commands[] = {
      {rcs::ExperimentKind::recover, "Recover one random instance"},
      {rcs::ExperimentKind::phase_k, "Success probability vs signal sparsity k"},
      {rcs::ExperimentKind::phase_fraction, "Success probability vs corrupted fraction s/m"},
      {rcs::ExperimentKind::rms_sigma, "RMS error vs noise level, with the oracle"},
      {rcs::ExperimentKind::rms_s, "RMS error vs number of corruptions, with the oracle"},
      {rcs::ExperimentKind::phantom, "Two-step TV recovery of the Shepp-Logan phantom"},
      {rcs::ExperimentKind::certify, "Dual certificate and isometry checks over seeds"},
  };

  RunFlags flags;
  std::optional<rcs::ExperimentKind> chosen;
  for (const Command& c : commands) {
    CLI::App* sub = app.add_subcommand(rcs::to_string(c.kind), c.help);
    sub->add_option("--config", flags.config, "key = value config file")->check(CLI::ExistingFile);
    sub->add_option("--out", flags.out, "output directory");
    sub->add_option("--jobs", flags.jobs, "worker threads")->check(CLI::PositiveNumber);
    sub->add_option("--seed", flags.seed, "seed base");
    sub->add_option("--trials", flags.trials, "trials per grid point")->check(CLI::PositiveNumber);
    sub->add_option("--set", flags.set, "extra key=value override, repeatable");
    sub->callback([&chosen, kind = c.kind] { chosen = kind; });
  }

  std::string summary_path, plot_kind, plot_out = "figure.svg";
  CLI::App* plot_cmd = app.add_subcommand("plot", "Redraw a figure from summary.csv");
  plot_cmd->add_option("summary", summary_path, "summary.csv")->required()->check(CLI::ExistingFile);
  plot_cmd->add_option("--kind", plot_kind, "experiment that produced the summary")->required();
  plot_cmd->add_option("--out", plot_out, "SVG path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (plot_cmd->parsed()) return plot(summary_path, plot_kind, plot_out);
    return run(*chosen, flags);
  } catch (const rcs::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}

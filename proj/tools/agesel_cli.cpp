// Command-line front end: run, compare, sweep, theory, inspect-partition.
//
// Exit codes: 0 success, 2 config error, 3 every run diverged, 4 I/O error.

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "agesel/config.hpp"
#include "agesel/error.hpp"
#include "agesel/experiment.hpp"
#include "agesel/theory.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitDiverged = 3;
constexpr int kExitIo = 4;

struct CommonOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::size_t> runs;
  bool quiet = false;
};

void add_common(CLI::App* cmd, CommonOptions& opts) {
  cmd->add_option("--config", opts.config_path, "Experiment config (JSON); defaults apply when omitted");
  cmd->add_option("--seed", opts.seed, "Base seed (run r uses seed + r)");
  cmd->add_option("--out", opts.out, "Output directory");
  cmd->add_option("--runs", opts.runs, "Number of Monte Carlo runs")->check(CLI::PositiveNumber);
  cmd->add_flag("--quiet", opts.quiet, "Suppress progress output");
}

agesel::ExperimentConfig resolve_config(const CommonOptions& opts) {
  agesel::ExperimentConfig cfg =
      opts.config_path.empty() ? agesel::ExperimentConfig{} : agesel::load_config(opts.config_path);
  if (opts.seed) cfg.base_seed = *opts.seed;
  if (opts.out) cfg.output_dir = *opts.out;
  if (opts.runs) cfg.num_runs = *opts.runs;
  cfg.validate();
  return cfg;
}

int finish(const std::vector<agesel::RunSummary>& summaries) {
  const bool all_diverged = !summaries.empty() && std::all_of(summaries.begin(), summaries.end(),
                                                              [](const auto& s) { return s.diverged; });
  return all_diverged ? kExitDiverged : 0;
}

agesel::RunOptions run_options(const CommonOptions& opts) {
  agesel::RunOptions o;
  o.write_files = true;
  o.quiet = opts.quiet;
  o.log = &std::cerr;
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Local SGD simulator with age-based worker selection"};
  app.require_subcommand(1);

  CommonOptions run_opts;
  std::string run_strategy;
  auto* run_cmd = app.add_subcommand("run", "Run one strategy from the config");
  add_common(run_cmd, run_opts);
  run_cmd->add_option("--strategy", run_strategy, "Strategy label to run (default: first in config)");

  CommonOptions cmp_opts;
  auto* cmp_cmd = app.add_subcommand("compare", "Run every strategy and print the comparison table");
  add_common(cmp_cmd, cmp_opts);

  CommonOptions sweep_opts;
  std::string sweep_param = "S";
  std::vector<std::string> sweep_values = {"2", "5", "10", "20"};
  auto* sweep_cmd = app.add_subcommand("sweep", "Repeat the experiment over values of one parameter");
  add_common(sweep_cmd, sweep_opts);
  sweep_cmd->add_option("--param", sweep_param, "Parameter to sweep: S, tau_max, eta, U or B")->capture_default_str();
  sweep_cmd->add_option("--values", sweep_values, "Values to try")->delimiter(',')->capture_default_str();

  CommonOptions th_opts;
  agesel::TheoryConstants th_k;
  std::optional<double> th_c;
  std::vector<std::size_t> th_J;
  auto* th_cmd = app.add_subcommand("theory", "Evaluate the convergence-bound constants");
  add_common(th_cmd, th_opts);
  std::optional<double> o_L, o_sL, o_sG, o_eta, o_Ls, o_L0;
  std::optional<std::size_t> o_U, o_S, o_B, o_M, o_R;
  th_cmd->add_option("--L", o_L, "Smoothness constant");
  th_cmd->add_option("--sigma-L", o_sL, "Local gradient noise bound");
  th_cmd->add_option("--sigma-G", o_sG, "Local-vs-global gradient deviation bound");
  th_cmd->add_option("--eta", o_eta, "Stepsize");
  th_cmd->add_option("--U", o_U, "Local iterations per round");
  th_cmd->add_option("--S", o_S, "Uploads per round");
  th_cmd->add_option("--B", o_B, "Minibatch size");
  th_cmd->add_option("--M", o_M, "Number of workers");
  th_cmd->add_option("--R", o_R, "Rounds to traverse all workers");
  th_cmd->add_option("--L-star", o_Ls, "Lower bound of the objective");
  th_cmd->add_option("--L0", o_L0, "Initial objective value");
  th_cmd->add_option("--c", th_c, "Constant c (default 0.9 * c_upper)");
  th_cmd->add_option("--J", th_J, "Round counts at which to evaluate the bound")->delimiter(',');

  CommonOptions ip_opts;
  std::size_t ip_run = 0;
  auto* ip_cmd = app.add_subcommand("inspect-partition", "Print the per-worker label histogram");
  add_common(ip_cmd, ip_opts);
  ip_cmd->add_option("--run", ip_run, "Run index whose partition to show");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  try {
    if (*run_cmd) {
      agesel::ExperimentConfig cfg = resolve_config(run_opts);
      if (!run_strategy.empty()) {
        auto it = std::find_if(cfg.strategies.begin(), cfg.strategies.end(),
                               [&](const auto& s) { return s.display_label() == run_strategy; });
        if (it == cfg.strategies.end()) throw agesel::ConfigError("no strategy labelled " + run_strategy);
        cfg.strategies = {*it};
      } else {
        cfg.strategies.resize(1);
      }
      const auto summaries = agesel::run_experiment(cfg, run_options(run_opts));
      if (!run_opts.quiet) std::cout << agesel::format_comparison(agesel::compare_report(summaries));
      return finish(summaries);
    }
    if (*cmp_cmd) {
      const agesel::ExperimentConfig cfg = resolve_config(cmp_opts);
      const auto summaries = agesel::run_experiment(cfg, run_options(cmp_opts));
      std::cout << agesel::format_comparison(agesel::compare_report(summaries));
      return finish(summaries);
    }
    if (*sweep_cmd) {
      const agesel::ExperimentConfig cfg = resolve_config(sweep_opts);
      const auto points = agesel::run_sweep(cfg, sweep_param, sweep_values, run_options(sweep_opts));
      std::vector<agesel::RunSummary> all;
      for (const auto& p : points) all.insert(all.end(), p.summaries.begin(), p.summaries.end());
      if (!sweep_opts.quiet) std::cout << agesel::format_comparison(agesel::compare_report(all));
      return finish(all);
    }
    if (*th_cmd) {
      agesel::TheoryConstants k;
      if (!th_opts.config_path.empty()) {
        const agesel::ExperimentConfig cfg = agesel::load_config(th_opts.config_path);
        if (cfg.theory) k = *cfg.theory;
      }
      if (o_L) k.L = *o_L;
      if (o_sL) k.sigma_L = *o_sL;
      if (o_sG) k.sigma_G = *o_sG;
      if (o_eta) k.eta = *o_eta;
      if (o_U) k.U = *o_U;
      if (o_S) k.S = *o_S;
      if (o_B) k.B = *o_B;
      if (o_M) k.M = *o_M;
      if (o_R) k.R = *o_R;
      if (o_Ls) k.L_star = *o_Ls;
      if (o_L0) k.L0 = *o_L0;
      const agesel::BoundReport report = agesel::make_bound_report(k, th_c);
      auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
      nlohmann::json j{{"constants", agesel::to_json(k)},
                       {"Z1", report.Z1},
                       {"Z2", report.Z2},
                       {"c_upper", report.c_upper},
                       {"c_used", report.c_used},
                       {"V", num(report.V)},
                       {"stepsize_ok", report.stepsize_ok},
                       {"stepsize_limit", 1.0 / (8.0 * k.L * static_cast<double>(k.U))}};
      if (std::isfinite(report.V)) {
        nlohmann::json bounds = nlohmann::json::array();
        if (th_J.empty()) th_J = {k.R, 10 * k.R, 100 * k.R};
        for (std::size_t J : th_J) bounds.push_back({{"J", J}, {"bound", report.bound_at(J)}});
        j["bound"] = std::move(bounds);
      }
      std::cout << j.dump(2) << '\n';
      if (th_opts.out) {
        std::filesystem::create_directories(*th_opts.out);
        agesel::write_file_atomic(std::filesystem::path(*th_opts.out) / "report.json", j.dump(2) + "\n");
      }
      return 0;
    }
    if (*ip_cmd) {
      const agesel::ExperimentConfig cfg = resolve_config(ip_opts);
      const auto shards = agesel::inspect_partition(cfg, ip_run);
      std::cout << "worker,size,weight,distinct_labels";
      const std::size_t K = shards.empty() ? 0 : shards.front().label_counts.size();
      for (std::size_t k = 0; k < K; ++k) std::cout << ",label_" << k;
      std::cout << '\n';
      for (const auto& s : shards) {
        const auto distinct = std::count_if(s.label_counts.begin(), s.label_counts.end(), [](auto c) { return c > 0; });
        std::cout << s.worker_id << ',' << s.size << ',' << agesel::format_double(s.weight) << ',' << distinct;
        for (std::size_t c : s.label_counts) std::cout << ',' << c;
        std::cout << '\n';
      }
      return 0;
    }
  } catch (const agesel::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const agesel::IoError& e) {
    std::cerr << "I/O error: " << e.what() << '\n';
    return kExitIo;
  } catch (const agesel::FormatError& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return kExitIo;
  } catch (const agesel::DivergenceError& e) {
    std::cerr << e.what() << '\n';
    return kExitDiverged;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "I/O error: " << e.what() << '\n';
    return kExitIo;
  }
  return 0;
}

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "agesel/config.hpp"
#include "agesel/data.hpp"
#include "agesel/engine.hpp"

namespace agesel {

struct RunSummary {
  std::string label;
  StrategyKind kind = StrategyKind::AgeSel;
  std::size_t run = 0;
  std::uint64_t seed = 0;
  std::size_t rounds_to_target = 0;  // records in the trace; J when reached_target
  bool reached_target = false;
  std::size_t total_comm_cost = 0;
  std::optional<double> final_accuracy;
  bool diverged = false;
  std::string error;
  std::vector<RoundRecord> trace;
};

// Data, partition and initial parameters for one Monte Carlo run index.
// Shared by every strategy in that run.
struct RunContext {
  std::uint64_t seed = 0;
  std::shared_ptr<const GlobalDataset> train;
  std::shared_ptr<const GlobalDataset> eval;
  PartitionPlan plan;
  TrainingSetup setup;
};

// Builds the context for run index `run` (seed = base_seed + run). `preloaded`
// supplies IDX data that has already been read.
RunContext make_run_context(const ExperimentConfig& cfg, std::size_t run,
                            const std::pair<std::shared_ptr<const GlobalDataset>,
                                            std::shared_ptr<const GlobalDataset>>* preloaded = nullptr);

struct RunOptions {
  bool write_files = true;
  bool quiet = true;
  std::ostream* log = nullptr;
};

// Every (strategy, run) pair; summaries ordered run-major, then by strategy
// order in the config. Writes trace_<label>_<run>.csv, summary.csv and
// report.json under cfg.output_dir when write_files is set.
std::vector<RunSummary> run_experiment(const ExperimentConfig& cfg, const RunOptions& options = {});

struct ComparisonRow {
  std::string label;
  std::size_t runs = 0;
  std::size_t converged_runs = 0;
  std::size_t diverged_runs = 0;
  double median_rounds = 0.0;
  double mean_rounds = 0.0;
  double median_cost = 0.0;
  double mean_cost = 0.0;
  bool did_not_converge = false;  // every run exhausted the budget or diverged
};

struct ComparisonTable {
  std::vector<ComparisonRow> rows;  // config order
  std::vector<std::string> best_rounds;  // more than one entry means a tie
  std::vector<std::string> best_cost;
  std::size_t excluded = 0;  // strategies left out of the ordering

  const ComparisonRow& row(const std::string& label) const;
};

// Per strategy: median and mean rounds and total cost across non-diverged
// runs; runs that exhaust the budget count with their budget length.
ComparisonTable compare_report(std::span<const RunSummary> summaries);

std::string format_comparison(const ComparisonTable& table);
nlohmann::json to_json(const ComparisonTable& table);

enum class PlotKind { RoundsCurve, CostCurve, AgeHistogram, SSweep };

std::string_view to_string(PlotKind kind);

// Long-format CSV: strategy,run,round,metric,value.
std::string emit_plot_data(std::span<const RunSummary> summaries, PlotKind kind);
void emit_plot_data(std::span<const RunSummary> summaries, PlotKind kind, const std::filesystem::path& path);

// Shortest decimal string that round-trips to the same double.
std::string format_double(double v);

std::string trace_csv(std::span<const RoundRecord> records);
std::vector<RoundRecord> parse_trace_csv(const std::string& text);
std::string summary_csv(std::span<const RunSummary> summaries);
std::string trace_filename(const RunSummary& summary);

// Writes to a sibling temporary file and renames it into place.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);
std::string read_file_text(const std::filesystem::path& path);

struct SweepPoint {
  std::string value;
  ExperimentConfig config;
  std::vector<RunSummary> summaries;
};

// Reruns the experiment once per value of `param` (S, tau_max, eta, U or B),
// writing each point to <out>/<param>=<value>/ plus s_sweep.csv and
// sweep_summary.csv at the top level. Strategy labels gain an "@<param>=<value>" suffix.
std::vector<SweepPoint> run_sweep(const ExperimentConfig& cfg, const std::string& param,
                                  const std::vector<std::string>& values, const RunOptions& options = {});

struct ShardReport {
  int worker_id = 0;
  std::size_t size = 0;
  double weight = 0.0;
  std::vector<std::size_t> label_counts;
};

std::vector<ShardReport> inspect_partition(const ExperimentConfig& cfg, std::size_t run = 0);

}  // namespace agesel

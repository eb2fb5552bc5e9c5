#include "agesel/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <exception>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#include "agesel/error.hpp"
#include "agesel/theory.hpp"

namespace agesel {

using nlohmann::json;

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

namespace {

std::string format_optional(const std::optional<double>& v) { return v ? format_double(*v) : std::string(); }

template <typename Range>
std::string join_ids(const Range& ids) {
  std::string out;
  for (const auto& id : ids) {
    if (!out.empty()) out += ' ';
    out += std::to_string(id);
  }
  return out;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      parts.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  parts.push_back(cur);
  return parts;
}

template <typename T>
T parse_number(const std::string& s) {
  T value{};
  const auto res = std::from_chars(s.data(), s.data() + s.size(), value);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw FormatError("bad number in trace: \"" + s + "\"");
  return value;
}

std::optional<double> parse_optional(const std::string& s) {
  if (s.empty()) return std::nullopt;
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  return parse_number<double>(s);
}

template <typename T>
std::vector<T> parse_ids(const std::string& s) {
  std::vector<T> out;
  if (s.empty()) return out;
  for (const auto& part : split(s, ' ')) out.push_back(parse_number<T>(part));
  return out;
}

double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double mean(const std::vector<double>& v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

void ensure_directory(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

constexpr const char* kTraceHeader =
    "round,comm_cost,cumulative_cost,loss,accuracy,squared_grad_norm,num_infrequent,num_age_selected,"
    "download_set,upload_set,ages";

}  // namespace

std::string trace_csv(std::span<const RoundRecord> records) {
  std::string out = kTraceHeader;
  out += '\n';
  for (const RoundRecord& r : records) {
    out += std::to_string(r.round) + ',' + std::to_string(r.comm_cost) + ',' + std::to_string(r.cumulative_cost) + ',' +
           format_optional(r.loss) + ',' + format_optional(r.accuracy) + ',' + format_optional(r.squared_grad_norm) +
           ',' + std::to_string(r.num_infrequent) + ',' + std::to_string(r.num_age_selected) + ',' +
           join_ids(r.download_set) + ',' + join_ids(r.upload_set) + ',' + join_ids(r.ages) + '\n';
  }
  return out;
}

std::vector<RoundRecord> parse_trace_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kTraceHeader) throw FormatError("trace CSV: unexpected header");
  std::vector<RoundRecord> records;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != 11) throw FormatError("trace CSV: expected 11 fields, got " + std::to_string(f.size()));
    RoundRecord r;
    r.round = parse_number<std::size_t>(f[0]);
    r.comm_cost = parse_number<std::size_t>(f[1]);
    r.cumulative_cost = parse_number<std::size_t>(f[2]);
    r.loss = parse_optional(f[3]);
    r.accuracy = parse_optional(f[4]);
    r.squared_grad_norm = parse_optional(f[5]);
    r.num_infrequent = parse_number<std::size_t>(f[6]);
    r.num_age_selected = parse_number<std::size_t>(f[7]);
    r.download_set = parse_ids<int>(f[8]);
    r.upload_set = parse_ids<int>(f[9]);
    r.ages = parse_ids<std::size_t>(f[10]);
    records.push_back(std::move(r));
  }
  return records;
}

std::string summary_csv(std::span<const RunSummary> summaries) {
  std::string out = "strategy,run,seed,rounds_to_target,reached_target,total_comm_cost,final_accuracy,diverged\n";
  for (const RunSummary& s : summaries) {
    out += s.label + ',' + std::to_string(s.run) + ',' + std::to_string(s.seed) + ',' +
           std::to_string(s.rounds_to_target) + ',' + (s.reached_target ? "1" : "0") + ',' +
           std::to_string(s.total_comm_cost) + ',' + format_optional(s.final_accuracy) + ',' +
           (s.diverged ? "1" : "0") + '\n';
  }
  return out;
}

std::string trace_filename(const RunSummary& summary) {
  return "trace_" + summary.label + "_" + std::to_string(summary.run) + ".csv";
}

void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << contents;
    out.flush();
    if (!out) throw IoError("error writing " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

std::string read_file_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

RunContext make_run_context(
    const ExperimentConfig& cfg, std::size_t run,
    const std::pair<std::shared_ptr<const GlobalDataset>, std::shared_ptr<const GlobalDataset>>* preloaded) {
  RunContext ctx;
  ctx.seed = cfg.base_seed + run;
  const auto& d = cfg.dataset;
  if (d.source == "synthetic") {
    ctx.train = std::make_shared<const GlobalDataset>(
        generate_synthetic(d.num_classes, d.feature_dim, d.samples_per_class, d.spread, ctx.seed));
    const auto eval_per_class = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::llround(d.eval_fraction * static_cast<double>(d.samples_per_class))));
    ctx.eval = std::make_shared<const GlobalDataset>(
        generate_synthetic_eval(d.num_classes, d.feature_dim, eval_per_class, d.spread, ctx.seed));
  } else if (preloaded) {
    ctx.train = preloaded->first;
    ctx.eval = preloaded->second;
  } else {
    ctx.train = std::make_shared<const GlobalDataset>(load_idx(d.train_images, d.train_labels, d.idx_num_classes));
    ctx.eval = d.test_images.empty()
                   ? ctx.train
                   : std::make_shared<const GlobalDataset>(load_idx(d.test_images, d.test_labels,
                                                                    ctx.train->num_classes()));
  }

  const std::size_t N = ctx.train->size();
  if (cfg.partition.scheme == "explicit") {
    ctx.plan.sizes = cfg.partition.sizes;
  } else if (cfg.partition.scheme == "equal") {
    ctx.plan = equal_plan(N, cfg.num_workers);
  } else {
    RandomStream rng = RandomStream(ctx.seed).derive(StreamPurpose::kPartition);
    ctx.plan = dirichlet_plan(N, cfg.num_workers, cfg.train.B, cfg.partition.alpha, rng);
  }

  ctx.setup.spec = ModelSpec{cfg.model.kind, ctx.train->feature_dim(),
                             cfg.model.kind == ModelKind::TwoLayerFC ? cfg.model.hidden_dim : 0,
                             ctx.train->num_classes()};
  ctx.setup.shards = partition_label_sorted(*ctx.train, ctx.plan);
  ctx.setup.eval_set = ctx.eval->samples();
  ctx.setup.initial_params = init_params(ctx.setup.spec, ctx.seed);
  return ctx;
}

namespace {

RunSummary run_one(const ExperimentConfig& cfg, const RunContext& ctx, const StrategyEntry& entry, std::size_t run) {
  RunSummary s;
  s.label = entry.display_label();
  s.kind = entry.kind;
  s.run = run;
  s.seed = ctx.seed;
  try {
    TrainingResult result = run_training(ctx.setup, cfg.strategy_config(entry), cfg.train, ctx.seed);
    s.trace = std::move(result.records);
    s.reached_target = result.reached_target;
  } catch (const DivergenceError& e) {
    s.diverged = true;
    s.error = e.what();
  }
  s.rounds_to_target = s.trace.size();
  for (const RoundRecord& r : s.trace) s.total_comm_cost += r.comm_cost;
  for (auto it = s.trace.rbegin(); it != s.trace.rend(); ++it) {
    if (it->accuracy) {
      s.final_accuracy = it->accuracy;
      break;
    }
  }
  return s;
}

json summary_json(const RunSummary& s, std::size_t num_workers) {
  json j{{"strategy", s.label},
         {"run", s.run},
         {"seed", s.seed},
         {"rounds_to_target", s.rounds_to_target},
         {"reached_target", s.reached_target},
         {"total_comm_cost", s.total_comm_cost},
         {"diverged", s.diverged}};
  j["final_accuracy"] = s.final_accuracy ? json(*s.final_accuracy) : json(nullptr);
  if (!s.error.empty()) j["error"] = s.error;
  if (!s.trace.empty()) {
    const TraversalMeasure t = measure_R(s.trace, num_workers);
    j["R"] = t.R;
    j["R_complete"] = t.complete;
    j["R_age_sum"] = t.R_age_sum;
    j["R_age_sum_complete"] = t.age_sum_complete;
    std::size_t max_age = 0;
    for (const RoundRecord& r : s.trace) {
      for (std::size_t a : r.ages) max_age = std::max(max_age, a);
    }
    j["max_age"] = max_age;
  }
  return j;
}

void write_outputs(const ExperimentConfig& cfg, std::span<const RunSummary> summaries) {
  const std::filesystem::path dir(cfg.output_dir);
  ensure_directory(dir);
  write_file_atomic(dir / "summary.csv", summary_csv(summaries));
  emit_plot_data(summaries, PlotKind::RoundsCurve, dir / "rounds_curve.csv");
  emit_plot_data(summaries, PlotKind::CostCurve, dir / "cost_curve.csv");
  emit_plot_data(summaries, PlotKind::AgeHistogram, dir / "age_histogram.csv");
  json report{{"config", to_json(cfg)}, {"comparison", to_json(compare_report(summaries))}};
  json runs = json::array();
  for (const RunSummary& s : summaries) runs.push_back(summary_json(s, cfg.num_workers));
  report["runs"] = std::move(runs);
  write_file_atomic(dir / "report.json", report.dump(2) + "\n");
}

}  // namespace

std::vector<RunSummary> run_experiment(const ExperimentConfig& cfg, const RunOptions& options) {
  cfg.validate();
  std::pair<std::shared_ptr<const GlobalDataset>, std::shared_ptr<const GlobalDataset>> preloaded;
  const bool use_preloaded = cfg.dataset.source == "idx";
  if (use_preloaded) {
    const RunContext first = make_run_context(cfg, 0);
    preloaded = {first.train, first.eval};
  }
  if (options.write_files) ensure_directory(cfg.output_dir);

  const std::size_t n_strat = cfg.strategies.size();
  std::vector<RunSummary> summaries(cfg.num_runs * n_strat);
  std::mutex log_mutex;

  auto do_run = [&](std::size_t run) {
    const RunContext ctx = make_run_context(cfg, run, use_preloaded ? &preloaded : nullptr);
    for (std::size_t s = 0; s < n_strat; ++s) {
      RunSummary summary = run_one(cfg, ctx, cfg.strategies[s], run);
      if (options.write_files) {
        write_file_atomic(std::filesystem::path(cfg.output_dir) / trace_filename(summary), trace_csv(summary.trace));
      }
      if (!options.quiet && options.log) {
        std::lock_guard<std::mutex> lock(log_mutex);
        *options.log << summary.label << " run " << run << ": " << summary.rounds_to_target << " rounds, cost "
                     << summary.total_comm_cost << (summary.reached_target ? "" : " (target not reached)")
                     << (summary.diverged ? " [diverged]" : "") << '\n';
      }
      summaries[run * n_strat + s] = std::move(summary);
    }
  };

  const std::size_t n_threads = std::min(cfg.threads, cfg.num_runs);
  if (n_threads <= 1) {
    for (std::size_t r = 0; r < cfg.num_runs; ++r) do_run(r);
  } else {
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < n_threads; ++t) {
      pool.emplace_back([&] {
        for (std::size_t r = next++; r < cfg.num_runs; r = next++) {
          try {
            do_run(r);
          } catch (...) {
            std::lock_guard<std::mutex> lock(failure_mutex);
            if (!failure) failure = std::current_exception();
          }
        }
      });
    }
    for (auto& th : pool) th.join();
    if (failure) std::rethrow_exception(failure);
  }

  if (options.write_files) write_outputs(cfg, summaries);
  return summaries;
}

const ComparisonRow& ComparisonTable::row(const std::string& label) const {
  for (const auto& r : rows) {
    if (r.label == label) return r;
  }
  throw ConfigError("comparison: no strategy labelled " + label);
}

ComparisonTable compare_report(std::span<const RunSummary> summaries) {
  if (summaries.empty()) throw ConfigError("compare_report: no summaries");
  ComparisonTable table;
  std::vector<std::string> order;
  std::map<std::string, std::vector<const RunSummary*>> groups;
  for (const RunSummary& s : summaries) {
    if (!groups.contains(s.label)) order.push_back(s.label);
    groups[s.label].push_back(&s);
  }
  for (const std::string& label : order) {
    ComparisonRow row;
    row.label = label;
    std::vector<double> rounds;
    std::vector<double> costs;
    for (const RunSummary* s : groups[label]) {
      ++row.runs;
      if (s->diverged) {
        ++row.diverged_runs;
        continue;
      }
      if (s->reached_target) ++row.converged_runs;
      rounds.push_back(static_cast<double>(s->rounds_to_target));
      costs.push_back(static_cast<double>(s->total_comm_cost));
    }
    row.median_rounds = median(rounds);
    row.mean_rounds = mean(rounds);
    row.median_cost = median(costs);
    row.mean_cost = mean(costs);
    row.did_not_converge = row.converged_runs == 0;
    table.rows.push_back(std::move(row));
  }
  double best_r = std::numeric_limits<double>::infinity();
  double best_c = std::numeric_limits<double>::infinity();
  for (const auto& row : table.rows) {
    if (row.did_not_converge) {
      ++table.excluded;
      continue;
    }
    best_r = std::min(best_r, row.median_rounds);
    best_c = std::min(best_c, row.median_cost);
  }
  for (const auto& row : table.rows) {
    if (row.did_not_converge) continue;
    if (row.median_rounds == best_r) table.best_rounds.push_back(row.label);
    if (row.median_cost == best_c) table.best_cost.push_back(row.label);
  }
  return table;
}

std::string format_comparison(const ComparisonTable& table) {
  std::ostringstream out;
  out << std::left << std::setw(18) << "strategy" << std::right << std::setw(6) << "runs" << std::setw(6) << "conv"
      << std::setw(12) << "med_rounds" << std::setw(12) << "mean_rounds" << std::setw(12) << "med_cost"
      << std::setw(12) << "mean_cost" << '\n';
  for (const auto& r : table.rows) {
    out << std::left << std::setw(18) << (r.did_not_converge ? r.label + "*" : r.label) << std::right << std::setw(6)
        << r.runs << std::setw(6) << r.converged_runs << std::setw(12) << r.median_rounds << std::setw(12)
        << r.mean_rounds << std::setw(12) << r.median_cost << std::setw(12) << r.mean_cost << '\n';
  }
  auto join = [](const std::vector<std::string>& v) {
    std::string s;
    for (const auto& x : v) s += (s.empty() ? "" : ", ") + x;
    return s.empty() ? std::string("-") : s;
  };
  out << "fewest rounds: " << join(table.best_rounds) << (table.best_rounds.size() > 1 ? " (tie)" : "") << '\n';
  out << "lowest cost:   " << join(table.best_cost) << (table.best_cost.size() > 1 ? " (tie)" : "") << '\n';
  if (table.excluded > 0) {
    out << "* did not converge; " << table.excluded << " strategy(ies) excluded from the ordering\n";
  }
  return out.str();
}

json to_json(const ComparisonTable& table) {
  auto num = [](double v) { return std::isfinite(v) ? json(v) : json(nullptr); };
  json rows = json::array();
  for (const auto& r : table.rows) {
    rows.push_back({{"strategy", r.label},
                    {"runs", r.runs},
                    {"converged_runs", r.converged_runs},
                    {"diverged_runs", r.diverged_runs},
                    {"median_rounds", num(r.median_rounds)},
                    {"mean_rounds", num(r.mean_rounds)},
                    {"median_cost", num(r.median_cost)},
                    {"mean_cost", num(r.mean_cost)},
                    {"did_not_converge", r.did_not_converge}});
  }
  return json{{"rows", std::move(rows)},
              {"best_rounds", table.best_rounds},
              {"best_cost", table.best_cost},
              {"rounds_tie", table.best_rounds.size() > 1},
              {"cost_tie", table.best_cost.size() > 1},
              {"excluded_from_ordering", table.excluded}};
}

std::string_view to_string(PlotKind kind) {
  switch (kind) {
    case PlotKind::RoundsCurve:
      return "rounds_curve";
    case PlotKind::CostCurve:
      return "cost_curve";
    case PlotKind::AgeHistogram:
      return "age_histogram";
    case PlotKind::SSweep:
      return "S_sweep";
  }
  return "unknown";
}

std::string emit_plot_data(std::span<const RunSummary> summaries, PlotKind kind) {
  std::string out = "strategy,run,round,metric,value\n";
  auto row = [&](const RunSummary& s, std::size_t round, const std::string& metric, const std::string& value) {
    out += s.label + ',' + std::to_string(s.run) + ',' + std::to_string(round) + ',' + metric + ',' + value + '\n';
  };
  for (const RunSummary& s : summaries) {
    for (const RoundRecord& r : s.trace) {
      switch (kind) {
        case PlotKind::RoundsCurve:
          if (r.accuracy) row(s, r.round, "accuracy", format_double(*r.accuracy));
          if (r.loss) row(s, r.round, "loss", format_double(*r.loss));
          if (r.squared_grad_norm) row(s, r.round, "squared_grad_norm", format_double(*r.squared_grad_norm));
          break;
        case PlotKind::CostCurve:
          row(s, r.round, "comm_cost", std::to_string(r.comm_cost));
          row(s, r.round, "cumulative_cost", std::to_string(r.cumulative_cost));
          break;
        case PlotKind::AgeHistogram: {
          std::map<std::size_t, std::size_t> counts;
          for (std::size_t a : r.ages) ++counts[a];
          for (const auto& [age, count] : counts) row(s, r.round, "age=" + std::to_string(age), std::to_string(count));
          break;
        }
        case PlotKind::SSweep:
          row(s, r.round, "comm_cost", std::to_string(r.comm_cost));
          break;
      }
    }
    if (kind == PlotKind::SSweep) {
      row(s, s.trace.size(), "rounds_to_target", std::to_string(s.rounds_to_target));
      row(s, s.trace.size(), "total_comm_cost", std::to_string(s.total_comm_cost));
    }
  }
  return out;
}

void emit_plot_data(std::span<const RunSummary> summaries, PlotKind kind, const std::filesystem::path& path) {
  write_file_atomic(path, emit_plot_data(summaries, kind));
}

namespace {

void apply_param(ExperimentConfig& cfg, const std::string& param, const std::string& value) {
  try {
    if (param == "S") {
      cfg.train.S = std::stoul(value);
    } else if (param == "tau_max") {
      const auto tau = std::stoul(value);
      for (auto& s : cfg.strategies) s.tau_max = tau;
    } else if (param == "eta") {
      cfg.train.eta = std::stod(value);
    } else if (param == "U") {
      cfg.train.U = std::stoul(value);
    } else if (param == "B") {
      cfg.train.B = std::stoul(value);
    } else {
      throw ConfigError("sweep: unsupported parameter " + param + " (use S, tau_max, eta, U or B)");
    }
  } catch (const std::logic_error&) {
    throw ConfigError("sweep: bad value \"" + value + "\" for " + param);
  }
}

}  // namespace

std::vector<SweepPoint> run_sweep(const ExperimentConfig& cfg, const std::string& param,
                                  const std::vector<std::string>& values, const RunOptions& options) {
  if (values.empty()) throw ConfigError("sweep: no values given");
  std::vector<SweepPoint> points;
  std::vector<RunSummary> all;
  for (const std::string& value : values) {
    SweepPoint point;
    point.value = value;
    point.config = cfg;
    apply_param(point.config, param, value);
    for (auto& s : point.config.strategies) s.label = s.display_label() + "@" + param + "=" + value;
    point.config.output_dir = (std::filesystem::path(cfg.output_dir) / (param + "=" + value)).string();
    point.config.validate();
    point.summaries = run_experiment(point.config, options);
    all.insert(all.end(), point.summaries.begin(), point.summaries.end());
    points.push_back(std::move(point));
  }
  if (options.write_files) {
    const std::filesystem::path dir(cfg.output_dir);
    ensure_directory(dir);
    emit_plot_data(all, PlotKind::SSweep, dir / "s_sweep.csv");
    write_file_atomic(dir / "sweep_summary.csv", summary_csv(all));
  }
  return points;
}

std::vector<ShardReport> inspect_partition(const ExperimentConfig& cfg, std::size_t run) {
  cfg.validate();
  const RunContext ctx = make_run_context(cfg, run);
  std::vector<ShardReport> out;
  for (const DataShard& shard : ctx.setup.shards) {
    out.push_back(ShardReport{shard.worker_id(), shard.size(), shard.weight(), shard.label_histogram()});
  }
  return out;
}

}  // namespace agesel

#include <doctest.h>

#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "agesel/config.hpp"
#include "agesel/error.hpp"
#include "agesel/experiment.hpp"

using namespace agesel;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("agesel_exp_test_" + name);
  fs::remove_all(p);
  return p;
}

ExperimentConfig tiny_config(const fs::path& out) {
  ExperimentConfig cfg;
  cfg.dataset.num_classes = 4;
  cfg.dataset.feature_dim = 5;
  cfg.dataset.samples_per_class = 30;
  cfg.dataset.spread = 0.5;
  cfg.model.kind = ModelKind::LogisticRegression;
  cfg.num_workers = 6;
  cfg.train.eta = 0.05;
  cfg.train.B = 8;
  cfg.train.U = 2;
  cfg.train.S = 2;
  cfg.train.J_max = 40;
  cfg.train.target_accuracy = 0.9;
  cfg.num_runs = 2;
  cfg.strategies = {{StrategyKind::AgeSel, 2, ""}, {StrategyKind::OCS, 2, ""}};
  cfg.output_dir = out.string();
  return cfg;
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

RunSummary fake_summary(const std::string& label, std::size_t run, std::size_t rounds, bool reached,
                        std::size_t per_round_cost = 10) {
  RunSummary s;
  s.label = label;
  s.run = run;
  s.rounds_to_target = rounds;
  s.reached_target = reached;
  s.total_comm_cost = rounds * per_round_cost;
  for (std::size_t j = 0; j < rounds; ++j) {
    RoundRecord r;
    r.round = j;
    r.comm_cost = per_round_cost;
    r.cumulative_cost = (j + 1) * per_round_cost;
    r.accuracy = 0.1 * static_cast<double>(j);
    r.loss = 1.0 / static_cast<double>(j + 1);
    r.squared_grad_norm = 0.5;
    r.ages = {0, 0, 0};
    s.trace.push_back(r);
  }
  return s;
}

}  // namespace

TEST_CASE("config defaults and JSON round trip") {
  const ExperimentConfig d;
  CHECK(d.num_workers == 20);
  CHECK(d.train.S == 5);
  CHECK(d.train.eta == 0.1);
  CHECK(d.train.B == 100);
  CHECK(d.train.U == 5);
  CHECK(d.train.target_accuracy == 0.8);
  CHECK(d.num_runs == 10);
  CHECK(d.strategies.size() == 4);
  CHECK(config_from_json(nlohmann::json::object()) == d);

  ExperimentConfig cfg = tiny_config("out_dir");
  cfg.partition.scheme = "explicit";
  cfg.partition.sizes = {20, 20, 20, 20, 20, 20};
  cfg.strategies.push_back({StrategyKind::AgeSel, 7, "AgeSel-7"});
  TheoryConstants k;
  k.L = 2.0;
  k.M = 6;
  k.S = 2;
  k.R = 3;
  cfg.theory = k;
  CHECK(config_from_json(to_json(cfg)) == cfg);

  const fs::path dir = scratch("cfg");
  fs::create_directories(dir);
  save_config(cfg, dir / "c.json");
  CHECK(load_config(dir / "c.json") == cfg);
  fs::remove_all(dir);
}

TEST_CASE("config errors") {
  CHECK_THROWS_AS(config_from_json(nlohmann::json{{"num_runz", 3}}), ConfigError);
  CHECK_THROWS_AS(config_from_json(nlohmann::json{{"train", {{"etaa", 0.1}}}}), ConfigError);
  CHECK_THROWS_AS(config_from_json(nlohmann::json{{"num_runs", "three"}}), ConfigError);
  CHECK_THROWS_AS(config_from_json(nlohmann::json{{"num_runs", 0}}), ConfigError);
  CHECK_THROWS_AS(config_from_json(nlohmann::json{{"strategies", nlohmann::json::array()}}), ConfigError);
  CHECK_THROWS_AS(config_from_json(nlohmann::json{{"strategies", {"Greedy"}}}), ConfigError);
  CHECK_THROWS_AS(config_from_json(nlohmann::json{{"strategies", {"AgeSel", "AgeSel"}}}), ConfigError);
  CHECK_THROWS_AS(config_from_json(nlohmann::json{{"partition", {{"scheme", "explicit"}, {"sizes", {1, 2}}}}}),
                  ConfigError);
  CHECK_THROWS_AS(config_from_json(nlohmann::json{{"train", {{"S", 30}}}}), ConfigError);
  CHECK_THROWS_AS(load_config("/nonexistent/agesel.json"), IoError);
  CHECK(config_from_json(nlohmann::json{{"strategies", {"RR", "OCS"}}}).strategies[0].kind == StrategyKind::RoundRobin);
}

TEST_CASE("run_experiment writes one trace per (strategy, run)") {
  const fs::path out = scratch("files");
  const ExperimentConfig cfg = tiny_config(out);
  const auto summaries = run_experiment(cfg);
  REQUIRE(summaries.size() == 4);
  CHECK(summaries[0].label == "AgeSel");
  CHECK(summaries[1].label == "OCS");
  CHECK(summaries[2].run == 1);
  CHECK(summaries[2].seed == cfg.base_seed + 1);
  std::size_t traces = 0;
  for (const auto& e : fs::directory_iterator(out)) traces += e.path().filename().string().starts_with("trace_");
  CHECK(traces == 4);
  for (const char* f : {"summary.csv", "report.json", "rounds_curve.csv", "cost_curve.csv", "age_histogram.csv"}) {
    CHECK(fs::exists(out / f));
  }
  CHECK(lines(read_file_text(out / "summary.csv")).size() == 5);
  const auto report = nlohmann::json::parse(read_file_text(out / "report.json"));
  CHECK(report.at("runs").size() == 4);
  CHECK(report.at("comparison").at("rows").size() == 2);

  // Trace files reproduce the summary.
  for (const RunSummary& s : summaries) {
    const auto trace = parse_trace_csv(read_file_text(out / trace_filename(s)));
    CHECK(trace == s.trace);
    std::size_t cost = 0;
    for (const auto& r : trace) cost += r.comm_cost;
    CHECK(trace.size() == s.rounds_to_target);
    CHECK(cost == s.total_comm_cost);
    if (s.reached_target) CHECK(*trace.back().accuracy >= cfg.train.target_accuracy);
  }
  fs::remove_all(out);
}

TEST_CASE("reruns and threaded runs produce byte-identical files") {
  const fs::path a = scratch("det_a"), b = scratch("det_b"), c = scratch("det_c");
  ExperimentConfig cfg = tiny_config(a);
  run_experiment(cfg);
  cfg.output_dir = b.string();
  run_experiment(cfg);
  cfg.output_dir = c.string();
  cfg.threads = 2;
  run_experiment(cfg);
  std::size_t compared = 0;
  for (const auto& e : fs::directory_iterator(a)) {
    const auto name = e.path().filename();
    if (name == "report.json") continue;  // embeds output_dir and threads
    CHECK(read_file_text(e.path()) == read_file_text(b / name));
    CHECK(read_file_text(e.path()) == read_file_text(c / name));
    ++compared;
  }
  CHECK(compared == 8);
  for (const auto& p : {a, b, c}) fs::remove_all(p);
}

TEST_CASE("strategies in one run index share data, partition and initialization") {
  const ExperimentConfig cfg = tiny_config("unused");
  const RunContext x = make_run_context(cfg, 1);
  const RunContext y = make_run_context(cfg, 1);
  CHECK(*x.train == *y.train);
  CHECK(x.plan == y.plan);
  CHECK(x.setup.initial_params == y.setup.initial_params);
  CHECK(x.plan.total() == x.train->size());
  for (std::size_t s : x.plan.sizes) CHECK(s >= cfg.train.B);
  const RunContext z = make_run_context(cfg, 2);
  CHECK_FALSE(*x.train == *z.train);

  const auto shards = inspect_partition(cfg, 1);
  REQUIRE(shards.size() == cfg.num_workers);
  for (std::size_t m = 0; m < shards.size(); ++m) CHECK(shards[m].size == x.plan.sizes[m]);
}

TEST_CASE("trace CSV round trip keeps every value") {
  const RunSummary s = fake_summary("X", 0, 3, false);
  RoundRecord extra;
  extra.round = 3;
  extra.comm_cost = 7;
  extra.cumulative_cost = 37;
  extra.loss = 0.1 + 0.2;
  extra.download_set = {1, 4, 9};
  extra.upload_set = {4};
  extra.ages = {3, 0, 12};
  std::vector<RoundRecord> recs = s.trace;
  recs.push_back(extra);
  CHECK(parse_trace_csv(trace_csv(recs)) == recs);
  CHECK_THROWS_AS(parse_trace_csv("bogus\n"), FormatError);
  CHECK(format_double(0.1) == "0.1");
  CHECK(format_double(1e-300) == "1e-300");
}

TEST_CASE("compare_report") {
  const std::vector<RunSummary> one = {fake_summary("A", 0, 12, true)};
  const ComparisonTable t1 = compare_report(one);
  REQUIRE(t1.rows.size() == 1);
  CHECK(t1.rows[0].median_rounds == 12);
  CHECK(t1.rows[0].mean_cost == 120);
  CHECK(t1.best_rounds == std::vector<std::string>{"A"});

  const std::vector<RunSummary> tie = {fake_summary("A", 0, 5, true), fake_summary("B", 0, 5, true)};
  const ComparisonTable t2 = compare_report(tie);
  CHECK(t2.best_rounds.size() == 2);
  CHECK(t2.best_cost.size() == 2);
  CHECK(format_comparison(t2).find("(tie)") != std::string::npos);

  const std::vector<RunSummary> dnf = {fake_summary("A", 0, 5, true), fake_summary("A", 1, 9, true),
                                       fake_summary("B", 0, 40, false), fake_summary("B", 1, 40, false)};
  const ComparisonTable t3 = compare_report(dnf);
  CHECK(t3.row("A").median_rounds == 7);
  CHECK(t3.row("B").did_not_converge);
  CHECK(t3.excluded == 1);
  CHECK(t3.best_rounds == std::vector<std::string>{"A"});
  CHECK(format_comparison(t3).find("did not converge") != std::string::npos);
  CHECK(to_json(t3).at("excluded_from_ordering") == 1);
  CHECK_THROWS_AS(compare_report(std::vector<RunSummary>{}), ConfigError);
}

TEST_CASE("plot data") {
  const std::vector<RunSummary> s = {fake_summary("A", 0, 6, true)};
  const auto rounds = lines(emit_plot_data(s, PlotKind::RoundsCurve));
  CHECK(rounds.front() == "strategy,run,round,metric,value");
  std::size_t acc = 0;
  for (const auto& l : rounds) acc += l.find(",accuracy,") != std::string::npos;
  CHECK(acc == 6);
  CHECK(rounds.size() == 1 + 3 * 6);

  const auto ages = lines(emit_plot_data(s, PlotKind::AgeHistogram));
  for (std::size_t i = 1; i < ages.size(); ++i) CHECK(ages[i].find(",age=0,3") != std::string::npos);

  std::vector<RunSummary> sweep = {fake_summary("AgeSel@S=5", 0, 4, true, 10),
                                   fake_summary("AgeSel@S=20", 0, 3, true, 40)};
  const auto sw = lines(emit_plot_data(sweep, PlotKind::SSweep));
  for (const auto& l : sw) {
    if (l.find(",comm_cost,") == std::string::npos) continue;
    if (l.starts_with("AgeSel@S=5,")) CHECK(l.ends_with(",10"));
    if (l.starts_with("AgeSel@S=20,")) CHECK(l.ends_with(",40"));
  }
}

TEST_CASE("full-participation run has all ages at zero") {
  const fs::path out = scratch("full");
  ExperimentConfig cfg = tiny_config(out);
  cfg.train.S = 6;
  cfg.num_runs = 1;
  cfg.train.J_max = 5;
  cfg.strategies = {{StrategyKind::AgeSel, 2, ""}};
  const auto summaries = run_experiment(cfg, RunOptions{false, true, nullptr});
  const auto ages = lines(emit_plot_data(summaries, PlotKind::AgeHistogram));
  for (std::size_t i = 1; i < ages.size(); ++i) CHECK(ages[i].ends_with(",age=0,6"));
  CHECK_FALSE(fs::exists(out));
}

TEST_CASE("run_sweep over S") {
  const fs::path out = scratch("sweep");
  ExperimentConfig cfg = tiny_config(out);
  cfg.num_runs = 1;
  cfg.strategies = {{StrategyKind::AgeSel, 2, ""}};
  const auto points = run_sweep(cfg, "S", {"2", "6"});
  REQUIRE(points.size() == 2);
  CHECK(points[0].config.train.S == 2);
  CHECK(points[1].summaries[0].label == "AgeSel@S=6");
  for (const auto& p : points) {
    for (const auto& s : p.summaries) {
      for (const auto& r : s.trace) CHECK(r.comm_cost == 2 * p.config.train.S);
    }
  }
  CHECK(fs::exists(out / "S=2" / "summary.csv"));
  CHECK(fs::exists(out / "s_sweep.csv"));
  CHECK(fs::exists(out / "sweep_summary.csv"));
  CHECK_THROWS_AS(run_sweep(cfg, "gamma", {"1"}), ConfigError);
  CHECK_THROWS_AS(run_sweep(cfg, "S", {"x"}), ConfigError);
  fs::remove_all(out);
}

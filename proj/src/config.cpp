#include "agesel/config.hpp"

#include <fstream>
#include <initializer_list>
#include <set>

#include "agesel/error.hpp"

namespace agesel {

using nlohmann::json;

std::string StrategyEntry::display_label() const {
  return label.empty() ? std::string(to_string(kind)) : label;
}

void ExperimentConfig::validate() const {
  if (num_runs < 1) throw ConfigError("config: num_runs must be at least 1");
  if (strategies.empty()) throw ConfigError("config: strategy list is empty");
  if (num_workers < 1) throw ConfigError("config: num_workers must be at least 1");
  if (threads < 1) throw ConfigError("config: threads must be at least 1");
  train.validate();
  if (train.S > num_workers) throw ConfigError("config: S exceeds the number of workers");
  if (dataset.source != "synthetic" && dataset.source != "idx") {
    throw ConfigError("config: dataset.source must be \"synthetic\" or \"idx\"");
  }
  if (dataset.source == "synthetic") {
    if (dataset.num_classes < 2 || dataset.feature_dim < 1 || dataset.samples_per_class < 1) {
      throw ConfigError("config: synthetic dataset needs num_classes >= 2 and positive sizes");
    }
    if (!(dataset.spread >= 0.0)) throw ConfigError("config: spread must be non-negative");
    if (!(dataset.eval_fraction > 0.0)) throw ConfigError("config: eval_fraction must be positive");
  } else if (dataset.train_images.empty() || dataset.train_labels.empty()) {
    throw ConfigError("config: idx dataset needs train_images and train_labels");
  }
  if (partition.scheme == "explicit") {
    if (partition.sizes.size() != num_workers) {
      throw ConfigError("config: explicit partition needs one size per worker");
    }
    if (dataset.source == "synthetic") {
      std::size_t total = 0;
      for (std::size_t s : partition.sizes) total += s;
      if (total != dataset.num_classes * dataset.samples_per_class) {
        throw ConfigError("config: explicit partition sizes must sum to N");
      }
    }
  } else if (partition.scheme == "dirichlet") {
    if (!(partition.alpha > 0.0)) throw ConfigError("config: partition.alpha must be positive");
  } else if (partition.scheme != "equal") {
    throw ConfigError("config: partition.scheme must be dirichlet, equal or explicit");
  }
  std::set<std::string> labels;
  for (const auto& s : strategies) {
    if (s.kind == StrategyKind::AgeSel && s.tau_max < 1) throw ConfigError("config: tau_max must be at least 1");
    if (!labels.insert(s.display_label()).second) {
      throw ConfigError("config: duplicate strategy label " + s.display_label());
    }
  }
  if (theory) theory->validate();
}

StrategyConfig ExperimentConfig::strategy_config(const StrategyEntry& entry) const {
  return StrategyConfig{entry.kind, train.S, entry.tau_max};
}

namespace {

void check_keys(const json& j, const char* where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(std::string("config: ") + where + " must be an object");
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw ConfigError(std::string("config: unknown key \"") + key + "\" in " + where);
  }
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

json to_json(const TheoryConstants& k) {
  return json{{"L", k.L},   {"sigma_L", k.sigma_L}, {"sigma_G", k.sigma_G}, {"eta", k.eta},
              {"U", k.U},   {"S", k.S},             {"B", k.B},             {"M", k.M},
              {"R", k.R},   {"L_star", k.L_star},   {"L0", k.L0}};
}

TheoryConstants theory_from_json(const json& j) {
  check_keys(j, "theory", {"L", "sigma_L", "sigma_G", "eta", "U", "S", "B", "M", "R", "L_star", "L0"});
  TheoryConstants k;
  read(j, "L", k.L);
  read(j, "sigma_L", k.sigma_L);
  read(j, "sigma_G", k.sigma_G);
  read(j, "eta", k.eta);
  read(j, "U", k.U);
  read(j, "S", k.S);
  read(j, "B", k.B);
  read(j, "M", k.M);
  read(j, "R", k.R);
  read(j, "L_star", k.L_star);
  read(j, "L0", k.L0);
  return k;
}

json to_json(const ExperimentConfig& cfg) {
  json dataset{{"source", cfg.dataset.source},
               {"num_classes", cfg.dataset.num_classes},
               {"feature_dim", cfg.dataset.feature_dim},
               {"samples_per_class", cfg.dataset.samples_per_class},
               {"spread", cfg.dataset.spread},
               {"eval_fraction", cfg.dataset.eval_fraction},
               {"train_images", cfg.dataset.train_images},
               {"train_labels", cfg.dataset.train_labels},
               {"test_images", cfg.dataset.test_images},
               {"test_labels", cfg.dataset.test_labels}};
  if (cfg.dataset.idx_num_classes) dataset["idx_num_classes"] = *cfg.dataset.idx_num_classes;

  json strategies = json::array();
  for (const auto& s : cfg.strategies) {
    json e{{"kind", std::string(to_string(s.kind))}, {"tau_max", s.tau_max}};
    if (!s.label.empty()) e["label"] = s.label;
    strategies.push_back(std::move(e));
  }

  json out{
      {"dataset", std::move(dataset)},
      {"partition", {{"scheme", cfg.partition.scheme}, {"alpha", cfg.partition.alpha}, {"sizes", cfg.partition.sizes}}},
      {"model", {{"kind", std::string(to_string(cfg.model.kind))}, {"hidden_dim", cfg.model.hidden_dim}}},
      {"train",
       {{"eta", cfg.train.eta},
        {"B", cfg.train.B},
        {"U", cfg.train.U},
        {"S", cfg.train.S},
        {"J_max", cfg.train.J_max},
        {"target_accuracy", cfg.train.target_accuracy},
        {"eval_period", cfg.train.eval_period},
        {"track_grad_norm", cfg.train.track_grad_norm}}},
      {"num_workers", cfg.num_workers},
      {"strategies", std::move(strategies)},
      {"num_runs", cfg.num_runs},
      {"base_seed", cfg.base_seed},
      {"output_dir", cfg.output_dir},
      {"threads", cfg.threads},
  };
  if (cfg.theory) out["theory"] = to_json(*cfg.theory);
  return out;
}

ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig cfg;
  try {
    check_keys(j, "config",
               {"dataset", "partition", "model", "train", "num_workers", "strategies", "num_runs", "base_seed",
                "output_dir", "threads", "theory"});
    if (j.contains("dataset")) {
      const json& d = j.at("dataset");
      check_keys(d, "dataset",
                 {"source", "num_classes", "feature_dim", "samples_per_class", "spread", "eval_fraction",
                  "train_images", "train_labels", "test_images", "test_labels", "idx_num_classes"});
      read(d, "source", cfg.dataset.source);
      read(d, "num_classes", cfg.dataset.num_classes);
      read(d, "feature_dim", cfg.dataset.feature_dim);
      read(d, "samples_per_class", cfg.dataset.samples_per_class);
      read(d, "spread", cfg.dataset.spread);
      read(d, "eval_fraction", cfg.dataset.eval_fraction);
      read(d, "train_images", cfg.dataset.train_images);
      read(d, "train_labels", cfg.dataset.train_labels);
      read(d, "test_images", cfg.dataset.test_images);
      read(d, "test_labels", cfg.dataset.test_labels);
      if (d.contains("idx_num_classes")) cfg.dataset.idx_num_classes = d.at("idx_num_classes").get<std::size_t>();
    }
    if (j.contains("partition")) {
      const json& p = j.at("partition");
      check_keys(p, "partition", {"scheme", "alpha", "sizes"});
      read(p, "scheme", cfg.partition.scheme);
      read(p, "alpha", cfg.partition.alpha);
      read(p, "sizes", cfg.partition.sizes);
    }
    if (j.contains("model")) {
      const json& m = j.at("model");
      check_keys(m, "model", {"kind", "hidden_dim"});
      if (m.contains("kind")) cfg.model.kind = model_kind_from_string(m.at("kind").get<std::string>());
      read(m, "hidden_dim", cfg.model.hidden_dim);
    }
    if (j.contains("train")) {
      const json& t = j.at("train");
      check_keys(t, "train", {"eta", "B", "U", "S", "J_max", "target_accuracy", "eval_period", "track_grad_norm"});
      read(t, "eta", cfg.train.eta);
      read(t, "B", cfg.train.B);
      read(t, "U", cfg.train.U);
      read(t, "S", cfg.train.S);
      read(t, "J_max", cfg.train.J_max);
      read(t, "target_accuracy", cfg.train.target_accuracy);
      read(t, "eval_period", cfg.train.eval_period);
      read(t, "track_grad_norm", cfg.train.track_grad_norm);
    }
    read(j, "num_workers", cfg.num_workers);
    if (j.contains("strategies")) {
      cfg.strategies.clear();
      for (const json& s : j.at("strategies")) {
        StrategyEntry e;
        if (s.is_string()) {
          e.kind = strategy_kind_from_string(s.get<std::string>());
        } else {
          check_keys(s, "strategy", {"kind", "tau_max", "label"});
          e.kind = strategy_kind_from_string(s.at("kind").get<std::string>());
          read(s, "tau_max", e.tau_max);
          read(s, "label", e.label);
        }
        cfg.strategies.push_back(std::move(e));
      }
    }
    read(j, "num_runs", cfg.num_runs);
    read(j, "base_seed", cfg.base_seed);
    read(j, "output_dir", cfg.output_dir);
    read(j, "threads", cfg.threads);
    if (j.contains("theory")) cfg.theory = theory_from_json(j.at("theory"));
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

void save_config(const ExperimentConfig& cfg, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << to_json(cfg).dump(2) << '\n';
  if (!out) throw IoError("error writing " + path.string());
}

}  // namespace agesel

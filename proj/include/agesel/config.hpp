#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "agesel/engine.hpp"
#include "agesel/model.hpp"
#include "agesel/selection.hpp"
#include "agesel/theory.hpp"

namespace agesel {

struct DatasetConfig {
  std::string source = "synthetic";  // "synthetic" or "idx"
  std::size_t num_classes = 10;
  std::size_t feature_dim = 20;
  std::size_t samples_per_class = 200;
  double spread = 0.5;
  double eval_fraction = 0.2;  // eval samples per class = fraction * samples_per_class
  // IDX files (source == "idx").
  std::string train_images;
  std::string train_labels;
  std::string test_images;
  std::string test_labels;
  std::optional<std::size_t> idx_num_classes;

  friend bool operator==(const DatasetConfig&, const DatasetConfig&) = default;
};

struct PartitionConfig {
  std::string scheme = "dirichlet";  // "dirichlet", "equal" or "explicit"
  double alpha = 1.0;
  std::vector<std::size_t> sizes;  // scheme == "explicit"

  friend bool operator==(const PartitionConfig&, const PartitionConfig&) = default;
};

struct ModelConfig {
  ModelKind kind = ModelKind::TwoLayerFC;
  std::size_t hidden_dim = 64;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct StrategyEntry {
  StrategyKind kind = StrategyKind::AgeSel;
  std::size_t tau_max = 4;
  std::string label;  // defaults to the strategy name

  std::string display_label() const;
  friend bool operator==(const StrategyEntry&, const StrategyEntry&) = default;
};

// Defaults: M = 20 workers, S = 5, eta = 0.1,
// B = 100, U = 5, tau_max = 4, target accuracy 0.8, 10 Monte Carlo runs,
// two-layer fully connected model, label-sorted Dirichlet(1) partition.
struct ExperimentConfig {
  DatasetConfig dataset;
  PartitionConfig partition;
  ModelConfig model;
  TrainConfig train;
  std::size_t num_workers = 20;
  std::vector<StrategyEntry> strategies = {
      {StrategyKind::FedAvg, 4, ""},
      {StrategyKind::OCS, 4, ""},
      {StrategyKind::RoundRobin, 4, ""},
      {StrategyKind::AgeSel, 4, ""},
  };
  std::size_t num_runs = 10;
  std::uint64_t base_seed = 0;
  std::string output_dir = "out";
  std::size_t threads = 1;
  std::optional<TheoryConstants> theory;

  void validate() const;
  StrategyConfig strategy_config(const StrategyEntry& entry) const;
  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

nlohmann::json to_json(const ExperimentConfig& cfg);
nlohmann::json to_json(const TheoryConstants& k);
// Missing keys take their defaults; unknown keys are rejected.
ExperimentConfig config_from_json(const nlohmann::json& j);
TheoryConstants theory_from_json(const nlohmann::json& j);

ExperimentConfig load_config(const std::filesystem::path& path);
void save_config(const ExperimentConfig& cfg, const std::filesystem::path& path);

}  // namespace agesel

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "agesel/data.hpp"
#include "agesel/model.hpp"
#include "agesel/random.hpp"
#include "agesel/selection.hpp"

namespace agesel {

struct TrainConfig {
  double eta = 0.1;
  std::size_t B = 100;
  std::size_t U = 5;
  std::size_t S = 5;
  std::size_t J_max = 2000;
  double target_accuracy = 0.8;
  // Loss and accuracy are evaluated every eval_period rounds (and on the last).
  std::size_t eval_period = 1;
  // Compute the full-data squared gradient norm of the broadcast model each round.
  bool track_grad_norm = true;

  void validate() const;
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct LocalUpdateResult {
  int worker_id = 0;
  ParamVector final_params;
  double update_norm = 0.0;  // ||theta_m^{j,U} - theta^j||
};

// One row of the training trace for round j.
//
// loss and accuracy describe the aggregated model theta^{j+1}; they are unset
// on rounds skipped by eval_period. squared_grad_norm is ||grad L(theta^j)||^2
// of the model broadcast at the start of round j, the quantity averaged on the
// left side of the convergence bound. ages are the ages after this round's update.
struct RoundRecord {
  std::size_t round = 0;
  std::size_t comm_cost = 0;
  std::size_t cumulative_cost = 0;
  std::optional<double> loss;
  std::optional<double> accuracy;
  std::optional<double> squared_grad_norm;
  std::vector<std::size_t> ages;
  std::size_t num_infrequent = 0;
  std::size_t num_age_selected = 0;
  WorkerSet download_set;
  WorkerSet upload_set;

  friend bool operator==(const RoundRecord&, const RoundRecord&) = default;
};

// Everything a training run needs besides the strategy and hyper-parameters.
struct TrainingSetup {
  ModelSpec spec;
  std::vector<DataShard> shards;
  std::vector<Sample> eval_set;
  ParamVector initial_params;

  std::vector<double> weights() const;
};

struct TrainingResult {
  std::vector<RoundRecord> records;
  ParamVector final_params;
  bool reached_target = false;
};

struct GlobalMetrics {
  double loss = 0.0;
  double accuracy = 0.0;
  double squared_grad_norm = 0.0;
};

// U local steps of minibatch SGD from global_params. Throws DivergenceError
// (tagged with `round`) if the parameters become non-finite.
LocalUpdateResult local_sgd(const DataShard& shard, const ParamVector& global_params, const ModelSpec& spec,
                            const TrainConfig& cfg, RandomStream& rng, std::size_t round = 0);

// Unweighted mean of the S uploaded models.
ParamVector aggregate(std::span<const LocalUpdateResult> updates, std::size_t S);

// Mean weighted by the dataset weights renormalized over the uploads (used for
// round robin).
ParamVector aggregate_weighted(std::span<const LocalUpdateResult> updates, std::size_t S,
                               std::span<const double> weights);

// Weighted training loss sum_m p_m L_m, full training-set gradient norm, and
// accuracy on eval_set (the training samples when eval_set is empty).
GlobalMetrics global_metrics(const ParamVector& params, const ModelSpec& spec, std::span<const DataShard> shards,
                             std::span<const Sample> eval_set);

double weighted_loss(const ParamVector& params, const ModelSpec& spec, std::span<const DataShard> shards);
ParamVector full_gradient(const ParamVector& params, const ModelSpec& spec, std::span<const DataShard> shards);

// Substream used by worker `worker_id` in round `round`. Independent of which
// other workers were selected.
RandomStream local_stream(std::uint64_t seed, std::size_t round, int worker_id);
RandomStream selection_stream(std::uint64_t seed, std::size_t round);

// Round loop: select, broadcast, local SGD, upload, aggregate, age update,
// metrics. Stops at the first round whose accuracy reaches the target, or
// after J_max rounds.
TrainingResult run_training(const TrainingSetup& setup, const StrategyConfig& strategy, const TrainConfig& cfg,
                            std::uint64_t seed);

// Convenience overload: label-sorted partition of `dataset` under `plan`,
// Glorot init from `seed`.
TrainingResult run_training(const GlobalDataset& dataset, const PartitionPlan& plan, const ModelSpec& spec,
                            const StrategyConfig& strategy, const TrainConfig& cfg, std::uint64_t seed,
                            std::span<const Sample> eval_set = {});

}  // namespace agesel

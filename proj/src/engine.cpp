#include "agesel/engine.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "agesel/error.hpp"

namespace agesel {

void TrainConfig::validate() const {
  if (!(eta >= 0.0) || !std::isfinite(eta)) throw ConfigError("train: eta must be finite and non-negative");
  if (B < 1) throw ConfigError("train: B must be at least 1");
  if (U < 1) throw ConfigError("train: U must be at least 1");
  if (S < 1) throw ConfigError("train: S must be at least 1");
  if (!(target_accuracy > 0.0 && target_accuracy <= 1.0)) {
    throw ConfigError("train: target_accuracy must lie in (0, 1]");
  }
  if (eval_period < 1) throw ConfigError("train: eval_period must be at least 1");
}

std::vector<double> TrainingSetup::weights() const {
  std::vector<double> w;
  w.reserve(shards.size());
  for (const DataShard& s : shards) w.push_back(s.weight());
  return w;
}

RandomStream local_stream(std::uint64_t seed, std::size_t round, int worker_id) {
  return RandomStream(seed).derive(StreamPurpose::kLocalSgd, {static_cast<std::uint64_t>(round),
                                                              static_cast<std::uint64_t>(worker_id)});
}

RandomStream selection_stream(std::uint64_t seed, std::size_t round) {
  return RandomStream(seed).derive(StreamPurpose::kSelection, {static_cast<std::uint64_t>(round)});
}

LocalUpdateResult local_sgd(const DataShard& shard, const ParamVector& global_params, const ModelSpec& spec,
                            const TrainConfig& cfg, RandomStream& rng, std::size_t round) {
  if (global_params.size() != spec.param_count()) throw ConfigError("local_sgd: parameter dimension mismatch");
  ParamVector params = global_params;
  ParamVector grad;
  for (std::size_t u = 0; u < cfg.U; ++u) {
    const auto batch = sample_minibatch(shard, cfg.B, rng);
    try {
      loss_and_gradient(params, spec, batch, grad);
    } catch (const NumericError&) {
      throw DivergenceError(round, shard.worker_id());
    }
    params.axpy(-cfg.eta, grad);
    if (!params.all_finite()) throw DivergenceError(round, shard.worker_id());
  }
  LocalUpdateResult result;
  result.worker_id = shard.worker_id();
  result.update_norm = distance(params, global_params);
  result.final_params = std::move(params);
  if (!std::isfinite(result.update_norm)) throw DivergenceError(round, shard.worker_id());
  return result;
}

ParamVector aggregate(std::span<const LocalUpdateResult> updates, std::size_t S) {
  if (updates.size() != S || S == 0) {
    throw ConfigError("aggregate: expected " + std::to_string(S) + " uploads, got " + std::to_string(updates.size()));
  }
  ParamVector out(updates.front().final_params.size(), 0.0);
  for (const auto& u : updates) out.axpy(1.0, u.final_params);
  for (double& v : out.values()) v /= static_cast<double>(S);
  return out;
}

ParamVector aggregate_weighted(std::span<const LocalUpdateResult> updates, std::size_t S,
                               std::span<const double> weights) {
  if (updates.size() != S || S == 0) {
    throw ConfigError("aggregate: expected " + std::to_string(S) + " uploads, got " + std::to_string(updates.size()));
  }
  double total = 0.0;
  for (const auto& u : updates) total += weights[static_cast<std::size_t>(u.worker_id)];
  if (!(total > 0.0)) throw ConfigError("aggregate: upload weights sum to zero");
  ParamVector out(updates.front().final_params.size(), 0.0);
  for (const auto& u : updates) out.axpy(weights[static_cast<std::size_t>(u.worker_id)] / total, u.final_params);
  return out;
}

namespace {

// Weighted loss and full-data gradient in one pass over the shards.
double loss_and_full_gradient(const ParamVector& params, const ModelSpec& spec, std::span<const DataShard> shards,
                              ParamVector& grad) {
  grad = ParamVector(params.size(), 0.0);
  double total = 0.0;
  ParamVector shard_grad;
  for (const DataShard& shard : shards) {
    const auto samples = shard.samples();
    total += shard.weight() * loss_and_gradient(params, spec, samples, shard_grad);
    grad.axpy(shard.weight(), shard_grad);
  }
  return total;
}

}  // namespace

double weighted_loss(const ParamVector& params, const ModelSpec& spec, std::span<const DataShard> shards) {
  double total = 0.0;
  for (const DataShard& shard : shards) {
    const auto samples = shard.samples();
    total += shard.weight() * loss(params, spec, samples);
  }
  return total;
}

ParamVector full_gradient(const ParamVector& params, const ModelSpec& spec, std::span<const DataShard> shards) {
  ParamVector grad;
  loss_and_full_gradient(params, spec, shards, grad);
  return grad;
}

GlobalMetrics global_metrics(const ParamVector& params, const ModelSpec& spec, std::span<const DataShard> shards,
                             std::span<const Sample> eval_set) {
  GlobalMetrics m;
  ParamVector grad;
  m.loss = loss_and_full_gradient(params, spec, shards, grad);
  m.squared_grad_norm = grad.squared_norm();
  if (eval_set.empty()) {
    const auto train = concat_samples(shards);
    m.accuracy = accuracy(params, spec, train);
  } else {
    m.accuracy = accuracy(params, spec, eval_set);
  }
  return m;
}

TrainingResult run_training(const TrainingSetup& setup, const StrategyConfig& strategy, const TrainConfig& cfg,
                            std::uint64_t seed) {
  cfg.validate();
  setup.spec.validate();
  if (setup.shards.empty()) throw ConfigError("run_training: zero selectable workers");
  if (strategy.S != cfg.S) {
    throw ConfigError("run_training: strategy S (" + std::to_string(strategy.S) + ") differs from train S (" +
                      std::to_string(cfg.S) + ")");
  }
  if (setup.initial_params.size() != setup.spec.param_count()) {
    throw ConfigError("run_training: initial parameters do not match the model");
  }
  Selector selector(strategy, setup.weights());
  const std::vector<Sample> train_samples = setup.eval_set.empty() ? concat_samples(setup.shards) : std::vector<Sample>{};
  const std::span<const Sample> eval_set = setup.eval_set.empty() ? std::span<const Sample>(train_samples)
                                                                  : std::span<const Sample>(setup.eval_set);

  TrainingResult result;
  result.final_params = setup.initial_params;
  ParamVector& params = result.final_params;
  std::size_t cumulative = 0;
  std::optional<double> carried_grad_norm;  // ||grad L(theta^j)||^2 computed at the end of round j-1

  for (std::size_t j = 0; j < cfg.J_max; ++j) {
    RoundRecord rec;
    rec.round = j;
    if (cfg.track_grad_norm) {
      if (!carried_grad_norm) carried_grad_norm = full_gradient(params, setup.spec, setup.shards).squared_norm();
      rec.squared_grad_norm = carried_grad_norm;
    }
    carried_grad_norm.reset();

    RandomStream sel_rng = selection_stream(seed, j);
    SelectionOutcome outcome = selector.begin_round(j, sel_rng);

    std::vector<LocalUpdateResult> updates;
    updates.reserve(outcome.download_set.size());
    std::map<int, double> norms;
    for (int m : outcome.download_set) {
      RandomStream rng = local_stream(seed, j, m);
      updates.push_back(local_sgd(setup.shards[static_cast<std::size_t>(m)], params, setup.spec, cfg, rng, j));
      norms[m] = updates.back().update_norm;
    }
    selector.finish_round(outcome, norms);

    std::vector<LocalUpdateResult> uploaded;
    uploaded.reserve(outcome.upload_set.size());
    for (auto& u : updates) {
      if (std::binary_search(outcome.upload_set.begin(), outcome.upload_set.end(), u.worker_id)) {
        uploaded.push_back(std::move(u));
      }
    }
    params = strategy.kind == StrategyKind::RoundRobin ? aggregate_weighted(uploaded, strategy.S, selector.weights())
                                                       : aggregate(uploaded, strategy.S);
    if (!params.all_finite()) throw DivergenceError(j, -1);

    rec.comm_cost = outcome.download_set.size() + strategy.S;
    cumulative += rec.comm_cost;
    rec.cumulative_cost = cumulative;
    rec.ages = selector.ages().ages;
    rec.num_infrequent = outcome.num_infrequent;
    rec.num_age_selected = outcome.num_age_selected;
    rec.download_set = std::move(outcome.download_set);
    rec.upload_set = std::move(outcome.upload_set);

    const bool evaluate = (j + 1) % cfg.eval_period == 0 || j + 1 == cfg.J_max;
    if (evaluate) {
      ParamVector grad;
      try {
        rec.loss = loss_and_full_gradient(params, setup.spec, setup.shards, grad);
      } catch (const NumericError&) {
        throw DivergenceError(j, -1);
      }
      if (cfg.track_grad_norm) carried_grad_norm = grad.squared_norm();
      rec.accuracy = accuracy(params, setup.spec, eval_set);
    }
    const bool done = rec.accuracy && *rec.accuracy >= cfg.target_accuracy;
    result.records.push_back(std::move(rec));
    if (done) {
      result.reached_target = true;
      break;
    }
  }
  return result;
}

TrainingResult run_training(const GlobalDataset& dataset, const PartitionPlan& plan, const ModelSpec& spec,
                            const StrategyConfig& strategy, const TrainConfig& cfg, std::uint64_t seed,
                            std::span<const Sample> eval_set) {
  TrainingSetup setup;
  setup.spec = spec;
  setup.shards = partition_label_sorted(dataset, plan);
  setup.eval_set.assign(eval_set.begin(), eval_set.end());
  setup.initial_params = init_params(spec, seed);
  return run_training(setup, strategy, cfg, seed);
}

}  // namespace agesel

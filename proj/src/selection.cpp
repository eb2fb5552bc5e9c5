#include "agesel/selection.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "agesel/error.hpp"

namespace agesel {

std::string_view to_string(StrategyKind kind) {
  switch (kind) {
    case StrategyKind::AgeSel:
      return "AgeSel";
    case StrategyKind::FedAvg:
      return "FedAvg";
    case StrategyKind::OCS:
      return "OCS";
    case StrategyKind::RoundRobin:
      return "RR";
  }
  return "unknown";
}

StrategyKind strategy_kind_from_string(std::string_view name) {
  if (name == "AgeSel" || name == "agesel") return StrategyKind::AgeSel;
  if (name == "FedAvg" || name == "fedavg") return StrategyKind::FedAvg;
  if (name == "OCS" || name == "ocs") return StrategyKind::OCS;
  if (name == "RR" || name == "rr" || name == "RoundRobin" || name == "round_robin") return StrategyKind::RoundRobin;
  throw ConfigError("unknown strategy: " + std::string(name));
}

void StrategyConfig::validate(std::size_t num_workers) const {
  if (num_workers == 0) throw ConfigError("selection: no workers");
  if (S < 1 || S > num_workers) {
    throw ConfigError("selection: S = " + std::to_string(S) + " must lie in [1, M = " + std::to_string(num_workers) +
                      "]");
  }
  if (kind == StrategyKind::AgeSel && tau_max < 1) throw ConfigError("selection: tau_max must be at least 1");
}

std::size_t AgeVector::max_age() const { return ages.empty() ? 0 : *std::max_element(ages.begin(), ages.end()); }

WorkerSet weighted_sample_without_replacement(std::span<const int> candidates, std::span<const double> weights,
                                              std::size_t count, RandomStream& rng) {
  if (count > candidates.size()) throw ConfigError("weighted sampling: more draws than candidates");
  std::vector<int> pool(candidates.begin(), candidates.end());
  std::vector<double> w;
  w.reserve(pool.size());
  for (int m : pool) {
    const double x = weights[static_cast<std::size_t>(m)];
    if (!(x > 0.0) || !std::isfinite(x)) throw ConfigError("weighted sampling: weights must be positive");
    w.push_back(x);
  }
  WorkerSet picked;
  picked.reserve(count);
  for (std::size_t draw = 0; draw < count; ++draw) {
    const double total = std::accumulate(w.begin(), w.end(), 0.0);
    const double target = rng.uniform01() * total;
    std::size_t idx = pool.size() - 1;
    double cum = 0.0;
    for (std::size_t i = 0; i < pool.size(); ++i) {
      cum += w[i];
      if (target < cum) {
        idx = i;
        break;
      }
    }
    picked.push_back(pool[idx]);
    pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(idx));
    w.erase(w.begin() + static_cast<std::ptrdiff_t>(idx));
  }
  std::sort(picked.begin(), picked.end());
  return picked;
}

namespace {

void check_inputs(const StrategyConfig& strategy, const AgeVector& ages, std::span<const double> weights) {
  if (weights.empty()) throw ConfigError("selection: empty weight vector");
  strategy.validate(weights.size());
  if (ages.ages.size() != weights.size()) throw ConfigError("selection: age vector and weights differ in length");
}

WorkerSet select_agesel(const StrategyConfig& strategy, const AgeVector& ages, std::span<const double> weights,
                        RandomStream& rng) {
  const std::size_t M = weights.size();
  std::vector<int> infrequent;
  std::vector<int> fresh;
  for (std::size_t m = 0; m < M; ++m) {
    (ages.ages[m] >= ages.tau_max ? infrequent : fresh).push_back(static_cast<int>(m));
  }
  if (infrequent.size() >= strategy.S) {
    // Oldest first; equal ages prefer the larger dataset, then the lower id.
    std::sort(infrequent.begin(), infrequent.end(), [&](int a, int b) {
      const auto ua = static_cast<std::size_t>(a);
      const auto ub = static_cast<std::size_t>(b);
      if (ages.ages[ua] != ages.ages[ub]) return ages.ages[ua] > ages.ages[ub];
      if (weights[ua] != weights[ub]) return weights[ua] > weights[ub];
      return a < b;
    });
    WorkerSet picked(infrequent.begin(), infrequent.begin() + static_cast<std::ptrdiff_t>(strategy.S));
    std::sort(picked.begin(), picked.end());
    return picked;
  }
  WorkerSet picked = weighted_sample_without_replacement(fresh, weights, strategy.S - infrequent.size(), rng);
  picked.insert(picked.end(), infrequent.begin(), infrequent.end());
  std::sort(picked.begin(), picked.end());
  return picked;
}

}  // namespace

WorkerSet select_download(const StrategyConfig& strategy, const AgeVector& ages, std::span<const double> weights,
                          std::size_t round, RandomStream& rng) {
  check_inputs(strategy, ages, weights);
  const std::size_t M = weights.size();
  switch (strategy.kind) {
    case StrategyKind::AgeSel:
      return select_agesel(strategy, ages, weights, rng);
    case StrategyKind::FedAvg: {
      std::vector<int> all(M);
      std::iota(all.begin(), all.end(), 0);
      return weighted_sample_without_replacement(all, weights, strategy.S, rng);
    }
    case StrategyKind::OCS: {
      WorkerSet all(M);
      std::iota(all.begin(), all.end(), 0);
      return all;
    }
    case StrategyKind::RoundRobin: {
      WorkerSet picked;
      for (std::size_t i = 0; i < strategy.S; ++i) {
        picked.push_back(static_cast<int>((round * strategy.S + i) % M));
      }
      std::sort(picked.begin(), picked.end());
      return picked;
    }
  }
  throw ConfigError("selection: unknown strategy");
}

WorkerSet select_upload(const StrategyConfig& strategy, const WorkerSet& download_set,
                        const std::map<int, double>& update_norms) {
  for (int m : download_set) {
    if (!update_norms.contains(m)) throw ConfigError("selection: missing update norm for worker " + std::to_string(m));
  }
  if (strategy.kind != StrategyKind::OCS) return download_set;
  if (strategy.S > download_set.size()) throw ConfigError("selection: S exceeds the download set");
  WorkerSet ranked = download_set;
  std::stable_sort(ranked.begin(), ranked.end(), [&](int a, int b) {
    const double na = update_norms.at(a);
    const double nb = update_norms.at(b);
    if (na != nb) return na > nb;
    return a < b;
  });
  ranked.resize(strategy.S);
  std::sort(ranked.begin(), ranked.end());
  return ranked;
}

AgeVector update_ages(const AgeVector& ages, const WorkerSet& upload_set) {
  AgeVector next = ages;
  std::vector<bool> selected(ages.ages.size(), false);
  for (int m : upload_set) {
    if (m < 0 || static_cast<std::size_t>(m) >= ages.ages.size()) {
      throw ConfigError("update_ages: worker id " + std::to_string(m) + " out of range");
    }
    selected[static_cast<std::size_t>(m)] = true;
  }
  for (std::size_t m = 0; m < next.ages.size(); ++m) {
    next.ages[m] = selected[m] ? 0 : next.ages[m] + 1;
  }
  return next;
}

std::pair<std::size_t, std::size_t> count_age_selected(const StrategyConfig& strategy, const AgeVector& ages,
                                                       std::size_t S) {
  if (strategy.kind != StrategyKind::AgeSel) return {0, 0};
  const auto infrequent = static_cast<std::size_t>(
      std::count_if(ages.ages.begin(), ages.ages.end(), [&](std::size_t a) { return a >= ages.tau_max; }));
  return {infrequent, std::min(S, infrequent)};
}

Selector::Selector(StrategyConfig strategy, std::vector<double> weights)
    : strategy_(strategy), weights_(std::move(weights)) {
  if (weights_.empty()) throw ConfigError("selection: empty weight vector");
  strategy_.validate(weights_.size());
  ages_ = AgeVector::zeros(weights_.size(), strategy_.kind == StrategyKind::AgeSel ? strategy_.tau_max : 1);
}

SelectionOutcome Selector::begin_round(std::size_t round, RandomStream& rng) const {
  SelectionOutcome outcome;
  const auto [s_j, a_j] = count_age_selected(strategy_, ages_, strategy_.S);
  outcome.num_infrequent = s_j;
  outcome.num_age_selected = a_j;
  outcome.download_set = select_download(strategy_, ages_, weights_, round, rng);
  return outcome;
}

void Selector::finish_round(SelectionOutcome& outcome, const std::map<int, double>& update_norms) {
  outcome.upload_set = select_upload(strategy_, outcome.download_set, update_norms);
  ages_ = update_ages(ages_, outcome.upload_set);
}

}  // namespace agesel

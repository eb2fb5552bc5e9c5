#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "agesel/random.hpp"

namespace agesel {

// Worker ids, kept sorted ascending.
using WorkerSet = std::vector<int>;

enum class StrategyKind { AgeSel, FedAvg, OCS, RoundRobin };

std::string_view to_string(StrategyKind kind);
StrategyKind strategy_kind_from_string(std::string_view name);

struct StrategyConfig {
  StrategyKind kind = StrategyKind::AgeSel;
  std::size_t S = 5;
  std::size_t tau_max = 4;  // AgeSel only

  void validate(std::size_t num_workers) const;
  friend bool operator==(const StrategyConfig&, const StrategyConfig&) = default;
};

// Rounds since each worker last uploaded, maintained by the parameter server.
struct AgeVector {
  std::vector<std::size_t> ages;
  std::size_t tau_max = 1;

  static AgeVector zeros(std::size_t num_workers, std::size_t tau_max) {
    return AgeVector{std::vector<std::size_t>(num_workers, 0), tau_max};
  }
  std::size_t max_age() const;
  friend bool operator==(const AgeVector&, const AgeVector&) = default;
};

struct SelectionOutcome {
  WorkerSet download_set;
  WorkerSet upload_set;
  std::size_t num_infrequent = 0;    // S^j
  std::size_t num_age_selected = 0;  // A^j
};

// Sequential weighted draws without replacement: each draw picks among the
// remaining candidates with probability proportional to weight, then removes
// the pick. Returns the picks sorted ascending.
WorkerSet weighted_sample_without_replacement(std::span<const int> candidates, std::span<const double> weights,
                                              std::size_t count, RandomStream& rng);

// M_D^j for the given strategy. `weights` are the dataset weights p_m.
WorkerSet select_download(const StrategyConfig& strategy, const AgeVector& ages, std::span<const double> weights,
                          std::size_t round, RandomStream& rng);

// M_U^j. OCS keeps the S largest update norms (ties by lower id); every
// other strategy uploads the whole download set.
WorkerSet select_upload(const StrategyConfig& strategy, const WorkerSet& download_set,
                        const std::map<int, double>& update_norms);

// Uploaded workers reset to 0, everyone else ages by one round.
AgeVector update_ages(const AgeVector& ages, const WorkerSet& upload_set);

// (S^j, A^j): number of workers at or past the age threshold, and how many of
// them get picked by age this round.
std::pair<std::size_t, std::size_t> count_age_selected(const StrategyConfig& strategy, const AgeVector& ages,
                                                       std::size_t S);

// Per-run selection state machine: owns the age vector and advances it once
// per round.
class Selector {
 public:
  Selector(StrategyConfig strategy, std::vector<double> weights);

  // Picks M_D^j and fills S^j / A^j.
  SelectionOutcome begin_round(std::size_t round, RandomStream& rng) const;

  // Picks M_U^j from the update norms and advances the ages.
  void finish_round(SelectionOutcome& outcome, const std::map<int, double>& update_norms);

  const AgeVector& ages() const noexcept { return ages_; }
  const StrategyConfig& strategy() const noexcept { return strategy_; }
  std::span<const double> weights() const noexcept { return weights_; }

 private:
  StrategyConfig strategy_;
  std::vector<double> weights_;
  AgeVector ages_;
};

}  // namespace agesel

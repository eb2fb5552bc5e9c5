#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <vector>

#include "agesel/error.hpp"
#include "agesel/selection.hpp"

using namespace agesel;

namespace {

std::vector<double> normalized(std::vector<double> sizes) {
  const double total = std::accumulate(sizes.begin(), sizes.end(), 0.0);
  for (double& s : sizes) s /= total;
  return sizes;
}

std::map<int, double> unit_norms(const WorkerSet& ids) {
  std::map<int, double> n;
  for (int m : ids) n[m] = 1.0;
  return n;
}

std::size_t ceil_div(std::size_t a, std::size_t b) { return (a + b - 1) / b; }

}  // namespace

TEST_CASE("strategy names and validation") {
  for (auto k : {StrategyKind::AgeSel, StrategyKind::FedAvg, StrategyKind::OCS, StrategyKind::RoundRobin}) {
    CHECK(strategy_kind_from_string(to_string(k)) == k);
  }
  CHECK_THROWS_AS(strategy_kind_from_string("Random"), ConfigError);
  CHECK_THROWS_AS((StrategyConfig{StrategyKind::FedAvg, 6, 1}.validate(5)), ConfigError);
  CHECK_THROWS_AS((StrategyConfig{StrategyKind::FedAvg, 0, 1}.validate(5)), ConfigError);
  CHECK_THROWS_AS((StrategyConfig{StrategyKind::AgeSel, 2, 0}.validate(5)), ConfigError);
  CHECK_NOTHROW((StrategyConfig{StrategyKind::AgeSel, 5, 1}.validate(5)));
}

TEST_CASE("AgeSel picks by age, then dataset size") {
  const StrategyConfig s{StrategyKind::AgeSel, 1, 4};
  const AgeVector ages{{5, 5, 3, 0}, 4};
  const auto w = normalized({10, 20, 5, 5});
  RandomStream rng(0);
  CHECK(select_download(s, ages, w, 0, rng) == WorkerSet{1});

  // Equal age and equal size fall back to the lower id.
  const auto eq = normalized({10, 10, 5, 5});
  CHECK(select_download(s, ages, eq, 0, rng) == WorkerSet{0});

  // Older beats larger.
  const AgeVector older{{6, 5, 3, 0}, 4};
  CHECK(select_download(s, older, w, 0, rng) == WorkerSet{0});
}

TEST_CASE("AgeSel tops up with weighted draws when few workers are infrequent") {
  const StrategyConfig s{StrategyKind::AgeSel, 3, 4};
  const AgeVector ages{{5, 0, 1, 2, 0}, 4};
  const auto w = normalized({1, 2, 3, 4, 5});
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    RandomStream rng(seed);
    const WorkerSet pick = select_download(s, ages, w, 0, rng);
    CHECK(pick.size() == 3);
    CHECK(std::is_sorted(pick.begin(), pick.end()));
    CHECK(std::count(pick.begin(), pick.end(), 0) == 1);
  }
}

TEST_CASE("AgeSel with no infrequent workers draws exactly like FedAvg") {
  const auto w = normalized({3, 1, 4, 1, 5, 9, 2, 6});
  const AgeVector young{{0, 1, 2, 0, 1, 2, 0, 1}, 3};
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    RandomStream a(seed), b(seed);
    CHECK(select_download({StrategyKind::AgeSel, 3, 3}, young, w, 7, a) ==
          select_download({StrategyKind::FedAvg, 3, 3}, young, w, 7, b));
  }
}

TEST_CASE("round robin and OCS download sets") {
  const auto w = normalized(std::vector<double>(20, 1.0));
  const AgeVector ages = AgeVector::zeros(20, 1);
  RandomStream rng(0);
  CHECK(select_download({StrategyKind::RoundRobin, 5, 1}, ages, w, 1, rng) == WorkerSet{5, 6, 7, 8, 9});
  CHECK(select_download({StrategyKind::RoundRobin, 5, 1}, ages, w, 0, rng) == WorkerSet{0, 1, 2, 3, 4});
  CHECK(select_download({StrategyKind::RoundRobin, 5, 1}, ages, w, 4, rng) == WorkerSet{0, 1, 2, 3, 4});
  const auto w7 = normalized(std::vector<double>(7, 1.0));
  CHECK(select_download({StrategyKind::RoundRobin, 3, 1}, AgeVector::zeros(7, 1), w7, 2, rng) == WorkerSet{0, 1, 6});
  CHECK(select_download({StrategyKind::OCS, 5, 1}, ages, w, 3, rng).size() == 20);
  CHECK_THROWS_AS(select_download({StrategyKind::FedAvg, 5, 1}, ages, std::vector<double>{}, 0, rng), ConfigError);
  CHECK_THROWS_AS(select_download({StrategyKind::FedAvg, 21, 1}, AgeVector::zeros(20, 1), w, 0, rng), ConfigError);
}

TEST_CASE("select_upload") {
  const StrategyConfig ocs{StrategyKind::OCS, 2, 1};
  CHECK(select_upload(ocs, {0, 1, 2}, {{0, 1.0}, {1, 3.0}, {2, 2.0}}) == WorkerSet{1, 2});
  CHECK(select_upload(ocs, {4, 7, 9}, {{4, 1.0}, {7, 1.0}, {9, 1.0}}) == WorkerSet{4, 7});
  CHECK(select_upload({StrategyKind::AgeSel, 2, 4}, {3, 8}, {{3, 0.1}, {8, 9.0}}) == WorkerSet{3, 8});
  CHECK(select_upload({StrategyKind::FedAvg, 2, 4}, {3, 8}, {{3, 0.1}, {8, 9.0}}) == WorkerSet{3, 8});
  CHECK_THROWS_AS(select_upload(ocs, {0, 1, 2}, {{0, 1.0}, {1, 3.0}}), ConfigError);
}

TEST_CASE("update_ages") {
  CHECK(update_ages(AgeVector{{3, 0, 2}, 4}, {0}).ages == std::vector<std::size_t>{0, 1, 3});
  CHECK(update_ages(AgeVector{{3, 0, 2}, 4}, {0, 1, 2}).ages == std::vector<std::size_t>{0, 0, 0});
  CHECK(update_ages(AgeVector{{3, 0, 2}, 4}, {}).ages == std::vector<std::size_t>{4, 1, 3});
  CHECK_THROWS_AS(update_ages(AgeVector{{3, 0, 2}, 4}, {3}), ConfigError);
}

TEST_CASE("count_age_selected") {
  const StrategyConfig s{StrategyKind::AgeSel, 1, 4};
  CHECK(count_age_selected(s, AgeVector{{5, 5, 3, 0}, 4}, 1) == std::pair<std::size_t, std::size_t>{2, 1});
  CHECK(count_age_selected({StrategyKind::AgeSel, 1, 1}, AgeVector::zeros(6, 1), 1) ==
        std::pair<std::size_t, std::size_t>{0, 0});
  CHECK(count_age_selected({StrategyKind::AgeSel, 5, 4}, AgeVector{std::vector<std::size_t>(20, 4), 4}, 5) ==
        std::pair<std::size_t, std::size_t>{20, 5});
  CHECK(count_age_selected({StrategyKind::FedAvg, 5, 4}, AgeVector{std::vector<std::size_t>(20, 9), 4}, 5) ==
        std::pair<std::size_t, std::size_t>{0, 0});
}

TEST_CASE("single weighted draws follow p_m") {
  const auto w = normalized({1, 2, 3, 4, 10});
  const std::vector<int> ids = {0, 1, 2, 3, 4};
  const std::size_t n = 100000;
  std::vector<std::size_t> hits(5, 0);
  RandomStream rng(99);
  for (std::size_t t = 0; t < n; ++t) ++hits[static_cast<std::size_t>(weighted_sample_without_replacement(ids, w, 1, rng)[0])];
  for (std::size_t m = 0; m < 5; ++m) {
    const double se = std::sqrt(w[m] * (1 - w[m]) / static_cast<double>(n));
    CHECK(std::abs(static_cast<double>(hits[m]) / n - w[m]) < 3.0 * se);
  }
}

TEST_CASE("two sequential draws match the inclusion-probability formula") {
  // P(m in sample of 2) = p_m + sum_{k != m} p_k p_m / (1 - p_k)
  const auto w = normalized({1, 2, 3, 4, 10});
  const std::vector<int> ids = {0, 1, 2, 3, 4};
  const std::size_t n = 100000;
  std::vector<std::size_t> hits(5, 0);
  RandomStream rng(7);
  for (std::size_t t = 0; t < n; ++t) {
    const WorkerSet pick = weighted_sample_without_replacement(ids, w, 2, rng);
    REQUIRE(pick.size() == 2);
    REQUIRE(pick[0] != pick[1]);
    for (int m : pick) ++hits[static_cast<std::size_t>(m)];
  }
  for (std::size_t m = 0; m < 5; ++m) {
    double pi = w[m];
    for (std::size_t k = 0; k < 5; ++k) {
      if (k != m) pi += w[k] * w[m] / (1.0 - w[k]);
    }
    const double se = std::sqrt(pi * (1 - pi) / static_cast<double>(n));
    CHECK(std::abs(static_cast<double>(hits[m]) / n - pi) < 3.0 * se);
  }
}

TEST_CASE("AgeSel age bound over random configurations") {
  RandomStream meta(2024);
  for (int t = 0; t < 200; ++t) {
    const std::size_t M = 4 + meta.uniform_index(27);
    const std::size_t S = 1 + meta.uniform_index(M);
    const std::size_t tau = 1 + meta.uniform_index(10);
    std::vector<double> sizes(M);
    for (double& s : sizes) s = 1.0 + static_cast<double>(meta.uniform_index(50));
    Selector sel({StrategyKind::AgeSel, S, tau}, normalized(sizes));
    const std::size_t bound = tau + ceil_div(M, S);
    for (std::size_t j = 0; j < 150; ++j) {
      RandomStream rng = RandomStream(static_cast<std::uint64_t>(t)).derive({j});
      SelectionOutcome out = sel.begin_round(j, rng);
      CHECK(out.download_set.size() == S);
      CHECK(out.num_age_selected == std::min(S, out.num_infrequent));
      sel.finish_round(out, unit_norms(out.download_set));
      CHECK(out.upload_set == out.download_set);
      CHECK(sel.ages().max_age() <= bound);
    }
  }
}

TEST_CASE("Selector tracks ages for every strategy") {
  Selector sel({StrategyKind::RoundRobin, 2, 1}, normalized({1, 1, 1}));
  RandomStream rng(0);
  SelectionOutcome out = sel.begin_round(0, rng);
  CHECK(out.num_age_selected == 0);
  sel.finish_round(out, unit_norms(out.download_set));
  CHECK(sel.ages().ages == std::vector<std::size_t>{0, 0, 1});

  Selector ocs({StrategyKind::OCS, 1, 1}, normalized({1, 1, 1}));
  SelectionOutcome o = ocs.begin_round(0, rng);
  CHECK(o.download_set == WorkerSet{0, 1, 2});
  ocs.finish_round(o, {{0, 0.5}, {1, 2.0}, {2, 1.0}});
  CHECK(o.upload_set == WorkerSet{1});
  CHECK(ocs.ages().ages == std::vector<std::size_t>{1, 0, 1});
}

TEST_CASE("RandomStream derivation ignores consumed draws") {
  RandomStream a(5), b(5);
  for (int i = 0; i < 10; ++i) a.next_u64();
  CHECK(a.derive({1, 2}).next_u64() == b.derive({1, 2}).next_u64());
  CHECK(a.derive({1, 2}).next_u64() != b.derive({2, 1}).next_u64());
  RandomStream c(1);
  for (int i = 0; i < 1000; ++i) {
    const double u = c.uniform01();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    CHECK(c.uniform_index(7) < 7);
    CHECK(c.gamma(0.5) > 0.0);
  }
}

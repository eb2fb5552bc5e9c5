#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <vector>

#include "agesel/error.hpp"
#include "agesel/selection.hpp"
#include "agesel/theory.hpp"
#include "support/oracles.hpp"

using namespace agesel;
using agesel::testing::oracle_bound;
using agesel::testing::oracle_lemma;
using agesel::testing::oracle_V;
using agesel::testing::rel_diff;

namespace {

TheoryConstants worked_example() {
  TheoryConstants k;
  k.U = 1;
  k.eta = 0.01;
  k.L = 1.0;
  k.sigma_L = 1.0;
  k.sigma_G = 1.0;
  k.S = k.B = k.M = k.R = 1;
  k.L_star = 0.0;
  k.L0 = 2.0;
  return k;
}

RoundRecord record_with(WorkerSet up, std::size_t age_selected = 0, double g = 0.0) {
  RoundRecord r;
  r.upload_set = std::move(up);
  r.download_set = r.upload_set;
  r.num_age_selected = age_selected;
  r.squared_grad_norm = g;
  return r;
}

// Selection-only AgeSel trace with unequal weights.
std::vector<RoundRecord> agesel_trace(std::size_t M, std::size_t S, std::size_t tau, std::size_t T,
                                      std::uint64_t seed) {
  RandomStream meta(seed);
  std::vector<double> w(M);
  for (double& x : w) x = 1.0 + static_cast<double>(meta.uniform_index(40));
  const double total = std::accumulate(w.begin(), w.end(), 0.0);
  for (double& x : w) x /= total;
  Selector sel({StrategyKind::AgeSel, S, tau}, w);
  std::vector<RoundRecord> out;
  for (std::size_t j = 0; j < T; ++j) {
    RandomStream rng = meta.derive({j});
    SelectionOutcome o = sel.begin_round(j, rng);
    std::map<int, double> norms;
    for (int m : o.download_set) norms[m] = 1.0;
    sel.finish_round(o, norms);
    out.push_back(record_with(o.upload_set, o.num_age_selected));
  }
  return out;
}

}  // namespace

TEST_CASE("stepsize condition") {
  TheoryConstants k;
  k.L = 1.0;
  k.U = 5;
  k.eta = 0.025;
  CHECK(check_stepsize(k));
  k.eta = 0.1;
  CHECK_FALSE(check_stepsize(k));
  k.eta = 1e-12;
  CHECK(check_stepsize(k));
}

TEST_CASE("worked example of the lemma constants") {
  const LemmaConstants z = lemma_constants(worked_example());
  // Z1 = (5 * 1e-6 / 2) * 7, Z2 = 15e-4 * 7 + 3, c_upper = 0.5 - 15e-4 - 0.01 * (90e-4 + 3).
  CHECK(rel_diff(z.Z1, 1.75e-5) < 1e-12);
  CHECK(rel_diff(z.Z2, 3.0105) < 1e-12);
  CHECK(rel_diff(z.c_upper, 0.46841) < 1e-12);
  const auto o = oracle_lemma(worked_example());
  CHECK(rel_diff(z.c_upper, o.c_upper) < 1e-12);

  const TheoryConstants k = worked_example();
  const double c = 0.4;
  for (std::size_t J : {1u, 7u, 100u}) CHECK(rel_diff(theorem_bound(k, c, J), oracle_bound(k, c, J)) < 1e-12);
}

TEST_CASE("zero-variance and small-stepsize limits") {
  TheoryConstants k = worked_example();
  k.sigma_L = k.sigma_G = 0.0;
  const LemmaConstants z = lemma_constants(k);
  CHECK(z.Z1 == 0.0);
  CHECK(z.Z2 == 0.0);
  CHECK(bound_floor(k, 0.3) == 0.0);
  k.eta = 1e-9;
  CHECK(std::abs(lemma_constants(k).c_upper - 0.5) < 1e-7);
}

TEST_CASE("theorem_bound structure and preconditions") {
  const TheoryConstants k = worked_example();
  const double c = 0.3;
  const double V = bound_floor(k, c);
  for (std::size_t J : {1u, 3u, 50u, 1000u}) {
    const double first = theorem_bound(k, c, J) - V;
    const double halved = theorem_bound(k, c, 2 * J) - V;
    CHECK(halved == doctest::Approx(first / 2.0).epsilon(1e-12));
  }
  CHECK(std::abs(theorem_bound(k, c, std::size_t{1} << 50) - V) < 1e-12);

  CHECK_THROWS_AS(theorem_bound(k, 0.0, 1), ConfigError);
  CHECK_THROWS_AS(theorem_bound(k, 0.47, 1), ConfigError);
  CHECK_THROWS_AS(theorem_bound(k, c, 0), ConfigError);
  TheoryConstants short_r = k;
  short_r.M = 20;
  short_r.S = 5;
  short_r.R = 3;
  CHECK_THROWS_AS(theorem_bound(short_r, c, 1), ConfigError);
  short_r.R = 4;
  CHECK_NOTHROW(theorem_bound(short_r, c, 1));
}

TEST_CASE("formula fidelity over 1000 random draws") {
  RandomStream rng(17);
  int checked = 0;
  while (checked < 1000) {
    TheoryConstants k;
    k.L = std::exp(rng.uniform(std::log(0.01), std::log(100.0)));
    k.U = 1 + rng.uniform_index(20);
    k.eta = rng.uniform(0.0, 1.0) / (8.0 * k.L * static_cast<double>(k.U));
    if (!(k.eta > 0.0)) continue;
    k.sigma_L = rng.uniform(0.0, 5.0);
    k.sigma_G = rng.uniform(0.0, 5.0);
    k.M = 1 + rng.uniform_index(100);
    k.S = 1 + rng.uniform_index(k.M);
    k.B = 1 + rng.uniform_index(256);
    k.R = (k.M + k.S - 1) / k.S + rng.uniform_index(20);
    k.L_star = rng.uniform(-5.0, 5.0);
    k.L0 = k.L_star + rng.uniform(0.0, 10.0);
    const LemmaConstants z = lemma_constants(k);
    const auto o = oracle_lemma(k);
    // Outside the hypothesis c_upper is a difference of nearly equal terms.
    if (o.c_upper < 0.01) continue;
    CHECK(rel_diff(z.Z1, o.Z1) < 1e-12);
    CHECK(rel_diff(z.Z2, o.Z2) < 1e-12);
    CHECK(rel_diff(z.c_upper, o.c_upper) < 1e-12);
    const double c = rng.uniform(0.01, 0.99) * o.c_upper;
    const std::size_t J = 1 + rng.uniform_index(100000);
    CHECK(rel_diff(bound_floor(k, c), oracle_V(k, c)) < 1e-12);
    CHECK(rel_diff(theorem_bound(k, c, J), oracle_bound(k, c, J)) < 1e-12);
    ++checked;
  }
}

TEST_CASE("bound decreases in J and V increases in R") {
  RandomStream rng(23);
  for (int t = 0; t < 200; ++t) {
    TheoryConstants k;
    k.L = rng.uniform(0.1, 10.0);
    k.U = 1 + rng.uniform_index(10);
    k.eta = rng.uniform(0.01, 0.3) / (8.0 * k.L * static_cast<double>(k.U));
    k.sigma_L = rng.uniform(0.0, 3.0);
    k.sigma_G = rng.uniform(0.1, 3.0);
    k.M = 2 + rng.uniform_index(50);
    k.S = 1 + rng.uniform_index(k.M);
    k.B = 1 + rng.uniform_index(64);
    k.R = (k.M + k.S - 1) / k.S;
    k.L0 = 1.0 + rng.uniform01();
    const double c = 0.9 * lemma_constants(k).c_upper;
    REQUIRE(c > 0.0);
    double prev = INFINITY;
    for (std::size_t J = 1; J < 5000; J = J * 3 / 2 + 1) {
      const double b = theorem_bound(k, c, J);
      CHECK(b < prev);
      prev = b;
    }
    const double V1 = bound_floor(k, c);
    TheoryConstants k2 = k;
    k2.R = k.R + 1;
    CHECK(bound_floor(k2, c) > V1);
  }
}

TEST_CASE("make_bound_report") {
  TheoryConstants k = worked_example();
  const BoundReport r = make_bound_report(k);
  CHECK(r.c_used == doctest::Approx(0.9 * r.c_upper));
  CHECK(std::isfinite(r.V));
  CHECK(r.stepsize_ok);
  CHECK(r.bound_at(10) == theorem_bound(k, r.c_used, 10));
  k.eta = 0.2;
  const BoundReport bad = make_bound_report(k);
  CHECK(bad.c_upper < 0.0);
  CHECK_FALSE(bad.stepsize_ok);
  CHECK(std::isnan(bad.V));
}

TEST_CASE("measure_R on round robin and full participation") {
  std::vector<RoundRecord> rr;
  for (std::size_t j = 0; j < 40; ++j) {
    WorkerSet s;
    for (std::size_t i = 0; i < 5; ++i) s.push_back(static_cast<int>((j * 5 + i) % 20));
    std::sort(s.begin(), s.end());
    rr.push_back(record_with(s));
  }
  const TraversalMeasure m = measure_R(rr, 20);
  CHECK(m.R == 4);
  CHECK(m.complete);

  WorkerSet all(20);
  std::iota(all.begin(), all.end(), 0);
  std::vector<RoundRecord> full(10, record_with(all, 0));
  CHECK(measure_R(full, 20).R == 1);

  std::vector<RoundRecord> never(6, record_with({0, 1}));
  const TraversalMeasure n = measure_R(never, 3);
  CHECK(n.R == 6);
  CHECK_FALSE(n.complete);

  // Age-sum variant counts age-selected workers instead of distinct coverage.
  std::vector<RoundRecord> mix = {record_with({0, 1}, 0), record_with({2, 3}, 2), record_with({0, 1}, 2),
                                  record_with({2, 3}, 2)};
  const TraversalMeasure x = measure_R(mix, 4);
  CHECK(x.R == 2);
  CHECK(x.R_age_sum == 3);
  CHECK(x.age_sum_complete);
}

TEST_CASE("measure_R for AgeSel respects the drain bound") {
  CHECK(measure_R(agesel_trace(20, 5, 4, 400, 1), 20).R <= 8);
  RandomStream meta(55);
  for (int t = 0; t < 50; ++t) {
    const std::size_t M = 4 + meta.uniform_index(27);
    const std::size_t S = 1 + meta.uniform_index(M);
    const std::size_t tau = 1 + meta.uniform_index(10);
    const auto trace = agesel_trace(M, S, tau, 200, static_cast<std::uint64_t>(t));
    const TraversalMeasure m = measure_R(trace, M);
    CHECK(m.complete);
    CHECK(m.R <= tau + (M + S - 1) / S);
  }
}

TEST_CASE("empirical_vs_bound") {
  const TheoryConstants k = [] {
    TheoryConstants x = worked_example();
    x.M = 4;
    x.S = 2;
    x.R = 2;
    return x;
  }();
  std::vector<RoundRecord> zeros(6, record_with({0, 1}, 0, 0.0));
  const EmpiricalBoundReport z = empirical_vs_bound(zeros, k, 0.3);
  REQUIRE(z.rows.size() == 3);
  for (const auto& row : z.rows) {
    CHECK(row.average_squared_grad_norm == 0.0);
    CHECK(row.average_squared_grad_norm <= row.bound);
  }

  std::vector<RoundRecord> one = {record_with({0}, 0, 2.5)};
  CHECK(average_squared_grad_norm(one) == 2.5);

  std::vector<RoundRecord> vals;
  for (double g : {1.0, 4.0, 0.5, 3.0, 2.0}) vals.push_back(record_with({0}, 0, g));
  const double avg = average_squared_grad_norm(vals);
  std::reverse(vals.begin(), vals.end());
  CHECK(average_squared_grad_norm(vals) == doctest::Approx(avg).epsilon(1e-15));
  std::rotate(vals.begin(), vals.begin() + 2, vals.end());
  CHECK(average_squared_grad_norm(vals) == doctest::Approx(avg).epsilon(1e-15));

  const EmpiricalBoundReport r = empirical_vs_bound(vals, k, 0.3);
  CHECK(r.total_rounds == 5);
  CHECK(r.J_used == 4);
  CHECK_FALSE(r.note.empty());
  CHECK(r.rows.size() == 2);
  CHECK(r.rows[1].J == 4);

  std::vector<RoundRecord> missing = {RoundRecord{}};
  CHECK_THROWS_AS(average_squared_grad_norm(missing), ConfigError);
}

TEST_CASE("variance proxies vanish on identical single-sample shards") {
  auto d = agesel::testing::make_dataset(2, 2, {0.5, -1.0, 0.5, -1.0, 0.5, -1.0}, {1, 1, 1});
  const auto shards = partition_label_sorted(*d, PartitionPlan{{1, 1, 1}});
  const ModelSpec spec{ModelKind::LogisticRegression, 2, 0, 2};
  const VarianceProxies v = estimate_variance_proxies(init_params(spec, 1), spec, shards);
  CHECK(v.sigma_L == 0.0);
  CHECK(v.sigma_G < 1e-15);
}

#include "agesel/theory.hpp"

#include <cmath>
#include <limits>

#include "agesel/error.hpp"

namespace agesel {

void TheoryConstants::validate() const {
  if (!(L > 0.0)) throw ConfigError("theory: L must be positive");
  if (!(eta > 0.0)) throw ConfigError("theory: eta must be positive");
  if (!(sigma_L >= 0.0) || !(sigma_G >= 0.0)) throw ConfigError("theory: variance bounds must be non-negative");
  if (U < 1 || S < 1 || B < 1 || M < 1 || R < 1) throw ConfigError("theory: U, S, B, M, R must be at least 1");
  if (S > M) throw ConfigError("theory: S must not exceed M");
  if (!(L0 >= L_star)) throw ConfigError("theory: L0 must be at least L_star");
}

bool check_stepsize(const TheoryConstants& k) {
  if (!(k.L > 0.0) || k.U < 1) throw ConfigError("theory: L and U must be positive");
  return k.eta <= 1.0 / (8.0 * k.L * static_cast<double>(k.U));
}

LemmaConstants lemma_constants(const TheoryConstants& k) {
  const double U = static_cast<double>(k.U);
  const double eta = k.eta;
  const double L = k.L;
  const double mix = k.sigma_L * k.sigma_L + 6.0 * U * k.sigma_G * k.sigma_G;
  LemmaConstants out;
  out.Z1 = 5.0 * U * U * eta * eta * eta * L * L / 2.0 * mix;
  out.Z2 = 15.0 * U * U * U * L * L * eta * eta * mix + 3.0 * U * U * k.sigma_G * k.sigma_G;
  out.c_upper = 0.5 - 15.0 * U * U * eta * eta * L * L - L * eta * (90.0 * U * U * U * L * L * eta * eta + 3.0 * U);
  return out;
}

namespace {

std::size_t ceil_div(std::size_t a, std::size_t b) { return (a + b - 1) / b; }

void check_bound_inputs(const TheoryConstants& k, double c) {
  k.validate();
  const LemmaConstants z = lemma_constants(k);
  if (!(c > 0.0 && c < z.c_upper)) {
    throw ConfigError("theory: c = " + std::to_string(c) + " outside the admissible range (0, " +
                      std::to_string(z.c_upper) + ")");
  }
  if (k.R < ceil_div(k.M, k.S)) {
    throw ConfigError("theory: R must be at least ceil(M/S) = " + std::to_string(ceil_div(k.M, k.S)));
  }
}

}  // namespace

double bound_floor(const TheoryConstants& k, double c) {
  check_bound_inputs(k, c);
  const LemmaConstants z = lemma_constants(k);
  const double U = static_cast<double>(k.U);
  const double S = static_cast<double>(k.S);
  const double B = static_cast<double>(k.B);
  const double M = static_cast<double>(k.M);
  const double R = static_cast<double>(k.R);
  const double variance = k.eta * k.L / (2.0 * S * B) * k.sigma_L * k.sigma_L;
  const double drift = z.Z1 / (k.eta * U);
  const double participation = (3.0 * k.eta * k.L - 2.0 * k.L * k.eta * M / (S * R)) * z.Z2 / U;
  return (variance + drift + participation) / c;
}

double theorem_bound(const TheoryConstants& k, double c, std::size_t J) {
  if (J < 1) throw ConfigError("theory: J must be at least 1");
  const double V = bound_floor(k, c);
  return (k.L0 - k.L_star) / (c * k.eta * static_cast<double>(k.U) * static_cast<double>(J)) + V;
}

BoundReport make_bound_report(const TheoryConstants& k, std::optional<double> c) {
  k.validate();
  BoundReport report;
  report.constants = k;
  const LemmaConstants z = lemma_constants(k);
  report.Z1 = z.Z1;
  report.Z2 = z.Z2;
  report.c_upper = z.c_upper;
  report.c_used = c.value_or(0.9 * z.c_upper);
  report.stepsize_ok = check_stepsize(k);
  report.V = std::numeric_limits<double>::quiet_NaN();
  if (report.c_used > 0.0 && report.c_used < z.c_upper && k.R >= ceil_div(k.M, k.S)) {
    report.V = bound_floor(k, report.c_used);
  }
  return report;
}

TraversalMeasure measure_R(std::span<const RoundRecord> records, std::size_t M) {
  if (records.empty()) throw ConfigError("measure_R: no records");
  if (M == 0) throw ConfigError("measure_R: M must be positive");
  const std::size_t T = records.size();
  TraversalMeasure out;

  bool any_cover = false;
  std::size_t worst = 0;
  std::vector<char> seen(M);
  for (std::size_t j = 0; j < T; ++j) {
    std::fill(seen.begin(), seen.end(), 0);
    std::size_t covered = 0;
    std::size_t w = 0;
    while (j + w < T && covered < M) {
      for (int m : records[j + w].upload_set) {
        const auto idx = static_cast<std::size_t>(m);
        if (idx < M && !seen[idx]) {
          seen[idx] = 1;
          ++covered;
        }
      }
      ++w;
    }
    if (covered < M) continue;  // suffix too short to traverse everyone
    any_cover = true;
    worst = std::max(worst, w);
  }
  out.R = any_cover ? worst : T;
  out.complete = any_cover;

  bool any_sum = false;
  std::size_t worst_sum = 0;
  for (std::size_t j = 0; j < T; ++j) {
    std::size_t total = 0;
    std::size_t w = 0;
    while (j + w < T && total < M) {
      total += records[j + w].num_age_selected;
      ++w;
    }
    if (total < M) continue;
    any_sum = true;
    worst_sum = std::max(worst_sum, w);
  }
  out.R_age_sum = any_sum ? worst_sum : T;
  out.age_sum_complete = any_sum;
  return out;
}

double average_squared_grad_norm(std::span<const RoundRecord> records) {
  if (records.empty()) throw ConfigError("average_squared_grad_norm: no records");
  double total = 0.0;
  for (const RoundRecord& r : records) {
    if (!r.squared_grad_norm) throw ConfigError("average_squared_grad_norm: record lacks a gradient norm");
    total += *r.squared_grad_norm;
  }
  return total / static_cast<double>(records.size());
}

EmpiricalBoundReport empirical_vs_bound(std::span<const RoundRecord> records, const TheoryConstants& k, double c) {
  if (records.empty()) throw ConfigError("empirical_vs_bound: no records");
  check_bound_inputs(k, c);
  EmpiricalBoundReport report;
  report.total_rounds = records.size();
  report.J_used = (records.size() / k.R) * k.R;
  if (report.J_used != records.size()) {
    report.note = "J rounded down from " + std::to_string(records.size()) + " to " + std::to_string(report.J_used) +
                  ", a multiple of R = " + std::to_string(k.R);
  }
  for (std::size_t J = k.R; J <= report.J_used; J += k.R) {
    EmpiricalBoundRow row;
    row.J = J;
    row.average_squared_grad_norm = average_squared_grad_norm(records.subspan(0, J));
    row.bound = theorem_bound(k, c, J);
    report.rows.push_back(row);
  }
  return report;
}

VarianceProxies estimate_variance_proxies(const ParamVector& params, const ModelSpec& spec,
                                          std::span<const DataShard> shards) {
  if (shards.empty()) throw ConfigError("estimate_variance_proxies: no shards");
  const ParamVector global = full_gradient(params, spec, shards);
  double max_local = 0.0;
  double max_global = 0.0;
  for (const DataShard& shard : shards) {
    const auto samples = shard.samples();
    const ParamVector local = minibatch_gradient(params, spec, samples);
    double spread = 0.0;
    for (const Sample& s : samples) {
      const ParamVector g = minibatch_gradient(params, spec, std::span<const Sample>(&s, 1));
      const double d = distance(g, local);
      spread += d * d;
    }
    max_local = std::max(max_local, spread / static_cast<double>(samples.size()));
    const double dg = distance(local, global);
    max_global = std::max(max_global, dg * dg);
  }
  return VarianceProxies{std::sqrt(max_local), std::sqrt(max_global)};
}

}  // namespace agesel

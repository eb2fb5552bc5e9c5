#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "agesel/data.hpp"
#include "agesel/engine.hpp"
#include "agesel/model.hpp"

namespace agesel {

// Problem constants entering the convergence bound of local SGD with
// age-based partial participation.
struct TheoryConstants {
  double L = 1.0;        // smoothness
  double sigma_L = 0.0;  // local stochastic-gradient standard deviation bound
  double sigma_G = 0.0;  // local-vs-global gradient deviation bound
  double eta = 0.01;
  std::size_t U = 1;
  std::size_t S = 1;
  std::size_t B = 1;
  std::size_t M = 1;
  std::size_t R = 1;  // rounds needed to traverse all workers
  double L_star = 0.0;
  double L0 = 0.0;

  void validate() const;
  friend bool operator==(const TheoryConstants&, const TheoryConstants&) = default;
};

struct LemmaConstants {
  double Z1 = 0.0;
  double Z2 = 0.0;
  double c_upper = 0.0;  // supremum of admissible c; <= 0 means the hypothesis fails
};

// eta <= 1 / (8 L U)
bool check_stepsize(const TheoryConstants& k);

// Z1 = (5 U^2 eta^3 L^2 / 2)(sigma_L^2 + 6 U sigma_G^2)
// Z2 = 15 U^3 L^2 eta^2 (sigma_L^2 + 6 U sigma_G^2) + 3 U^2 sigma_G^2
// c_upper = 1/2 - 15 U^2 eta^2 L^2 - L eta (90 U^3 L^2 eta^2 + 3 U)
LemmaConstants lemma_constants(const TheoryConstants& k);

// V = (1/c) [ eta L sigma_L^2 / (2 S B) + Z1 / (eta U) + (3 eta L - 2 L eta M / (S R)) Z2 / U ]
double bound_floor(const TheoryConstants& k, double c);

// (L0 - L*) / (c eta U J) + V. Requires 0 < c < c_upper, J >= 1, R >= ceil(M/S).
double theorem_bound(const TheoryConstants& k, double c, std::size_t J);

struct BoundReport {
  TheoryConstants constants;
  double Z1 = 0.0;
  double Z2 = 0.0;
  double c_upper = 0.0;
  double c_used = 0.0;
  double V = 0.0;  // NaN when c_used is not admissible
  bool stepsize_ok = false;

  double bound_at(std::size_t J) const { return theorem_bound(constants, c_used, J); }
};

// c defaults to 0.9 * c_upper.
BoundReport make_bound_report(const TheoryConstants& k, std::optional<double> c = std::nullopt);

struct TraversalMeasure {
  // Coverage definition: the largest, over start rounds, of the shortest
  // window whose upload sets cover every worker.
  std::size_t R = 0;
  bool complete = true;  // false when no window covers all workers
  // Variant: shortest window whose age-selected counts A^j sum to at least M.
  std::size_t R_age_sum = 0;
  bool age_sum_complete = true;
};

// Start rounds whose remaining suffix never covers all workers are skipped;
// if even round 0 never covers, R is the record count and complete is false.
TraversalMeasure measure_R(std::span<const RoundRecord> records, std::size_t M);

struct EmpiricalBoundRow {
  std::size_t J = 0;
  double average_squared_grad_norm = 0.0;
  double bound = 0.0;
};

struct EmpiricalBoundReport {
  std::vector<EmpiricalBoundRow> rows;  // one per multiple of R
  std::size_t total_rounds = 0;
  std::size_t J_used = 0;  // total_rounds rounded down to a multiple of R
  std::string note;
};

// Running average of the recorded squared gradient norms at J = R, 2R, ...
// paired with theorem_bound(k, c, J). A single run stands in for the
// expectation.
EmpiricalBoundReport empirical_vs_bound(std::span<const RoundRecord> records, const TheoryConstants& k, double c);

double average_squared_grad_norm(std::span<const RoundRecord> records);

struct VarianceProxies {
  double sigma_L = 0.0;
  double sigma_G = 0.0;
};

// Heuristic only: sigma_L^2 ~ max_m mean_z ||grad(theta; z) - grad L_m(theta)||^2
// and sigma_G^2 ~ max_m ||grad L_m(theta) - grad L(theta)||^2, both at a
// single point theta. These are not certified bounds.
VarianceProxies estimate_variance_proxies(const ParamVector& params, const ModelSpec& spec,
                                          std::span<const DataShard> shards);

}  // namespace agesel

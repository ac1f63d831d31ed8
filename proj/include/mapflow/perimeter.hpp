#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "mapflow/model.hpp"
#include "mapflow/rng.hpp"

namespace mapflow {

enum class Law { Infinite, Finite, Target };

const char* law_name(Law law);
Law parse_law(const std::string& s);

// Ratio weights c_q^-k W(p+k)/W(p) of the finite law. Without a table the
// asymptotic surrogate rho(l) = l^-a with rho(0) = 1 is used.
struct FiniteWeights {
  double a = 2.0;
  std::vector<double> table;  // W(l) for l = 0..table.size()-1
  double c_q = 1.0;

  static FiniteWeights asymptotic(double a) { return FiniteWeights{a, {}, 1.0}; }
  static FiniteWeights from_table(std::vector<double> W, double c_q);
  bool has_table() const { return !table.empty(); }
  // c_q^-k W(p+k)/W(p), without the half-weight indicator.
  double ratio(std::int64_t p, std::int64_t k) const;
};

struct KernelRow {
  std::int64_t k_min = 0;
  std::vector<double> prob;  // k = k_min + i
  double tail = 0.0;         // mass of k > k_max()
  double normalizer = 1.0;   // unnormalized total

  std::int64_t k_max() const { return k_min + static_cast<std::int64_t>(prob.size()) - 1; }
  double at(std::int64_t k) const;
  double sum() const;
};

KernelRow kernel_row_infinite(const StepDistribution& nu, std::int64_t p);
KernelRow kernel_row_finite(const StepDistribution& nu, const FiniteWeights& w, std::int64_t p);
KernelRow kernel_row_target(const StepDistribution& nu, std::int64_t p, std::int64_t target);

// Half-weight indicator of the finite law: 1 above (p-1)/2, 1/2 on it, 0 below.
double finite_indicator(std::int64_t p, std::int64_t k);

// Exact step sampler for one of the three laws (rejection from envelopes of
// nu, no row construction).
class PerimeterSampler {
 public:
  PerimeterSampler(const StepDistribution& nu, Law law, std::int64_t target = 0,
                   FiniteWeights weights = FiniteWeights::asymptotic(2.0));

  Law law() const { return law_; }
  std::int64_t target() const { return target_; }
  const StepDistribution& nu() const { return *nu_; }
  // Next jump from state p >= 1.
  std::int64_t step(std::int64_t p, Rng& rng) const;
  // True if p is an absorbing value for this law.
  bool absorbed(std::int64_t p) const;

  static constexpr std::int64_t kRejectionCap = 100000000;

 private:
  std::int64_t step_infinite(std::int64_t p, Rng& rng) const;
  std::int64_t step_finite(std::int64_t p, Rng& rng) const;
  std::int64_t step_target(std::int64_t p, Rng& rng) const;
  std::int64_t step_from_row(const KernelRow& row, Rng& rng) const;

  const StepDistribution* nu_;
  Law law_;
  std::int64_t target_;
  FiniteWeights weights_;
};

struct PerimeterPath {
  Law law = Law::Infinite;
  std::int64_t start = 1;
  std::int64_t target = 0;
  std::vector<std::int64_t> values;
  std::optional<std::size_t> absorbed_at;

  std::size_t steps() const { return values.empty() ? 0 : values.size() - 1; }
  std::int64_t jump(std::size_t i) const { return values[i + 1] - values[i]; }
};

constexpr std::int64_t kDefaultStepCap = 100000000;

// horizon < 0 runs until absorption (Finite, Target laws only).
PerimeterPath sample_path(const PerimeterSampler& sampler, std::int64_t start, std::int64_t horizon, Rng& rng,
                          std::int64_t step_cap = kDefaultStepCap);

}  // namespace mapflow

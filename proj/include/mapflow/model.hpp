#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <limits>
#include <vector>

#include "mapflow/rng.hpp"

namespace mapflow {

struct ModelParams {
  double a = 2.0;
  double p_q = 0.05;
  double c_q = 1.0;  // cancels in every normalized kernel
  double e_q = std::numeric_limits<double>::quiet_NaN();
  double c_a = 0.0;

  static ModelParams make(double a, double p_q, double c_q = 1.0);
};

double c_a_of(double a);
void validate_exponent(double a);

// h_up(l) = 2l 4^-l C(2l,l) for l >= 1, 0 otherwise.
double h_up(std::int64_t l);
// Real extension (2/sqrt(pi)) Gamma(x+1/2)/Gamma(x), x > 0.
double h_up_real(double x);
// h_up(l) sqrt(pi) / (2 sqrt(l)); increases to 1.
double h_up_scaled(std::int64_t l);
// 4^-l C(2l,l) for l >= 0, 0 otherwise.
double h_down(std::int64_t l);
double h_down_p(std::int64_t l, std::int64_t p);

class AliasTable {
 public:
  AliasTable() = default;
  explicit AliasTable(const std::vector<double>& weights);
  std::size_t sample(Rng& rng) const {
    const double x = rng.uniform() * static_cast<double>(prob_.size());
    std::size_t i = static_cast<std::size_t>(x);
    if (i >= prob_.size()) i = prob_.size() - 1;
    return (x - static_cast<double>(i)) < prob_[i] ? i : alias_[i];
  }
  std::size_t size() const { return prob_.size(); }
  double total() const { return total_; }

 private:
  std::vector<double> prob_;
  std::vector<std::uint32_t> alias_;
  double total_ = 0.0;
};

// nu(-k) = p k^-a for k > K_head.
struct NegTail {
  bool active = false;
  double a = 0.0;
  double p = 0.0;
};

// nu([k, inf)) = coef k^(1-e) for k > K_head, with e = a and
// coef = p cos(a pi)/(a-1); the steep variant uses e = a+1, coef = p/a.
struct PosTail {
  bool active = false;
  double a = 0.0;
  double p = 0.0;
  bool steep = false;
  double exponent() const { return steep ? a + 1.0 : a; }
  double coef() const;
};

// Draw from an envelope: accept k with probability `accept`.
struct EnvelopeDraw {
  std::int64_t k;
  double accept;
};

class StepDistribution {
 public:
  StepDistribution() = default;
  StepDistribution(std::int64_t K_head, std::vector<double> head, NegTail neg, PosTail pos);

  static StepDistribution point_mass(std::int64_t k0 = 0);
  // Finite support table; K_head = max |k|.
  static StepDistribution from_pairs(const std::vector<std::pair<std::int64_t, double>>& pairs);

  std::int64_t K_head() const { return K_; }
  const std::vector<double>& head() const { return head_; }
  const NegTail& neg_tail() const { return neg_; }
  const PosTail& pos_tail() const { return pos_; }
  bool non_canonical() const { return pos_.active && pos_.steep; }

  double mass(std::int64_t k) const;
  // nu([k, inf)) for k > K_head.
  double pos_tail_from(std::int64_t k) const;
  double neg_tail_mass() const;
  double pos_tail_mass() const;
  double total_mass() const;
  double neg_mass() const;
  double nonneg_mass() const;
  // Largest |k| with positive mass, or -1 when unbounded.
  std::int64_t max_negative_jump() const;
  std::int64_t max_positive_jump() const;

  std::int64_t sample(Rng& rng) const;

  EnvelopeDraw draw_negative(Rng& rng) const;
  EnvelopeDraw draw_nonnegative(Rng& rng) const;
  EnvelopeDraw draw_nonnegative_sqrt(Rng& rng) const;
  double neg_envelope_mass() const { return neg_env_mass_; }
  double nonneg_envelope_mass() const { return nonneg_env_mass_; }
  double nonneg_sqrt_envelope_mass() const { return sqrt_env_mass_; }

  void write(std::ostream& os) const;
  static StepDistribution read(std::istream& is);

  bool operator==(const StepDistribution& o) const;

 private:
  void build_samplers();

  std::int64_t K_ = 0;
  std::vector<double> head_;  // index k + K
  NegTail neg_;
  PosTail pos_;

  AliasTable neg_alias_;     // k = -1..-K, then tail bucket
  AliasTable nonneg_alias_;  // k = 0..K, then tail bucket
  AliasTable sqrt_alias_;    // k = 0..K weighted sqrt(1+k), then tail bucket
  double neg_env_mass_ = 0.0;
  double nonneg_env_mass_ = 0.0;
  double sqrt_env_mass_ = 0.0;
};

StepDistribution build_asymptotic_nu(double a, double p, std::int64_t K_head = 4096,
                                     bool steep_positive_tail = false);

// Exactly h_up-harmonic law on l in [1, L]: keeps the positive head of
// `base`, solves nu(0), nu(-1), ..., nu(-(L-1)) from harmonicity and puts the
// leftover mass at -(L+1).
StepDistribution project_harmonic(const StepDistribution& base, std::int64_t L);

double criticality_residual(const StepDistribution& nu, std::int64_t l_min, std::int64_t l_max);
double mean_exposure(const StepDistribution& nu);
inline std::int64_t sample_step(const StepDistribution& nu, Rng& rng) { return nu.sample(rng); }

// Sum of f(k) for integer k >= from, f smooth with power-law decay.
double smooth_tail_sum(const std::function<double(double)>& f, std::int64_t from);
// sum_{k > K} nu(k) w(k) over the positive tail, w smooth.
double pos_tail_weighted_sum(const StepDistribution& nu, const std::function<double(double)>& w);

}  // namespace mapflow

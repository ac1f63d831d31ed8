#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "mapflow/model.hpp"
#include "mapflow/rng.hpp"

namespace mapflow {

double lambda_density(double x, double a);
// Mass of lambda on [lo, hi] (either side of 1, not straddling it).
double lambda_mass(double a, double lo, double hi);
// Integral of f(z) lambda(dz) over [lo, hi], not straddling 1.
double lambda_integral(double a, double lo, double hi, const std::function<double(double)>& f);
// Same with the integrand given as a function of z - 1.
double lambda_integral_d(double a, double lo, double hi, const std::function<double(double)>& fd);

// B_x(p, q) continued analytically in p (p not a non-positive integer).
double incomplete_beta(double x, double p, double q);
double drift_constant(double a, bool limit_handling = true, double delta_a = 1e-6);

double g_map(double x, double z, double u);

// Exact sampler of lambda restricted to (1/2, z_lo] and [z_hi, inf).
class LevyMeasureSampler {
 public:
  LevyMeasureSampler(double a, double z_lo, double z_hi);
  static LevyMeasureSampler flow_band(double a, double eps) { return LevyMeasureSampler(a, 1.0 - eps, 1.0 + eps); }
  static LevyMeasureSampler log_band(double a, double delta);

  double a() const { return a_; }
  double z_lo() const { return z_lo_; }
  double z_hi() const { return z_hi_; }
  double neg_mass() const { return neg_mass_; }
  double pos_mass() const { return pos_mass_; }
  double total_mass() const { return neg_mass_ + pos_mass_; }
  double sample(Rng& rng) const;

  static constexpr int kBins = 1 << 14;
  static constexpr double kTailStart = 1e6;

 private:
  double sample_neg(Rng& rng) const;
  double sample_pos(Rng& rng) const;

  double a_, z_lo_, z_hi_;
  double neg_mass_ = 0.0, pos_mass_ = 0.0;
  std::vector<double> neg_edges_, pos_edges_;  // y = 1 - z, w = z - 1
  AliasTable neg_alias_, pos_alias_;
  double pos_tail_mass_ = 0.0;
};

struct JumpEvent {
  double t;
  double z;
  double u;
};

// Poisson events on [0, T] with intensity rate_factor dt lambda(dz) du off the band.
std::vector<JumpEvent> sample_flow_events(const LevyMeasureSampler& s, double rate_factor, double T, Rng& rng);
inline double flow_rate_factor(double a, double p_q) { return 2.0 * c_a_of(a) * p_q; }

struct ContinuousMerge {
  double t;
  std::size_t survivor;
  std::size_t absorbed;
};

struct ContinuousFlow {
  std::vector<double> lifted;  // final positions
  std::vector<std::optional<std::size_t>> merged_into;
  std::vector<ContinuousMerge> merges;
  std::vector<std::vector<double>> samples;  // [trajectory][sample time]
  std::vector<std::vector<std::pair<double, double>>> paths;  // optional (t, x) after each move
  bool order_preserved = true;
  bool permanence = true;
};

ContinuousFlow evolve_continuous(const std::vector<JumpEvent>& events, const std::vector<double>& starts,
                                 const std::vector<double>& sample_times = {}, bool record = false);

// Compound Poisson approximation of xi keeping jumps with |y| > delta.
struct XiPath {
  double T = 0.0;
  double delta = 0.0;
  double drift = 0.0;  // effective drift of the truncated path
  std::vector<double> times;
  std::vector<double> jumps;  // y = log z

  double value(double t) const;
  double value_before(double t) const;
  // The same path with jumps |y| <= delta2 removed (delta2 >= delta).
  XiPath coarsen(double delta2, double a) const;
};

double xi_effective_drift(double a, double delta);
XiPath xi_path(double a, double delta, double T, Rng& rng);

// tau_alpha(t) = inf{r : int_0^r exp(-alpha xi(s)) ds >= t} on [0, xi.T].
double lamperti_integral(const XiPath& xi, double alpha, double r);
double lamperti_time(const XiPath& xi, double alpha, double t);
double pssmp_value(const XiPath& xi, double alpha, double x, double t);
std::vector<double> pssmp(const XiPath& xi, double alpha, double x, const std::vector<double>& times);

}  // namespace mapflow

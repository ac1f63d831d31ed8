#include "mapflow/levy_flow.hpp"

#include <algorithm>
#include <boost/math/constants/constants.hpp>
#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/special_functions/binomial.hpp>
#include <boost/math/special_functions/cos_pi.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <cmath>
#include <limits>
#include <map>

#include "mapflow/error.hpp"

namespace mapflow {

namespace {

constexpr double kPi = boost::math::constants::pi<double>();
constexpr double kInf = std::numeric_limits<double>::infinity();

double frac(double x) { return x - std::floor(x); }

double rgamma(double z) {
  if (z <= 0.0 && z == std::floor(z)) return 0.0;
  return 1.0 / std::tgamma(z);
}

double gk(const std::function<double(double)>& f, double lo, double hi) {
  return boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f, lo, hi, 15, 1e-13);
}

// Integral over s of h(e^s) e^s on [log lo, log hi], hi may be infinite.
double log_integral(const std::function<double(double)>& h, double lo, double hi) {
  if (!(hi > lo)) return 0.0;
  auto f = [&](double s) {
    const double y = std::exp(s);
    if (y == 0.0 || std::isinf(y)) return 0.0;
    const double v = h(y) * y;
    return std::isfinite(v) ? v : 0.0;
  };
  boost::math::quadrature::exp_sinh<double> es;
  if (lo == 0.0 && std::isinf(hi)) return log_integral(h, 0.0, 1.0) + log_integral(h, 1.0, hi);
  if (lo == 0.0) {
    const double s1 = std::log(hi);
    return es.integrate([&](double s) { return f(s1 - s); }, 0.0, kInf, 1e-14);
  }
  const double s0 = std::log(lo);
  if (std::isinf(hi)) return es.integrate([&](double s) { return f(s0 + s); }, 0.0, kInf, 1e-14);
  return gk(f, s0, std::log(hi));
}

}  // namespace

double lambda_density(double x, double a) {
  const double c = std::tgamma(a) / kPi;
  if (x > 0.5 && x < 1.0) return c * std::pow(x * (1.0 - x), -a);
  if (x > 1.0) return c * boost::math::cos_pi(a) * std::pow(x * (x - 1.0), -a);
  return 0.0;
}

double lambda_integral_d(double a, double lo, double hi, const std::function<double(double)>& fd) {
  if (lo < 1.0 && hi > 1.0) throw Error(ErrorCode::InvalidArgument, "integration range straddles 1");
  const double c = std::tgamma(a) / kPi;
  if (hi <= 1.0) {
    lo = std::max(lo, 0.5);
    if (!(hi > lo)) return 0.0;
    return log_integral([&](double y) { return c * std::pow(y * (1.0 - y), -a) * fd(-y); }, 1.0 - hi, 1.0 - lo);
  }
  const double cp = c * boost::math::cos_pi(a);
  return log_integral([&](double w) { return cp * std::pow(w * (1.0 + w), -a) * fd(w); }, lo - 1.0, hi - 1.0);
}

double lambda_integral(double a, double lo, double hi, const std::function<double(double)>& f) {
  return lambda_integral_d(a, lo, hi, [&](double d) { return f(1.0 + d); });
}

double lambda_mass(double a, double lo, double hi) {
  return lambda_integral(a, lo, hi, [](double) { return 1.0; });
}

double incomplete_beta(double x, double p, double q) {
  if (!(x > 0.0 && x < 1.0)) throw Error(ErrorCode::InvalidArgument, "incomplete beta needs 0 < x < 1");
  double coef = 1.0;  // (1-q)_n / n!
  double sum = 0.0;
  double xn = std::pow(x, p);
  for (int n = 0; n < 2000; ++n) {
    if (coef != 0.0) {
      if (p + n == 0.0) throw Error(ErrorCode::EvaluationNearPole, "incomplete beta at a pole");
      const double term = coef * xn / (p + n);
      sum += term;
      if (n > 2 && std::fabs(term) < 1e-18 * std::fabs(sum)) break;
    }
    coef *= (n + 1.0 - q) / (n + 1.0);
    xn *= x;
  }
  return sum;
}

double drift_constant(double a, bool limit_handling, double delta_a) {
  validate_exponent(a);
  const double ga = std::tgamma(a);
  if (!limit_handling) {
    if (std::fabs(a - 2.0) < delta_a) throw Error(ErrorCode::EvaluationNearPole, "drift evaluated near a = 2");
    const double first = std::tgamma(3.0 - a) * rgamma(4.0 - 2.0 * a) / (2.0 * std::sin(kPi * (a - 1.0)));
    return first + ga * incomplete_beta(0.5, 1.0 - a, 3.0 - a) / kPi;
  }
  // reflection form of the first term, removable n = 1 term of the series
  const double first = std::tgamma(3.0 - a) * std::tgamma(2.0 * a - 3.0) * boost::math::cos_pi(a) / kPi;
  const double x = 0.5, p = 1.0 - a;
  double b = std::pow(x, p) / p - std::pow(x, 2.0 - a);
  double coef = a - 2.0;  // (a-2)_1 / 1!
  double xn = std::pow(x, p + 1.0);
  for (int n = 2; n < 2000; ++n) {
    coef *= (a - 3.0 + n) / n;
    xn *= x;
    const double term = coef * xn / (p + n);
    b += term;
    if (std::fabs(term) < 1e-18) break;
  }
  return first + ga * b / kPi;
}

double g_map(double x, double z, double u) {
  const double f = frac(x - u);
  const double w = std::max(0.0, (z - 1.0) / z);
  return std::max(0.0, f - w) * z - f + 0.5 * (1.0 - std::min(1.0 / z, z));
}

LevyMeasureSampler::LevyMeasureSampler(double a, double z_lo, double z_hi) : a_(a), z_lo_(z_lo), z_hi_(z_hi) {
  if (!(a > 1.0 && a < 3.0)) throw Error(ErrorCode::InvalidExponent, "exponent out of range");
  if (!(z_lo < 1.0 && z_hi > 1.0)) throw Error(ErrorCode::InvalidArgument, "band must contain 1");
  const double c = std::tgamma(a) / kPi;
  // negative side
  const double y0 = 1.0 - z_lo;
  if (y0 < 0.5) {
    neg_edges_.resize(kBins + 1);
    const double l0 = std::log(y0), l1 = std::log(0.5);
    for (int i = 0; i <= kBins; ++i) neg_edges_[i] = std::exp(l0 + (l1 - l0) * i / kBins);
    neg_edges_[0] = y0;
    neg_edges_[kBins] = 0.5;
    std::vector<double> w(kBins);
    auto f = [c, a](double y) { return c * std::pow(y * (1.0 - y), -a); };
    for (int i = 0; i < kBins; ++i)
      w[i] = boost::math::quadrature::gauss_kronrod<double, 15>::integrate(f, neg_edges_[i], neg_edges_[i + 1]);
    for (double m : w) neg_mass_ += m;
    neg_alias_ = AliasTable(w);
  }
  // positive side
  const double cp = c * boost::math::cos_pi(a);
  if (cp > 0.0) {
    const double w0 = z_hi - 1.0;
    const double wt = std::max(kTailStart, w0);
    std::vector<double> w;
    if (w0 < kTailStart) {
      pos_edges_.resize(kBins + 1);
      const double l0 = std::log(w0), l1 = std::log(kTailStart);
      for (int i = 0; i <= kBins; ++i) pos_edges_[i] = std::exp(l0 + (l1 - l0) * i / kBins);
      pos_edges_[0] = w0;
      pos_edges_[kBins] = kTailStart;
      w.resize(kBins);
      auto f = [cp, a](double x) { return cp * std::pow(x * (1.0 + x), -a); };
      for (int i = 0; i < kBins; ++i)
        w[i] = boost::math::quadrature::gauss_kronrod<double, 15>::integrate(f, pos_edges_[i], pos_edges_[i + 1]);
    }
    // tail: int_wt^inf w^-a (1+w)^-a dw = sum_j binom(-a, j) wt^(1-2a-j) / (2a-1+j)
    double tail = 0.0, bj = 1.0;
    for (int j = 0; j < 60; ++j) {
      const double term = bj * std::pow(wt, 1.0 - 2.0 * a - j) / (2.0 * a - 1.0 + j);
      tail += term;
      if (std::fabs(term) < 1e-20 * std::fabs(tail)) break;
      bj *= (-a - j) / (j + 1.0);
    }
    pos_tail_mass_ = cp * tail;
    w.push_back(pos_tail_mass_);
    for (double m : w) pos_mass_ += m;
    pos_alias_ = AliasTable(w);
  }
}

LevyMeasureSampler LevyMeasureSampler::log_band(double a, double delta) {
  return LevyMeasureSampler(a, std::exp(-delta), std::exp(delta));
}

double LevyMeasureSampler::sample_neg(Rng& rng) const {
  const std::size_t i = neg_alias_.sample(rng);
  const double y1 = neg_edges_[i], y2 = neg_edges_[i + 1];
  const double e = 1.0 - a_;
  const double p1 = std::pow(y1, e), p2 = std::pow(y2, e);
  for (;;) {
    const double y = std::pow(p1 + rng.uniform() * (p2 - p1), 1.0 / e);
    const double acc = std::pow((1.0 - y2) / (1.0 - y), a_);
    if (rng.uniform() < acc) return 1.0 - std::min(std::max(y, y1), y2);
  }
}

double LevyMeasureSampler::sample_pos(Rng& rng) const {
  const std::size_t i = pos_alias_.sample(rng);
  if (i + 1 == pos_alias_.size()) {
    const double wt = std::max(kTailStart, z_hi_ - 1.0);
    for (;;) {
      const double w = wt * std::pow(rng.uniform_pos(), -1.0 / (2.0 * a_ - 1.0));
      if (rng.uniform() < std::pow(1.0 + 1.0 / w, -a_)) return 1.0 + w;
    }
  }
  const double w1 = pos_edges_[i], w2 = pos_edges_[i + 1];
  const double e = 1.0 - a_;
  const double p1 = std::pow(w1, e), p2 = std::pow(w2, e);
  for (;;) {
    const double w = std::pow(p1 + rng.uniform() * (p2 - p1), 1.0 / e);
    const double acc = std::pow((1.0 + w1) / (1.0 + w), a_);
    if (rng.uniform() < acc) return 1.0 + std::min(std::max(w, w1), w2);
  }
}

double LevyMeasureSampler::sample(Rng& rng) const {
  const double tot = total_mass();
  if (!(tot > 0.0)) throw Error(ErrorCode::InvalidArgument, "empty Levy measure");
  return rng.uniform() * tot < neg_mass_ ? sample_neg(rng) : sample_pos(rng);
}

std::vector<JumpEvent> sample_flow_events(const LevyMeasureSampler& s, double rate_factor, double T, Rng& rng) {
  std::vector<JumpEvent> out;
  const double rate = rate_factor * s.total_mass();
  if (!(rate > 0.0) || !(T > 0.0)) return out;
  double t = 0.0;
  for (;;) {
    t += rng.exponential() / rate;
    if (t > T) break;
    const double z = s.sample(rng);
    out.push_back({t, z, rng.uniform()});
  }
  return out;
}

ContinuousFlow evolve_continuous(const std::vector<JumpEvent>& events, const std::vector<double>& starts,
                                 const std::vector<double>& sample_times, bool record) {
  const std::size_t N = starts.size();
  ContinuousFlow fl;
  fl.lifted = starts;
  fl.merged_into.assign(N, std::nullopt);
  fl.samples.assign(N, {});
  if (record) {
    fl.paths.assign(N, {});
    for (std::size_t k = 0; k < N; ++k) fl.paths[k].push_back({0.0, starts[k]});
  }
  std::vector<double> offset(N, 0.0);
  std::vector<std::size_t> root(N);
  for (std::size_t k = 0; k < N; ++k) root[k] = k;
  std::size_t next_sample = 0;
  auto take = [&](double upto) {
    while (next_sample < sample_times.size() && sample_times[next_sample] < upto) {
      for (std::size_t k = 0; k < N; ++k) fl.samples[k].push_back(fl.lifted[k]);
      ++next_sample;
    }
  };
  std::vector<std::size_t> live;
  std::vector<double> before(N);
  for (const auto& e : events) {
    take(e.t);
    live.clear();
    for (std::size_t k = 0; k < N; ++k)
      if (!fl.merged_into[k]) live.push_back(k);
    const double w = e.z > 1.0 ? (e.z - 1.0) / e.z : -1.0;
    std::size_t first_in = N;
    before = fl.lifted;
    for (std::size_t k : live) {
      const double f = frac(fl.lifted[k] - e.u);
      const bool in_window = f <= w;
      fl.lifted[k] += g_map(fl.lifted[k], e.z, e.u);
      if (in_window) {
        if (first_in == N) {
          first_in = k;
        } else {
          // same torus point; keep the integer offset of the lifts
          const std::size_t a = std::min(first_in, k), b = std::max(first_in, k);
          fl.merged_into[b] = a;
          offset[b] = std::round(fl.lifted[b] - fl.lifted[a]);
          fl.merges.push_back({e.t, a, b});
          first_in = a;
        }
      }
    }
    // classes follow their root exactly
    for (std::size_t k = 0; k < N; ++k) {
      if (!fl.merged_into[k]) continue;
      std::size_t r = k;
      double off = 0.0;
      while (fl.merged_into[r]) {
        off += offset[r];
        r = *fl.merged_into[r];
      }
      const double individual = before[k] + g_map(before[k], e.z, e.u);
      const double exact = fl.lifted[r] + off;
      if (std::fabs(frac(individual - exact + 0.5) - 0.5) > 1e-9) fl.permanence = false;
      fl.lifted[k] = exact;
    }
    if (live.size() > 1) {
      std::vector<std::size_t> ord = live;
      std::sort(ord.begin(), ord.end(), [&](std::size_t x, std::size_t y) { return frac(before[x]) < frac(before[y]); });
      int descents = 0;
      for (std::size_t q = 0; q < ord.size(); ++q) {
        const std::size_t nx = ord[(q + 1) % ord.size()];
        const double step = frac(fl.lifted[nx]) - frac(fl.lifted[ord[q]]);
        const double gap = frac(fl.lifted[nx] - fl.lifted[ord[q]]);
        // merged points may differ by rounding of their integer lift offsets
        if (step < 0.0 && std::min(gap, 1.0 - gap) > 1e-12) ++descents;
      }
      if (descents > 1) fl.order_preserved = false;
    }
    if (record)
      for (std::size_t k = 0; k < N; ++k) fl.paths[k].push_back({e.t, fl.lifted[k]});
  }
  take(kInf);
  return fl;
}

double XiPath::value(double t) const {
  double s = drift * t;
  for (std::size_t i = 0; i < times.size() && times[i] <= t; ++i) s += jumps[i];
  return s;
}

double XiPath::value_before(double t) const {
  double s = drift * t;
  for (std::size_t i = 0; i < times.size() && times[i] < t; ++i) s += jumps[i];
  return s;
}

double xi_effective_drift(double a, double delta) {
  if (!(delta > 0.0)) throw Error(ErrorCode::InvalidArgument, "delta must be positive");
  const double b = drift_constant(a);
  const double zl = std::exp(-delta), zh = std::exp(delta);
  auto id = [](double d) { return d; };
  auto corr = [](double d) {
    if (std::fabs(d) < 1e-3) return d * d * (-0.5 + d * (1.0 / 3 + d * (-0.25 + d * (0.2 - d / 6))));
    return std::log1p(d) - d;
  };
  const double off = lambda_integral_d(a, 0.5, std::max(0.5, zl), id) + lambda_integral_d(a, zh, kInf, id);
  const double band = lambda_integral_d(a, std::max(0.5, zl), 1.0, corr) + lambda_integral_d(a, 1.0, zh, corr);
  return b - off + band;
}

XiPath xi_path(double a, double delta, double T, Rng& rng) {
  XiPath xi;
  xi.T = T;
  xi.delta = delta;
  xi.drift = xi_effective_drift(a, delta);
  const auto s = LevyMeasureSampler::log_band(a, delta);
  for (const auto& e : sample_flow_events(s, 1.0, T, rng)) {
    xi.times.push_back(e.t);
    xi.jumps.push_back(std::log(e.z));
  }
  return xi;
}

XiPath XiPath::coarsen(double delta2, double a) const {
  if (delta2 < delta) throw Error(ErrorCode::InvalidArgument, "coarsening needs a larger cutoff");
  XiPath out;
  out.T = T;
  out.delta = delta2;
  out.drift = xi_effective_drift(a, delta2);
  for (std::size_t i = 0; i < times.size(); ++i)
    if (std::fabs(jumps[i]) > delta2) {
      out.times.push_back(times[i]);
      out.jumps.push_back(jumps[i]);
    }
  return out;
}

namespace {

// int_0^d exp(-alpha (x0 + b s)) ds
double segment_integral(double alpha, double x0, double b, double d) {
  const double c = alpha * b;
  const double scale = std::exp(-alpha * x0);
  if (c == 0.0) return scale * d;
  return scale * d * (-std::expm1(-c * d)) / (c * d);
}

double segment_inverse(double alpha, double x0, double b, double t) {
  const double c = alpha * b;
  const double e = t * std::exp(alpha * x0);
  if (c == 0.0) return e;
  return -std::log1p(-c * e) / c;
}

}  // namespace

double lamperti_integral(const XiPath& xi, double alpha, double r) {
  if (r > xi.T) throw Error(ErrorCode::TimeBeyondHorizon, "integral beyond the path horizon");
  if (alpha == 0.0) return r;
  double acc = 0.0, s = 0.0, x = 0.0;
  for (std::size_t i = 0; i <= xi.times.size(); ++i) {
    const double end = i < xi.times.size() ? std::min(xi.times[i], r) : r;
    if (end > s) {
      acc += segment_integral(alpha, x, xi.drift, end - s);
      x += xi.drift * (end - s);
      s = end;
    }
    if (i == xi.times.size() || xi.times[i] > r) break;
    x += xi.jumps[i];
  }
  return acc;
}

double lamperti_time(const XiPath& xi, double alpha, double t) {
  if (t < 0.0) throw Error(ErrorCode::InvalidArgument, "negative time");
  if (alpha == 0.0) {
    if (t > xi.T) throw Error(ErrorCode::TimeBeyondHorizon, "time change beyond the path horizon");
    return t;
  }
  double acc = 0.0, s = 0.0, x = 0.0;
  for (std::size_t i = 0; i <= xi.times.size(); ++i) {
    const double end = i < xi.times.size() ? xi.times[i] : xi.T;
    const double piece = segment_integral(alpha, x, xi.drift, end - s);
    if (acc + piece >= t) return std::min(s + segment_inverse(alpha, x, xi.drift, t - acc), end);
    acc += piece;
    x += xi.drift * (end - s);
    s = end;
    if (i < xi.times.size()) x += xi.jumps[i];
  }
  throw Error(ErrorCode::TimeBeyondHorizon, "time change beyond the path horizon");
}

double pssmp_value(const XiPath& xi, double alpha, double x, double t) {
  if (!(x > 0.0)) throw Error(ErrorCode::InvalidArgument, "pssMp needs x > 0");
  const double tau = alpha == 0.0 ? t : lamperti_time(xi, alpha, t * std::pow(x, alpha));
  if (tau > xi.T) throw Error(ErrorCode::TimeBeyondHorizon, "time beyond the path horizon");
  return x * std::exp(xi.value(tau));
}

std::vector<double> pssmp(const XiPath& xi, double alpha, double x, const std::vector<double>& times) {
  std::vector<double> out;
  out.reserve(times.size());
  for (double t : times) out.push_back(pssmp_value(xi, alpha, x, t));
  return out;
}

}  // namespace mapflow

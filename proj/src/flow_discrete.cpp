#include "mapflow/flow_discrete.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "mapflow/error.hpp"

namespace mapflow {

namespace {

double frac(double x) { return x - std::floor(x); }

// Compensated running sum kept in [0, 1).
class ModOneSum {
 public:
  void add(double x) {
    const double y = x - c_;
    const double t = s_ + y;
    c_ = (t - s_) - y;
    s_ = t;
    const double f = std::floor(s_);
    s_ -= f;
  }
  double value() const { return s_; }

 private:
  double s_ = 0.0;
  double c_ = 0.0;
};

std::int64_t mod(std::int64_t x, std::int64_t n) {
  const std::int64_t r = x % n;
  return r < 0 ? r + n : r;
}

double torus_gap(double x, double y) {
  const double d = frac(x - y);
  return std::min(d, 1.0 - d);
}

}  // namespace

std::int64_t ContinuousTimePerimeter::value_at(double t) const {
  if (absorption_time && t >= *absorption_time) return 0;
  auto it = std::upper_bound(events.begin(), events.end(), t,
                             [](double x, const PtildeEvent& e) { return x < e.t; });
  if (it == events.begin()) return start;
  return std::prev(it)->after;
}

ContinuousTimePerimeter build_ptilde(const PerimeterPath& path, double a, Rng& rng, Deterministic det) {
  ContinuousTimePerimeter pt;
  pt.start = path.start;
  double t = 0.0;
  for (std::size_t i = 0; i < path.steps(); ++i) {
    const std::int64_t p = path.values[i];
    if (p <= 0) break;
    const double e = det.on ? 1.0 : rng.exponential();
    t += e / (2.0 * std::pow(static_cast<double>(p), a - 1.0));
    const std::int64_t q = path.values[i + 1];
    if (q <= 0) {
      pt.absorption_time = t;
      break;
    }
    pt.events.push_back({t, p, q});
  }
  return pt;
}

ContinuousTimePerimeter simulate_ptilde(const PerimeterSampler& sampler, std::int64_t l, double a, double T, Rng& rng,
                                        std::int64_t step_cap) {
  if (sampler.law() != Law::Finite) throw Error(ErrorCode::InvalidArgument, "continuous-time perimeter needs the finite law");
  ContinuousTimePerimeter pt;
  pt.start = l;
  double t = 0.0;
  std::int64_t p = l;
  for (std::int64_t n = 0;; ++n) {
    if (n >= step_cap) throw Error(ErrorCode::StepCapExceeded, "continuous-time perimeter exceeded the step cap");
    t += rng.exponential() / (2.0 * std::pow(static_cast<double>(p), a - 1.0));
    if (t > T) break;
    const std::int64_t q = p + sampler.step(p, rng);
    if (q <= 0) {
      pt.absorption_time = t;
      break;
    }
    pt.events.push_back({t, p, q});
    p = q;
  }
  return pt;
}

double half_max(double z, std::int64_t p_after) {
  return 0.5 * std::max(1.0 - 1.0 / z, (1.0 - 1.0 / (2.0 * static_cast<double>(p_after))) * (1.0 - z));
}

double g_discrete(double x, double z, double u, std::int64_t p_after) {
  const double f = frac(x - u);
  const double w = std::max(0.0, (z - 1.0) / z);
  return std::max(0.0, f - w) * z - f + half_max(z, p_after);
}

std::size_t ReversedDrivers::count_until(double T) const {
  auto it = std::upper_bound(events.begin(), events.end(), T, [](double x, const DriverEvent& e) { return x < e.t; });
  return static_cast<std::size_t>(it - events.begin());
}

std::int64_t ReversedDrivers::perimeter_at(double T) const {
  const std::size_t n = count_until(T);
  return n == 0 ? start : events[n - 1].after;
}

double ReversedDrivers::offset_at(double T) const {
  const std::size_t n = count_until(T);
  return n == 0 ? 0.0 : events[n - 1].r_after;
}

ReversedDrivers build_drivers(const ContinuousTimePerimeter& pt, Rng& rng) {
  ReversedDrivers d;
  d.start = pt.start;
  ModOneSum r;
  for (const auto& e : pt.events) {
    if (e.after == e.before) continue;
    DriverEvent de;
    de.t = e.t;
    de.before = e.before;
    de.after = e.after;
    de.v = static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(2 * e.after)));
    de.z = static_cast<double>(e.after) / static_cast<double>(e.before);
    de.V = static_cast<double>(de.v) / static_cast<double>(2 * e.after);
    de.r_before = r.value();
    r.add(-de.V - half_max(de.z, e.after));
    de.r_after = r.value();
    de.U = frac(de.V + de.r_after);
    d.events.push_back(de);
  }
  return d;
}

std::vector<Atom> export_point_measure(const ReversedDrivers& d, double T, bool include_negative) {
  std::vector<Atom> out;
  const std::size_t n = d.count_until(T);
  for (std::size_t j = 0; j < n; ++j) {
    const auto& e = d.events[j];
    if (e.after > e.before || (include_negative && e.after < e.before)) out.push_back({T - e.t, e.z, e.U});
  }
  return out;
}

double position_of(const ReversedDrivers& d, double T, std::int64_t index) {
  const std::int64_t p = d.perimeter_at(T);
  return frac(d.offset_at(T) + static_cast<double>(index) / static_cast<double>(2 * p));
}

std::vector<std::int64_t> starts_from_positions(const ReversedDrivers& d, double T, const std::vector<double>& x,
                                                bool snap) {
  const std::int64_t p2 = 2 * d.perimeter_at(T);
  const double r = d.offset_at(T);
  std::vector<std::int64_t> out;
  for (double xi : x) {
    const double y = frac(xi - r) * static_cast<double>(p2);
    std::int64_t i = std::llround(y);
    if (std::fabs(y - static_cast<double>(i)) > 1e-9 * static_cast<double>(p2)) {
      if (!snap) throw Error(ErrorCode::StartOffGrid, "start is not on the time-T grid");
      i = static_cast<std::int64_t>(std::floor(y));
    }
    out.push_back(mod(i, p2));
  }
  return out;
}

FlowState evolve_flow(const ReversedDrivers& d, const std::vector<std::int64_t>& starts, double T,
                      const FlowOptions& opt) {
  const std::size_t J = d.count_until(T);
  const std::size_t N = starts.size();
  FlowState st;
  st.T = T;
  st.index = starts;
  st.merged_into.assign(N, std::nullopt);
  st.band_sum.assign(N, 0.0);
  st.lifted.resize(N);
  const std::int64_t p_T = d.perimeter_at(T);
  for (std::size_t k = 0; k < N; ++k) {
    if (starts[k] < 0 || starts[k] >= 2 * p_T) throw Error(ErrorCode::StartOffGrid, "start index outside the grid");
    st.lifted[k] = position_of(d, T, starts[k]);
  }
  std::vector<double> real = st.lifted;
  if (opt.record) {
    st.records.resize(N);
    for (std::size_t k = 0; k < N; ++k) {
      st.records[k].s.push_back(0.0);
      st.records[k].index.push_back(st.index[k]);
      st.records[k].position.push_back(st.lifted[k]);
      st.records[k].perimeter.push_back(p_T);
    }
  }
  st.samples.assign(N, std::vector<double>());
  std::size_t next_sample = 0;
  auto take_samples = [&](double upto, bool inclusive) {
    while (next_sample < opt.sample_times.size() &&
           (opt.sample_times[next_sample] < upto || (inclusive && opt.sample_times[next_sample] <= upto))) {
      for (std::size_t k = 0; k < N; ++k) st.samples[k].push_back(st.lifted[k]);
      ++next_sample;
    }
  };
  // merge bookkeeping: class root for every trajectory
  auto root = [&](std::size_t k) {
    while (st.merged_into[k]) k = *st.merged_into[k];
    return k;
  };
  std::vector<std::int64_t> new_index(N);
  std::vector<std::size_t> order;
  for (std::size_t jj = J; jj-- > 0;) {
    const DriverEvent& e = d.events[jj];
    const double s = T - e.t;
    take_samples(s, false);
    const std::int64_t pj2 = 2 * e.after;
    const std::int64_t pb2 = 2 * e.before;
    const std::int64_t dp = e.after - e.before;
    const double hm = half_max(e.z, e.after);
    const bool in_band = opt.band_eps > 0.0 && std::fabs(e.z - 1.0) < opt.band_eps;
    if (in_band) st.band_energy += (e.z - 1.0) * (e.z - 1.0);
    for (std::size_t k = 0; k < N; ++k) {
      const std::int64_t m = mod(st.index[k] - e.v, pj2);
      std::int64_t ni;
      if (dp > 0)
        ni = m <= 2 * dp ? 0 : m - 2 * dp;
      else
        ni = m;
      const double g = static_cast<double>(ni) / static_cast<double>(pb2) - static_cast<double>(m) / static_cast<double>(pj2) + hm;
      if (ni < 0 || ni >= pb2) st.grid_consistent = false;
      new_index[k] = ni;
      st.lifted[k] += g;
      if (in_band) st.band_sum[k] += g;
      if (opt.dual_check) {
        double f = frac(real[k] - e.U);
        std::int64_t q = std::llround(f * static_cast<double>(pj2));
        if (q == pj2) q = 0;
        f = static_cast<double>(q) / static_cast<double>(pj2);
        real[k] += g_discrete(e.U + f, e.z, e.U, e.after);
        const double grid_pos = frac(e.r_before + static_cast<double>(ni) / static_cast<double>(pb2));
        st.max_dual_error = std::max({st.max_dual_error, std::fabs(real[k] - st.lifted[k]),
                                      torus_gap(st.lifted[k], grid_pos)});
      }
    }
    // cyclic order of live classes
    order.clear();
    for (std::size_t k = 0; k < N; ++k)
      if (!st.merged_into[k]) order.push_back(k);
    std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return st.index[x] < st.index[y]; });
    if (order.size() > 1) {
      int descents = 0;
      for (std::size_t q = 0; q < order.size(); ++q) {
        const std::size_t nx = order[(q + 1) % order.size()];
        if (new_index[nx] < new_index[order[q]]) ++descents;
      }
      if (descents > 1) st.order_preserved = false;
    }
    st.index = new_index;
    // merges among live classes
    std::map<std::int64_t, std::size_t> seen;
    for (std::size_t k : order) {
      auto [it, fresh] = seen.emplace(st.index[k], k);
      if (!fresh) {
        const std::size_t a = std::min(it->second, k), b = std::max(it->second, k);
        st.merged_into[b] = a;
        it->second = a;
        st.merges.push_back({s, a, b});
      }
    }
    for (std::size_t k = 0; k < N; ++k)
      if (st.merged_into[k] && st.index[k] != st.index[root(k)]) st.permanence = false;
    if (opt.record)
      for (std::size_t k = 0; k < N; ++k) {
        st.records[k].s.push_back(s);
        st.records[k].index.push_back(st.index[k]);
        st.records[k].position.push_back(st.lifted[k]);
        st.records[k].perimeter.push_back(e.before);
      }
  }
  take_samples(T, true);
  while (next_sample < opt.sample_times.size()) {
    for (std::size_t k = 0; k < N; ++k) st.samples[k].push_back(st.lifted[k]);
    ++next_sample;
  }
  return st;
}

MartingaleEstimate martingale_diagnostic(const PerimeterSampler& sampler, double a, std::int64_t l, double T,
                                         double eps, double v, std::size_t replicas, std::uint64_t seed) {
  if (!(eps > 0.0 && eps < 1.0)) throw Error(ErrorCode::InvalidArgument, "eps must lie in (0,1)");
  if (replicas == 0) throw Error(ErrorCode::EmptySample, "no replicas");
  double s1 = 0.0, s2 = 0.0, qv = 0.0;
  FlowOptions opt;
  opt.band_eps = eps;
  for (std::size_t r = 0; r < replicas; ++r) {
    Rng rng = make_stream(seed, "martingale", r);
    auto pt = simulate_ptilde(sampler, l, a, T, rng);
    auto d = build_drivers(pt, rng);
    auto starts = starts_from_positions(d, T, {v}, true);
    auto st = evolve_flow(d, starts, T, opt);
    s1 += st.band_sum[0];
    s2 += st.band_sum[0] * st.band_sum[0];
    qv += st.band_energy;
  }
  MartingaleEstimate out;
  const double n = static_cast<double>(replicas);
  out.replicas = replicas;
  out.mean = s1 / n;
  out.variance = replicas > 1 ? (s2 - s1 * s1 / n) / (n - 1.0) : 0.0;
  out.stderr_ = std::sqrt(out.variance / n);
  out.band_energy = qv / n;
  return out;
}

std::vector<double> small_jump_energy(const PerimeterSampler& sampler, double a, std::int64_t l, double T,
                                      const std::vector<double>& eps, std::size_t replicas, std::uint64_t seed) {
  if (replicas == 0) throw Error(ErrorCode::EmptySample, "no replicas");
  std::vector<double> acc(eps.size(), 0.0);
  for (std::size_t r = 0; r < replicas; ++r) {
    Rng rng = make_stream(seed, "small_jumps", r);
    auto pt = simulate_ptilde(sampler, l, a, T, rng);
    for (const auto& e : pt.events) {
      if (e.after == e.before) continue;
      const double y = static_cast<double>(e.after - e.before) / static_cast<double>(e.before);
      for (std::size_t i = 0; i < eps.size(); ++i)
        if (std::fabs(y) < eps[i]) acc[i] += y * y;
    }
  }
  for (double& x : acc) x /= static_cast<double>(replicas);
  return acc;
}

}  // namespace mapflow

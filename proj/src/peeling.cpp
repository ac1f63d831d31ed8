#include "mapflow/peeling.hpp"

#include <algorithm>

#include "mapflow/error.hpp"

namespace mapflow {

FppClock fpp_times(const PerimeterPath& path, Rng& rng, Deterministic det) {
  FppClock c;
  c.times.reserve(path.values.size());
  c.times.push_back(0.0);
  double t = 0.0;
  for (std::size_t i = 0; i + 1 < path.values.size(); ++i) {
    const std::int64_t p = path.values[i];
    if (p <= 0) throw Error(ErrorCode::DivisionAtAbsorption, "clock evaluated past absorption");
    const double e = det.on ? 1.0 : rng.exponential();
    t += e / (2.0 * static_cast<double>(p));
    c.times.push_back(t);
  }
  return c;
}

std::size_t hull_index(const FppClock& clock, double r) {
  if (r <= 0.0) return 0;
  auto it = std::lower_bound(clock.times.begin(), clock.times.end(), r);
  if (it == clock.times.end()) return clock.times.size() - 1;
  return static_cast<std::size_t>(it - clock.times.begin());
}

double theta(std::int64_t p_before, std::int64_t p_after) {
  const std::int64_t dp = p_after - p_before;
  if (dp < 0) return 0.0;
  return static_cast<double>(2 * dp + 1) / static_cast<double>(2 * p_after);
}

double theta(const PerimeterPath& path, std::size_t i) {
  if (i + 1 >= path.values.size()) throw Error(ErrorCode::InvalidArgument, "theta index beyond path");
  return theta(path.values[i], path.values[i + 1]);
}

double GeodesicMarks::count(std::size_t n) const {
  n = std::min(n, marks.size());
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += marks[i];
  return s;
}

double GeodesicMarks::sum_theta(std::size_t n) const {
  n = std::min(n, thetas.size());
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += thetas[i];
  return s;
}

double GeodesicMarks::var_theta(std::size_t n) const {
  n = std::min(n, thetas.size());
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += thetas[i] * (1.0 - thetas[i]);
  return s;
}

GeodesicMarks mark_and_count(const PerimeterPath& path, std::size_t n, Rng& rng, Deterministic det) {
  if (n > path.steps()) throw Error(ErrorCode::InvalidArgument, "n beyond the path horizon");
  GeodesicMarks m;
  m.thetas.resize(n);
  m.marks.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double th = theta(path, i);
    m.thetas[i] = th;
    m.marks[i] = det.on ? th : (th > 0.0 && rng.uniform() < th ? 1.0 : 0.0);
  }
  return m;
}

std::vector<ReversedEvent> reversed_event_stream(const PerimeterPath& path, Rng& rng) {
  std::vector<ReversedEvent> out;
  out.reserve(path.steps());
  for (std::size_t k = 0; k < path.steps(); ++k) {
    const std::int64_t after = path.values[k + 1];
    if (after < 1) break;
    const std::int64_t dp = path.jump(k);
    const std::int64_t grid = 2 * after;
    ReversedEvent e;
    e.step = k;
    e.grid = grid;
    e.position = static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(grid)));
    if (dp >= 0) {
      e.kind = EventKind::Glue;
      e.edges = 2 * dp + 1;
    } else {
      e.kind = EventKind::Insert;
      e.edges = -2 * dp;
    }
    out.push_back(e);
  }
  return out;
}

}  // namespace mapflow

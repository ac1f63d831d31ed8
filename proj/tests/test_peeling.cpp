#include <cmath>

#include "doctest.h"
#include "mapflow/error.hpp"
#include "mapflow/peeling.hpp"

using namespace mapflow;

namespace {

PerimeterPath fixed_path(std::vector<std::int64_t> v) {
  PerimeterPath p;
  p.start = v.front();
  p.values = std::move(v);
  return p;
}

}  // namespace

TEST_CASE("fpp clock") {
  Rng rng(1);
  auto ones = fixed_path(std::vector<std::int64_t>(11, 1));
  auto c = fpp_times(ones, rng, Deterministic{true});
  for (std::size_t n = 0; n < c.times.size(); ++n) CHECK(c.times[n] == doctest::Approx(n / 2.0));
  CHECK(c.times[0] == 0.0);
  CHECK(hull_index(c, 0.0) == 0);
  CHECK(hull_index(c, 1.2) == 3);
  CHECK(hull_index(c, 99.0) == 10);
  auto c2 = fpp_times(ones, rng);
  for (std::size_t n = 0; n < c2.times.size(); ++n) CHECK(hull_index(c2, c2.times[n]) == n);
  for (std::size_t n = 1; n < c2.times.size(); ++n) CHECK(c2.times[n] > c2.times[n - 1]);
  auto dead = fixed_path({1, 0, 1});
  CHECK_THROWS_AS(fpp_times(dead, rng), Error);

  const int R = 100000;
  const std::int64_t l = 7;
  auto one = fixed_path({l, l + 1});
  double s = 0, s2 = 0;
  for (int r = 0; r < R; ++r) {
    Rng rr = make_stream(2, "t1", r);
    const double t = fpp_times(one, rr).times[1];
    s += t;
    s2 += t * t;
  }
  const double mean = s / R, sd = std::sqrt(s2 / R - mean * mean);
  CHECK(std::fabs(mean - 1.0 / (2 * l)) < 4 * sd / std::sqrt(double(R)));
}

TEST_CASE("theta") {
  CHECK(theta(5, 3) == 0.0);
  CHECK(theta(4, 5) == doctest::Approx(0.3));
  CHECK(theta(1, 1) == 0.5);
  for (std::int64_t p = 1; p < 50; ++p)
    for (std::int64_t q = 1; q < 50; ++q) {
      const double th = theta(p, q);
      CHECK(th <= 1.0);
      CHECK(th >= 0.0);
      if (q >= p) CHECK(th * 2 * q == doctest::Approx(double(2 * (q - p) + 1)).epsilon(1e-15));
    }
}

TEST_CASE("marks") {
  Rng rng(3);
  auto down = fixed_path({10, 9, 7, 4, 2});
  CHECK(mark_and_count(down, 4, rng).count(4) == 0.0);

  auto nu = build_asymptotic_nu(2.0, 0.05, 64);
  PerimeterSampler s(nu, Law::Infinite);
  Rng pr = make_stream(4, "markpath", 0);
  auto path = sample_path(s, 1, 2000, pr);
  const int R = 10000;
  double sum = 0, sum2 = 0;
  GeodesicMarks ref = mark_and_count(path, 2000, rng, Deterministic{true});
  for (int r = 0; r < R; ++r) {
    Rng mr = make_stream(4, "marks", r);
    const double c = mark_and_count(path, 2000, mr).count(2000);
    sum += c;
    sum2 += c * c;
  }
  const double mean = sum / R, var = sum2 / R - mean * mean;
  const double target = ref.sum_theta(2000), tv = ref.var_theta(2000);
  CHECK(std::fabs(mean - target) < 4 * std::sqrt(tv / R));
  // variance estimate sd is about var * sqrt(2/R) for near-normal counts
  CHECK(std::fabs(var - tv) < 5 * tv * std::sqrt(2.0 / R));
  CHECK(ref.count(2000) == doctest::Approx(target));

  Rng a = make_stream(5, "rep", 0), b = make_stream(5, "rep", 0);
  auto m1 = mark_and_count(path, 2000, a), m2 = mark_and_count(path, 2000, b);
  CHECK(m1.marks == m2.marks);
  double prev = 0;
  for (std::size_t n = 0; n <= 2000; n += 50) {
    CHECK(m1.count(n) >= prev);
    prev = m1.count(n);
  }
  for (std::size_t i = 0; i < 2000; ++i) {
    if (path.jump(i) < 0) CHECK(m1.thetas[i] == 0.0);
    CHECK(m1.marks[i] <= (m1.thetas[i] > 0 ? 1.0 : 0.0));
  }
}

TEST_CASE("reversed events") {
  auto path = fixed_path({3, 5, 2, 2, 4});
  Rng rng(7);
  auto ev = reversed_event_stream(path, rng);
  REQUIRE(ev.size() == 4);
  CHECK(ev[0].kind == EventKind::Glue);
  CHECK(ev[0].edges == 5);
  CHECK(ev[0].grid == 10);
  CHECK(ev[1].kind == EventKind::Insert);
  CHECK(ev[1].edges == 6);
  CHECK(ev[1].grid == 4);
  CHECK(ev[2].kind == EventKind::Glue);
  CHECK(ev[2].edges == 1);

  auto one = fixed_path({2, 3});
  const int R = 100000;
  std::vector<long> counts(6, 0);
  for (int r = 0; r < R; ++r) {
    Rng rr = make_stream(8, "pos", r);
    auto e = reversed_event_stream(one, rr);
    ++counts[e[0].position];
  }
  double chi2 = 0;
  for (long c : counts) chi2 += (c - R / 6.0) * (c - R / 6.0) / (R / 6.0);
  CHECK(chi2 < 20.52);  // 0.1% critical value, 5 degrees of freedom
}

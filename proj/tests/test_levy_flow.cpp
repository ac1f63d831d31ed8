#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "mapflow/error.hpp"
#include "mapflow/levy_flow.hpp"

using namespace mapflow;

TEST_CASE("lambda density and masses") {
  CHECK(lambda_density(2.0, 2.0) == doctest::Approx(0.079577471545947667884).epsilon(1e-14));
  CHECK(lambda_density(0.4, 2.0) == 0.0);
  CHECK(lambda_mass(2.0, 1.5, INFINITY) == doctest::Approx(0.14942805802465556811).epsilon(1e-11));
  CHECK_THROWS_AS(lambda_mass(2.0, 0.9, 1.1), Error);
  const double m = lambda_integral_d(1.75, 0.5, 1.0, [](double d) { return d; }) +
                   lambda_integral_d(1.75, 1.0, INFINITY, [](double d) { return d; });
  CHECK(m == doctest::Approx(-0.5516313256604183134).epsilon(1e-10));
}

TEST_CASE("incomplete beta and drift") {
  CHECK(incomplete_beta(0.5, 0.5, 0.5) == doctest::Approx(1.570796326794896619).epsilon(1e-13));
  const std::pair<double, double> ref[] = {{1.6, -0.54451129573750922031},
                                           {1.75, -0.55163132566041862872},
                                           {1.9, -0.59224439395181425039},
                                           {2.0, -0.63661977236758135869},
                                           {2.25, -0.81604893909826298108},
                                           {2.5, -1.1283791670955125739},
                                           {2.001, -0.63713558005518361747},
                                           {1.999, -0.63610542861486842486},
                                           {2.000001, -0.63662028744380872437},
                                           {1.999999, -0.63661925729281789594}};
  for (auto [a, v] : ref) CHECK(drift_constant(a) == doctest::Approx(v).epsilon(1e-12));
  CHECK(drift_constant(1.75, false) == doctest::Approx(-0.55163132566041862872).epsilon(1e-12));
  CHECK(drift_constant(2.25, false) == doctest::Approx(-0.81604893909826298108).epsilon(1e-12));
  CHECK_THROWS_AS(drift_constant(2.0, false), Error);
  CHECK_THROWS_AS(drift_constant(2.0 + 1e-7, false), Error);
  CHECK_THROWS_AS(drift_constant(3.0), Error);
}

TEST_CASE("g map properties") {
  CHECK(g_map(0.0, 2.0, 0.0) == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(g_map(0.9, 2.0, 0.1) == doctest::Approx(0.05).epsilon(1e-12));
  for (double z : {0.55, 0.8, 0.99, 1.01, 1.5, 4.0, 100.0}) {
    const int n = 20000;
    double s = 0, prev = -1e9;
    for (int i = 0; i < n; ++i) {
      const double u = (i + 0.5) / n;
      const double g = g_map(0.3, z, u);
      s += g;
      CHECK(std::fabs(g) <= 3.0 * std::fabs(1.0 - z) + 1e-12);
      CHECK(g_map(0.3 + 1.0, z, u) == doctest::Approx(g).epsilon(1e-12));
      (void)prev;
    }
    CHECK(std::fabs(s / n) < 1e-4 * std::fabs(1 - z) + 1e-12);
    // x -> x + g(x) nondecreasing
    double last = -1e9;
    for (int i = 0; i < 2000; ++i) {
      const double x = 0.137 + i / 2000.0;
      const double y = x + g_map(x, z, 0.137);
      CHECK(y >= last - 1e-12);
      last = y;
    }
  }
}

TEST_CASE("Levy sampler masses") {
  struct Ref {
    double a, eps, neg, pos;
  };
  const Ref refs[] = {{1.75, 0.001, 70.446115018758871001, 47.858752159503692332},
                      {1.75, 0.1, 2.454246795586501121, 0.8979493281156518379},
                      {2.0, 0.001, 322.38823432407412918, 314.2296281831290773},
                      {2.0, 0.1, 4.228217820786822859, 1.9459239429111547578},
                      {2.25, 0.001, 1637.7590280988971501, 1137.2648335736882358},
                      {2.25, 0.1, 7.6360019864582209557, 2.2710543394344474832}};
  for (const auto& r : refs) {
    auto s = LevyMeasureSampler::flow_band(r.a, r.eps);
    CHECK(s.neg_mass() == doctest::Approx(r.neg).epsilon(1e-10));
    CHECK(s.pos_mass() == doctest::Approx(r.pos).epsilon(1e-10));
    CHECK(lambda_mass(r.a, 0.5, 1 - r.eps) == doctest::Approx(r.neg).epsilon(1e-10));
    CHECK(lambda_mass(r.a, 1 + r.eps, INFINITY) == doctest::Approx(r.pos).epsilon(1e-10));
  }
  CHECK(LevyMeasureSampler::flow_band(2.0, 0.01).total_mass() > LevyMeasureSampler::flow_band(2.0, 0.1).total_mass());
  CHECK(LevyMeasureSampler::flow_band(2.5, 0.1).pos_mass() == 0.0);
}

TEST_CASE("Levy sampler distribution") {
  const double a = 2.0, eps = 0.05;
  auto s = LevyMeasureSampler::flow_band(a, eps);
  Rng rng(7);
  const double cuts[] = {0.5, 0.6, 0.8, 0.9, 0.95, 1.05, 1.1, 1.3, 2.0, 10.0, INFINITY};
  std::vector<int> cnt(10, 0);
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double z = s.sample(rng);
    REQUIRE(((z > 0.5 && z <= 1 - eps) || z >= 1 + eps));
    for (int k = 0; k < 10; ++k)
      if (z >= cuts[k] && z < cuts[k + 1]) ++cnt[k];
  }
  double chi2 = 0;
  int df = 0;
  for (int k = 0; k < 10; ++k) {
    if (k == 4) continue;
    const double p = lambda_mass(a, cuts[k], cuts[k + 1]) / s.total_mass();
    chi2 += (cnt[k] - n * p) * (cnt[k] - n * p) / (n * p);
    ++df;
  }
  CHECK(chi2 < 30.0);
}

TEST_CASE("Poisson event counts") {
  auto s = LevyMeasureSampler::flow_band(1.75, 0.1);
  const double rate = flow_rate_factor(1.75, 0.05);
  Rng rng(3);
  double tot = 0;
  const int reps = 2000;
  for (int r = 0; r < reps; ++r) {
    auto ev = sample_flow_events(s, rate, 5.0, rng);
    tot += ev.size();
    for (std::size_t i = 1; i < ev.size(); ++i) REQUIRE(ev[i].t > ev[i - 1].t);
  }
  const double mean = rate * s.total_mass() * 5.0;
  CHECK(std::fabs(tot / reps - mean) < 4.0 * std::sqrt(mean / reps));
}

TEST_CASE("continuous flow coalescence") {
  std::vector<JumpEvent> ev = {{0.1, 2.0, 0.3}};
  std::vector<double> x = {0.31, 0.5, 0.79, 0.81, 1.4};
  auto fl = evolve_continuous(ev, x);
  // window (z-1)/z = 1/2 after u = 0.3
  CHECK(fl.merged_into[1] == 0u);
  CHECK(fl.merged_into[2] == 0u);
  CHECK(fl.merged_into[4] == 0u);
  CHECK(!fl.merged_into[3]);
  CHECK(fl.lifted[0] == doctest::Approx(0.55));
  CHECK(fl.lifted[4] == doctest::Approx(1.55));
  CHECK(fl.lifted[3] == doctest::Approx(0.81 + 0.02 - 0.51 + 0.25));
  CHECK(fl.permanence);
  CHECK(fl.order_preserved);
}

TEST_CASE("continuous flow random run keeps order") {
  auto s = LevyMeasureSampler::flow_band(2.0, 0.01);
  Rng rng(11);
  auto ev = sample_flow_events(s, flow_rate_factor(2.0, 0.05), 2.0, rng);
  std::vector<double> x;
  for (int i = 0; i < 50; ++i) x.push_back(i / 50.0);
  auto fl = evolve_continuous(ev, x, {0.5, 1.0, 1.5}, true);
  CHECK(fl.order_preserved);
  CHECK(fl.permanence);
  CHECK(fl.samples[0].size() == 3);
  for (std::size_t k = 1; k < x.size(); ++k) CHECK(fl.lifted[k] >= fl.lifted[k - 1] - 1e-12);
}

TEST_CASE("xi path and Lamperti") {
  Rng rng(5);
  const double a = 2.25;
  auto xi = xi_path(a, 0.01, 3.0, rng);
  CHECK(xi.drift == doctest::Approx(xi_effective_drift(a, 0.01)));
  for (double y : xi.jumps) CHECK(std::fabs(y) > 0.01);
  for (double t : {0.0, 0.7, 2.9}) CHECK(lamperti_time(xi, 0.0, t) == t);
  for (double t : {0.5, 1.3, 2.2}) CHECK(pssmp_value(xi, 0.0, 1.7, t) == 1.7 * std::exp(xi.value(t)));
  for (double alpha : {-1.0, 0.5, 1.0}) {
    for (double t : {0.01, 0.2, 0.9}) {
      double tau;
      try {
        tau = lamperti_time(xi, alpha, t);
      } catch (const Error&) {
        continue;
      }
      CHECK(std::fabs(lamperti_integral(xi, alpha, tau) - t) < 1e-10);
    }
  }
  CHECK_THROWS_AS(lamperti_time(xi, 0.0, 4.0), Error);
  auto c = xi.coarsen(0.1, a);
  for (double y : c.jumps) CHECK(std::fabs(y) > 0.1);
  CHECK(c.jumps.size() <= xi.jumps.size());
}

TEST_CASE("effective drift consistency across cutoffs") {
  // E xi(1) does not depend on the cutoff when the mean exists
  const double a = 1.75;
  for (double d : {0.01, 0.1, 0.5}) {
    const double zl = std::exp(-d), zh = std::exp(d);
    auto lg = [](double d) { return std::log1p(d); };
    const double mean = xi_effective_drift(a, d) + lambda_integral_d(a, 0.5, zl, lg) + lambda_integral_d(a, zh, INFINITY, lg);
    const double full = lambda_integral_d(a, 0.5, 1.0, lg) + lambda_integral_d(a, 1.0, INFINITY, lg);
    const double b = drift_constant(a);
    const double compensator = lambda_integral_d(a, 0.5, 1.0, [](double d) { return d; }) +
                               lambda_integral_d(a, 1.0, INFINITY, [](double d) { return d; });
    CHECK(mean == doctest::Approx(b - compensator + full).epsilon(1e-8));
  }
}

TEST_CASE("merged lifts one period apart keep cyclic order") {
  std::vector<JumpEvent> ev = {{0.1, 1.2311254275112806, 0.032172422236427467}};
  std::vector<double> x = {0.14231773705864695, 0.16042829027254607, 0.35904501599955846, 0.17564339602780341,
                           1.0389039548683632,  0.18343657297106708, 0.16657616650255105, 0.37607102497459449};
  auto fl = evolve_continuous(ev, x);
  CHECK(fl.merged_into[4] == 0u);
  CHECK(fl.order_preserved);
  CHECK(fl.permanence);
}

#include <cmath>

#include "doctest.h"
#include "mapflow/error.hpp"
#include "mapflow/flow_discrete.hpp"

using namespace mapflow;

namespace {

const StepDistribution& nu2() {
  static const StepDistribution nu = build_asymptotic_nu(2.0, 0.05, 64);
  return nu;
}

ReversedDrivers one_event(std::int64_t before, std::int64_t after, std::int64_t v) {
  ReversedDrivers d;
  d.start = before;
  DriverEvent e{};
  e.t = 0.5;
  e.before = before;
  e.after = after;
  e.v = v;
  e.z = double(after) / double(before);
  e.V = double(v) / double(2 * after);
  e.r_before = 0.0;
  e.r_after = std::fmod(-e.V - half_max(e.z, after) + 2.0, 1.0);
  e.U = std::fmod(e.V + e.r_after, 1.0);
  d.events.push_back(e);
  return d;
}

}  // namespace

TEST_CASE("g_discrete values and grid centering") {
  CHECK(g_discrete(0, 2, 0, 7) == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(g_discrete(0, 0.5, 0, 2) == doctest::Approx(0.1875).epsilon(1e-15));
  for (double R : {0.0, 0.137, 0.9}) {
    for (int i = 0; i < 8; ++i) {
      const double x = R + i / 8.0;
      double s = 0;
      for (int v = 0; v < 8; ++v) s += g_discrete(x, 2.0, R + v / 8.0, 4);
      CHECK(std::fabs(s / 8) < 1e-12);
    }
  }
  // every event type: average over the post-jump grid vanishes
  for (std::int64_t before : {1, 2, 5, 17})
    for (std::int64_t after : {1, 2, 3, 9, 40}) {
      if (2 * after <= before - 1) continue;
      const double z = double(after) / double(before);
      for (int i = 0; i < 2 * after; ++i) {
        double s = 0;
        for (int v = 0; v < 2 * after; ++v) s += g_discrete(0.3 + i / (2.0 * after), z, 0.3 + v / (2.0 * after), after);
        CHECK(std::fabs(s / (2 * after)) < 1e-12);
      }
    }
}

TEST_CASE("ptilde") {
  PerimeterPath path;
  path.start = 2;
  path.values = {2, 3, 1, 1, 0};
  path.absorbed_at = 4;
  Rng rng(1);
  auto pt = build_ptilde(path, 2.0, rng, Deterministic{true});
  REQUIRE(pt.events.size() == 3);
  CHECK(pt.events[0].t == doctest::Approx(0.25));
  CHECK(pt.events[1].t == doctest::Approx(0.25 + 1.0 / 6));
  CHECK(pt.absorption_time);
  CHECK(pt.value_at(0.1) == 2);
  CHECK(pt.value_at(0.3) == 3);
  CHECK(pt.value_at(100.0) == 0);
  for (std::size_t i = 1; i < pt.events.size(); ++i) {
    CHECK(pt.events[i].t > pt.events[i - 1].t);
    CHECK(pt.events[i].before == pt.events[i - 1].after);
  }
  PerimeterSampler s(nu2(), Law::Finite, 0, FiniteWeights::asymptotic(2.0));
  auto sp = simulate_ptilde(s, 100, 2.0, 3.0, rng);
  for (const auto& e : sp.events) CHECK(e.t <= 3.0);
}

TEST_CASE("single glue window merges") {
  // P: 2 -> 5, glue window covers 2*3+1 = 7 of 10 edges from v
  auto d = one_event(2, 5, 3);
  std::vector<std::int64_t> starts;
  for (int i = 0; i < 10; ++i) starts.push_back(i);
  auto st = evolve_flow(d, starts, 1.0, FlowOptions{true, {}, true, 0.0});
  for (int i = 0; i < 10; ++i) {
    const std::int64_t m = ((i - 3) % 10 + 10) % 10;
    CHECK(st.index[i] == (m <= 6 ? 0 : m - 6));
  }
  CHECK(st.merges.size() == 6);
  CHECK(st.permanence);
  CHECK(st.order_preserved);
  CHECK(st.max_dual_error < 1e-12);
  // the whole boundary glued at once
  auto full = one_event(1, 3, 0);
  auto st2 = evolve_flow(full, {0, 1, 2, 3, 4}, 1.0);
  for (auto i : st2.index) CHECK(i == 0);
  // no events
  ReversedDrivers none;
  none.start = 4;
  auto st3 = evolve_flow(none, {3}, 1.0, FlowOptions{false, {0.5, 1.0}, false, 0.0});
  CHECK(st3.index[0] == 3);
  CHECK(st3.samples[0][0] == st3.samples[0][1]);
}

TEST_CASE("insert events shift without merging") {
  auto d = one_event(6, 2, 1);  // 4 edges -> 12 edges
  auto st = evolve_flow(d, {0, 1, 2, 3}, 1.0, FlowOptions{false, {}, true, 0.0});
  CHECK(st.index == std::vector<std::int64_t>{3, 0, 1, 2});
  CHECK(st.merges.empty());
  CHECK(st.max_dual_error < 1e-12);
  CHECK(st.order_preserved);
}

TEST_CASE("off-grid starts") {
  auto d = one_event(2, 5, 3);
  CHECK_THROWS_AS(starts_from_positions(d, 1.0, {0.123456}), Error);
  auto s = starts_from_positions(d, 1.0, {0.123456}, true);
  CHECK(s[0] >= 0);
  CHECK(s[0] < 10);
  const double x = position_of(d, 1.0, 4);
  CHECK(starts_from_positions(d, 1.0, {x})[0] == 4);
}

TEST_CASE("random runs: exact structure and dual agreement") {
  PerimeterSampler s(nu2(), Law::Finite, 0, FiniteWeights::asymptotic(2.0));
  for (int r = 0; r < 200; ++r) {
    Rng rng = make_stream(17, "dual", r);
    auto pt = simulate_ptilde(s, 64, 2.0, 2.0, rng);
    auto d = build_drivers(pt, rng);
    const std::int64_t p2 = 2 * d.perimeter_at(2.0);
    std::vector<std::int64_t> starts;
    for (int k = 0; k < 6; ++k) starts.push_back(static_cast<std::int64_t>(rng.below(p2)));
    auto st = evolve_flow(d, starts, 2.0, FlowOptions{false, {}, true, 0.0});
    CHECK(st.permanence);
    CHECK(st.order_preserved);
    CHECK(st.grid_consistent);
    CHECK(st.max_dual_error < 1e-9);
    for (std::size_t k = 0; k < starts.size(); ++k) CHECK(st.index[k] < 2 * d.start);
  }
}

TEST_CASE("point measure") {
  ReversedDrivers d = one_event(5, 3, 0);
  CHECK(export_point_measure(d, 1.0).empty());
  CHECK(export_point_measure(d, 1.0, true).size() == 1);
  PerimeterSampler s(nu2(), Law::Finite, 0, FiniteWeights::asymptotic(2.0));
  Rng rng = make_stream(3, "atoms", 0);
  std::vector<double> us;
  while (us.size() < 100000) {
    auto pt = simulate_ptilde(s, 256, 2.0, 2.0, rng);
    auto dd = build_drivers(pt, rng);
    std::size_t pos = 0;
    for (std::size_t j = 0; j < dd.count_until(2.0); ++j) pos += dd.events[j].after > dd.events[j].before;
    auto atoms = export_point_measure(dd, 2.0);
    CHECK(atoms.size() == pos);
    for (auto& a : atoms) {
      CHECK(a.z > 1.0);
      CHECK(a.u >= 0.0);
      CHECK(a.u < 1.0);
      us.push_back(a.u);
    }
  }
  std::sort(us.begin(), us.end());
  double ks = 0;
  for (std::size_t i = 0; i < us.size(); ++i)
    ks = std::max({ks, std::fabs(us[i] - double(i) / us.size()), std::fabs(us[i] - double(i + 1) / us.size())});
  CHECK(ks < 0.02);
}

TEST_CASE("martingale and small jumps") {
  PerimeterSampler s(nu2(), Law::Finite, 0, FiniteWeights::asymptotic(2.0));
  auto none = martingale_diagnostic(s, 2.0, 64, 1.0, 1e-6, 0.3, 50, 1);
  CHECK(none.mean == 0.0);
  auto m = martingale_diagnostic(s, 2.0, 256, 2.0, 0.5, 0.3, 2000, 2);
  CHECK(std::fabs(m.mean) < 4 * m.stderr_);
  CHECK(m.variance <= 9 * m.band_energy);
  auto e = small_jump_energy(s, 2.0, 256, 2.0, {0.0, 0.1, 0.4}, 500, 3);
  CHECK(e[0] == 0.0);
  CHECK(e[1] < e[2]);
}

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "mapflow/error.hpp"
#include "mapflow/harness.hpp"

using namespace mapflow;

TEST_CASE("ks_distance") {
  std::vector<double> x{0.3, 0.1, 0.7, 0.7, 0.2};
  CHECK(ks_distance(x, x) == 0.0);
  CHECK(ks_distance({1, 2, 3}, {4, 5}) == 1.0);
  CHECK(ks_distance({4, 5}, {1, 2, 3}) == 1.0);
  CHECK(ks_distance({1.0}, {1.0, 2.0}) == doctest::Approx(0.5));
  CHECK_THROWS_AS(ks_distance({}, {1.0}), Error);
  try {
    ks_distance({1.0}, {});
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::EmptySample);
  }
  Rng rng = make_stream(5, "ks", 0);
  std::vector<double> u, v;
  for (int i = 0; i < 20000; ++i) u.push_back(rng.uniform());
  for (double t : u) v.push_back(t + 0.5);
  CHECK(std::fabs(ks_distance(u, v) - 0.5) < 0.02);
  std::vector<double> w;
  for (int i = 0; i < 20000; ++i) w.push_back(rng.uniform());
  CHECK(ks_distance(u, w) < ks_critical(u.size(), w.size(), 0.001));
}

TEST_CASE("estimators") {
  auto e = estimate({1.0, 2.0, 3.0, 4.0});
  CHECK(e.mean == 2.5);
  CHECK(e.stderr_ == doctest::Approx(std::sqrt(5.0 / 3.0 / 4.0)));
  CHECK(e.low_power);
  CHECK(!estimate(std::vector<double>(30, 1.0)).low_power);
  std::vector<double> a{0.1, 1e10, -1e10, 0.3}, b{-1e10, 0.3, 1e10, 0.1};
  CHECK(estimate(a).mean == estimate(b).mean);
  CHECK(loglog_slope({1, 2, 4, 8}, {3, 12, 48, 192}) == doctest::Approx(2.0));
  CHECK(trend_nonincreasing({0.5, 0.4, 0.3}, {0.01, 0.01, 0.01}));
  CHECK(trend_nonincreasing({0.5, 0.4, 0.405, 0.3}, {0.01, 0.01, 0.01, 0.01}));
  CHECK(!trend_nonincreasing({0.5, 0.4, 0.405, 0.3, 0.302}, {0.01, 0.01, 0.01, 0.01, 0.01}));
  CHECK(!trend_nonincreasing({0.5, 0.6}, {0.01, 0.01}));
  std::vector<double> x, y;
  Rng rng = make_stream(2, "fit", 0);
  for (int i = 0; i < 3000; ++i) x.push_back(rng.exponential());
  for (int i = 0; i < 3000; ++i) y.push_back(3.0 * rng.exponential());
  auto fit = fit_scale_ks(x, y);
  CHECK(fit.scale == doctest::Approx(3.0).epsilon(0.1));
  CHECK(fit.ks < 0.05);
}

TEST_CASE("replica_map is schedule independent") {
  auto f = [](std::size_t i) {
    Rng rng = make_stream(9, "map", i);
    return rng.uniform();
  };
  auto one = replica_map<double>(200, 1, f);
  auto four = replica_map<double>(200, 4, f);
  CHECK(one == four);
  CHECK_THROWS(replica_map<double>(10, 3, [](std::size_t i) -> double {
    if (i == 7) throw Error(ErrorCode::InvalidArgument, "boom");
    return 0.0;
  }));
}

TEST_CASE("config parsing") {
  auto c = parse_config_text("# comment\nkind = theorem1\n\n a=1.75 \nn_grid = 10, 100\nreplicas = 4\n");
  REQUIRE(c.size() == 4);
  CHECK(c[1].first == "a");
  CHECK(c[1].second == "1.75");
  auto s = ExperimentSpec::from_config(c);
  CHECK(s.a == 1.75);
  CHECK(s.n_grid == std::vector<std::int64_t>{10, 100});
  CHECK(s.config == c);
  auto code = [](auto fn) {
    try {
      fn();
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::InvalidArgument;
  };
  CHECK(code([] { parse_config_text("no equals sign"); }) == ErrorCode::ConfigError);
  CHECK(code([] { ExperimentSpec::from_config({{"bogus", "1"}}); }) == ErrorCode::ConfigError);
  CHECK(code([] { ExperimentSpec::from_config({{"a", "abc"}}); }) == ErrorCode::ConfigError);
  CHECK(code([] { ExperimentSpec::from_config({{"a", "3.5"}}); }) == ErrorCode::ConfigError);
  CHECK(code([] { ExperimentSpec::from_config({{"n_grid", ""}}); }) == ErrorCode::ConfigError);
  CHECK(code([] { ExperimentSpec::from_config({{"format", "xml"}}); }) == ErrorCode::ConfigError);
  CHECK(code([] { parse_config_file("/nonexistent/dir/cfg"); }) == ErrorCode::IoError);
}

namespace {

ExperimentSpec small_spec(std::size_t replicas, std::size_t offset) {
  auto s = ExperimentSpec::from_config({{"kind", "theorem1"},
                                        {"a", "2"},
                                        {"n_grid", "100, 1000"},
                                        {"replicas", std::to_string(replicas)},
                                        {"replica_offset", std::to_string(offset)},
                                        {"seed", "11"}});
  return s;
}

std::string csv_of(const Report& r) {
  std::ostringstream os;
  write_csv(r, os);
  return os.str();
}

}  // namespace

TEST_CASE("run: determinism, partitioning, echo, io errors") {
  auto s = small_spec(40, 0);
  s.threads = 3;
  const std::string a = csv_of(run(s));
  s.threads = 1;
  const std::string b = csv_of(run(s));
  CHECK(a == b);
  CHECK(a.find("# config a = 2\n") != std::string::npos);
  CHECK(a.find("# schema_version = 1\n") != std::string::npos);

  auto pooled = run(small_spec(4, 0)).replicas;
  std::vector<std::vector<double>> parts;
  for (std::size_t r = 0; r < 4; ++r)
    for (const auto& rec : run(small_spec(1, r)).replicas) parts.push_back(rec.values);
  std::vector<std::vector<double>> whole;
  for (const auto& rec : pooled) whole.push_back(rec.values);
  std::sort(parts.begin(), parts.end());
  std::sort(whole.begin(), whole.end());
  CHECK(parts == whole);

  auto rep = run(small_spec(4, 0));
  CHECK(rep.config == small_spec(4, 0).config);
  CHECK(rep.rows.size() == 2);
  for (const auto& row : rep.rows) {
    CHECK(row.est.replicas == 4);
    CHECK(row.est.low_power);
  }

  auto bad = small_spec(2, 0);
  bad.out = "/nonexistent/dir/out.csv";
  try {
    run(bad);
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::IoError);
  }

  auto js = small_spec(2, 0);
  js.format = "json";
  js.out = "harness_test_out.json";
  run(js);
  std::ifstream f(js.out);
  std::stringstream ss;
  ss << f.rdbuf();
  CHECK(ss.str().find("\"schema_version\": 1") != std::string::npos);
  CHECK(ss.str().find("\"n_grid\": \"100, 1000\"") != std::string::npos);
  std::remove(js.out.c_str());
}

TEST_CASE("csv floats carry 17 significant digits") {
  Report r;
  r.rows.push_back({"x", 0.1, Estimate{1.0 / 3.0, 0.0, 1, true}, std::nullopt});
  const std::string s = csv_of(r);
  CHECK(s.find("0.33333333333333331") != std::string::npos);
  CHECK(s.find("0.10000000000000001") != std::string::npos);
}

TEST_CASE("face counts and theorem1 constants") {
  CHECK(theorem1_target(2.0) == doctest::Approx(0.10132118364233778));
  CHECK(theorem1_target(1.75) == doctest::Approx(0.63661977236758134));
  CHECK(std::isnan(theorem1_target(2.25)));
  CHECK(theorem1_scale(2.0, std::exp(2.0)) == doctest::Approx(0.25));
  CHECK(theorem1_scale(1.75, std::exp(2.0)) == doctest::Approx(0.5));
  CHECK(theorem1_scale(2.25, 32.0) == doctest::Approx(std::pow(32.0, -0.2)));
  const auto nu = build_asymptotic_nu(2.0, 0.05);
  PerimeterSampler s(nu, Law::Infinite);
  Rng rng = make_stream(1, "counts", 0);
  auto c = geodesic_face_counts(s, {10, 100, 1000}, rng);
  CHECK(c[0] <= c[1]);
  CHECK(c[1] <= c[2]);
  CHECK(c[2] <= 1000.0);
}

TEST_CASE("suites produce checks with replica counts") {
  auto spec = ExperimentSpec::from_config({{"kind", "flow_convergence"},
                                           {"a", "2"},
                                           {"l_grid", "64, 128"},
                                           {"t_grid", "1"},
                                           {"eps", "0.01"},
                                           {"replicas", "40"},
                                           {"threads", "2"}});
  auto r = run(spec);
  const auto* zero = &r.ks[0];
  CHECK(zero->x == 0.0);
  CHECK(zero->statistic == 0.0);
  CHECK(!r.checks.empty());
  for (const auto& row : r.rows) CHECK(row.est.replicas > 0);

  auto sj = ExperimentSpec::from_config(
      {{"kind", "small_jumps"}, {"a", "2"}, {"l_grid", "256"}, {"t_grid", "1"}, {"replicas", "40"}});
  auto e = run(sj);
  CHECK(e.check("slope_minus_expected") != nullptr);

  auto t4 = ExperimentSpec::from_config({{"kind", "theorem4"},
                                         {"a", "1.8"},
                                         {"l_grid", "64, 128"},
                                         {"replicas", "30"},
                                         {"eps", "0.01"},
                                         {"threads", "2"}});
  auto q = run(t4);
  CHECK(q.check("ks_between_l") != nullptr);
  CHECK(q.check("ks_fitted_vs_continuous") != nullptr);
}

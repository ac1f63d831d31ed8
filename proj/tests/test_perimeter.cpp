#include <cmath>
#include <map>

#include "doctest.h"
#include "mapflow/error.hpp"
#include "mapflow/perimeter.hpp"

using namespace mapflow;

namespace {

const StepDistribution& nu2() {
  static const StepDistribution nu = build_asymptotic_nu(2.0, 0.05, 64);
  return nu;
}

// Pearson statistic of sampled jumps against a kernel row, cells with
// expectation below 20 pooled with the residual.
double chi2_against(const KernelRow& row, const PerimeterSampler& s, std::int64_t p, int n, std::uint64_t seed,
                    int& df) {
  Rng rng = make_stream(seed, "chi2", static_cast<std::uint64_t>(p));
  std::map<std::int64_t, long> counts;
  for (int i = 0; i < n; ++i) ++counts[s.step(p, rng)];
  double chi2 = 0.0, rest_e = 0.0;
  long rest_c = 0;
  df = 0;
  for (std::int64_t k = row.k_min; k <= row.k_max(); ++k) {
    const double e = n * row.at(k);
    const long c = counts.count(k) ? counts[k] : 0;
    if (e < 20) {
      rest_e += e;
      rest_c += c;
      continue;
    }
    chi2 += (c - e) * (c - e) / e;
    ++df;
  }
  for (auto& [k, c] : counts)
    if (k > row.k_max()) rest_c += c;
  rest_e += n * row.tail;
  if (rest_e > 0) {
    chi2 += (rest_c - rest_e) * (rest_c - rest_e) / rest_e;
    ++df;
  }
  return chi2;
}

// upper 0.1% chi-square quantile, Wilson-Hilferty
double chi2_crit(int df) {
  const double z = 3.090232;
  const double t = 1.0 - 2.0 / (9.0 * df) + z * std::sqrt(2.0 / (9.0 * df));
  return df * t * t * t;
}

}  // namespace

TEST_CASE("infinite rows") {
  auto pm = StepDistribution::point_mass(0);
  for (std::int64_t p : {1, 7, 1000}) {
    auto row = kernel_row_infinite(pm, p);
    CHECK(row.at(0) == doctest::Approx(1.0).epsilon(1e-15));
  }
  for (std::int64_t p : {1, 10, 10000}) {
    auto row = kernel_row_infinite(nu2(), p);
    CHECK(std::fabs(row.sum() - 1.0) < 1e-9);
    CHECK(row.k_min == 1 - p);
  }
  auto row = kernel_row_infinite(nu2(), 10);
  for (std::int64_t k : {-9, -3, 0, 2, 40})
    for (std::int64_t k2 : {-5, 1, 64}) {
      const double want = nu2().mass(k) * h_up(10 + k) / (nu2().mass(k2) * h_up(10 + k2));
      CHECK(row.at(k) / row.at(k2) == doctest::Approx(want).epsilon(1e-12));
    }
  // normalizer is the harmonic residual
  CHECK(std::fabs(row.normalizer - 1.0) <= criticality_residual(nu2(), 10, 10) + 1e-12);
}

TEST_CASE("finite rows and the half weight") {
  auto fw = FiniteWeights::asymptotic(2.0);
  CHECK(finite_indicator(5, -3) == 0.5);
  CHECK(finite_indicator(5, -2) == 1.0);
  CHECK(finite_indicator(5, -4) == 0.0);
  CHECK(finite_indicator(4, -2) == 1.0);
  CHECK(finite_indicator(4, -3) == 0.0);
  CHECK(finite_indicator(1, -1) == 0.5);
  auto r5 = kernel_row_finite(nu2(), fw, 5);
  CHECK(r5.at(-3) / r5.at(-2) ==
        doctest::Approx(0.5 * nu2().mass(-3) * std::pow(5.0 / 2, 2) / (nu2().mass(-2) * std::pow(5.0 / 3, 2))));
  CHECK(r5.at(-4) == 0.0);
  for (std::int64_t p = 1; p <= 100; ++p) CHECK(std::fabs(kernel_row_finite(nu2(), fw, p).sum() - 1.0) < 1e-9);
  auto r1 = kernel_row_finite(nu2(), fw, 1);
  CHECK(r1.at(-1) > 0.0);
  CHECK(r1.k_min == -1);
}

TEST_CASE("finite rows from a W table") {
  std::vector<double> W(200);
  for (std::size_t l = 0; l < W.size(); ++l) W[l] = l == 0 ? 1.0 : std::pow(double(l), -2.0) * 0.025;
  auto fw = FiniteWeights::from_table(W, 1.0);
  auto row = kernel_row_finite(nu2(), fw, 10);
  CHECK(std::fabs(row.sum() - 1.0) < 1e-12);
  CHECK(row.at(3) / row.at(1) == doctest::Approx(nu2().mass(3) * W[13] / (nu2().mass(1) * W[11])));
  PerimeterSampler s(nu2(), Law::Finite, 0, fw);
  Rng rng = make_stream(3, "wtab", 0);
  for (int i = 0; i < 200; ++i) {
    auto k = s.step(10, rng);
    CHECK(row.at(k) > 0.0);
  }
}

TEST_CASE("target rows") {
  for (std::int64_t p : {1, 5, 300})
    for (std::int64_t t : {1, 3, 50}) {
      auto row = kernel_row_target(nu2(), p, t);
      CHECK(std::fabs(row.sum() - 1.0) < 1e-9);
      CHECK(row.at(-p - t) == doctest::Approx(nu2().mass(-p - t) / h_down_p(p, t) / row.normalizer).epsilon(1e-12));
      for (std::int64_t k = -p - t + 1; k <= -p; ++k) CHECK(row.at(k) == 0.0);
    }
}

TEST_CASE("samplers agree with rows") {
  const int N = 400000;
  auto fw = FiniteWeights::asymptotic(2.0);
  for (std::int64_t p : {1, 2, 3, 8, 101, 5000}) {
    int df = 0;
    PerimeterSampler si(nu2(), Law::Infinite);
    double c = chi2_against(kernel_row_infinite(nu2(), p), si, p, N, 11, df);
    CHECK_MESSAGE(c < chi2_crit(df), "infinite p=" << p);
    PerimeterSampler sf(nu2(), Law::Finite, 0, fw);
    c = chi2_against(kernel_row_finite(nu2(), fw, p), sf, p, N, 12, df);
    CHECK_MESSAGE(c < chi2_crit(df), "finite p=" << p);
    PerimeterSampler st(nu2(), Law::Target, 4);
    c = chi2_against(kernel_row_target(nu2(), p, 4), st, p, N, 13, df);
    CHECK_MESSAGE(c < chi2_crit(df), "target p=" << p);
  }
  auto nu175 = build_asymptotic_nu(1.75, 0.05, 64);
  auto fw175 = FiniteWeights::asymptotic(1.75);
  for (std::int64_t p : {1, 6, 700}) {
    int df = 0;
    PerimeterSampler si(nu175, Law::Infinite);
    double c = chi2_against(kernel_row_infinite(nu175, p), si, p, N, 21, df);
    CHECK(c < chi2_crit(df));
    PerimeterSampler sf(nu175, Law::Finite, 0, fw175);
    c = chi2_against(kernel_row_finite(nu175, fw175, p), sf, p, N, 22, df);
    CHECK(c < chi2_crit(df));
  }
}

TEST_CASE("paths") {
  PerimeterSampler si(nu2(), Law::Infinite);
  Rng rng = make_stream(5, "paths", 0);
  auto p0 = sample_path(si, 7, 0, rng);
  CHECK(p0.values == std::vector<std::int64_t>{7});
  auto pi = sample_path(si, 1, 20000, rng);
  CHECK(pi.values.size() == 20001);
  for (auto v : pi.values) CHECK_MESSAGE(v >= 1, "infinite path hit " << v);
  CHECK(!pi.absorbed_at);

  PerimeterSampler sf(nu2(), Law::Finite, 0, FiniteWeights::asymptotic(2.0));
  for (int r = 0; r < 200; ++r) {
    auto pf = sample_path(sf, 1, -1, rng, 10000000);
    REQUIRE(pf.absorbed_at);
    CHECK(pf.values.back() == 0);
    CHECK(*pf.absorbed_at == pf.values.size() - 1);
    for (std::size_t i = 0; i + 1 < pf.values.size(); ++i) CHECK(pf.values[i] >= 1);
  }
  PerimeterSampler st(nu2(), Law::Target, 3);
  for (int r = 0; r < 200; ++r) {
    auto pt = sample_path(st, 10, -1, rng, 10000000);
    REQUIRE(pt.absorbed_at);
    CHECK(pt.values.back() == -3);
  }
  CHECK_THROWS_AS(sample_path(si, 1, -1, rng), Error);
  try {
    sample_path(si, 1, 100, rng, 10);
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::StepCapExceeded);
  }
}

TEST_CASE("heavier negative tail absorbs more often") {
  auto fw = FiniteWeights::asymptotic(2.0);
  auto absorb_rate = [&](double pq) {
    auto nu = build_asymptotic_nu(2.0, pq, 64);
    PerimeterSampler s(nu, Law::Finite, 0, fw);
    int hits = 0;
    for (int r = 0; r < 20000; ++r) {
      Rng rng = make_stream(9, "mono", static_cast<std::uint64_t>(r));
      auto path = sample_path(s, 1, 50, rng);
      hits += path.absorbed_at.has_value();
    }
    return hits;
  };
  CHECK(absorb_rate(0.08) > absorb_rate(0.02));
}

#include "mapflow/model.hpp"

#include <gsl/gsl_errno.h>
#include <gsl/gsl_sf_zeta.h>

#include <algorithm>
#include <array>
#include <boost/math/constants/constants.hpp>
#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <boost/math/special_functions/cos_pi.hpp>
#include <charconv>
#include <cmath>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>

#include "mapflow/error.hpp"

namespace mapflow {

namespace {

constexpr double kPi = boost::math::constants::pi<double>();
constexpr std::int64_t kUpTable = 1024;

const std::vector<double>& h_up_table() {
  static const std::vector<double> table = [] {
    std::vector<double> t(kUpTable + 1, 0.0);
    long double h = 1.0L;
    t[1] = 1.0;
    for (std::int64_t l = 1; l < kUpTable; ++l) {
      h *= static_cast<long double>(2 * l + 1) / static_cast<long double>(2 * l);
      t[l + 1] = static_cast<double>(h);
    }
    return t;
  }();
  return table;
}

// Gamma(x+1/2) sqrt(x) / Gamma(x+1) for large x.
double scaled_series(double x) {
  static constexpr std::array<double, 9> c = {
      1.0, -1.0 / 8, 1.0 / 128, 5.0 / 1024, -21.0 / 32768, -399.0 / 262144, 869.0 / 4194304,
      39325.0 / 33554432, -334477.0 / 2147483648.0};
  const double t = 1.0 / x;
  double s = 0.0;
  for (int i = 8; i >= 0; --i) s = s * t + c[i];
  return s;
}

double hzeta(double s, double q) {
  gsl_sf_result r;
  gsl_error_handler_t* old = gsl_set_error_handler_off();
  int status = gsl_sf_hzeta_e(s, q, &r);
  gsl_set_error_handler(old);
  if (status != GSL_SUCCESS) throw Error(ErrorCode::InvalidArgument, "Hurwitz zeta evaluation failed");
  return r.val;
}

std::string fmt_double(double x) {
  std::array<char, 64> buf;
  auto res = std::to_chars(buf.data(), buf.data() + buf.size(), x);
  return std::string(buf.data(), res.ptr);
}

double parse_double(const std::string& s) {
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw Error(ErrorCode::IoError, "bad number '" + s + "'");
  return v;
}

std::int64_t parse_int(const std::string& s) {
  std::int64_t v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw Error(ErrorCode::IoError, "bad integer '" + s + "'");
  return v;
}

}  // namespace

void validate_exponent(double a) {
  if (!(a > 1.5 && a <= 2.5)) throw Error(ErrorCode::InvalidExponent, "a must lie in (3/2, 5/2]");
}

double c_a_of(double a) { return kPi / std::tgamma(a); }

ModelParams ModelParams::make(double a, double p_q, double c_q) {
  validate_exponent(a);
  if (!(p_q > 0.0)) throw Error(ErrorCode::InvalidArgument, "p_q must be positive");
  if (!(c_q > 0.0)) throw Error(ErrorCode::InvalidArgument, "c_q must be positive");
  ModelParams m;
  m.a = a;
  m.p_q = p_q;
  m.c_q = c_q;
  m.c_a = c_a_of(a);
  return m;
}

double h_up(std::int64_t l) {
  if (l <= 0) return 0.0;
  if (l <= kUpTable) return h_up_table()[static_cast<std::size_t>(l)];
  const double x = static_cast<double>(l);
  return 2.0 * std::sqrt(x / kPi) * scaled_series(x);
}

double h_up_scaled(std::int64_t l) {
  if (l <= 0) return 0.0;
  if (l <= kUpTable) return h_up_table()[static_cast<std::size_t>(l)] * std::sqrt(kPi / static_cast<double>(l)) / 2.0;
  return scaled_series(static_cast<double>(l));
}

double h_up_real(double x) {
  if (x <= 0.0) return 0.0;
  if (x > 4096.0) return 2.0 * std::sqrt(x / kPi) * scaled_series(x);
  return 2.0 / std::sqrt(kPi) / boost::math::tgamma_delta_ratio(x, 0.5);
}

double h_down(std::int64_t l) {
  if (l < 0) return 0.0;
  if (l == 0) return 1.0;
  return h_up(l) / (2.0 * static_cast<double>(l));
}

double h_down_p(std::int64_t l, std::int64_t p) {
  if (p < 1) throw Error(ErrorCode::InvalidArgument, "h_down_p needs p >= 1");
  if (l <= 0) return l == -p ? 1.0 : 0.0;
  return h_down(l) * h_down(p) * static_cast<double>(l) / static_cast<double>(l + p);
}

// Vose alias method.
AliasTable::AliasTable(const std::vector<double>& w) {
  const std::size_t n = w.size();
  if (n == 0) throw Error(ErrorCode::InvalidArgument, "empty alias table");
  total_ = std::accumulate(w.begin(), w.end(), 0.0);
  if (!(total_ > 0.0)) throw Error(ErrorCode::InvalidArgument, "alias table with zero mass");
  prob_.assign(n, 0.0);
  alias_.assign(n, 0);
  std::vector<double> scaled(n);
  std::vector<std::uint32_t> small, large;
  for (std::size_t i = 0; i < n; ++i) {
    if (w[i] < 0.0) throw Error(ErrorCode::InvalidArgument, "negative alias weight");
    scaled[i] = w[i] * static_cast<double>(n) / total_;
    (scaled[i] < 1.0 ? small : large).push_back(static_cast<std::uint32_t>(i));
  }
  while (!small.empty() && !large.empty()) {
    auto s = small.back();
    small.pop_back();
    auto l = large.back();
    prob_[s] = scaled[s];
    alias_[s] = l;
    scaled[l] = (scaled[l] + scaled[s]) - 1.0;
    if (scaled[l] < 1.0) {
      large.pop_back();
      small.push_back(l);
    }
  }
  for (auto i : large) {
    prob_[i] = 1.0;
    alias_[i] = i;
  }
  for (auto i : small) {
    prob_[i] = 1.0;
    alias_[i] = i;
  }
}

double PosTail::coef() const {
  if (!active) return 0.0;
  if (steep) return p / a;
  return p * boost::math::cos_pi(a) / (a - 1.0);
}

StepDistribution::StepDistribution(std::int64_t K, std::vector<double> head, NegTail neg, PosTail pos)
    : K_(K), head_(std::move(head)), neg_(neg), pos_(pos) {
  if (K_ < 0 || head_.size() != static_cast<std::size_t>(2 * K_ + 1))
    throw Error(ErrorCode::InvalidArgument, "head table size must be 2K+1");
  if ((neg_.active || pos_.active) && K_ < 1)
    throw Error(ErrorCode::InvalidArgument, "tails need K_head >= 1");
  for (double m : head_)
    if (!(m >= 0.0)) throw Error(ErrorCode::InvalidArgument, "negative mass in head");
  if (neg_.active && !(neg_.a > 1.0 && neg_.p >= 0.0)) throw Error(ErrorCode::InvalidArgument, "bad negative tail");
  if (pos_.active && !(pos_.exponent() > 1.5 && pos_.coef() >= 0.0))
    throw Error(ErrorCode::InvalidArgument, "bad positive tail");
  build_samplers();
}

StepDistribution StepDistribution::point_mass(std::int64_t k0) {
  return from_pairs({{k0, 1.0}});
}

StepDistribution StepDistribution::from_pairs(const std::vector<std::pair<std::int64_t, double>>& pairs) {
  std::int64_t K = 0;
  for (auto& [k, m] : pairs) K = std::max<std::int64_t>(K, std::llabs(k));
  std::vector<double> head(static_cast<std::size_t>(2 * K + 1), 0.0);
  for (auto& [k, m] : pairs) head[static_cast<std::size_t>(k + K)] += m;
  return StepDistribution(K, std::move(head), NegTail{}, PosTail{});
}

double StepDistribution::mass(std::int64_t k) const {
  if (k >= -K_ && k <= K_) return head_[static_cast<std::size_t>(k + K_)];
  if (k < 0) {
    if (!neg_.active) return 0.0;
    return neg_.p * std::pow(static_cast<double>(-k), -neg_.a);
  }
  if (!pos_.active) return 0.0;
  const double e = pos_.exponent();
  const double x = static_cast<double>(k);
  // coef (k^(1-e) - (k+1)^(1-e)) evaluated without cancellation
  return pos_.coef() * std::pow(x, 1.0 - e) * -std::expm1((1.0 - e) * std::log1p(1.0 / x));
}

double StepDistribution::pos_tail_from(std::int64_t k) const {
  if (k <= K_) throw Error(ErrorCode::InvalidArgument, "pos_tail_from expects k > K_head");
  if (!pos_.active) return 0.0;
  return pos_.coef() * std::pow(static_cast<double>(k), 1.0 - pos_.exponent());
}

double StepDistribution::neg_tail_mass() const {
  if (!neg_.active || neg_.p == 0.0) return 0.0;
  return neg_.p * hzeta(neg_.a, static_cast<double>(K_ + 1));
}

double StepDistribution::pos_tail_mass() const {
  if (!pos_.active) return 0.0;
  return pos_tail_from(K_ + 1);
}

double StepDistribution::neg_mass() const {
  long double s = 0.0L;
  for (std::int64_t k = -K_; k < 0; ++k) s += head_[static_cast<std::size_t>(k + K_)];
  return static_cast<double>(s + neg_tail_mass());
}

double StepDistribution::nonneg_mass() const {
  long double s = 0.0L;
  for (std::int64_t k = 0; k <= K_; ++k) s += head_[static_cast<std::size_t>(k + K_)];
  return static_cast<double>(s + pos_tail_mass());
}

double StepDistribution::total_mass() const {
  long double s = 0.0L;
  for (double m : head_) s += m;
  return static_cast<double>(s + static_cast<long double>(neg_tail_mass()) + pos_tail_mass());
}

std::int64_t StepDistribution::max_negative_jump() const {
  if (neg_.active && neg_.p > 0.0) return -1;
  for (std::int64_t k = -K_; k < 0; ++k)
    if (head_[static_cast<std::size_t>(k + K_)] > 0.0) return -k;
  return 0;
}

std::int64_t StepDistribution::max_positive_jump() const {
  if (pos_.active && pos_.coef() > 0.0) return -1;
  for (std::int64_t k = K_; k > 0; --k)
    if (head_[static_cast<std::size_t>(k + K_)] > 0.0) return k;
  return 0;
}

void StepDistribution::build_samplers() {
  std::vector<double> w;
  w.reserve(static_cast<std::size_t>(K_ + 2));
  // negative side
  for (std::int64_t k = -1; k >= -K_; --k) w.push_back(head_[static_cast<std::size_t>(k + K_)]);
  double env = 0.0;
  if (neg_.active && neg_.p > 0.0)
    env = neg_.p * std::pow(static_cast<double>(K_), 1.0 - neg_.a) / (neg_.a - 1.0);
  w.push_back(env);
  double s = std::accumulate(w.begin(), w.end(), 0.0);
  neg_env_mass_ = s;
  neg_alias_ = s > 0.0 ? AliasTable(w) : AliasTable();

  w.clear();
  for (std::int64_t k = 0; k <= K_; ++k) w.push_back(head_[static_cast<std::size_t>(k + K_)]);
  w.push_back(pos_tail_mass());
  s = std::accumulate(w.begin(), w.end(), 0.0);
  nonneg_env_mass_ = s;
  nonneg_alias_ = s > 0.0 ? AliasTable(w) : AliasTable();

  w.clear();
  for (std::int64_t k = 0; k <= K_; ++k)
    w.push_back(head_[static_cast<std::size_t>(k + K_)] * std::sqrt(1.0 + static_cast<double>(k)));
  double tail_env = 0.0;
  if (pos_.active && pos_.coef() > 0.0) {
    const double e = pos_.exponent();
    const double k1 = static_cast<double>(K_ + 1);
    const double sl = std::sqrt(1.0 + 1.0 / k1);
    tail_env = pos_.coef() * (e - 1.0) * sl * std::pow(k1, 1.5 - e) / (e - 1.5);
  }
  w.push_back(tail_env);
  s = std::accumulate(w.begin(), w.end(), 0.0);
  sqrt_env_mass_ = s;
  sqrt_alias_ = s > 0.0 ? AliasTable(w) : AliasTable();
}

EnvelopeDraw StepDistribution::draw_negative(Rng& rng) const {
  const std::size_t i = neg_alias_.sample(rng);
  if (i < static_cast<std::size_t>(K_)) return {-static_cast<std::int64_t>(i) - 1, 1.0};
  // Pareto on [K, inf), k = floor(X) + 1, accept (X/k)^a
  const double x = static_cast<double>(K_) * std::pow(rng.uniform_pos(), -1.0 / (neg_.a - 1.0));
  if (!(x < 9.0e18)) return {0, 0.0};
  const double k = std::floor(x) + 1.0;
  return {-static_cast<std::int64_t>(k), std::pow(x / k, neg_.a)};
}

EnvelopeDraw StepDistribution::draw_nonnegative(Rng& rng) const {
  const std::size_t i = nonneg_alias_.sample(rng);
  if (i <= static_cast<std::size_t>(K_)) return {static_cast<std::int64_t>(i), 1.0};
  const double e = pos_.exponent();
  const double x = static_cast<double>(K_ + 1) * std::pow(rng.uniform_pos(), -1.0 / (e - 1.0));
  if (!(x < 9.0e18)) return {0, 0.0};
  return {static_cast<std::int64_t>(std::floor(x)), 1.0};
}

EnvelopeDraw StepDistribution::draw_nonnegative_sqrt(Rng& rng) const {
  const std::size_t i = sqrt_alias_.sample(rng);
  if (i <= static_cast<std::size_t>(K_)) return {static_cast<std::int64_t>(i), 1.0};
  const double e = pos_.exponent();
  const double k1 = static_cast<double>(K_ + 1);
  const double x = k1 * std::pow(rng.uniform_pos(), -1.0 / (e - 1.5));
  if (!(x < 9.0e18)) return {0, 0.0};
  const double k = std::floor(x);
  const double sl = std::sqrt(1.0 + 1.0 / k1);
  return {static_cast<std::int64_t>(k), std::sqrt((1.0 + k) / x) / sl};
}

std::int64_t StepDistribution::sample(Rng& rng) const {
  const double pn = neg_env_mass_ / (neg_env_mass_ + nonneg_env_mass_);
  for (;;) {
    EnvelopeDraw d = rng.uniform() < pn ? draw_negative(rng) : draw_nonnegative(rng);
    if (d.accept >= 1.0 || rng.uniform() < d.accept) return d.k;
  }
}

void StepDistribution::write(std::ostream& os) const {
  for (std::int64_t k = -K_; k <= K_; ++k)
    os << k << '\t' << fmt_double(head_[static_cast<std::size_t>(k + K_)]) << '\n';
  if (neg_.active) os << "negtail " << fmt_double(neg_.a) << ' ' << fmt_double(neg_.p) << ' ' << K_ << '\n';
  if (pos_.active)
    os << "postail " << fmt_double(pos_.a) << ' ' << fmt_double(pos_.p) << ' ' << K_ << (pos_.steep ? " steep" : "")
       << '\n';
}

StepDistribution StepDistribution::read(std::istream& is) {
  std::map<std::int64_t, double> table;
  NegTail neg;
  PosTail pos;
  std::int64_t K = -1;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::vector<std::string> tok;
    for (std::string t; ls >> t;) tok.push_back(t);
    if (tok.empty()) continue;
    try {
      if (tok[0] == "negtail" || tok[0] == "postail") {
        if (tok.size() < 4) throw Error(ErrorCode::IoError, "short footer");
        const double a = parse_double(tok[1]);
        const double p = parse_double(tok[2]);
        const std::int64_t kh = parse_int(tok[3]);
        if (K >= 0 && kh != K) throw Error(ErrorCode::IoError, "inconsistent K_head");
        K = kh;
        if (tok[0] == "negtail") {
          neg = NegTail{true, a, p};
        } else {
          pos = PosTail{true, a, p, tok.size() > 4 && tok[4] == "steep"};
        }
      } else {
        if (tok.size() != 2) throw Error(ErrorCode::IoError, "expected 'k<TAB>mass'");
        table[parse_int(tok[0])] = parse_double(tok[1]);
      }
    } catch (const Error& e) {
      throw Error(ErrorCode::IoError, "line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  std::int64_t kmax = 0;
  for (auto& [k, m] : table) kmax = std::max<std::int64_t>(kmax, std::llabs(k));
  if (K < 0) K = kmax;
  if (kmax > K) throw Error(ErrorCode::IoError, "head entry beyond K_head");
  std::vector<double> head(static_cast<std::size_t>(2 * K + 1), 0.0);
  for (auto& [k, m] : table) head[static_cast<std::size_t>(k + K)] = m;
  return StepDistribution(K, std::move(head), neg, pos);
}

bool StepDistribution::operator==(const StepDistribution& o) const {
  return K_ == o.K_ && head_ == o.head_ && neg_.active == o.neg_.active && neg_.a == o.neg_.a &&
         neg_.p == o.neg_.p && pos_.active == o.pos_.active && pos_.a == o.pos_.a && pos_.p == o.pos_.p &&
         pos_.steep == o.pos_.steep;
}

StepDistribution build_asymptotic_nu(double a, double p, std::int64_t K, bool steep) {
  validate_exponent(a);
  if (!(p > 0.0)) throw Error(ErrorCode::InvalidArgument, "tail constant must be positive");
  if (K < 1) throw Error(ErrorCode::InvalidArgument, "K_head must be >= 1");
  NegTail neg{true, a, p};
  PosTail pos{true, a, p, steep && a == 2.5};
  std::vector<double> head(static_cast<std::size_t>(2 * K + 1), 0.0);
  StepDistribution probe(K, head, neg, pos);
  long double rest = 0.0L;
  for (std::int64_t k = 1; k <= K; ++k) {
    const double mn = p * std::pow(static_cast<double>(k), -a);
    head[static_cast<std::size_t>(K - k)] = mn;
    rest += mn;
  }
  // positive head from the same closed-form tail masses
  for (std::int64_t k = K; k >= 1; --k) {
    const double x = static_cast<double>(k);
    const double e = pos.exponent();
    const double m = pos.coef() * std::pow(x, 1.0 - e) * -std::expm1((1.0 - e) * std::log1p(1.0 / x));
    head[static_cast<std::size_t>(K + k)] = m;
    rest += m;
  }
  rest += probe.neg_tail_mass();
  rest += probe.pos_tail_mass();
  const long double nu0 = 1.0L - rest;
  if (nu0 < 0.0L) throw Error(ErrorCode::MassDeficitNegative, "tail constant too large: nu(0) < 0");
  head[static_cast<std::size_t>(K)] = static_cast<double>(nu0);
  return StepDistribution(K, std::move(head), neg, pos);
}

double smooth_tail_sum(const std::function<double(double)>& f, std::int64_t from) {
  constexpr std::int64_t kExplicit = 1 << 15;
  long double s = 0.0L;
  const std::int64_t M = from + kExplicit;
  for (std::int64_t k = from; k < M; ++k) s += f(static_cast<double>(k));
  // Euler-Maclaurin remainder from M
  const double m = static_cast<double>(M);
  boost::math::quadrature::exp_sinh<double> integrator;
  const double integral = integrator.integrate([&](double x) { return f(m + x); }, 0.0,
                                               std::numeric_limits<double>::infinity());
  const double d1 = (f(m + 0.5) - f(m - 0.5));
  s += integral + 0.5 * f(m) - d1 / 12.0;
  return static_cast<double>(s);
}

double pos_tail_weighted_sum(const StepDistribution& nu, const std::function<double(double)>& w) {
  const PosTail& pt = nu.pos_tail();
  if (!pt.active || pt.coef() == 0.0) return 0.0;
  const double e = pt.exponent();
  const double c = pt.coef();
  auto f = [&](double x) { return c * std::pow(x, 1.0 - e) * -std::expm1((1.0 - e) * std::log1p(1.0 / x)) * w(x); };
  return smooth_tail_sum(f, nu.K_head() + 1);
}

double criticality_residual(const StepDistribution& nu, std::int64_t l_min, std::int64_t l_max) {
  if (l_min < 1 || l_max < l_min) throw Error(ErrorCode::InvalidArgument, "bad range");
  const std::int64_t K = nu.K_head();
  double worst = 0.0;
  for (std::int64_t l = l_min; l <= l_max; ++l) {
    long double s = 0.0L;
    for (std::int64_t k = std::max<std::int64_t>(-K, 1 - l); k <= K; ++k) s += nu.mass(k) * h_up(l + k);
    for (std::int64_t k = -K - 1; k >= 1 - l; --k) s += nu.mass(k) * h_up(l + k);
    s += pos_tail_weighted_sum(nu, [l](double x) { return h_up_real(static_cast<double>(l) + x); });
    worst = std::max(worst, static_cast<double>(std::fabs(s / h_up(l) - 1.0L)));
  }
  return worst;
}

double mean_exposure(const StepDistribution& nu) {
  const PosTail& pt = nu.pos_tail();
  if (pt.active && pt.coef() > 0.0 && pt.exponent() <= 2.0)
    throw Error(ErrorCode::DivergentExposure, "mean exposure diverges for a <= 2");
  const std::int64_t K = nu.K_head();
  long double s = 0.0L;
  for (std::int64_t k = 0; k <= K; ++k) s += (2.0L * k + 1.0L) * nu.mass(k);
  if (pt.active && pt.coef() > 0.0) {
    // summation by parts: sum_{k>K} (2k+1)(F(k)-F(k+1)) = (2K+3)F(K+1) + 2 sum_{k>=K+2} F(k)
    const double e = pt.exponent();
    s += (2.0L * K + 3.0L) * nu.pos_tail_from(K + 1);
    s += 2.0L * pt.coef() * hzeta(e - 1.0, static_cast<double>(K + 2));
  }
  return static_cast<double>(s);
}

StepDistribution project_harmonic(const StepDistribution& base, std::int64_t L) {
  if (L < 2) throw Error(ErrorCode::InvalidArgument, "L must be >= 2");
  const std::int64_t Kp = base.K_head();
  const std::int64_t K = std::max(Kp, L + 1);
  std::vector<long double> nu(static_cast<std::size_t>(2 * K + 1), 0.0L);
  auto at = [&](std::int64_t k) -> long double& { return nu[static_cast<std::size_t>(k + K)]; };
  for (std::int64_t k = 1; k <= Kp; ++k) at(k) = base.mass(k);
  auto weighted = [&](std::int64_t l, std::int64_t kmin) {
    long double s = 0.0L;
    for (std::int64_t k = kmin; k <= Kp; ++k) s += at(k) * static_cast<long double>(h_up(l + k));
    return s;
  };
  at(0) = (1.0L - weighted(1, 1)) / static_cast<long double>(h_up(1));
  for (std::int64_t l = 2; l <= L; ++l) {
    const std::int64_t k = -(l - 1);
    at(k) = (static_cast<long double>(h_up(l)) - weighted(l, k + 1)) / static_cast<long double>(h_up(1));
  }
  long double total = 0.0L;
  for (auto m : nu) total += m;
  for (auto m : nu)
    if (m < 0.0L) throw Error(ErrorCode::MassDeficitNegative, "harmonic projection produced negative mass");
  if (total > 1.0L) throw Error(ErrorCode::MassDeficitNegative, "harmonic projection exceeds unit mass");
  at(-(L + 1)) += 1.0L - total;
  std::vector<double> head(nu.size());
  for (std::size_t i = 0; i < nu.size(); ++i) head[i] = static_cast<double>(nu[i]);
  return StepDistribution(K, std::move(head), NegTail{}, PosTail{});
}

}  // namespace mapflow

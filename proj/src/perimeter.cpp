#include "mapflow/perimeter.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "mapflow/error.hpp"

namespace mapflow {

namespace {

constexpr std::int64_t kSafeMax = 4000000000000000000LL;

KernelRow finish_row(std::int64_t k_min, std::vector<long double> w, long double tail) {
  long double z = tail;
  for (auto x : w) z += x;
  if (!(z > 0.0L)) throw Error(ErrorCode::InvalidArgument, "kernel row has zero mass");
  KernelRow row;
  row.k_min = k_min;
  row.prob.resize(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) row.prob[i] = static_cast<double>(w[i] / z);
  row.tail = static_cast<double>(tail / z);
  row.normalizer = static_cast<double>(z);
  return row;
}

void require_state(std::int64_t p) {
  if (p < 1) throw Error(ErrorCode::InvalidArgument, "kernel rows need p >= 1");
}

}  // namespace

const char* law_name(Law law) {
  switch (law) {
    case Law::Infinite: return "inf";
    case Law::Finite: return "fin";
    case Law::Target: return "target";
  }
  return "?";
}

Law parse_law(const std::string& s) {
  if (s == "inf" || s == "infinite") return Law::Infinite;
  if (s == "fin" || s == "finite") return Law::Finite;
  if (s == "target") return Law::Target;
  throw Error(ErrorCode::ConfigError, "unknown law '" + s + "'");
}

FiniteWeights FiniteWeights::from_table(std::vector<double> W, double c_q) {
  if (W.size() < 2) throw Error(ErrorCode::InvalidArgument, "W table needs at least two entries");
  for (double x : W)
    if (!(x > 0.0)) throw Error(ErrorCode::InvalidArgument, "W table entries must be positive");
  FiniteWeights w;
  w.table = std::move(W);
  w.c_q = c_q;
  return w;
}

double FiniteWeights::ratio(std::int64_t p, std::int64_t k) const {
  const std::int64_t l = p + k;
  if (l < 0) return 0.0;
  if (has_table()) {
    if (l >= static_cast<std::int64_t>(table.size()) || p >= static_cast<std::int64_t>(table.size())) return 0.0;
    return std::exp(-static_cast<double>(k) * std::log(c_q)) * table[static_cast<std::size_t>(l)] /
           table[static_cast<std::size_t>(p)];
  }
  if (l == 0) return std::pow(static_cast<double>(p), a);
  return std::pow(static_cast<double>(p) / static_cast<double>(l), a);
}

double finite_indicator(std::int64_t p, std::int64_t k) {
  const std::int64_t twice = 2 * (p + k);
  if (twice > p - 1) return 1.0;
  if (twice == p - 1) return 0.5;
  return 0.0;
}

double KernelRow::at(std::int64_t k) const {
  if (k < k_min || k > k_max()) return 0.0;
  return prob[static_cast<std::size_t>(k - k_min)];
}

double KernelRow::sum() const {
  long double s = tail;
  for (double x : prob) s += x;
  return static_cast<double>(s);
}

KernelRow kernel_row_infinite(const StepDistribution& nu, std::int64_t p) {
  require_state(p);
  const std::int64_t K = nu.K_head();
  const std::int64_t k_min = 1 - p;
  const std::int64_t k_max = std::max<std::int64_t>(K, k_min);
  const double hp = h_up(p);
  std::vector<long double> w(static_cast<std::size_t>(k_max - k_min + 1));
  for (std::int64_t k = k_min; k <= k_max; ++k)
    w[static_cast<std::size_t>(k - k_min)] = static_cast<long double>(nu.mass(k)) * h_up(p + k) / hp;
  const double tail = pos_tail_weighted_sum(nu, [p, hp](double x) { return h_up_real(static_cast<double>(p) + x) / hp; });
  return finish_row(k_min, std::move(w), tail);
}

KernelRow kernel_row_finite(const StepDistribution& nu, const FiniteWeights& fw, std::int64_t p) {
  require_state(p);
  const std::int64_t K = nu.K_head();
  const std::int64_t k_min = p / 2 - p;
  std::int64_t k_max = std::max<std::int64_t>(K, k_min);
  if (fw.has_table()) k_max = std::min<std::int64_t>(k_max, static_cast<std::int64_t>(fw.table.size()) - 1 - p);
  if (k_max < k_min) throw Error(ErrorCode::InvalidArgument, "W table too short for this state");
  std::vector<long double> w(static_cast<std::size_t>(k_max - k_min + 1));
  for (std::int64_t k = k_min; k <= k_max; ++k)
    w[static_cast<std::size_t>(k - k_min)] =
        static_cast<long double>(nu.mass(k)) * fw.ratio(p, k) * finite_indicator(p, k);
  double tail = 0.0;
  if (!fw.has_table()) {
    const double a = fw.a;
    tail = pos_tail_weighted_sum(
        nu, [p, a](double x) { return std::pow(static_cast<double>(p) / (static_cast<double>(p) + x), a); });
  }
  return finish_row(k_min, std::move(w), tail);
}

KernelRow kernel_row_target(const StepDistribution& nu, std::int64_t p, std::int64_t target) {
  require_state(p);
  if (target < 1) throw Error(ErrorCode::InvalidArgument, "target perimeter must be >= 1");
  const std::int64_t K = nu.K_head();
  const std::int64_t k_min = -p - target;
  const std::int64_t k_max = std::max<std::int64_t>(K, 1 - p);
  const double hp = h_down_p(p, target);
  std::vector<long double> w(static_cast<std::size_t>(k_max - k_min + 1), 0.0L);
  w[0] = static_cast<long double>(nu.mass(k_min)) / hp;
  for (std::int64_t k = 1 - p; k <= k_max; ++k)
    w[static_cast<std::size_t>(k - k_min)] = static_cast<long double>(nu.mass(k)) * h_down_p(p + k, target) / hp;
  const double gp = h_up(p) / static_cast<double>(p + target);
  const double tail = pos_tail_weighted_sum(nu, [p, target, gp](double x) {
    const double l = static_cast<double>(p) + x;
    return h_up_real(l) / (l + static_cast<double>(target)) / gp;
  });
  return finish_row(k_min, std::move(w), tail);
}

PerimeterSampler::PerimeterSampler(const StepDistribution& nu, Law law, std::int64_t target, FiniteWeights weights)
    : nu_(&nu), law_(law), target_(target), weights_(std::move(weights)) {
  if (law_ == Law::Target && target_ < 1) throw Error(ErrorCode::InvalidArgument, "target perimeter must be >= 1");
  if (law_ == Law::Finite && !weights_.has_table() && !(weights_.a > 1.0))
    throw Error(ErrorCode::InvalidArgument, "finite weights need an exponent");
}

bool PerimeterSampler::absorbed(std::int64_t p) const {
  switch (law_) {
    case Law::Infinite: return false;
    case Law::Finite: return p == 0;
    case Law::Target: return p == -target_;
  }
  return false;
}

std::int64_t PerimeterSampler::step(std::int64_t p, Rng& rng) const {
  if (p < 1) throw Error(ErrorCode::InvalidArgument, "step from a non-positive state");
  switch (law_) {
    case Law::Infinite: return step_infinite(p, rng);
    case Law::Finite: return weights_.has_table() ? step_from_row(kernel_row_finite(*nu_, weights_, p), rng)
                                                  : step_finite(p, rng);
    case Law::Target: return step_target(p, rng);
  }
  return 0;
}

std::int64_t PerimeterSampler::step_infinite(std::int64_t p, Rng& rng) const {
  const double sp = h_up_scaled(p);
  const double m_neg = nu_->neg_envelope_mass();
  const double m_pos = nu_->nonneg_sqrt_envelope_mass() / sp;
  const double pick = m_neg / (m_neg + m_pos);
  const double hp = h_up(p);
  for (std::int64_t tries = 0; tries < kRejectionCap; ++tries) {
    if (rng.uniform() < pick) {
      EnvelopeDraw d = nu_->draw_negative(rng);
      if (d.accept <= 0.0 || p + d.k < 1) continue;
      const double acc = d.accept * h_up(p + d.k) / hp;
      if (rng.uniform() < acc) return d.k;
    } else {
      EnvelopeDraw d = nu_->draw_nonnegative_sqrt(rng);
      if (d.accept <= 0.0 || d.k > kSafeMax - p) continue;
      const std::int64_t l = p + d.k;
      const double acc = d.accept * std::sqrt(static_cast<double>(l) / static_cast<double>(p)) * h_up_scaled(l) /
                         std::sqrt(1.0 + static_cast<double>(d.k));
      if (acc >= 1.0 || rng.uniform() < acc) return d.k;
    }
  }
  throw Error(ErrorCode::StepCapExceeded, "rejection sampler did not terminate");
}

std::int64_t PerimeterSampler::step_finite(std::int64_t p, Rng& rng) const {
  const std::int64_t l_min = p / 2;
  double bound = 0.0;
  for (std::int64_t l = l_min; l <= std::min(l_min + 1, p - 1); ++l)
    bound = std::max(bound, weights_.ratio(p, l - p) * finite_indicator(p, l - p));
  const double m_neg = bound * nu_->neg_envelope_mass();
  const double m_pos = nu_->nonneg_envelope_mass();
  const double pick = m_neg / (m_neg + m_pos);
  const double a = weights_.a;
  for (std::int64_t tries = 0; tries < kRejectionCap; ++tries) {
    if (rng.uniform() < pick) {
      EnvelopeDraw d = nu_->draw_negative(rng);
      if (d.accept <= 0.0) continue;
      const double ind = finite_indicator(p, d.k);
      if (ind == 0.0) continue;
      const double acc = d.accept * weights_.ratio(p, d.k) * ind / bound;
      if (rng.uniform() < acc) return d.k;
    } else {
      EnvelopeDraw d = nu_->draw_nonnegative(rng);
      if (d.accept <= 0.0 || d.k > kSafeMax - p) continue;
      if (d.k == 0) return 0;
      const double acc = d.accept * std::pow(static_cast<double>(p) / static_cast<double>(p + d.k), a);
      if (rng.uniform() < acc) return d.k;
    }
  }
  throw Error(ErrorCode::StepCapExceeded, "rejection sampler did not terminate");
}

std::int64_t PerimeterSampler::step_target(std::int64_t p, Rng& rng) const {
  const double t = static_cast<double>(target_);
  auto g = [t](std::int64_t l) { return h_up(l) / (static_cast<double>(l) + t); };
  const double gp = g(p);
  const double sp = h_up_scaled(p);
  const double b_neg = p > 1 ? g(std::min(p - 1, target_ + 1)) / gp : 0.0;
  const double m_neg = b_neg * nu_->neg_envelope_mass();
  const double m_pos = nu_->nonneg_sqrt_envelope_mass() / sp;
  const double m_kill = nu_->mass(-p - target_) / h_down_p(p, target_);
  const double total = m_neg + m_pos + m_kill;
  for (std::int64_t tries = 0; tries < kRejectionCap; ++tries) {
    const double u = rng.uniform() * total;
    if (u < m_kill) return -p - target_;
    if (u < m_kill + m_neg) {
      EnvelopeDraw d = nu_->draw_negative(rng);
      if (d.accept <= 0.0 || p + d.k < 1) continue;
      const double acc = d.accept * g(p + d.k) / gp / b_neg;
      if (rng.uniform() < acc) return d.k;
    } else {
      EnvelopeDraw d = nu_->draw_nonnegative_sqrt(rng);
      if (d.accept <= 0.0 || d.k > kSafeMax - p) continue;
      const std::int64_t l = p + d.k;
      const double ratio = g(l) / gp;
      const double acc = d.accept * ratio * sp / std::sqrt(1.0 + static_cast<double>(d.k));
      if (acc >= 1.0 || rng.uniform() < acc) return d.k;
    }
  }
  throw Error(ErrorCode::StepCapExceeded, "rejection sampler did not terminate");
}

std::int64_t PerimeterSampler::step_from_row(const KernelRow& row, Rng& rng) const {
  double u = rng.uniform();
  for (std::size_t i = 0; i < row.prob.size(); ++i) {
    if (u < row.prob[i]) return row.k_min + static_cast<std::int64_t>(i);
    u -= row.prob[i];
  }
  for (std::int64_t i = static_cast<std::int64_t>(row.prob.size()) - 1; i >= 0; --i)
    if (row.prob[static_cast<std::size_t>(i)] > 0.0) return row.k_min + i;
  return 0;
}

PerimeterPath sample_path(const PerimeterSampler& sampler, std::int64_t start, std::int64_t horizon, Rng& rng,
                          std::int64_t step_cap) {
  if (start < 1) throw Error(ErrorCode::InvalidArgument, "start perimeter must be >= 1");
  if (horizon < 0 && sampler.law() == Law::Infinite)
    throw Error(ErrorCode::InvalidArgument, "the infinite law needs a finite horizon");
  if (horizon > step_cap) throw Error(ErrorCode::StepCapExceeded, "horizon exceeds the step cap");
  PerimeterPath path;
  path.law = sampler.law();
  path.start = start;
  path.target = sampler.target();
  path.values.push_back(start);
  if (horizon > 0) path.values.reserve(static_cast<std::size_t>(std::min<std::int64_t>(horizon, 1 << 24)) + 1);
  std::int64_t p = start;
  for (std::int64_t n = 0; horizon < 0 || n < horizon; ++n) {
    if (n >= step_cap) throw Error(ErrorCode::StepCapExceeded, "path not absorbed within the step cap");
    p += sampler.step(p, rng);
    path.values.push_back(p);
    if (sampler.absorbed(p)) {
      path.absorbed_at = path.values.size() - 1;
      break;
    }
  }
  return path;
}

}  // namespace mapflow

#include "mapflow/tree.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <sstream>

#include "mapflow/error.hpp"

namespace mapflow {

namespace {

double canon(double x) {
  double r = x - std::floor(x);
  if (r >= 1.0) r = 0.0;
  return r;
}

std::int64_t mod(std::int64_t x, std::int64_t n) {
  const std::int64_t r = x % n;
  return r < 0 ? r + n : r;
}

UlamLabel parent_of(const UlamLabel& w) { return UlamLabel(w.begin(), w.end() - 1); }

// Reversed discrete flow through one event: grid index after the event to
// grid index before it.
std::int64_t discrete_move(std::int64_t idx, const DriverEvent& e) {
  const std::int64_t m = mod(idx - e.v, 2 * e.after);
  const std::int64_t dp = e.after - e.before;
  if (dp > 0) return m <= 2 * dp ? 0 : m - 2 * dp;
  return m;
}

// int_0^d exp(c (x0 + b s)) ds
double exp_segment(double c, double x0, double b, double d) {
  const double k = c * b;
  const double scale = std::exp(c * x0);
  if (k == 0.0) return scale * d;
  return scale * std::expm1(k * d) / k;
}

template <class Traj, class Equal, class OnEvent>
NcaResult nca_scan(const UlamLabel& cv, const UlamLabel& cw, Traj traj, Equal eq, OnEvent on_event) {
  const UlamLabel z = common_prefix(cv, cw);
  for (std::size_t k = z.size() + 1; k-- > 0;) {
    const UlamLabel zk(z.begin(), z.begin() + static_cast<std::ptrdiff_t>(k));
    const CellTrajectory A = traj(0, zk);
    const CellTrajectory B = traj(1, zk);
    const std::size_t L = std::min(A.start_level, B.start_level);
    for (std::size_t j = L + 1; j-- > 0;)
      if (eq(A, B, j)) return on_event(zk, j);
  }
  return NcaResult{};
}

}  // namespace

std::string label_string(const UlamLabel& w) {
  if (w.empty()) return "root";
  std::ostringstream os;
  for (std::size_t i = 0; i < w.size(); ++i) os << (i ? "." : "") << w[i];
  return os.str();
}

UlamLabel parse_label(const std::string& s) {
  UlamLabel w;
  if (s.empty() || s == "root") return w;
  std::istringstream is(s);
  std::string part;
  while (std::getline(is, part, '.')) {
    std::size_t pos = 0;
    unsigned long v = 0;
    try {
      v = std::stoul(part, &pos);
    } catch (const std::exception&) {
      throw Error(ErrorCode::InvalidArgument, "bad label: " + s);
    }
    if (pos != part.size() || v == 0) throw Error(ErrorCode::InvalidArgument, "bad label: " + s);
    w.push_back(static_cast<std::uint32_t>(v));
  }
  return w;
}

bool is_prefix(const UlamLabel& z, const UlamLabel& w) {
  return z.size() <= w.size() && std::equal(z.begin(), z.end(), w.begin());
}

UlamLabel common_prefix(const UlamLabel& v, const UlamLabel& w) {
  std::size_t k = 0;
  while (k < v.size() && k < w.size() && v[k] == w[k]) ++k;
  return UlamLabel(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(k));
}

UlamLabel child_label(const UlamLabel& w, std::uint32_t i) {
  UlamLabel c = w;
  c.push_back(i);
  return c;
}

std::uint64_t label_key(std::uint64_t seed, const UlamLabel& w) {
  std::uint64_t h = mix64(seed ^ 0x6a09e667f3bcc909ULL);
  for (std::uint32_t i : w) h = mix64(h ^ (static_cast<std::uint64_t>(i) + 0x9e3779b97f4a7c15ULL));
  return mix64(h + w.size());
}

FaceRef FaceRef::from_label(const UlamLabel& w) {
  if (w.empty()) return FaceRef{};
  return FaceRef{parent_of(w), w.back()};
}

std::string nca_kind_name(NcaResult::Kind k) {
  switch (k) {
    case NcaResult::Kind::Root:
      return "root";
    case NcaResult::Kind::Face:
      return "label";
    case NcaResult::Kind::Limit:
      return "limit";
  }
  return "root";
}

double coalescence_point(double z, double u) {
  return z > 1.0 ? canon(u + 0.5 * (1.0 - 1.0 / z)) : canon(u + 0.5 * (1.0 - z));
}

double flow_move(double y, double z, double u) {
  const double f = canon(y - u);
  const double w = z > 1.0 ? (z - 1.0) / z : 0.0;
  if (z > 1.0 && f <= w) return coalescence_point(z, u);
  const double g = std::max(0.0, f - w) * z - f + 0.5 * (1.0 - std::min(1.0 / z, z));
  return canon(y + g);
}

// ---------------------------------------------------------------- discrete

std::int64_t DiscreteCell::child_start(std::uint32_t i) const {
  const std::size_t n = negative_steps.at(i - 1);
  return perimeter[n] - perimeter[n + 1] - 1;
}

std::int64_t DiscreteCell::face_degree(std::uint32_t i) const {
  const std::size_t n = positive_steps.at(i - 1);
  return 2 * (perimeter[n + 1] - perimeter[n] + 1);
}

std::size_t DiscreteCell::driver_of_step(std::size_t n) const {
  auto it = std::lower_bound(driver_step.begin(), driver_step.end(), n);
  if (it == driver_step.end() || *it != n) throw Error(ErrorCode::InvalidArgument, "step is not a driver event");
  return static_cast<std::size_t>(it - driver_step.begin());
}

DiscreteCellSystem::DiscreteCellSystem(const PerimeterSampler& sampler, double a, std::int64_t l, TreeBudget budget,
                                       std::uint64_t seed, Deterministic det)
    : sampler_(&sampler), a_(a), l_(l), budget_(budget), seed_(seed), det_(det) {
  if (sampler.law() != Law::Finite) throw Error(ErrorCode::InvalidArgument, "cell systems use the finite law");
  if (l < 1) throw Error(ErrorCode::InvalidArgument, "perimeter must be positive");
  cells_.emplace(UlamLabel{}, simulate({}, l, 0, 0.0, 0.0));
}

std::int64_t DiscreteCellSystem::cutoff() const {
  return std::max<std::int64_t>(1, static_cast<std::int64_t>(std::ceil(budget_.size_cutoff * static_cast<double>(l_))));
}

DiscreteCell DiscreteCellSystem::simulate(const UlamLabel& w, std::int64_t start, std::size_t birth_step,
                                          double birth_ptilde, double hole_to_root) const {
  Rng rng(label_key(seed_, w));
  DiscreteCell c;
  c.label = w;
  c.start = start;
  c.birth_step = birth_step;
  c.birth_ptilde = birth_ptilde;
  c.hole_to_root = hole_to_root;
  PerimeterPath path = sample_path(*sampler_, start, -1, rng);
  c.perimeter = std::move(path.values);
  const std::size_t N = c.perimeter.size() - 1;
  c.clocks.resize(N);
  c.fpp_prefix.assign(N + 1, 0.0);
  c.ptilde_prefix.assign(N + 1, 0.0);
  ContinuousTimePerimeter pt;
  pt.start = start;
  for (std::size_t n = 0; n < N; ++n) {
    const double p = static_cast<double>(c.perimeter[n]);
    c.clocks[n] = det_.on ? 1.0 : rng.exponential();
    c.fpp_prefix[n + 1] = c.fpp_prefix[n] + c.clocks[n] / (2.0 * p);
    c.ptilde_prefix[n + 1] = c.ptilde_prefix[n] + c.clocks[n] / (2.0 * std::pow(p, a_ - 1.0));
    if (c.perimeter[n + 1] <= 0) {
      pt.absorption_time = c.ptilde_prefix[n + 1];
      break;
    }
    pt.events.push_back({c.ptilde_prefix[n + 1], c.perimeter[n], c.perimeter[n + 1]});
    if (c.perimeter[n + 1] != c.perimeter[n]) c.driver_step.push_back(n);
  }
  c.drivers = build_drivers(pt, rng);
  for (std::size_t n : c.driver_step) {
    if (c.perimeter[n + 1] > c.perimeter[n])
      c.positive_steps.push_back(n);
    else
      c.negative_steps.push_back(n);
  }
  auto jump = [&](std::size_t n) { return c.perimeter[n + 1] - c.perimeter[n]; };
  std::stable_sort(c.positive_steps.begin(), c.positive_steps.end(),
                   [&](std::size_t x, std::size_t y) { return jump(x) > jump(y); });
  std::stable_sort(c.negative_steps.begin(), c.negative_steps.end(),
                   [&](std::size_t x, std::size_t y) { return jump(x) < jump(y); });
  for (std::size_t i = 0; i < c.positive_steps.size(); ++i)
    c.positive_rank[c.positive_steps[i]] = static_cast<std::uint32_t>(i + 1);
  return c;
}

const DiscreteCell& DiscreteCellSystem::ensure(const UlamLabel& w) {
  auto it = cells_.find(w);
  if (it != cells_.end()) return it->second;
  const DiscreteCell& p = ensure(parent_of(w));
  const std::uint32_t i = w.back();
  if (i == 0 || i > p.negative_steps.size())
    throw Error(ErrorCode::InvalidArgument, "no such cell: " + label_string(w));
  const std::int64_t start = p.child_start(i);
  if (start < 1) throw Error(ErrorCode::InvalidArgument, "empty hole: " + label_string(w));
  if (cells_.size() >= budget_.max_cells) throw Error(ErrorCode::BudgetExceeded, "cell budget exhausted");
  const std::size_t n = p.negative_steps[i - 1];
  DiscreteCell c = simulate(w, start, p.birth_step + n, p.birth_ptilde + p.ptilde_prefix[n],
                            p.hole_to_root + p.fpp_prefix[n]);
  return cells_.emplace(w, std::move(c)).first->second;
}

void DiscreteCellSystem::expand_all() {
  std::deque<UlamLabel> queue{UlamLabel{}};
  const std::int64_t cut = cutoff();
  while (!queue.empty()) {
    const UlamLabel w = queue.front();
    queue.pop_front();
    if (static_cast<int>(w.size()) >= budget_.depth) continue;
    const std::size_t nneg = cell(w).negative_steps.size();
    for (std::uint32_t i = 1; i <= nneg; ++i) {
      if (cell(w).child_start(i) < cut) break;
      const UlamLabel c = child_label(w, i);
      ensure(c);
      queue.push_back(c);
    }
  }
}

const DiscreteCell& DiscreteCellSystem::cell(const UlamLabel& w) const {
  auto it = cells_.find(w);
  if (it == cells_.end()) throw Error(ErrorCode::TruncatedAncestor, "cell not expanded: " + label_string(w));
  return it->second;
}

std::vector<UlamLabel> DiscreteCellSystem::labels() const {
  std::vector<UlamLabel> out;
  for (const auto& [w, c] : cells_) out.push_back(w);
  return out;
}

std::int64_t DiscreteCellSystem::degree(const FaceRef& f) const {
  if (f.is_root()) return 2 * l_;
  return cell(f.cell).face_degree(f.rank);
}

std::pair<double, double> DiscreteCellSystem::fpp_to_root(const FaceRef& f) const {
  if (f.is_root()) return {0.0, 0.0};
  const DiscreteCell& c = cell(f.cell);
  const std::size_t m = c.positive_steps.at(f.rank - 1);
  return {c.hole_to_root + c.fpp_prefix[m], c.hole_to_root};
}

std::vector<FaceRef> DiscreteCellSystem::faces_by_degree(std::size_t k) const {
  std::vector<std::pair<std::int64_t, FaceRef>> all;
  all.push_back({2 * l_, FaceRef{}});
  for (const auto& [w, c] : cells_)
    for (std::uint32_t i = 1; i <= c.positive_steps.size(); ++i) all.push_back({c.face_degree(i), FaceRef{w, i}});
  k = std::min(k, all.size());
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k), all.end(), [](const auto& x, const auto& y) {
    if (x.first != y.first) return x.first > y.first;
    return x.second < y.second;
  });
  std::vector<FaceRef> out;
  for (std::size_t i = 0; i < k; ++i) out.push_back(all[i].second);
  return out;
}

CellTrajectory DiscreteCellSystem::trajectory(const FaceRef& f, const UlamLabel& z) const {
  if (f.is_root()) throw Error(ErrorCode::InvalidArgument, "the root face has no trajectory");
  if (!is_prefix(z, f.cell)) throw Error(ErrorCode::InvalidArgument, "cell is not an ancestor of the face");
  UlamLabel cur = f.cell;
  const DiscreteCell* c = &cell(cur);
  std::size_t level = c->driver_of_step(c->positive_steps.at(f.rank - 1));
  std::int64_t idx = 0;
  for (;;) {
    CellTrajectory tr;
    tr.start_level = level;
    tr.index.assign(level + 1, 0);
    tr.index[level] = idx;
    for (std::size_t j = level; j-- > 0;) tr.index[j] = discrete_move(tr.index[j + 1], c->drivers.events[j]);
    if (cur == z) return tr;
    const std::uint32_t r = cur.back();
    cur = parent_of(cur);
    c = &cell(cur);
    level = c->driver_of_step(c->negative_steps.at(r - 1));
    idx = 2 * c->drivers.events[level].after + 1 + tr.index[0];
  }
}

NcaResult DiscreteCellSystem::nca(const FaceRef& f, const FaceRef& g) const {
  if (f.is_root() || g.is_root()) return NcaResult{};
  if (f == g) return NcaResult{NcaResult::Kind::Face, f, height(f), std::nullopt};
  const FaceRef* fs[2] = {&f, &g};
  return nca_scan(
      f.cell, g.cell, [&](int s, const UlamLabel& z) { return trajectory(*fs[s], z); },
      [](const CellTrajectory& A, const CellTrajectory& B, std::size_t j) { return A.index[j] == B.index[j]; },
      [&](const UlamLabel& z, std::size_t j) {
        const DiscreteCell& c = cell(z);
        const std::size_t step = c.driver_step[j];
        auto it = c.positive_rank.find(step);
        if (it == c.positive_rank.end()) throw Error(ErrorCode::InvalidArgument, "coalescence off a positive jump");
        const FaceRef face{z, it->second};
        return NcaResult{NcaResult::Kind::Face, face, height(face), -c.drivers.events[j].t};
      });
}

double DiscreteCellSystem::distance(const FaceRef& f, const FaceRef& g) const {
  if (f == g) return 0.0;
  return height(f) + height(g) - 2.0 * nca(f, g).height;
}

// -------------------------------------------------------------- continuous

double ContinuousCell::value_before(std::size_t j) const { return x0 * std::exp(xi_before[j]); }

double ContinuousCell::jump(std::size_t j) const { return value_before(j) * (z[j] - 1.0); }

ContinuousCellSystem::ContinuousCellSystem(double a, TreeBudget budget, ContinuousOptions opt, std::uint64_t seed)
    : a_(a),
      budget_(budget),
      opt_(opt),
      seed_(seed),
      drift_(xi_effective_drift(a, opt.jump_delta)),
      sampler_(LevyMeasureSampler::log_band(a, opt.jump_delta)) {
  if (!(budget.size_cutoff > 0.0)) throw Error(ErrorCode::InvalidArgument, "size cutoff must be positive");
  cells_.emplace(UlamLabel{}, simulate({}, 1.0, 0.0, 0.0));
}

ContinuousCell ContinuousCellSystem::simulate(const UlamLabel& w, double x0, double birth, double birth_tilde) const {
  Rng rng(label_key(seed_, w));
  ContinuousCell c;
  c.label = w;
  c.x0 = x0;
  c.drift = drift_;
  c.birth = birth;
  c.birth_tilde = birth_tilde;
  c.horizon = opt_.t_max;
  const auto events = sample_flow_events(sampler_, 1.0, opt_.t_max, rng);
  const double kill = std::log(opt_.kill_level / x0);
  const double ce = a_ - 2.0;
  const double scale = std::pow(x0, ce);
  double xi = 0.0, tprev = 0.0, acc = 0.0;
  if (kill >= 0.0) {
    c.horizon = 0.0;
    return c;
  }
  for (const auto& e : events) {
    const double xe = xi + drift_ * (e.t - tprev);
    if (drift_ < 0.0 && xe < kill) {
      c.horizon = tprev + (kill - xi) / drift_;
      break;
    }
    acc += exp_segment(ce, xi, drift_, e.t - tprev);
    c.t.push_back(e.t);
    c.z.push_back(e.z);
    c.u.push_back(e.u);
    c.xi_before.push_back(xe);
    c.tilde.push_back(scale * acc);
    xi = xe + std::log(e.z);
    tprev = e.t;
    if (xi < kill) {
      c.horizon = e.t;
      break;
    }
  }
  for (std::size_t j = 0; j < c.t.size(); ++j) (c.z[j] > 1.0 ? c.positive_atoms : c.negative_atoms).push_back(j);
  std::stable_sort(c.positive_atoms.begin(), c.positive_atoms.end(),
                   [&](std::size_t x, std::size_t y) { return c.jump(x) > c.jump(y); });
  std::stable_sort(c.negative_atoms.begin(), c.negative_atoms.end(),
                   [&](std::size_t x, std::size_t y) { return c.jump(x) < c.jump(y); });
  for (std::size_t i = 0; i < c.positive_atoms.size(); ++i)
    c.positive_rank[c.positive_atoms[i]] = static_cast<std::uint32_t>(i + 1);
  return c;
}

const ContinuousCell& ContinuousCellSystem::ensure(const UlamLabel& w) {
  auto it = cells_.find(w);
  if (it != cells_.end()) return it->second;
  const ContinuousCell& p = ensure(parent_of(w));
  const std::uint32_t i = w.back();
  if (i == 0 || i > p.negative_atoms.size())
    throw Error(ErrorCode::InvalidArgument, "no such cell: " + label_string(w));
  if (cells_.size() >= budget_.max_cells) throw Error(ErrorCode::BudgetExceeded, "cell budget exhausted");
  const std::size_t e = p.negative_atoms[i - 1];
  ContinuousCell c = simulate(w, p.child_start(i), p.birth + p.t[e], p.birth_tilde + p.tilde[e]);
  return cells_.emplace(w, std::move(c)).first->second;
}

void ContinuousCellSystem::expand_all() {
  std::deque<UlamLabel> queue{UlamLabel{}};
  while (!queue.empty()) {
    const UlamLabel w = queue.front();
    queue.pop_front();
    if (static_cast<int>(w.size()) >= budget_.depth) continue;
    const std::size_t nneg = cell(w).negative_atoms.size();
    for (std::uint32_t i = 1; i <= nneg; ++i) {
      if (cell(w).child_start(i) < budget_.size_cutoff) break;
      const UlamLabel c = child_label(w, i);
      ensure(c);
      queue.push_back(c);
    }
  }
}

const ContinuousCell& ContinuousCellSystem::cell(const UlamLabel& w) const {
  auto it = cells_.find(w);
  if (it == cells_.end()) throw Error(ErrorCode::TruncatedAncestor, "cell not expanded: " + label_string(w));
  return it->second;
}

std::vector<UlamLabel> ContinuousCellSystem::labels() const {
  std::vector<UlamLabel> out;
  for (const auto& [w, c] : cells_) out.push_back(w);
  return out;
}

double ContinuousCellSystem::delta(const FaceRef& f) const {
  return f.is_root() ? 1.0 : cell(f.cell).positive_jump(f.rank);
}

double ContinuousCellSystem::height(const FaceRef& f) const {
  if (f.is_root()) return 0.0;
  const ContinuousCell& c = cell(f.cell);
  return c.birth_tilde + c.tilde[c.positive_atoms.at(f.rank - 1)];
}

double ContinuousCellSystem::time(const FaceRef& f) const {
  if (f.is_root()) return 0.0;
  const ContinuousCell& c = cell(f.cell);
  return c.birth + c.face_time(f.rank);
}

std::vector<FaceRef> ContinuousCellSystem::faces_by_size(std::size_t k, double min_delta) const {
  std::vector<std::pair<double, FaceRef>> all;
  if (1.0 > min_delta) all.push_back({1.0, FaceRef{}});
  for (const auto& [w, c] : cells_)
    for (std::uint32_t i = 1; i <= c.positive_atoms.size(); ++i) {
      const double d = c.positive_jump(i);
      if (d <= min_delta) break;
      all.push_back({d, FaceRef{w, i}});
    }
  std::stable_sort(all.begin(), all.end(), [](const auto& x, const auto& y) {
    if (x.first != y.first) return x.first > y.first;
    return x.second < y.second;
  });
  std::vector<FaceRef> out;
  for (std::size_t i = 0; i < std::min(k, all.size()); ++i) out.push_back(all[i].second);
  return out;
}

bool ContinuousCellSystem::passes(const ContinuousCell& c, std::size_t j, double eps_flow) const {
  return std::fabs(std::log(c.z[j])) > eps_flow;
}

CellTrajectory ContinuousCellSystem::trajectory(const FaceRef& f, const UlamLabel& z, double eps_flow) const {
  if (f.is_root()) throw Error(ErrorCode::InvalidArgument, "the root face has no trajectory");
  if (!is_prefix(z, f.cell)) throw Error(ErrorCode::InvalidArgument, "cell is not an ancestor of the face");
  if (eps_flow < opt_.jump_delta) throw Error(ErrorCode::InvalidArgument, "flow cutoff below the simulated cutoff");
  UlamLabel cur = f.cell;
  const ContinuousCell* c = &cell(cur);
  std::size_t level = c->positive_atoms.at(f.rank - 1);
  double y = coalescence_point(c->z[level], c->u[level]);
  for (;;) {
    CellTrajectory tr;
    tr.start_level = level;
    tr.position.assign(level + 1, 0.0);
    tr.position[level] = y;
    for (std::size_t j = level; j-- > 0;)
      tr.position[j] = passes(*c, j, eps_flow) ? flow_move(tr.position[j + 1], c->z[j], c->u[j]) : tr.position[j + 1];
    if (cur == z) return tr;
    const std::uint32_t r = cur.back();
    cur = parent_of(cur);
    c = &cell(cur);
    level = c->negative_atoms.at(r - 1);
    const double gap = 1.0 - c->z[level];
    y = canon(coalescence_point(c->z[level], c->u[level]) - gap + gap * tr.position[0]);
  }
}

NcaResult ContinuousCellSystem::nca(const FaceRef& v, const FaceRef& w, double eps_flow) const {
  if (v.is_root() || w.is_root()) return NcaResult{};
  if (v == w) return NcaResult{NcaResult::Kind::Face, v, height(v), std::nullopt};
  const FaceRef* fs[2] = {&v, &w};
  const auto kind = a_ < 2.0 ? NcaResult::Kind::Face : NcaResult::Kind::Limit;
  return nca_scan(
      v.cell, w.cell, [&](int s, const UlamLabel& z) { return trajectory(*fs[s], z, eps_flow); },
      [](const CellTrajectory& A, const CellTrajectory& B, std::size_t j) { return A.position[j] == B.position[j]; },
      [&](const UlamLabel& z, std::size_t j) {
        const ContinuousCell& c = cell(z);
        auto it = c.positive_rank.find(j);
        if (it == c.positive_rank.end()) throw Error(ErrorCode::InvalidArgument, "coalescence off a positive jump");
        const FaceRef face{z, it->second};
        return NcaResult{kind, face, height(face), -c.t[j]};
      });
}

double ContinuousCellSystem::distance(const FaceRef& v, const FaceRef& w, double eps_flow) const {
  if (v == w) return 0.0;
  return height(v) + height(w) - 2.0 * nca(v, w, eps_flow).height;
}

double ContinuousCellSystem::cauchy_gap(const FaceRef& v, const FaceRef& w, double eps_flow) const {
  return std::fabs(distance(v, w, eps_flow) - distance(v, w, 0.5 * eps_flow));
}

bool ContinuousCellSystem::coalescence_on_positive_jump(const FaceRef& v, const FaceRef& w, double eps_flow) const {
  if (v.is_root() || w.is_root() || v == w) return true;
  try {
    const NcaResult r = nca(v, w, eps_flow);
    if (r.kind == NcaResult::Kind::Root) return true;
    const ContinuousCell& c = cell(r.face.cell);
    return c.z[c.positive_atoms.at(r.face.rank - 1)] > 1.0;
  } catch (const Error& e) {
    if (e.code() == ErrorCode::InvalidArgument) return false;
    throw;
  }
}

// --------------------------------------------------------------- shortcuts

std::optional<std::size_t> ShortcutSpace::find(const FaceRef& f) const {
  auto it = std::find(nodes.begin(), nodes.end(), f);
  if (it == nodes.end()) return std::nullopt;
  return static_cast<std::size_t>(it - nodes.begin());
}

double ShortcutSpace::distance(const FaceRef& v, const FaceRef& w) const {
  const auto i = find(v), j = find(w);
  if (!i || !j) throw Error(ErrorCode::InvalidArgument, "face is not in the shortcut space");
  return dist[*i][*j];
}

Shortcut shortcut_of(const ContinuousCellSystem& sys, const UlamLabel& w, double eps, double eps_flow) {
  if (w.empty()) throw Error(ErrorCode::InvalidArgument, "the root cell has no shortcut");
  const ContinuousCell& self = sys.cell(w);
  Shortcut sc;
  sc.cell = w;
  for (int side = 0; side < 2; ++side) {
    double y = side == 0 ? 0.0 : 1.0;
    UlamLabel cur = w;
    FaceRef found;
    bool done = false;
    while (!cur.empty() && !done) {
      const std::uint32_t r = cur.back();
      cur = parent_of(cur);
      const ContinuousCell& c = sys.cell(cur);
      const std::size_t e = c.negative_atoms.at(r - 1);
      const double gap = 1.0 - c.z[e];
      y = canon(coalescence_point(c.z[e], c.u[e]) - gap + gap * y);
      for (std::size_t j = e; j-- > 0;) {
        if (std::fabs(std::log(c.z[j])) <= eps_flow) continue;
        if (c.z[j] > 1.0 && c.jump(j) > eps && canon(y - c.u[j]) <= (c.z[j] - 1.0) / c.z[j]) {
          found = FaceRef{cur, c.positive_rank.at(j)};
          done = true;
          break;
        }
        y = flow_move(y, c.z[j], c.u[j]);
      }
    }
    (side == 0 ? sc.left : sc.right) = found;
  }
  sc.length = 2.0 * self.birth_tilde - sys.height(sc.left) - sys.height(sc.right);
  return sc;
}

ShortcutSpace shortcuts(const ContinuousCellSystem& sys, double eps, double eps_flow) {
  if (!(eps > 0.0 && eps < 1.0)) throw Error(ErrorCode::InvalidArgument, "shortcut threshold must lie in (0,1)");
  ShortcutSpace sp;
  sp.eps = eps;
  sp.nodes = sys.faces_by_size(std::numeric_limits<std::size_t>::max(), eps);
  const std::size_t N = sp.nodes.size();
  // trajectories of every node into every ancestor cell
  std::vector<std::map<UlamLabel, CellTrajectory>> traj(N);
  for (std::size_t i = 0; i < N; ++i) {
    const FaceRef& f = sp.nodes[i];
    if (f.is_root()) continue;
    for (std::size_t k = 0; k <= f.cell.size(); ++k) {
      const UlamLabel z(f.cell.begin(), f.cell.begin() + static_cast<std::ptrdiff_t>(k));
      traj[i][z] = sys.trajectory(f, z, eps_flow);
    }
  }
  std::vector<double> h(N);
  for (std::size_t i = 0; i < N; ++i) h[i] = sys.height(sp.nodes[i]);
  sp.dist.assign(N, std::vector<double>(N, 0.0));
  for (std::size_t i = 0; i < N; ++i)
    for (std::size_t j = i + 1; j < N; ++j) {
      const FaceRef &v = sp.nodes[i], &w = sp.nodes[j];
      double hc = 0.0;
      if (!v.is_root() && !w.is_root()) {
        const std::size_t ij[2] = {i, j};
        const NcaResult r = nca_scan(
            v.cell, w.cell, [&](int s, const UlamLabel& z) { return traj[ij[s]].at(z); },
            [](const CellTrajectory& A, const CellTrajectory& B, std::size_t l) { return A.position[l] == B.position[l]; },
            [&](const UlamLabel& z, std::size_t l) {
              const ContinuousCell& c = sys.cell(z);
              const FaceRef face{z, c.positive_rank.at(l)};
              return NcaResult{NcaResult::Kind::Face, face, sys.height(face), -c.t[l]};
            });
        hc = r.height;
      }
      sp.dist[i][j] = sp.dist[j][i] = h[i] + h[j] - 2.0 * hc;
    }
  for (const UlamLabel& w : sys.labels()) {
    if (w.empty()) continue;
    Shortcut sc = shortcut_of(sys, w, eps, eps_flow);
    const auto i = sp.find(sc.left), j = sp.find(sc.right);
    if (i && j) {
      sp.dist[*i][*j] = std::min(sp.dist[*i][*j], sc.length);
      sp.dist[*j][*i] = sp.dist[*i][*j];
    }
    sp.shortcuts.push_back(std::move(sc));
  }
  for (std::size_t k = 0; k < N; ++k)
    for (std::size_t i = 0; i < N; ++i)
      for (std::size_t j = 0; j < N; ++j) sp.dist[i][j] = std::min(sp.dist[i][j], sp.dist[i][k] + sp.dist[k][j]);
  return sp;
}

}  // namespace mapflow

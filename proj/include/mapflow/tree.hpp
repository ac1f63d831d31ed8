#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mapflow/flow_discrete.hpp"
#include "mapflow/levy_flow.hpp"
#include "mapflow/peeling.hpp"
#include "mapflow/perimeter.hpp"
#include "mapflow/rng.hpp"

namespace mapflow {

using UlamLabel = std::vector<std::uint32_t>;

std::string label_string(const UlamLabel& w);
UlamLabel parse_label(const std::string& s);
bool is_prefix(const UlamLabel& z, const UlamLabel& w);
UlamLabel common_prefix(const UlamLabel& v, const UlamLabel& w);
UlamLabel child_label(const UlamLabel& w, std::uint32_t i);
std::uint64_t label_key(std::uint64_t seed, const UlamLabel& w);

struct TreeBudget {
  int depth = 2;
  double size_cutoff = 0.1;  // relative to the root size
  std::size_t max_cells = 100000;
};

// A face: the rank-th largest positive jump of cell `cell` (rank >= 1), or
// the root face (rank 0).
struct FaceRef {
  UlamLabel cell;
  std::uint32_t rank = 0;

  bool is_root() const { return rank == 0; }
  UlamLabel label() const { return is_root() ? UlamLabel{} : child_label(cell, rank); }
  static FaceRef from_label(const UlamLabel& w);
  bool operator==(const FaceRef& o) const { return rank == o.rank && cell == o.cell; }
  bool operator<(const FaceRef& o) const { return cell != o.cell ? cell < o.cell : rank < o.rank; }
};

// Levels of a trajectory inside one cell: level j is the position after the
// reversed flow has processed event j, level L is the start.
struct CellTrajectory {
  std::size_t start_level = 0;
  std::vector<std::int64_t> index;  // discrete grid index per level
  std::vector<double> position;     // continuous position in [0,1) per level
};

struct NcaResult {
  enum class Kind { Root, Face, Limit } kind = Kind::Root;
  FaceRef face;           // valid for Face and Limit
  double height = 0.0;    // distance from the root to the ancestor
  std::optional<double> coalescence_time;  // reversed time in the ancestor cell, negative
};

std::string nca_kind_name(NcaResult::Kind k);

// Branching peeling exploration with a discrete coalescing flow on each branch.
struct DiscreteCell {
  UlamLabel label;
  std::int64_t start = 0;
  std::vector<std::int64_t> perimeter;  // P(0..N), P(N) = 0
  std::vector<double> clocks;           // E_n
  std::vector<double> fpp_prefix;       // sum_{m<n} E_m / (2 P(m))
  std::vector<double> ptilde_prefix;    // sum_{m<n} E_m / (2 P(m)^(a-1))
  ReversedDrivers drivers;
  std::vector<std::size_t> driver_step;  // driver event -> step
  std::vector<std::size_t> positive_steps;  // by decreasing jump
  std::vector<std::size_t> negative_steps;  // by decreasing |jump|
  std::map<std::size_t, std::uint32_t> positive_rank;  // step -> rank
  std::size_t birth_step = 0;     // B_w
  double birth_ptilde = 0.0;      // b_w
  double hole_to_root = 0.0;      // d(f_r, boundary of the hole)

  std::size_t steps() const { return perimeter.size() - 1; }
  std::int64_t child_start(std::uint32_t i) const;
  std::int64_t face_degree(std::uint32_t i) const;
  std::size_t driver_of_step(std::size_t n) const;
};

class DiscreteCellSystem {
 public:
  DiscreteCellSystem(const PerimeterSampler& sampler, double a, std::int64_t l, TreeBudget budget, std::uint64_t seed,
                     Deterministic det = {});

  double a() const { return a_; }
  std::int64_t l() const { return l_; }
  const TreeBudget& budget() const { return budget_; }

  // Expands every cell within the budget; throws BudgetExceeded past max_cells.
  void expand_all();
  // Expands the cell on demand (lazy); requires its parent to exist.
  const DiscreteCell& ensure(const UlamLabel& w);
  bool has(const UlamLabel& w) const { return cells_.count(w) != 0; }
  const DiscreteCell& cell(const UlamLabel& w) const;
  std::vector<UlamLabel> labels() const;
  std::size_t size() const { return cells_.size(); }

  std::int64_t degree(const FaceRef& f) const;
  // d(f_r, f) and d(f_r, boundary of f's cell hole).
  std::pair<double, double> fpp_to_root(const FaceRef& f) const;
  double height(const FaceRef& f) const { return fpp_to_root(f).first; }
  // Faces by non-increasing degree (root first on ties); at most k.
  std::vector<FaceRef> faces_by_degree(std::size_t k) const;

  CellTrajectory trajectory(const FaceRef& f, const UlamLabel& z) const;
  NcaResult nca(const FaceRef& f, const FaceRef& g) const;
  double distance(const FaceRef& f, const FaceRef& g) const;

 private:
  DiscreteCell simulate(const UlamLabel& w, std::int64_t start, std::size_t birth_step, double birth_ptilde,
                        double hole_to_root) const;
  std::int64_t cutoff() const;

  const PerimeterSampler* sampler_;
  double a_;
  std::int64_t l_;
  TreeBudget budget_;
  std::uint64_t seed_;
  Deterministic det_;
  std::map<UlamLabel, DiscreteCell> cells_;
};

// Cell system driven by Poisson point processes of intensity dt lambda(dz) du.
struct ContinuousCell {
  UlamLabel label;
  double x0 = 1.0;  // cell value at its birth
  double drift = 0.0;
  double horizon = 0.0;  // cell-local time at which the cell stops
  std::vector<double> t, z, u;       // atoms, increasing time
  std::vector<double> xi_before;     // xi at t_j-
  std::vector<double> tilde;         // x0^(a-2) int_0^{t_j} exp((a-2) xi)
  std::vector<std::size_t> positive_atoms;  // by decreasing jump of the cell
  std::vector<std::size_t> negative_atoms;  // by decreasing |jump|
  std::map<std::size_t, std::uint32_t> positive_rank;
  double birth = 0.0;        // b_w
  double birth_tilde = 0.0;  // Lamperti transformed birth time

  double value_before(std::size_t j) const;
  double jump(std::size_t j) const;  // cell value jump at atom j
  double positive_jump(std::uint32_t i) const { return jump(positive_atoms.at(i - 1)); }
  double child_start(std::uint32_t i) const { return -jump(negative_atoms.at(i - 1)); }
  double face_time(std::uint32_t i) const { return t[positive_atoms.at(i - 1)]; }
};

struct ContinuousOptions {
  double jump_delta = 1e-3;  // |log z| > jump_delta is simulated
  double t_max = 20.0;
  double kill_level = 1e-3;  // cells stop once their value drops below this
};

class ContinuousCellSystem {
 public:
  ContinuousCellSystem(double a, TreeBudget budget, ContinuousOptions opt, std::uint64_t seed);

  double a() const { return a_; }
  const TreeBudget& budget() const { return budget_; }
  const ContinuousOptions& options() const { return opt_; }

  void expand_all();
  const ContinuousCell& ensure(const UlamLabel& w);
  bool has(const UlamLabel& w) const { return cells_.count(w) != 0; }
  const ContinuousCell& cell(const UlamLabel& w) const;
  std::vector<UlamLabel> labels() const;
  std::size_t size() const { return cells_.size(); }

  double delta(const FaceRef& f) const;  // Delta_w, 1 for the root
  double height(const FaceRef& f) const;  // tilde t_w
  double time(const FaceRef& f) const;    // t_w
  std::vector<FaceRef> faces_by_size(std::size_t k, double min_delta = 0.0) const;

  // Flow driven by atoms with |log z| > eps_flow (eps_flow >= jump_delta).
  CellTrajectory trajectory(const FaceRef& f, const UlamLabel& z, double eps_flow) const;
  NcaResult nca(const FaceRef& v, const FaceRef& w, double eps_flow) const;
  double distance(const FaceRef& v, const FaceRef& w, double eps_flow) const;
  // Distance change between eps and eps/2 (a >= 2 approximation diagnostic).
  double cauchy_gap(const FaceRef& v, const FaceRef& w, double eps_flow) const;
  // True when every coalescence found for (v, w) happens at an atom with z > 1.
  bool coalescence_on_positive_jump(const FaceRef& v, const FaceRef& w, double eps_flow) const;

 private:
  ContinuousCell simulate(const UlamLabel& w, double x0, double birth, double birth_tilde) const;
  bool passes(const ContinuousCell& c, std::size_t j, double eps_flow) const;

  double a_;
  TreeBudget budget_;
  ContinuousOptions opt_;
  std::uint64_t seed_;
  double drift_;
  LevyMeasureSampler sampler_;
  std::map<UlamLabel, ContinuousCell> cells_;
};

// Position update of the flow modulo 1; points inside a coalescence window
// land exactly on the same value.
double flow_move(double y, double z, double u);
double coalescence_point(double z, double u);

struct Shortcut {
  UlamLabel cell;
  FaceRef left, right;
  double length = 0.0;
};

struct ShortcutSpace {
  double eps = 0.0;
  std::vector<FaceRef> nodes;  // root and faces with Delta > eps
  std::vector<Shortcut> shortcuts;
  std::vector<std::vector<double>> dist;  // all-pairs d over nodes

  std::optional<std::size_t> find(const FaceRef& f) const;
  double distance(const FaceRef& v, const FaceRef& w) const;
};

Shortcut shortcut_of(const ContinuousCellSystem& sys, const UlamLabel& w, double eps, double eps_flow);
ShortcutSpace shortcuts(const ContinuousCellSystem& sys, double eps, double eps_flow);

}  // namespace mapflow

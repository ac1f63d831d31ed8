#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "mapflow/peeling.hpp"
#include "mapflow/perimeter.hpp"
#include "mapflow/rng.hpp"

namespace mapflow {

struct PtildeEvent {
  double t;
  std::int64_t before;
  std::int64_t after;
};

// Perimeter run in continuous time: the holding time at P is E/(2 P^(a-1)).
struct ContinuousTimePerimeter {
  std::int64_t start = 1;
  std::vector<PtildeEvent> events;  // every step before absorption
  std::optional<double> absorption_time;

  std::int64_t value_at(double t) const;
};

ContinuousTimePerimeter build_ptilde(const PerimeterPath& path, double a, Rng& rng, Deterministic det = {});
// Samples the finite-law chain directly in continuous time up to time T.
ContinuousTimePerimeter simulate_ptilde(const PerimeterSampler& sampler, std::int64_t l, double a, double T, Rng& rng,
                                        std::int64_t step_cap = kDefaultStepCap);

double half_max(double z, std::int64_t p_after);
double g_discrete(double x, double z, double u, std::int64_t p_after);

// One jump of the perimeter with its grid uniform. Offsets: `r_before` is the
// offset of the grid before the jump in exploration time (2*before edges),
// `r_after` the offset of the grid after it.
struct DriverEvent {
  double t;
  std::int64_t before;
  std::int64_t after;
  std::int64_t v;  // grid index of V on 2*after edges
  double z;
  double V;
  double U;
  double r_before;
  double r_after;
};

struct ReversedDrivers {
  std::int64_t start = 1;
  std::vector<DriverEvent> events;  // nonzero jumps, forward order

  std::size_t count_until(double T) const;
  std::int64_t perimeter_at(double T) const;
  double offset_at(double T) const;
};

ReversedDrivers build_drivers(const ContinuousTimePerimeter& pt, Rng& rng);

struct Atom {
  double s;  // T - t
  double z;
  double u;
};

std::vector<Atom> export_point_measure(const ReversedDrivers& d, double T, bool include_negative = false);

struct MergeRecord {
  double s;
  std::size_t survivor;
  std::size_t absorbed;
};

struct TrajectoryRecord {
  std::vector<double> s;
  std::vector<std::int64_t> index;
  std::vector<double> position;  // lifted
  std::vector<std::int64_t> perimeter;
};

struct FlowOptions {
  bool record = false;
  std::vector<double> sample_times;  // reversed times in [0, T], increasing
  bool dual_check = false;
  double band_eps = 0.0;  // accumulate g over jumps with z in (1-eps, 1+eps)
};

struct FlowState {
  double T = 0.0;
  std::vector<std::int64_t> index;
  std::vector<double> lifted;
  std::vector<std::optional<std::size_t>> merged_into;
  std::vector<MergeRecord> merges;
  std::vector<TrajectoryRecord> records;
  std::vector<std::vector<double>> samples;  // [trajectory][sample time]
  std::vector<double> band_sum;
  double band_energy = 0.0;  // sum of (z-1)^2 over band jumps
  double max_dual_error = 0.0;
  bool order_preserved = true;
  bool permanence = true;
  bool grid_consistent = true;
};

// Grid indices at time T of real starts; off-grid starts throw unless snapped
// to the containing edge.
std::vector<std::int64_t> starts_from_positions(const ReversedDrivers& d, double T, const std::vector<double>& x,
                                                bool snap = false);
double position_of(const ReversedDrivers& d, double T, std::int64_t index);

FlowState evolve_flow(const ReversedDrivers& d, const std::vector<std::int64_t>& starts, double T,
                      const FlowOptions& opt = {});

struct MartingaleEstimate {
  double mean = 0.0;
  double stderr_ = 0.0;
  double variance = 0.0;
  double band_energy = 0.0;  // E[sum over band of (z-1)^2]
  std::size_t replicas = 0;
};

MartingaleEstimate martingale_diagnostic(const PerimeterSampler& sampler, double a, std::int64_t l, double T,
                                         double eps, double v, std::size_t replicas, std::uint64_t seed);

// E[sum over jumps in [0,T] with |z-1| < eps of (z-1)^2] for each eps, on
// shared replicas.
std::vector<double> small_jump_energy(const PerimeterSampler& sampler, double a, std::int64_t l, double T,
                                      const std::vector<double>& eps, std::size_t replicas, std::uint64_t seed);

}  // namespace mapflow

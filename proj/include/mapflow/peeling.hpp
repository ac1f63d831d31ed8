#pragma once

#include <cstdint>
#include <vector>

#include "mapflow/perimeter.hpp"
#include "mapflow/rng.hpp"

namespace mapflow {

// Draws replaced by their conditional means (unit tests only).
struct Deterministic {
  bool on = false;
};

struct FppClock {
  std::vector<double> times;  // T_0 = 0, ..., T_n
};

FppClock fpp_times(const PerimeterPath& path, Rng& rng, Deterministic det = {});
std::size_t hull_index(const FppClock& clock, double r);

double theta(std::int64_t p_before, std::int64_t p_after);
double theta(const PerimeterPath& path, std::size_t i);

struct GeodesicMarks {
  std::vector<double> thetas;
  std::vector<double> marks;  // 0/1, or theta under the deterministic hook
  double count(std::size_t n) const;
  double sum_theta(std::size_t n) const;
  double var_theta(std::size_t n) const;
};

GeodesicMarks mark_and_count(const PerimeterPath& path, std::size_t n, Rng& rng, Deterministic det = {});

enum class EventKind { Glue, Insert };

// One step of the reversed exploration: a face glued to `edges` consecutive
// boundary edges, or `edges` inserted edges, at `position` on a boundary of
// `grid` = 2P(k+1) edges.
struct ReversedEvent {
  std::size_t step;
  EventKind kind;
  std::int64_t edges;
  std::int64_t position;
  std::int64_t grid;
};

std::vector<ReversedEvent> reversed_event_stream(const PerimeterPath& path, Rng& rng);

}  // namespace mapflow

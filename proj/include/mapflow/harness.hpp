#pragma once

#include <atomic>
#include <cstdint>
#include <exception>
#include <iosfwd>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "mapflow/perimeter.hpp"
#include "mapflow/rng.hpp"
#include "mapflow/tree.hpp"

namespace mapflow {

constexpr int kSchemaVersion = 1;

const char* build_git_hash();

// Mean with standard error; the input is sorted before summation so the
// result does not depend on replica order.
struct Estimate {
  double mean = 0.0;
  double stderr_ = 0.0;
  std::size_t replicas = 0;
  bool low_power = true;  // fewer than 30 replicas
};

constexpr std::size_t kMinReplicas = 30;

Estimate estimate(std::vector<double> xs);

// Two-sample Kolmogorov-Smirnov statistic sup |F_a - F_b|.
double ks_distance(std::vector<double> a, std::vector<double> b);
// Asymptotic critical value of the two-sample statistic at level alpha.
double ks_critical(std::size_t n, std::size_t m, double alpha);

struct ScaleFit {
  double scale = 1.0;
  double ks = 1.0;
};

// Scale c > 0 minimizing ks_distance(c * sample, reference).
ScaleFit fit_scale_ks(const std::vector<double>& sample, const std::vector<double>& reference);

// Least-squares slope of log y against log x.
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

// True when err is non-increasing except for at most `allowed` rises, each
// smaller than the stderr of the later point.
bool trend_nonincreasing(const std::vector<double>& err, const std::vector<double>& se, int allowed = 1);

// Runs f(i) for i in [0, count) on `threads` workers; results are stored by
// index, so the output does not depend on scheduling.
template <class R, class F>
std::vector<R> replica_map(std::size_t count, int threads, F&& f) {
  std::vector<R> out(count);
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex m;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= count) return;
      try {
        out[i] = f(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(m);
        if (!error) error = std::current_exception();
        next.store(count);
      }
    }
  };
  const int n = std::max(1, threads);
  if (n == 1 || count < 2) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < n; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (error) std::rethrow_exception(error);
  return out;
}

using Config = std::vector<std::pair<std::string, std::string>>;

// `key = value` lines; blank lines and lines starting with # are skipped.
Config parse_config_text(const std::string& text);
Config parse_config_file(const std::string& path);

struct ExperimentSpec {
  std::string kind = "theorem1";
  double a = 2.0;
  double p_q = 0.05;
  std::vector<std::int64_t> n_grid{1000, 10000, 100000, 1000000};
  std::vector<std::int64_t> l_grid{256, 2048};
  std::vector<double> t_grid{2.0};
  std::vector<double> eps_grid{0.4, 0.2, 0.1, 0.05};
  std::size_t replicas = 100;
  std::size_t replica_offset = 0;
  std::uint64_t seed = 1;
  int threads = 1;
  double eps = 1e-3;
  double start = 0.25;
  double second_start = 0.75;
  int depth = 2;
  double cutoff = 0.1;
  std::size_t max_cells = 100000;
  double kill_level = 1e-3;
  double t_max = 20.0;
  std::optional<double> tolerance;
  std::string out;
  std::string format = "csv";
  Config config;  // echoed verbatim into the report

  static ExperimentSpec from_config(const Config& c);
  void validate() const;
};

struct ReportRow {
  std::string name;
  double x = 0.0;
  Estimate est;
  std::optional<double> target;
};

struct KsEntry {
  std::string name;
  double x = 0.0;
  double statistic = 0.0;
  std::size_t n_a = 0, n_b = 0;
};

struct Check {
  std::string name;
  double value = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

struct ReplicaRecord {
  std::size_t replica = 0;
  std::string name;
  std::vector<double> values;
};

struct Report {
  int schema_version = kSchemaVersion;
  std::string experiment;
  std::string git = build_git_hash();
  Config config;
  std::vector<ReportRow> rows;
  std::vector<KsEntry> ks;
  std::vector<Check> checks;
  std::vector<ReplicaRecord> replicas;

  bool passed() const;
  const ReportRow* row(const std::string& name, double x) const;
  const Check* check(const std::string& name) const;
};

void write_csv(const Report& r, std::ostream& os);
void write_json(const Report& r, std::ostream& os);
void write_report(const Report& r, const std::string& path, const std::string& format);

// Geodesic face count of the infinite-law exploration at each grid size.
std::vector<double> geodesic_face_counts(const PerimeterSampler& sampler, const std::vector<std::int64_t>& grid,
                                         Rng& rng);
// Normalizing sequence and limit constant (NaN when the limit is random).
double theorem1_scale(double a, double n);
double theorem1_target(double a);

// Rescaled d(f_1, f_2) for the two largest faces of one discrete system.
double discrete_top_faces_distance(const PerimeterSampler& sampler, double a, std::int64_t l, TreeBudget budget,
                                   std::uint64_t seed);
// d(w_1, w_2) for the two largest cells of one continuous system.
double continuous_top_faces_distance(double a, TreeBudget budget, ContinuousOptions opt, double eps_flow,
                                     std::uint64_t seed);

Report theorem1_suite(const ExperimentSpec& spec);
Report flow_convergence_suite(const ExperimentSpec& spec);
Report martingale_suite(const ExperimentSpec& spec);
Report small_jump_suite(const ExperimentSpec& spec);
Report theorem4_suite(const ExperimentSpec& spec);

// Dispatches on spec.kind and writes spec.out when set.
Report run(const ExperimentSpec& spec);

}  // namespace mapflow

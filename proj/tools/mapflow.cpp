#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "mapflow/error.hpp"
#include "mapflow/flow_discrete.hpp"
#include "mapflow/harness.hpp"
#include "mapflow/levy_flow.hpp"
#include "mapflow/model.hpp"
#include "mapflow/peeling.hpp"
#include "mapflow/perimeter.hpp"
#include "mapflow/tree.hpp"

using namespace mapflow;
using json = nlohmann::ordered_json;

namespace {

struct Globals {
  std::uint64_t seed = 1;
  int threads = 1;
  std::string out;
  std::string format = "csv";
  std::string config;
};

using Cell = std::variant<double, std::int64_t, std::string>;

struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<Cell>> rows;
};

std::string cell_text(const Cell& c) {
  if (const auto* d = std::get_if<double>(&c)) {
    std::ostringstream os;
    os << std::setprecision(17) << *d;
    return os.str();
  }
  if (const auto* i = std::get_if<std::int64_t>(&c)) return std::to_string(*i);
  return std::get<std::string>(c);
}

json cell_json(const Cell& c) {
  if (const auto* d = std::get_if<double>(&c)) return *d;
  if (const auto* i = std::get_if<std::int64_t>(&c)) return *i;
  return std::get<std::string>(c);
}

std::string output_path(const Globals& g, const std::string& name) {
  if (!g.out.empty()) return g.out;
  if (const char* dir = std::getenv("MAPFLOW_OUT_DIR"); dir && *dir)
    return std::string(dir) + "/" + name + "." + g.format;
  return "";
}

void emit(const Globals& g, const std::string& name, const std::string& text) {
  const std::string path = output_path(g, name);
  if (path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream f(path);
  if (!f) throw Error(ErrorCode::IoError, "cannot write " + path);
  f << text;
  if (!f) throw Error(ErrorCode::IoError, "write failed for " + path);
}

void emit_table(const Globals& g, const std::string& name, const Table& t) {
  std::ostringstream os;
  if (g.format == "json") {
    json j;
    j["schema_version"] = kSchemaVersion;
    j["command"] = name;
    j["seed"] = g.seed;
    j["rows"] = json::array();
    for (const auto& r : t.rows) {
      json o = json::object();
      for (std::size_t k = 0; k < t.columns.size(); ++k) o[t.columns[k]] = cell_json(r[k]);
      j["rows"].push_back(o);
    }
    os << j.dump(2) << "\n";
  } else {
    os << "# schema_version = " << kSchemaVersion << "\n# command = " << name << "\n# seed = " << g.seed << "\n";
    for (std::size_t k = 0; k < t.columns.size(); ++k) os << (k ? "," : "") << t.columns[k];
    os << "\n";
    for (const auto& r : t.rows) {
      for (std::size_t k = 0; k < r.size(); ++k) os << (k ? "," : "") << cell_text(r[k]);
      os << "\n";
    }
  }
  emit(g, name, os.str());
}

std::vector<double> parse_doubles(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.find_first_not_of(" \t") == std::string::npos) continue;
    try {
      out.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw Error(ErrorCode::ConfigError, "not a number: " + item);
    }
  }
  return out;
}

// Config lines are appended after the command line so they take precedence.
std::vector<std::string> with_config(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  std::string path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
    else if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
  }
  bool is_run = false;
  for (const auto& a : args)
    if (a == "run") is_run = true;
  if (path.empty() || is_run) return args;
  for (auto [k, v] : parse_config_file(path)) {
    for (auto& ch : k)
      if (ch == '_') ch = '-';
    args.push_back("--" + k);
    args.push_back(v);
  }
  return args;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Peeling explorations, coalescing flows and their scaling limits"};
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  Globals g;
  app.add_option("--seed", g.seed, "master seed")->capture_default_str();
  app.add_option("--threads", g.threads, "worker threads")->capture_default_str()->check(CLI::PositiveNumber);
  app.add_option("--out", g.out, "output file (default: stdout or $MAPFLOW_OUT_DIR)");
  app.add_option("--format", g.format, "csv or json")->capture_default_str()->check(CLI::IsMember({"csv", "json"}));
  app.add_option("--config", g.config, "file of key = value lines overriding flags");
  app.fallthrough();

  double a = 2.0, p_q = 0.05;
  std::size_t replicas = 1;
  std::string nu_path;
  auto model_opts = [&](CLI::App* c) {
    c->add_option("--a", a, "exponent a in (3/2, 5/2]")->capture_default_str();
    c->add_option("--p-q", p_q, "tail constant p_q")->capture_default_str();
    c->add_option("--replicas", replicas, "replicas")->capture_default_str()->check(CLI::PositiveNumber);
    c->add_option("--nu", nu_path, "step distribution file (default: built-in family)");
  };
  auto make_nu = [&] {
    if (nu_path.empty()) return build_asymptotic_nu(a, p_q);
    std::ifstream f(nu_path);
    if (!f) throw Error(ErrorCode::IoError, "cannot read " + nu_path);
    return StepDistribution::read(f);
  };

  // nu
  auto* nuc = app.add_subcommand("nu", "write the built-in step distribution as a nu file");
  std::int64_t k_head = 4096;
  nuc->add_option("--a", a, "exponent a in (3/2, 5/2]")->capture_default_str();
  nuc->add_option("--p-q", p_q, "tail constant p_q")->capture_default_str();
  nuc->add_option("--k-head", k_head, "head size")->capture_default_str();
  nuc->callback([&] {
    std::ostringstream os;
    build_asymptotic_nu(a, p_q, k_head).write(os);
    emit(g, "nu", os.str());
  });

  // perimeter sample
  auto* perimeter = app.add_subcommand("perimeter", "perimeter process");
  perimeter->require_subcommand(1);
  auto* psample = perimeter->add_subcommand("sample", "sample perimeter paths");
  model_opts(psample);
  std::string law = "infinite";
  std::int64_t start = 1, steps = 1000, target = 0;
  psample->add_option("--law", law, "infinite, finite or target")->capture_default_str();
  psample->add_option("--start", start, "starting half-perimeter")->capture_default_str();
  psample->add_option("--steps", steps, "horizon (-1 runs to absorption)")->capture_default_str();
  psample->add_option("--target", target, "target half-perimeter of the target law")->capture_default_str();
  psample->callback([&] {
    validate_exponent(a);
    const auto nu = make_nu();
    const PerimeterSampler s(nu, parse_law(law), target, FiniteWeights::asymptotic(a));
    auto paths = replica_map<PerimeterPath>(replicas, g.threads, [&](std::size_t r) {
      Rng rng = make_stream(g.seed, "cli_perimeter", r);
      return sample_path(s, start, steps, rng);
    });
    Table t{{"replica", "step", "perimeter"}, {}};
    for (std::size_t r = 0; r < paths.size(); ++r)
      for (std::size_t i = 0; i < paths[r].values.size(); ++i)
        t.rows.push_back({static_cast<std::int64_t>(r), static_cast<std::int64_t>(i), paths[r].values[i]});
    emit_table(g, "perimeter_sample", t);
  });

  // geodesic faces
  auto* geodesic = app.add_subcommand("geodesic", "faces along the leftmost geodesic");
  geodesic->require_subcommand(1);
  auto* gfaces = geodesic->add_subcommand("faces", "face counts of the infinite-law exploration");
  model_opts(gfaces);
  std::vector<std::int64_t> n_grid{1000, 10000};
  gfaces->add_option("--n", n_grid, "exploration sizes")->delimiter(',')->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  gfaces->callback([&] {
    validate_exponent(a);
    std::sort(n_grid.begin(), n_grid.end());
    const auto nu = make_nu();
    const PerimeterSampler s(nu, Law::Infinite);
    auto counts = replica_map<std::vector<double>>(replicas, g.threads, [&](std::size_t r) {
      Rng rng = make_stream(g.seed, "cli_geodesic", r);
      return geodesic_face_counts(s, n_grid, rng);
    });
    Table t{{"replica", "n", "faces", "normalized"}, {}};
    for (std::size_t r = 0; r < counts.size(); ++r)
      for (std::size_t i = 0; i < n_grid.size(); ++i)
        t.rows.push_back({static_cast<std::int64_t>(r), n_grid[i], counts[r][i],
                          counts[r][i] * theorem1_scale(a, static_cast<double>(n_grid[i]))});
    emit_table(g, "geodesic_faces", t);
  });

  // flow discrete / continuous
  auto* flow = app.add_subcommand("flow", "coalescing flows");
  flow->require_subcommand(1);
  double T = 2.0, eps = 1e-3;
  std::int64_t l = 256;
  std::string starts_s = "0.25,0.75", times_s;
  auto flow_opts = [&](CLI::App* c) {
    model_opts(c);
    c->add_option("--T", T, "time horizon")->capture_default_str();
    c->add_option("--starts", starts_s, "comma-separated starts in [0,1)")->capture_default_str();
    c->add_option("--times", times_s, "comma-separated sample times (default T)");
  };
  auto* fdisc = flow->add_subcommand("discrete", "flow of the peeling exploration");
  flow_opts(fdisc);
  fdisc->add_option("--l", l, "initial half-perimeter")->capture_default_str();
  fdisc->callback([&] {
    validate_exponent(a);
    const auto nu = make_nu();
    const PerimeterSampler s(nu, Law::Finite, 0, FiniteWeights::asymptotic(a));
    const auto starts = parse_doubles(starts_s);
    auto times = times_s.empty() ? std::vector<double>{T} : parse_doubles(times_s);
    struct Out {
      bool absorbed = false;
      std::vector<std::vector<double>> samples;
      std::vector<std::int64_t> root;
    };
    auto res = replica_map<Out>(replicas, g.threads, [&](std::size_t r) {
      Rng rng = make_stream(g.seed, "cli_flow_discrete", r);
      const auto pt = simulate_ptilde(s, l, a, T, rng);
      const auto d = build_drivers(pt, rng);
      const auto idx = starts_from_positions(d, T, starts, true);
      FlowOptions opt;
      opt.sample_times = times;
      const auto st = evolve_flow(d, idx, T, opt);
      Out o;
      o.absorbed = pt.absorption_time.has_value();
      o.samples = st.samples;
      for (std::size_t k = 0; k < idx.size(); ++k) {
        std::size_t q = k;
        while (st.merged_into[q]) q = *st.merged_into[q];
        o.root.push_back(static_cast<std::int64_t>(q));
      }
      return o;
    });
    Table t{{"replica", "trajectory", "t", "position", "class", "absorbed"}, {}};
    for (std::size_t r = 0; r < res.size(); ++r)
      for (std::size_t k = 0; k < starts.size(); ++k)
        for (std::size_t i = 0; i < times.size(); ++i)
          t.rows.push_back({static_cast<std::int64_t>(r), static_cast<std::int64_t>(k), times[i], res[r].samples[k][i],
                            res[r].root[k], static_cast<std::int64_t>(res[r].absorbed)});
    emit_table(g, "flow_discrete", t);
  });
  auto* fcont = flow->add_subcommand("continuous", "flow driven by the Levy measure");
  flow_opts(fcont);
  fcont->add_option("--eps", eps, "jumps with |z-1| <= eps are dropped")->capture_default_str();
  fcont->callback([&] {
    validate_exponent(a);
    const auto band = LevyMeasureSampler::flow_band(a, eps);
    const auto starts = parse_doubles(starts_s);
    auto times = times_s.empty() ? std::vector<double>{T} : parse_doubles(times_s);
    auto res = replica_map<ContinuousFlow>(replicas, g.threads, [&](std::size_t r) {
      Rng rng = make_stream(g.seed, "cli_flow_continuous", r);
      return evolve_continuous(sample_flow_events(band, flow_rate_factor(a, p_q), T, rng), starts, times);
    });
    Table t{{"replica", "trajectory", "t", "position", "class"}, {}};
    for (std::size_t r = 0; r < res.size(); ++r)
      for (std::size_t k = 0; k < starts.size(); ++k) {
        std::size_t q = k;
        while (res[r].merged_into[q]) q = *res[r].merged_into[q];
        for (std::size_t i = 0; i < times.size(); ++i)
          t.rows.push_back({static_cast<std::int64_t>(r), static_cast<std::int64_t>(k), times[i], res[r].samples[k][i],
                            static_cast<std::int64_t>(q)});
      }
    emit_table(g, "flow_continuous", t);
  });

  // pssmp
  auto* pss = app.add_subcommand("pssmp", "Lamperti transform of the Levy process");
  model_opts(pss);
  double alpha = 0.0, x0 = 1.0, delta = 1e-3;
  pss->add_option("--alpha", alpha, "self-similarity index")->capture_default_str();
  pss->add_option("--x", x0, "starting value")->capture_default_str();
  pss->add_option("--delta", delta, "jumps with |log z| <= delta are compensated")->capture_default_str();
  pss->add_option("--T", T, "horizon of the Levy path")->capture_default_str();
  pss->add_option("--times", times_s, "comma-separated times");
  pss->callback([&] {
    validate_exponent(a);
    auto times = times_s.empty() ? std::vector<double>{T / 2.0} : parse_doubles(times_s);
    struct Out {
      std::vector<double> v;
      std::vector<int> ok;
    };
    auto res = replica_map<Out>(replicas, g.threads, [&](std::size_t r) {
      Rng rng = make_stream(g.seed, "cli_pssmp", r);
      const auto xi = xi_path(a, delta, T, rng);
      Out o;
      for (double t : times) {
        try {
          o.v.push_back(pssmp_value(xi, alpha, x0, t));
          o.ok.push_back(1);
        } catch (const Error& e) {
          if (e.code() != ErrorCode::TimeBeyondHorizon) throw;
          o.v.push_back(std::numeric_limits<double>::quiet_NaN());
          o.ok.push_back(0);
        }
      }
      return o;
    });
    Table t{{"replica", "t", "value", "within_horizon"}, {}};
    for (std::size_t r = 0; r < res.size(); ++r)
      for (std::size_t i = 0; i < times.size(); ++i)
        t.rows.push_back({static_cast<std::int64_t>(r), times[i], res[r].v[i], static_cast<std::int64_t>(res[r].ok[i])});
    emit_table(g, "pssmp", t);
  });

  // tree distances
  auto* tree = app.add_subcommand("tree", "geodesic trees");
  tree->require_subcommand(1);
  auto* tdist = tree->add_subcommand("distances", "distances between the largest faces");
  model_opts(tdist);
  std::size_t pairs = 1;
  int depth = 2;
  double cutoff = 0.1;
  bool continuous = false;
  tdist->add_option("--l", l, "initial half-perimeter (discrete)")->capture_default_str();
  tdist->add_option("--pairs", pairs, "pairs among the largest faces")->capture_default_str();
  tdist->add_option("--depth", depth, "cell depth budget")->capture_default_str();
  tdist->add_option("--cutoff", cutoff, "relative size cutoff")->capture_default_str();
  tdist->add_option("--eps", eps, "jump threshold of the continuous system")->capture_default_str();
  tdist->add_flag("--continuous", continuous, "use the continuous cell system");
  tdist->callback([&] {
    validate_exponent(a);
    struct Sample {
      std::string v, w, kind;
      double d = 0, hv = 0, hw = 0;
    };
    // pairs (0,1), (0,2), (1,2), (0,3), ... among faces by decreasing size
    std::vector<std::pair<std::size_t, std::size_t>> idx;
    for (std::size_t j = 1; idx.size() < pairs; ++j)
      for (std::size_t i = 0; i < j && idx.size() < pairs; ++i) idx.push_back({i, j});
    const std::size_t need = idx.empty() ? 0 : idx.back().second + 1;
    const auto nu = make_nu();
    const PerimeterSampler s(nu, Law::Finite, 0, FiniteWeights::asymptotic(a));
    const TreeBudget budget{depth, cutoff, 100000};
    auto res = replica_map<std::vector<Sample>>(replicas, g.threads, [&](std::size_t r) {
      const std::uint64_t key = stream_id(g.seed, "cli_tree", r);
      std::vector<Sample> out;
      auto take = [&](const std::vector<FaceRef>& faces, auto nca, auto dist, auto height) {
        for (auto [i, j] : idx) {
          if (j >= faces.size()) break;
          const auto& f = faces[i];
          const auto& h = faces[j];
          Sample x;
          x.v = label_string(f.label());
          x.w = label_string(h.label());
          x.kind = nca_kind_name(nca(f, h).kind);
          x.d = dist(f, h);
          x.hv = height(f);
          x.hw = height(h);
          out.push_back(x);
        }
      };
      if (continuous) {
        ContinuousCellSystem sys(a, budget, ContinuousOptions{eps, 20.0, 1e-3}, key);
        sys.expand_all();
        take(sys.faces_by_size(need), [&](auto& f, auto& h) { return sys.nca(f, h, eps); },
             [&](auto& f, auto& h) { return sys.distance(f, h, eps); }, [&](auto& f) { return sys.height(f); });
      } else {
        DiscreteCellSystem sys(s, a, l, budget, key);
        sys.expand_all();
        take(sys.faces_by_degree(need), [&](auto& f, auto& h) { return sys.nca(f, h); },
             [&](auto& f, auto& h) { return sys.distance(f, h); }, [&](auto& f) { return sys.height(f); });
      }
      return out;
    });
    std::ostringstream os;
    if (g.format == "json") {
      json j;
      j["schema_version"] = kSchemaVersion;
      j["command"] = "tree_distances";
      j["seed"] = g.seed;
      j["replicas"] = json::array();
      for (const auto& rep : res) {
        json list = json::array();
        for (const auto& x : rep)
          list.push_back({{"pair", {x.v, x.w}}, {"nca_kind", x.kind}, {"d_pair", x.d}, {"d_root_v", x.hv}, {"d_root_w", x.hw}});
        j["replicas"].push_back(list);
      }
      os << j.dump(2) << "\n";
      emit(g, "tree_distances", os.str());
    } else {
      Table t{{"replica", "v", "w", "nca_kind", "d_pair", "d_root_v", "d_root_w"}, {}};
      for (std::size_t r = 0; r < res.size(); ++r)
        for (const auto& x : res[r])
          t.rows.push_back({static_cast<std::int64_t>(r), x.v, x.w, x.kind, x.d, x.hv, x.hw});
      emit_table(g, "tree_distances", t);
    }
  });

  // run
  auto* runc = app.add_subcommand("run", "run an experiment described by --config");
  runc->callback([&] {
    if (g.config.empty()) throw Error(ErrorCode::ConfigError, "run needs --config");
    Config c;
    if (app.count("--seed")) c.emplace_back("seed", std::to_string(g.seed));
    if (app.count("--threads")) c.emplace_back("threads", std::to_string(g.threads));
    if (app.count("--format")) c.emplace_back("format", g.format);
    for (const auto& kv : parse_config_file(g.config)) c.push_back(kv);
    auto spec = ExperimentSpec::from_config(c);
    if (app.count("--out")) spec.out = g.out;
    else if (spec.out.empty()) spec.out = output_path(g, spec.kind);
    const auto rep = run(spec);
    if (spec.out.empty()) {
      if (spec.format == "json") write_json(rep, std::cout);
      else write_csv(rep, std::cout);
    }
    for (const auto& chk : rep.checks)
      std::cerr << (chk.pass ? "PASS " : "FAIL ") << chk.name << " value=" << chk.value << " tol=" << chk.tolerance << "\n";
  });

  try {
    auto args = with_config(argc, argv);
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const Error& e) {
    std::cerr << e.what() << "\n";
    return e.code() == ErrorCode::ConfigError ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << e.what() << "\n";
    return 1;
  }
  return 0;
}

// sdecgmca: simulate toy data, run the solver and baselines, grid-search the
// regularization hyperparameter and sweep observation parameters.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "sdec/errors.hpp"
#include "sdec/experiments.hpp"
#include "sdec/io.hpp"

namespace fs = std::filesystem;
using namespace sdec;
using namespace sdec::experiments;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitNumerical = 3;

struct Options {
  SimulationParams sim = desk_params();
  std::string data;
  std::string method = "sdecgmca";
  std::vector<std::string> methods;
  int strategy = 0;
  double c_wu = 0.5;
  double c_ref = 0.5;
  std::string config;
  int trials = 10;
  std::uint64_t seed = 0;
  std::string out = "out";
  double c_min = 1e-4;
  double c_max = 1e2;
  int c_count = 15;
  std::string variable;
  std::vector<double> values;
  int hals_iters = 500;
};

void add_sim(CLI::App* app, Options& o) {
  app->add_option("--n-side", o.sim.n_side, "HEALPix n_side")->capture_default_str();
  app->add_option("--n-sources", o.sim.n_sources, "number of sources")->capture_default_str();
  app->add_option("--n-channels", o.sim.n_channels, "number of channels")->capture_default_str();
  app->add_option("--cond", o.sim.cond, "condition number of A")->capture_default_str();
  app->add_option("--rmin", o.sim.r_min, "worst channel resolution (degree)")->capture_default_str();
  app->add_option("--snr-db", o.sim.snr_db, "global SNR in dB (inf: no noise)")->capture_default_str();
  app->add_option("--cutoff", o.sim.cutoff, "source band limit (-1: l_max/6)")->capture_default_str();
  app->add_option("--sparsity", o.sim.sparsity, "active starlet coefficient fraction")->capture_default_str();
  app->add_option("--seed", o.seed, "seed")->capture_default_str();
  app->add_option("--out", o.out, "output directory")->capture_default_str();
}

void add_method(CLI::App* app, Options& o) {
  app->add_option("--strategy", o.strategy, "regularization strategy 1-4 (0: method default)")->capture_default_str();
  app->add_option("--c-wu", o.c_wu, "warm-up hyperparameter")->capture_default_str();
  app->add_option("--c-ref", o.c_ref, "refinement hyperparameter (nonblind: its c)")->capture_default_str();
  app->add_option("--config", o.config, "JSON solver configuration (SolverConfig field names)");
  app->add_option("--c-min", o.c_min, "oracle / grid lower bound")->capture_default_str();
  app->add_option("--c-max", o.c_max, "oracle / grid upper bound")->capture_default_str();
  app->add_option("--c-count", o.c_count, "oracle / grid size")->capture_default_str();
  app->add_option("--hals-iters", o.hals_iters, "HALS sweep cap")->capture_default_str();
}

MethodSpec method_spec(const Options& o, const std::string& name) {
  MethodSpec s;
  s.method = parse_method(name);
  s.strategy = o.strategy;
  s.c_wu = o.c_wu;
  s.c_ref = o.c_ref;
  if (!o.config.empty()) s.solver = io::load_config(o.config);
  s.oracle_grid = {o.c_min, o.c_max, o.c_count};
  s.oracle_grid.values();
  s.hals.max_iters = o.hals_iters;
  return s;
}

std::vector<MethodSpec> method_specs(const Options& o, std::vector<std::string> names) {
  if (names.empty()) names = {o.method};
  std::vector<MethodSpec> out;
  for (const auto& n : names) out.push_back(method_spec(o, n));
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw io::IoError("cannot write " + path.string());
  f << text;
}

void print_summary(const std::vector<Summary>& s) {
  for (const auto& r : s) {
    std::printf("%-9s C_A %s dB  NMSE %s dB  NMSE_w %s dB  (%d ok)\n", r.method.c_str(),
                metrics::format_db(r.mean_c_a_db).c_str(), metrics::format_db(r.mean_nmse_db).c_str(),
                metrics::format_db(r.mean_nmse_w_db).c_str(), r.n_ok);
  }
}

int cmd_simulate(const Options& o) {
  const fs::path out = o.out;
  if (!o.variable.empty()) {
    if (o.values.empty()) throw InvalidArgument("--values is required with --sweep");
    for (double v : o.values) {
      SimulationParams p = o.sim;
      set_variable(p, o.variable, v);
      p.seed = o.seed;
      const auto dir = out / (o.variable + "_" + io::format_double(v));
      io::write_dataset(dir, model::simulate(p), p);
      std::printf("%s\n", dir.string().c_str());
    }
    return 0;
  }
  SimulationParams p = o.sim;
  p.seed = o.seed;
  io::write_dataset(out, model::simulate(p), p);
  std::printf("%s\n", out.string().c_str());
  return 0;
}

int cmd_run(const Options& o) {
  const MethodSpec spec = method_spec(o, o.method);
  Dataset ds;
  if (!o.data.empty()) {
    ds = io::read_dataset(o.data);
  } else {
    SimulationParams p = o.sim;
    p.seed = o.seed;
    ds = model::simulate(p);
  }
  const RunOutput r = run_method(ds, spec, o.seed);
  const fs::path out = o.out;
  fs::create_directories(out);
  io::write_matrix_csv(out / "A.csv", r.A);
  for (std::size_t n = 0; n < r.S.size(); ++n) io::write_map(out / ("S_" + std::to_string(n) + ".map"), r.S[n], ds.grid.n_side());
  if (!r.trace.empty()) io::write_diagnostics(out / "diagnostics.csv", r.trace);
  if (!r.final_trace.empty()) io::write_diagnostics(out / "final_diagnostics.csv", r.final_trace);
  nlohmann::json info = {{"method", method_name(spec.method)},
                         {"c", r.c},
                         {"converged", r.converged},
                         {"warnings", r.warnings},
                         {"config", nlohmann::json::parse(io::config_to_json(solver_config(spec)))}};
  write_text(out / "run.json", info.dump(2) + "\n");
  for (const auto& w : r.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
  if (r.metrics) {
    TrialRow row;
    row.method = method_name(spec.method);
    row.c_a_db = r.metrics->c_a_db;
    row.nmse_db = r.metrics->nmse_db;
    row.nmse_w_db = r.metrics->nmse_w_db;
    write_text(out / "metrics.csv", metrics_csv({row}));
    std::printf("%s c=%s C_A %s dB NMSE %s dB NMSE_w %s dB\n", row.method.c_str(), io::format_double(r.c).c_str(),
                metrics::format_db(row.c_a_db).c_str(), metrics::format_db(row.nmse_db).c_str(),
                metrics::format_db(row.nmse_w_db).c_str());
  }
  return 0;
}

int cmd_gridsearch(const Options& o) {
  const MethodSpec spec = method_spec(o, o.method);
  const CGrid grid{o.c_min, o.c_max, o.c_count};
  const GridResult g = gridsearch(o.sim, spec, grid.values(), o.trials, o.seed);
  write_text(fs::path(o.out) / "grid.csv", grid_csv(g));
  std::printf("c_opt %s (mean NMSE %s dB over %d trials)\n", io::format_double(g.c_opt).c_str(),
              metrics::format_db(g.rows[g.best].mean_nmse_db).c_str(), g.rows[g.best].n_ok);
  return 0;
}

int cmd_sweep(const Options& o) {
  if (o.variable.empty() || o.values.empty()) throw InvalidArgument("sweep needs --variable and --values");
  const auto specs = method_specs(o, o.methods);
  const auto rows = sweep(o.sim, o.variable, o.values, specs, o.trials, o.seed);
  write_text(fs::path(o.out) / "sweep.csv", sweep_csv(rows));

  // Per-value means; success = C_A within 3 dB of the best C_A of that method over the sweep.
  std::map<std::string, double> best_ca;
  for (const auto& s : rows) {
    if (s.row.failed) continue;
    auto [it, fresh] = best_ca.try_emplace(s.row.method, s.row.c_a_db);
    if (!fresh) it->second = std::max(it->second, s.row.c_a_db);
  }
  std::ostringstream os;
  os << "variable,value,method,mean_c_a_db,mean_nmse_db,mean_nmse_w_db,n_ok,success_rate\n";
  for (double v : o.values) {
    std::vector<TrialRow> at;
    for (const auto& s : rows) {
      if (s.value == v) at.push_back(s.row);
    }
    for (const auto& m : summarize(at)) {
      int success = 0;
      int total = 0;
      for (const auto& r : at) {
        if (r.method != m.method) continue;
        ++total;
        if (!r.failed && r.c_a_db >= best_ca[m.method] - 3.0) ++success;
      }
      os << o.variable << ',' << io::format_double(v) << ',' << m.method << ',' << metrics::format_db(m.mean_c_a_db) << ','
         << metrics::format_db(m.mean_nmse_db) << ',' << metrics::format_db(m.mean_nmse_w_db) << ',' << m.n_ok << ','
         << io::format_double(total ? static_cast<double>(success) / total : 0.0) << '\n';
      std::printf("%s=%s ", o.variable.c_str(), io::format_double(v).c_str());
      print_summary({m});
    }
  }
  write_text(fs::path(o.out) / "sweep_summary.csv", os.str());
  return 0;
}

int cmd_compare(const Options& o) {
  auto names = o.methods;
  if (names.empty()) names = {"sdecgmca", "gmca", "hals", "oracle"};
  const auto rows = compare(o.sim, method_specs(o, names), o.trials, o.seed);
  write_text(fs::path(o.out) / "metrics.csv", metrics_csv(rows));
  const auto s = summarize(rows);
  write_text(fs::path(o.out) / "summary.csv", summary_csv(s));
  for (const auto& r : rows) {
    if (r.failed) std::fprintf(stderr, "trial %d %s failed: %s\n", r.trial, r.method.c_str(), r.error.c_str());
  }
  print_summary(s);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Joint deconvolution and sparse blind source separation on the sphere"};
  app.require_subcommand(1);
  Options o;

  auto* sim = app.add_subcommand("simulate", "write a synthetic dataset directory");
  add_sim(sim, o);
  sim->add_option("--sweep", o.variable, "write one dataset per value of cond, r_min, n_c or snr_db");
  sim->add_option("--values", o.values, "sweep values");

  auto* run = app.add_subcommand("run", "run one method on a dataset");
  add_sim(run, o);
  add_method(run, o);
  run->add_option("--data", o.data, "dataset directory (default: simulate from the flags)");
  run->add_option("--method", o.method, "sdecgmca, nonblind, gmca, hals or oracle")->capture_default_str();

  auto* grid = app.add_subcommand("gridsearch", "grid-search the regularization hyperparameter");
  add_sim(grid, o);
  add_method(grid, o);
  grid->add_option("--method", o.method, "sdecgmca or nonblind")->capture_default_str();
  grid->add_option("--trials", o.trials, "trials per grid point")->capture_default_str();

  auto* sw = app.add_subcommand("sweep", "metrics against an observation parameter");
  add_sim(sw, o);
  add_method(sw, o);
  sw->add_option("--variable", o.variable, "cond, r_min, n_c or snr_db")->required();
  sw->add_option("--values", o.values, "values of the variable")->required();
  sw->add_option("--methods", o.methods, "methods to run")->delimiter(',');
  sw->add_option("--trials", o.trials, "trials per value")->capture_default_str();

  auto* cmp = app.add_subcommand("compare", "compare methods over seeded trials");
  add_sim(cmp, o);
  add_method(cmp, o);
  cmp->add_option("--methods", o.methods, "methods to run (default sdecgmca,gmca,hals,oracle)")->delimiter(',');
  cmp->add_option("--trials", o.trials, "number of trials")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*sim) return cmd_simulate(o);
    if (*run) return cmd_run(o);
    if (*grid) return cmd_gridsearch(o);
    if (*sw) return cmd_sweep(o);
    if (*cmp) return cmd_compare(o);
  } catch (const InvalidArgument& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return kExitUsage;
  } catch (const io::IoError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const Error& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return kExitNumerical;
  }
  return kExitUsage;
}

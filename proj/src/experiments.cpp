#include "sdec/experiments.hpp"

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

#include "sdec/errors.hpp"
#include "sdec/random.hpp"

namespace sdec::experiments {

namespace {

// Mean over finite-or-infinite values; NaN when empty.
double mean(const std::vector<double>& v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

TrialRow make_row(int trial, const MethodSpec& spec, const RunOutput& out) {
  TrialRow r;
  r.trial = trial;
  r.method = method_name(spec.method);
  r.c = out.c;
  if (out.metrics) {
    r.c_a_db = out.metrics->c_a_db;
    r.nmse_db = out.metrics->nmse_db;
    r.nmse_w_db = out.metrics->nmse_w_db;
  }
  return r;
}

TrialRow failed_row(int trial, const MethodSpec& spec, const std::string& what) {
  TrialRow r;
  r.trial = trial;
  r.method = method_name(spec.method);
  r.failed = true;
  r.error = what;
  return r;
}

TrialRow run_trial(const Dataset& ds, const MethodSpec& spec, int trial, std::uint64_t seed) {
  try {
    return make_row(trial, spec, run_method(ds, spec, seed));
  } catch (const std::exception& e) {
    return failed_row(trial, spec, e.what());
  }
}

std::string db(double v) { return metrics::format_db(v); }

}  // namespace

Method parse_method(const std::string& name) {
  if (name == "sdecgmca") return Method::sdecgmca;
  if (name == "nonblind") return Method::nonblind;
  if (name == "gmca") return Method::gmca;
  if (name == "hals") return Method::hals;
  if (name == "oracle") return Method::oracle;
  throw InvalidArgument("unknown method '" + name + "' (expected sdecgmca, nonblind, gmca, hals or oracle)");
}

const char* method_name(Method m) {
  switch (m) {
    case Method::sdecgmca: return "sdecgmca";
    case Method::nonblind: return "nonblind";
    case Method::gmca: return "gmca";
    case Method::hals: return "hals";
    case Method::oracle: return "oracle";
  }
  return "?";
}

SimulationParams desk_params() {
  SimulationParams p;
  p.n_side = 16;
  p.n_sources = 3;
  p.n_channels = 6;
  const int L = 3 * p.n_side - 1;
  p.cutoff = L / 6;
  p.r_min = L / 8;
  p.snr_db = 10.0;
  return p;
}

std::vector<double> CGrid::values() const {
  if (!(lo > 0.0) || !(hi >= lo) || count < 1) throw InvalidArgument("c grid needs 0 < lo <= hi and count >= 1");
  std::vector<double> v(static_cast<std::size_t>(count));
  if (count == 1) {
    v[0] = lo;
    return v;
  }
  const double a = std::log10(lo);
  const double b = std::log10(hi);
  for (int i = 0; i < count; ++i) v[static_cast<std::size_t>(i)] = std::pow(10.0, a + (b - a) * i / (count - 1));
  v.back() = hi;
  v.front() = lo;
  return v;
}

SolverConfig solver_config(const MethodSpec& spec) {
  SolverConfig cfg = spec.solver;
  cfg.c_wu = spec.c_wu;
  cfg.c_ref = spec.c_ref;
  if (spec.strategy < 0 || spec.strategy > 4) throw InvalidArgument("strategy must be 1..4");
  if (spec.method == Method::sdecgmca && spec.strategy >= 1 && spec.strategy <= 3) {
    cfg.strategy_wu = cfg.strategy_ref = static_cast<Strategy>(spec.strategy);
  }
  return cfg;
}

MetricReport evaluate(const Dataset& ds, const MixingMatrix& A, const std::vector<Map>& S, bool at_worst) {
  if (!ds.truth) throw InvalidArgument("evaluate: dataset has no ground truth");
  const GroundTruth& t = *ds.truth;
  if (A.rows() != t.A.rows() || A.cols() != t.A.cols() || S.size() != t.S.size()) {
    throw InvalidArgument("evaluate: estimate does not match the ground-truth shapes");
  }
  MetricReport r;
  r.alignment = metrics::align(t.A, A);
  const MixingMatrix A_al = metrics::apply(r.alignment, A);
  const std::vector<Map> S_al = metrics::apply(r.alignment, S);
  r.c_a_db = metrics::c_a(t.A, A_al);
  r.nmse_db = metrics::nmse(t.S, S_al);
  const auto worst = ds.kernels.channel(ds.kernels.worst_channel());
  if (at_worst) {
    r.nmse_w_db = metrics::nmse_w(t.S_hat, S_al, worst, ds.grid);
  } else {
    std::vector<HarmonicCoeffs> s_hat;
    for (const auto& s : S_al) s_hat.push_back(analyze(s, ds.grid, 3));
    r.nmse_w_db = metrics::nmse_w(t.S_hat, metrics::degrade_estimate(s_hat, ds.kernels, ds.grid), worst, ds.grid);
  }
  return r;
}

RunOutput run_method(const Dataset& ds, const MethodSpec& spec, std::uint64_t seed) {
  RunOutput out;
  const SolverConfig cfg = solver_config(spec);
  switch (spec.method) {
    case Method::sdecgmca: {
      SolverResult r = solver::run_sdecgmca(ds, cfg);
      out.A = std::move(r.A);
      out.S = std::move(r.S);
      out.trace = std::move(r.trace);
      out.final_trace = std::move(r.final_trace);
      out.converged = r.converged;
      out.warnings = std::move(r.warnings);
      out.c = cfg.c_ref;
      if (ds.truth) out.metrics = evaluate(ds, out.A, out.S, false);
      break;
    }
    case Method::nonblind:
    case Method::oracle: {
      if (!ds.truth) throw InvalidArgument(std::string(method_name(spec.method)) + " needs the ground-truth mixing matrix");
      const Strategy strategy = spec.method == Method::oracle || spec.strategy == 0 ? Strategy::wiener
                                                                                     : static_cast<Strategy>(spec.strategy);
      std::vector<double> cs = spec.method == Method::oracle ? spec.oracle_grid.values() : std::vector<double>{cfg.c_ref};
      double best = -std::numeric_limits<double>::infinity();
      for (double c : cs) {
        solver::NonblindResult r = solver::run_nonblind(ds, ds.truth->A, strategy, c, cfg);
        const MetricReport m = evaluate(ds, ds.truth->A, r.S, false);
        if (m.nmse_db > best || out.S.empty()) {
          best = m.nmse_db;
          out.S = std::move(r.S);
          out.metrics = m;
          out.c = c;
          out.converged = r.converged;
        }
      }
      out.A = ds.truth->A;
      break;
    }
    case Method::gmca: {
      const Dataset degraded = model::degrade_to_worst(ds);
      BaselineResult r = baselines::run_gmca(degraded, cfg);
      out.A = std::move(r.A);
      out.S = std::move(r.S);
      out.converged = r.converged;
      out.warnings = std::move(r.warnings);
      if (ds.truth) out.metrics = evaluate(ds, out.A, out.S, true);
      break;
    }
    case Method::hals: {
      const Dataset degraded = model::degrade_to_worst(ds);
      const int n_s = cfg.n_s > 0 ? cfg.n_s : (ds.truth ? static_cast<int>(ds.truth->A.cols()) : 0);
      if (n_s < 1) throw InvalidArgument("hals: number of sources unknown");
      BaselineResult r = baselines::run_hals(baselines::stack(degraded.X), n_s, seed, spec.hals);
      out.A = std::move(r.A);
      out.S = std::move(r.S);
      out.converged = r.converged;
      out.warnings = std::move(r.warnings);
      if (ds.truth) out.metrics = evaluate(ds, out.A, out.S, true);
      break;
    }
  }
  return out;
}

Dataset trial_dataset(SimulationParams params, std::uint64_t seed_base, int trial) {
  params.seed = derive_seed(seed_base, static_cast<std::uint64_t>(trial));
  return model::simulate(params);
}

std::vector<TrialRow> compare(const SimulationParams& params, const std::vector<MethodSpec>& methods, int trials,
                              std::uint64_t seed_base) {
  if (trials < 1) throw InvalidArgument("trials must be >= 1");
  if (methods.empty()) throw InvalidArgument("no methods given");
  std::vector<std::vector<TrialRow>> per_trial(static_cast<std::size_t>(trials));
  parallel_for(trials, [&](int t) {
    auto& rows = per_trial[static_cast<std::size_t>(t)];
    Dataset ds;
    try {
      ds = trial_dataset(params, seed_base, t);
    } catch (const std::exception& e) {
      for (const auto& m : methods) rows.push_back(failed_row(t, m, e.what()));
      return;
    }
    for (std::size_t k = 0; k < methods.size(); ++k) {
      rows.push_back(run_trial(ds, methods[k], t, derive_seed(seed_base ^ 0x5DEECE66DULL, t * 16 + k)));
    }
  });
  std::vector<TrialRow> out;
  for (auto& v : per_trial) out.insert(out.end(), v.begin(), v.end());
  return out;
}

GridResult gridsearch(const SimulationParams& params, const MethodSpec& spec, const std::vector<double>& grid,
                      int trials, std::uint64_t seed_base) {
  if (trials < 1) throw InvalidArgument("trials must be >= 1");
  if (grid.empty()) throw InvalidArgument("empty c grid");
  for (double c : grid) {
    if (!(c > 0.0)) throw InvalidArgument("grid values must be > 0");
  }
  const bool shared = spec.method == Method::sdecgmca && spec.strategy >= 1 && spec.strategy <= 3;
  GridResult g;
  g.per_c.assign(grid.size(), std::vector<TrialRow>(static_cast<std::size_t>(trials)));
  parallel_for(trials, [&](int t) {
    Dataset ds;
    std::string gen_error;
    try {
      ds = trial_dataset(params, seed_base, t);
    } catch (const std::exception& e) {
      gen_error = e.what();
    }
    for (std::size_t i = 0; i < grid.size(); ++i) {
      MethodSpec s = spec;
      s.c_ref = grid[i];
      if (shared) s.c_wu = grid[i];
      g.per_c[i][static_cast<std::size_t>(t)] =
          gen_error.empty() ? run_trial(ds, s, t, derive_seed(seed_base ^ 0x5DEECE66DULL, t * 16))
                            : failed_row(t, s, gen_error);
    }
  });
  double best = -std::numeric_limits<double>::infinity();
  bool any = false;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    std::vector<double> nm, ca;
    for (const auto& r : g.per_c[i]) {
      if (r.failed) continue;
      nm.push_back(r.nmse_db);
      ca.push_back(r.c_a_db);
    }
    g.rows.push_back({grid[i], mean(nm), mean(ca), static_cast<int>(nm.size())});
    if (!nm.empty() && (!any || g.rows.back().mean_nmse_db > best)) {
      best = g.rows.back().mean_nmse_db;
      g.best = i;
      any = true;
    }
  }
  if (!any) throw Error("grid search: every run failed");
  g.c_opt = grid[g.best];
  return g;
}

void set_variable(SimulationParams& p, const std::string& variable, double value) {
  if (variable == "cond") p.cond = value;
  else if (variable == "r_min") p.r_min = value;
  else if (variable == "n_c") p.n_channels = static_cast<int>(std::lround(value));
  else if (variable == "snr_db") p.snr_db = value;
  else throw InvalidArgument("unknown sweep variable '" + variable + "' (expected cond, r_min, n_c or snr_db)");
}

std::vector<SweepRow> sweep(const SimulationParams& params, const std::string& variable,
                            const std::vector<double>& values, const std::vector<MethodSpec>& methods, int trials,
                            std::uint64_t seed_base) {
  if (values.empty()) throw InvalidArgument("empty sweep list");
  std::vector<SweepRow> out;
  for (double v : values) {
    SimulationParams p = params;
    set_variable(p, variable, v);
    // Same trial seeds for every value: paired comparisons across the sweep.
    for (auto& r : compare(p, methods, trials, seed_base)) out.push_back({variable, v, std::move(r)});
  }
  return out;
}

std::vector<Summary> summarize(const std::vector<TrialRow>& rows) {
  std::vector<Summary> out;
  std::vector<std::vector<const TrialRow*>> groups;
  for (const auto& r : rows) {
    std::size_t k = 0;
    while (k < out.size() && out[k].method != r.method) ++k;
    if (k == out.size()) {
      out.push_back({r.method});
      groups.emplace_back();
    }
    groups[k].push_back(&r);
  }
  for (std::size_t k = 0; k < out.size(); ++k) {
    std::vector<double> ca, nm, nw;
    for (const auto* r : groups[k]) {
      if (r->failed) continue;
      ca.push_back(r->c_a_db);
      nm.push_back(r->nmse_db);
      nw.push_back(r->nmse_w_db);
    }
    out[k].mean_c_a_db = mean(ca);
    out[k].mean_nmse_db = mean(nm);
    out[k].mean_nmse_w_db = mean(nw);
    out[k].n_ok = static_cast<int>(nm.size());
  }
  return out;
}

std::string metrics_csv(const std::vector<TrialRow>& rows) {
  std::ostringstream os;
  os << "trial,method,c_a_db,nmse_db,nmse_w_db\n";
  for (const auto& r : rows) {
    os << r.trial << ',' << r.method << ',';
    if (r.failed) {
      os << "failed,failed,failed\n";
    } else {
      os << db(r.c_a_db) << ',' << db(r.nmse_db) << ',' << db(r.nmse_w_db) << '\n';
    }
  }
  return os.str();
}

std::string grid_csv(const GridResult& g) {
  std::ostringstream os;
  os << "c,mean_nmse_db,mean_c_a_db,n_ok\n";
  for (const auto& r : g.rows) {
    os << metrics::format_db(r.c) << ',' << (r.n_ok ? db(r.mean_nmse_db) : "nan") << ','
       << (r.n_ok ? db(r.mean_c_a_db) : "nan") << ',' << r.n_ok << '\n';
  }
  return os.str();
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::ostringstream os;
  os << "variable,value,trial,method,c_a_db,nmse_db,nmse_w_db,status\n";
  for (const auto& s : rows) {
    const auto& r = s.row;
    os << s.variable << ',' << metrics::format_db(s.value) << ',' << r.trial << ',' << r.method << ',';
    if (r.failed) {
      os << ",,,failed\n";
    } else {
      os << db(r.c_a_db) << ',' << db(r.nmse_db) << ',' << db(r.nmse_w_db) << ",ok\n";
    }
  }
  return os.str();
}

std::string summary_csv(const std::vector<Summary>& s) {
  std::ostringstream os;
  os << "method,mean_c_a_db,mean_nmse_db,mean_nmse_w_db,n_ok\n";
  for (const auto& r : s) {
    os << r.method << ',' << (r.n_ok ? db(r.mean_c_a_db) : "nan") << ',' << (r.n_ok ? db(r.mean_nmse_db) : "nan") << ','
       << (r.n_ok ? db(r.mean_nmse_w_db) : "nan") << ',' << r.n_ok << '\n';
  }
  return os.str();
}

int worker_count() {
  int n = static_cast<int>(std::thread::hardware_concurrency());
  if (n < 1) n = 1;
  if (const char* env = std::getenv("SDEC_THREADS")) {
    const int cap = std::atoi(env);
    if (cap >= 1) n = cap;
  }
  return n;
}

void parallel_for(int n, const std::function<void(int)>& fn) {
  if (n <= 0) return;
  const int workers = std::min(n, worker_count());
  if (workers == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto work = [&] {
    for (int i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (int w = 1; w < workers; ++w) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace sdec::experiments

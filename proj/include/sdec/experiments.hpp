#pragma once

// Synthetic-experiment harness: seeded trials, method dispatch, grid searches
// over the regularization hyperparameter and sweeps over observation parameters.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "sdec/baselines.hpp"
#include "sdec/metrics.hpp"
#include "sdec/model.hpp"
#include "sdec/solver.hpp"

namespace sdec::experiments {

enum class Method { sdecgmca, nonblind, gmca, hals, oracle };

Method parse_method(const std::string& name);  // InvalidArgument on unknown names
const char* method_name(Method m);

// n_side 16, 3 sources, 6 channels, cutoff l_max/6, r_min l_max/8 (floored), 10 dB.
SimulationParams desk_params();

// Log-spaced grid, both ends included.
struct CGrid {
  double lo = 1e-4;
  double hi = 1e2;
  int count = 15;
  std::vector<double> values() const;
};

struct MethodSpec {
  Method method = Method::sdecgmca;
  // 0: the method's default. For sdecgmca, 1-3 select that strategy in both
  // stages (2 is oDecGMCA) and 4 the default 3-then-4 schedule.
  int strategy = 0;
  double c_wu = 0.5;
  double c_ref = 0.5;
  SolverConfig solver;
  // Grid the oracle searches on each dataset.
  CGrid oracle_grid;
  baselines::HalsOptions hals;
};

struct RunOutput {
  MixingMatrix A;
  std::vector<Map> S;
  std::optional<MetricReport> metrics;
  std::vector<IterationRecord> trace;
  std::vector<IterationRecord> final_trace;
  double c = 0.0;  // hyperparameter actually used
  bool converged = true;
  std::vector<std::string> warnings;
};

// Solver configuration a MethodSpec resolves to (strategies and c values set).
SolverConfig solver_config(const MethodSpec& spec);

RunOutput run_method(const Dataset& ds, const MethodSpec& spec, std::uint64_t seed);

// Aligns the estimate to the ground truth and computes C_A, NMSE and NMSE_w.
// `at_worst`: S is already at the worst resolution (baselines); otherwise it is
// degraded from the deconvolved resolution for NMSE_w.
MetricReport evaluate(const Dataset& ds, const MixingMatrix& A, const std::vector<Map>& S, bool at_worst);

struct TrialRow {
  int trial = 0;
  std::string method;
  double c = 0.0;
  double c_a_db = 0.0;
  double nmse_db = 0.0;
  double nmse_w_db = 0.0;
  bool failed = false;
  std::string error;
};

// Dataset of a trial: params with seed derive_seed(seed_base, trial).
Dataset trial_dataset(SimulationParams params, std::uint64_t seed_base, int trial);

std::vector<TrialRow> compare(const SimulationParams& params, const std::vector<MethodSpec>& methods, int trials,
                              std::uint64_t seed_base);

struct GridRow {
  double c = 0.0;
  double mean_nmse_db = 0.0;
  double mean_c_a_db = 0.0;
  int n_ok = 0;
};

struct GridResult {
  std::vector<GridRow> rows;
  double c_opt = 0.0;
  std::size_t best = 0;
  // per_c[i][t]: trial t at rows[i].c.
  std::vector<std::vector<TrialRow>> per_c;
};

// c drives c_ref (and c_wu when both stages share the strategy, or for
// nonblind runs the single c). Argmax of mean NMSE, ties toward smaller c.
GridResult gridsearch(const SimulationParams& params, const MethodSpec& spec, const std::vector<double>& grid,
                      int trials, std::uint64_t seed_base);

struct SweepRow {
  std::string variable;
  double value = 0.0;
  TrialRow row;
};

// variable in {cond, r_min, n_c, snr_db}.
void set_variable(SimulationParams& params, const std::string& variable, double value);

std::vector<SweepRow> sweep(const SimulationParams& params, const std::string& variable,
                            const std::vector<double>& values, const std::vector<MethodSpec>& methods, int trials,
                            std::uint64_t seed_base);

struct Summary {
  std::string method;
  double mean_c_a_db = 0.0;
  double mean_nmse_db = 0.0;
  double mean_nmse_w_db = 0.0;
  int n_ok = 0;
};

std::vector<Summary> summarize(const std::vector<TrialRow>& rows);

// trial,method,c_a_db,nmse_db,nmse_w_db; failed trials carry "failed" metrics.
std::string metrics_csv(const std::vector<TrialRow>& rows);
std::string grid_csv(const GridResult& g);
std::string sweep_csv(const std::vector<SweepRow>& rows);
std::string summary_csv(const std::vector<Summary>& s);

// Runs fn(0..n-1) on min(n, SDEC_THREADS or hardware concurrency) threads.
void parallel_for(int n, const std::function<void(int)>& fn);
int worker_count();

}  // namespace sdec::experiments

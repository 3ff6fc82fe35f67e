#pragma once

// Comparison methods without deconvolution, run on data brought to the worst
// resolution beforehand.

#include <cstdint>
#include <string>
#include <vector>

#include "sdec/model.hpp"
#include "sdec/solver.hpp"

namespace sdec {

struct BaselineResult {
  MixingMatrix A;
  // Sources at the common (worst) resolution.
  std::vector<Map> S;
  int iterations = 0;
  bool converged = true;
  std::vector<std::string> warnings;
};

namespace baselines {

// The solver with unit kernels and no Tikhonov term, MAD thresholds (the
// degraded noise is no longer white). `degraded` must be at a common resolution.
BaselineResult run_gmca(const Dataset& degraded, const SolverConfig& config);

struct HalsOptions {
  int max_iters = 500;
  double tol = 1e-6;  // relative objective decrease per sweep
};

// Hierarchical ALS for X ~ A S with A, S >= 0. X is N_c x N_p.
BaselineResult run_hals(const Eigen::MatrixXd& X, int n_s, std::uint64_t seed, const HalsOptions& options = {});

// Channel maps stacked as rows.
Eigen::MatrixXd stack(const std::vector<Map>& maps);

}  // namespace baselines
}  // namespace sdec

#pragma once

// SDecGMCA: projected alternating least squares with Tikhonov-regularized
// deconvolution of the sources and sparsity-enforcing thresholds in the
// starlet domain, run in a warm-up and a refinement stage.

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sdec/model.hpp"
#include "sdec/regularize.hpp"
#include "sdec/sphere.hpp"
#include "sdec/starlet.hpp"

namespace sdec {

enum class Stage { warmup, refinement, final };

const char* stage_name(Stage s);

struct SolverConfig {
  int n_s = 0;  // 0: number of sources of the dataset's ground truth
  double c_wu = 0.5;
  double c_ref = 0.5;
  double k = 3.0;
  double K_max = 0.5;
  int J = 3;
  int N_wu = 100;
  double eps_wu = 1e-2;
  double eps_ref = 1e-5;
  int max_iter_wu = 0;  // 0: 2 N_wu
  int max_iter_ref = 500;
  bool nonneg_S = true;
  bool nonneg_A = true;
  // Noise variance per pixel; < 0 takes the dataset's value.
  double sigma2 = -1.0;
  // Median-absolute-deviation thresholds instead of analytic noise propagation.
  bool use_mad = false;
  // Strategy ids per stage. oDecGMCA runs strategy 2 in both.
  Strategy strategy_wu = Strategy::noise_bound;
  Strategy strategy_ref = Strategy::wiener;
  // Kernels replaced by ones (plain GMCA on common-resolution data).
  bool deconvolve = true;
  bool run_final = true;

  void validate() const;
};

struct IterationRecord {
  int iter = 0;
  Stage stage = Stage::warmup;
  double c = 0.0;
  double K = 0.0;
  double rel_change = 0.0;
};

// Soft-threshold levels for every (source, detail scale, coefficient).
struct Thresholds {
  // base(n, j): threshold before reweighting.
  Eigen::MatrixXd base;
  // Empty when no reweighting; otherwise [n][j][p].
  std::vector<std::vector<std::vector<double>>> weighted;

  double at(int n, int j, std::size_t p) const {
    return weighted.empty() ? base(n, j) : weighted[static_cast<std::size_t>(n)][static_cast<std::size_t>(j)][p];
  }
};

// Detail bands in the pixel domain, bands[n][j].
using Bands = std::vector<std::vector<Map>>;

struct ThresholdOutput {
  std::vector<Map> S;
  std::vector<HarmonicCoeffs> S_hat;
  Bands thresholded;
};

struct SolverResult {
  MixingMatrix A;
  std::vector<Map> S;
  std::vector<HarmonicCoeffs> S_hat;
  // Warm-up and refinement iterations.
  std::vector<IterationRecord> trace;
  // Final K = 1 re-estimation with A fixed.
  std::vector<IterationRecord> final_trace;
  bool converged = true;
  std::vector<std::string> warnings;
};

namespace solver {

double soft_threshold(double x, double lambda);

// Leading principal directions of the channel covariance of the
// common-resolution, coarse-scale-free data.
MixingMatrix pca_init(const Dataset& dataset, int n_s, bool nonneg_A, int J = 3);

// S^{l,m} = (M[l] + diag(eps_l))^{-1} A^T diag(H^l) X^{l,m}.
std::vector<HarmonicCoeffs> update_S_ls(const std::vector<HarmonicCoeffs>& X_hat, const KernelSet& kernels,
                                        const MixingMatrix& A, const RegParams& reg);

// Per-channel least squares with S fixed, then clip (if nonneg) and column
// normalization. Columns that end up zero are listed in `degenerate` and left zero.
MixingMatrix update_A(const std::vector<HarmonicCoeffs>& X_hat, const KernelSet& kernels,
                      const std::vector<HarmonicCoeffs>& S_hat, bool nonneg, std::vector<int>* degenerate = nullptr);

// Standard deviation of the propagated white noise in each (source, detail scale),
// N_s x J. data_filter, when given, is an extra per-degree filter applied to the
// data before the least-squares step.
Eigen::MatrixXd noise_std_per_scale(const MixingMatrix& A, const KernelSet& kernels, const RegParams& reg,
                                    double sigma2, std::size_t n_pix, const StarletFilters& filters,
                                    std::span<const double> data_filter = {});

// MAD / 0.6745 of the finest band of each source. With `shape` (N_s x J, e.g.
// noise_std_per_scale at unit variance) coarser scales follow its ratios;
// otherwise every scale gets its own MAD estimate.
Eigen::MatrixXd estimate_sigma_mad(const Bands& bands, const Eigen::MatrixXd* shape = nullptr);

Thresholds compute_thresholds(const Bands& bands, const Eigen::MatrixXd& sigma, double k, double K,
                              const Bands* previous = nullptr, bool reweight = false);

// Soft-thresholds the detail bands, adds the untouched coarse maps, optionally
// clips at zero and returns to the harmonic domain.
ThresholdOutput threshold_S(const Bands& bands, const std::vector<Map>& coarse, const Thresholds& thresholds,
                            bool nonneg, const SphereGrid& grid);

SolverResult run_sdecgmca(const Dataset& dataset, const SolverConfig& config);

struct FinalRefineOutput {
  std::vector<Map> S;
  std::vector<HarmonicCoeffs> S_hat;
  std::vector<IterationRecord> trace;
  bool converged = true;
};

// Sources re-estimated on the full data (coarse scales included) with A fixed,
// K = 1, reweighting and non-negativity. `initial` is the starting iterate;
// when absent an unthresholded least-squares estimate is used.
FinalRefineOutput final_refine(const Dataset& dataset, const MixingMatrix& A, const SolverConfig& config,
                               const std::vector<HarmonicCoeffs>* initial = nullptr);

struct NonblindResult {
  std::vector<Map> S;
  std::vector<HarmonicCoeffs> S_hat;
  int iterations = 0;
  bool converged = true;
};

// Sources with A fixed to the ground truth: one regularized least-squares step
// with the given strategy, then thresholds set as in the final estimation
// (K = 1, reweighting) iterated to convergence. Strategy 4 uses the
// ground-truth source spectra.
NonblindResult run_nonblind(const Dataset& dataset, const MixingMatrix& A_star, Strategy strategy, double c,
                            const SolverConfig& config);

// Regularization for a strategy id, given the current mixing matrix and
// (for strategy 4) source spectra.
RegParams make_reg(Strategy strategy, double c, const MixingMatrix& A, const KernelSet& kernels,
                   const std::vector<PowerSpectrum>& source_spectra, const PowerSpectrum& noise_spectrum);

}  // namespace solver
}  // namespace sdec

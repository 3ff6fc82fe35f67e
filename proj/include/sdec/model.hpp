#pragma once

// Forward mixture model X_nu = (A_nu S) * H_nu + N_nu and the synthetic toy-data
// generator used by the experiments.

#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "sdec/sphere.hpp"

namespace sdec {

// N_c x N_s mixing matrix; columns are unit-norm under the oblique constraint.
using MixingMatrix = Eigen::MatrixXd;

// Per-channel isotropic transfer functions H_nu(l), l = 0..l_max.
struct KernelSet {
  std::vector<std::vector<double>> transfer;
  // FWHM of each channel in degree units; may be empty for user-supplied kernels.
  std::vector<double> resolution;

  int n_channels() const noexcept { return static_cast<int>(transfer.size()); }
  int l_max() const noexcept { return transfer.empty() ? -1 : static_cast<int>(transfer.front().size()) - 1; }
  std::span<const double> channel(int nu) const { return transfer[static_cast<std::size_t>(nu)]; }

  // Best-resolved channel: largest resolution, or largest integrated transfer
  // when resolutions are unknown. Worst is the opposite.
  int best_channel() const;
  int worst_channel() const;
};

struct GroundTruth {
  MixingMatrix A;
  std::vector<Map> S;
  std::vector<HarmonicCoeffs> S_hat;
};

struct Dataset {
  SphereGrid grid{1};
  std::vector<Map> X;
  std::vector<HarmonicCoeffs> X_hat;
  KernelSet kernels;
  double sigma2 = 0.0;
  std::optional<GroundTruth> truth;

  int n_channels() const noexcept { return static_cast<int>(X.size()); }
  int l_max() const noexcept { return grid.l_max(); }
};

struct SimulationParams {
  int n_sources = 4;
  int n_channels = 8;
  double cond = 2.0;
  // Minimum kernel resolution; <= 0 means l_max / 8.
  double r_min = 0.0;
  // +infinity gives noiseless data.
  double snr_db = 10.0;
  int n_side = 16;
  // Source band limit; < 0 means floor(l_max / 6).
  int cutoff = -1;
  double sparsity = 0.01;
  int n_scales = 3;
  // Harmonic analysis refinements used to compute X_hat from the noisy maps.
  int analysis_iters = 3;
  std::uint64_t seed = 0;
};

namespace model {

// exp(-l(l+1) / (r(r+1)) log 2): equals 1 at l = 0 and 1/2 at l = r.
std::vector<double> gaussian_kernel(double resolution, int l_max);

// Divides every channel by the best-resolved one, which becomes identically 1.
KernelSet normalize_to_best(const KernelSet& kernels);

// Convolves every channel to the worst resolution (X_nu scaled by H_w / H_nu).
Dataset degrade_to_worst(const Dataset& dataset);

// Non-negative, starlet-sparse sources band-limited to `cutoff`, unit l2 norm each.
std::vector<Map> random_sources(int n_sources, const SphereGrid& grid, int cutoff, double sparsity,
                                std::uint64_t seed, int n_scales = 3);

// Non-negative, unit-norm columns, condition number within 5% of `cond`.
MixingMatrix random_mixing(int n_channels, int n_sources, double cond, std::uint64_t seed);

// Linearly spaced resolutions on [r_min, l_max], ascending (channel 0 is the worst).
std::vector<double> channel_resolutions(int n_channels, double r_min, int l_max);

Dataset simulate(const SimulationParams& params);

// 2-norm condition number (ratio of extreme singular values).
double condition_number(const Eigen::MatrixXd& m);

}  // namespace model
}  // namespace sdec

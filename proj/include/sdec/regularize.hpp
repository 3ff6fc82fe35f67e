#pragma once

// Per-(source, degree) Tikhonov coefficients eps_{n,l} for the regularized
// least-squares update of the sources.

#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "sdec/model.hpp"
#include "sdec/sphere.hpp"

namespace sdec {

struct RegParams {
  // N_s x (l_max + 1), all entries >= 0.
  Eigen::MatrixXd eps;

  int n_sources() const noexcept { return static_cast<int>(eps.rows()); }
  int l_max() const noexcept { return static_cast<int>(eps.cols()) - 1; }
  double operator()(int n, int l) const { return eps(n, l); }
};

// M[l] = A^T diag(H^l)^2 A for every degree.
struct NormalMatrices {
  std::vector<Eigen::MatrixXd> M;

  int l_max() const noexcept { return static_cast<int>(M.size()) - 1; }
  int n_sources() const noexcept { return M.empty() ? 0 : static_cast<int>(M.front().rows()); }
};

enum class Strategy { constant = 1, spectral_radius = 2, noise_bound = 3, wiener = 4 };

namespace regularize {

NormalMatrices build_normal_matrices(const MixingMatrix& A, const KernelSet& kernels);

// (lambda_min, lambda_max) of a symmetric matrix.
std::pair<double, double> extreme_eigenvalues(const Eigen::MatrixXd& m);

// eps = c.
RegParams strategy1(double c, int n_sources, int l_max);
// eps = c lambda_max(M[l]).
RegParams strategy2(double c, const NormalMatrices& normal);
// eps = max(0, c - lambda_min(M[l]) / (lambda_min(A^T A) + 0.01)).
RegParams strategy3(double c, const NormalMatrices& normal, const MixingMatrix& A);
// eps = c c_N(l) / c_S_n(l), each source spectrum floored at 1e-12 of its maximum.
RegParams strategy4(double c, const std::vector<PowerSpectrum>& source_spectra, const PowerSpectrum& noise_spectrum);

// White pixel noise of variance sigma2 has the flat spectrum 4 pi sigma2 / N_p.
PowerSpectrum white_noise_spectrum(double sigma2, std::size_t n_pix, int l_max);

// Relative floor applied to estimated source spectra by strategy4.
inline constexpr double kSpectrumFloor = 1e-12;

}  // namespace regularize
}  // namespace sdec

#include "sdec/regularize.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "sdec/errors.hpp"

namespace sdec::regularize {

namespace {

void check_c(double c) {
  if (!(c >= 0.0) || !std::isfinite(c)) throw InvalidArgument("regularization hyperparameter must be finite and >= 0");
}

// Largest finite coefficient; keeps eps usable by the linear solves when a
// spectrum is identically zero.
constexpr double kEpsCap = 1e300;

}  // namespace

NormalMatrices build_normal_matrices(const MixingMatrix& A, const KernelSet& kernels) {
  if (A.rows() != kernels.n_channels()) {
    throw InvalidArgument("build_normal_matrices: A has " + std::to_string(A.rows()) + " rows but there are " +
                          std::to_string(kernels.n_channels()) + " kernels");
  }
  const int L = kernels.l_max();
  NormalMatrices out;
  out.M.reserve(static_cast<std::size_t>(L) + 1);
  Eigen::VectorXd h(A.rows());
  for (int l = 0; l <= L; ++l) {
    for (int nu = 0; nu < A.rows(); ++nu) h(nu) = kernels.transfer[static_cast<std::size_t>(nu)][static_cast<std::size_t>(l)];
    const Eigen::MatrixXd HA = h.asDiagonal() * A;
    out.M.push_back(HA.transpose() * HA);
  }
  return out;
}

std::pair<double, double> extreme_eigenvalues(const Eigen::MatrixXd& m) {
  if (m.rows() != m.cols() || m.rows() == 0) throw InvalidArgument("extreme_eigenvalues: need a square matrix");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw NumericalError("symmetric eigen-solve failed");
  const auto& ev = es.eigenvalues();  // ascending
  return {ev(0), ev(ev.size() - 1)};
}

RegParams strategy1(double c, int n_sources, int l_max) {
  check_c(c);
  if (n_sources < 1 || l_max < 0) throw InvalidArgument("strategy1: bad shape");
  return {Eigen::MatrixXd::Constant(n_sources, l_max + 1, c)};
}

RegParams strategy2(double c, const NormalMatrices& normal) {
  check_c(c);
  RegParams r{Eigen::MatrixXd::Zero(normal.n_sources(), normal.l_max() + 1)};
  for (int l = 0; l <= normal.l_max(); ++l) {
    const double lmax = extreme_eigenvalues(normal.M[static_cast<std::size_t>(l)]).second;
    r.eps.col(l).setConstant(c * std::max(lmax, 0.0));
  }
  return r;
}

RegParams strategy3(double c, const NormalMatrices& normal, const MixingMatrix& A) {
  check_c(c);
  const double gram_min = extreme_eigenvalues(A.transpose() * A).first;
  const double denom = gram_min + 0.01;
  RegParams r{Eigen::MatrixXd::Zero(normal.n_sources(), normal.l_max() + 1)};
  for (int l = 0; l <= normal.l_max(); ++l) {
    const double lmin = extreme_eigenvalues(normal.M[static_cast<std::size_t>(l)]).first;
    r.eps.col(l).setConstant(std::max(0.0, c - lmin / denom));
  }
  return r;
}

RegParams strategy4(double c, const std::vector<PowerSpectrum>& source_spectra, const PowerSpectrum& noise_spectrum) {
  check_c(c);
  if (source_spectra.empty()) throw InvalidArgument("strategy4: no source spectra");
  const int L = noise_spectrum.l_max();
  RegParams r{Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(source_spectra.size()), L + 1)};
  for (std::size_t n = 0; n < source_spectra.size(); ++n) {
    const auto& cs = source_spectra[n].cl;
    if (static_cast<int>(cs.size()) != L + 1) throw InvalidArgument("strategy4: spectrum length mismatch");
    const double peak = *std::max_element(cs.begin(), cs.end());
    const double floor = std::max(kSpectrumFloor * peak, std::numeric_limits<double>::min());
    for (int l = 0; l <= L; ++l) {
      const double e = c * noise_spectrum[l] / std::max(cs[static_cast<std::size_t>(l)], floor);
      r.eps(static_cast<Eigen::Index>(n), l) = std::min(e, kEpsCap);
    }
  }
  return r;
}

PowerSpectrum white_noise_spectrum(double sigma2, std::size_t n_pix, int l_max) {
  if (!(sigma2 >= 0.0)) throw InvalidArgument("noise variance must be >= 0");
  PowerSpectrum ps;
  ps.cl.assign(static_cast<std::size_t>(l_max) + 1, 4.0 * std::numbers::pi * sigma2 / static_cast<double>(n_pix));
  return ps;
}

}  // namespace sdec::regularize

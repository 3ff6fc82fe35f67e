#include "sdec/solver.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <numbers>
#include <string>

#include "sdec/errors.hpp"

namespace sdec {

const char* stage_name(Stage s) {
  switch (s) {
    case Stage::warmup: return "warmup";
    case Stage::refinement: return "refinement";
    case Stage::final: return "final";
  }
  return "?";
}

void SolverConfig::validate() const {
  if (n_s < 0) throw InvalidArgument("n_s must be >= 0");
  if (!(k > 0.0)) throw InvalidArgument("k must be > 0");
  if (!(K_max > 0.0 && K_max <= 1.0)) throw InvalidArgument("K_max must lie in (0, 1]");
  if (J < 1) throw InvalidArgument("J must be >= 1");
  if (N_wu < 1) throw InvalidArgument("N_wu must be >= 1");
  if (!(eps_wu > 0.0) || !(eps_ref > 0.0)) throw InvalidArgument("stopping tolerances must be > 0");
  if (!(c_wu >= 0.0) || !(c_ref >= 0.0)) throw InvalidArgument("regularization hyperparameters must be >= 0");
  if (max_iter_wu < 0 || max_iter_ref < 1) throw InvalidArgument("bad iteration caps");
}

namespace solver {

namespace {

using cplx = std::complex<double>;

inline double multiplicity(int m) { return m == 0 ? 1.0 : 2.0; }

Eigen::VectorXd kernel_column(const KernelSet& kernels, int l) {
  Eigen::VectorXd h(kernels.n_channels());
  for (int nu = 0; nu < kernels.n_channels(); ++nu) h(nu) = kernels.transfer[static_cast<std::size_t>(nu)][static_cast<std::size_t>(l)];
  return h;
}

// (M + E)^{-1} via LDLT, refusing singular systems that carry no regularization.
Eigen::LDLT<Eigen::MatrixXd> regularized_factor(const Eigen::MatrixXd& M, const Eigen::VectorXd& eps, int l,
                                               const char* who) {
  Eigen::MatrixXd P = M;
  P.diagonal() += eps;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(P);
  const bool bad = ldlt.info() != Eigen::Success || !(ldlt.rcond() > 1e-13);
  if (bad && eps.minCoeff() <= 0.0) {
    throw SingularSystem(std::string(who) + ": singular system at l = " + std::to_string(l), l);
  }
  return ldlt;
}

double relative_change(const std::vector<HarmonicCoeffs>& now, const std::vector<HarmonicCoeffs>& before) {
  double num = 0.0;
  double den = 0.0;
  for (std::size_t n = 0; n < now.size(); ++n) {
    num += (now[n] - before[n]).squared_norm();
    den += now[n].squared_norm();
  }
  if (den == 0.0) return num == 0.0 ? 0.0 : 1.0;
  return std::sqrt(num / den);
}

double relative_change(const std::vector<Map>& now, const std::vector<Map>& before) {
  double num = 0.0;
  double den = 0.0;
  for (std::size_t n = 0; n < now.size(); ++n) {
    num += (now[n] - before[n]).squared_norm();
    den += now[n].squared_norm();
  }
  if (den == 0.0) return num == 0.0 ? 0.0 : 1.0;
  return std::sqrt(num / den);
}

std::vector<HarmonicCoeffs> filtered(const std::vector<HarmonicCoeffs>& x, std::span<const double> filter) {
  std::vector<HarmonicCoeffs> out;
  out.reserve(x.size());
  for (const auto& c : x) out.push_back(convolve(c, filter));
  return out;
}

std::vector<PowerSpectrum> spectra(const std::vector<HarmonicCoeffs>& s) {
  std::vector<PowerSpectrum> out;
  out.reserve(s.size());
  for (const auto& c : s) out.push_back(power_spectrum(c));
  return out;
}

struct Decomposed {
  Bands bands;
  std::vector<Map> coarse;
};

Decomposed decompose(const std::vector<HarmonicCoeffs>& s_hat, const StarletFilters& filters, const SphereGrid& grid) {
  Decomposed d;
  for (const auto& s : s_hat) {
    auto dec = starlet::forward(s, filters, grid);
    d.bands.push_back(std::move(dec.details));
    d.coarse.push_back(std::move(dec.coarse));
  }
  return d;
}

Bands apply_thresholds(const Bands& bands, const Thresholds& thr) {
  Bands out = bands;
  for (std::size_t n = 0; n < out.size(); ++n) {
    for (std::size_t j = 0; j < out[n].size(); ++j) {
      auto& v = out[n][j].raw();
      for (std::size_t p = 0; p < v.size(); ++p) {
        v[p] = soft_threshold(v[p], thr.at(static_cast<int>(n), static_cast<int>(j), p));
      }
    }
  }
  return out;
}

std::vector<Map> sum_details(const Bands& bands, std::size_t n_pix) {
  std::vector<Map> out;
  for (const auto& b : bands) {
    Map s(n_pix);
    for (const auto& band : b) s += band;
    out.push_back(std::move(s));
  }
  return out;
}

void clip(Map& m) {
  for (double& v : m.raw()) v = std::max(v, 0.0);
}

// Everything the iterations need, derived once from the dataset.
struct Problem {
  const SphereGrid* grid = nullptr;
  KernelSet kernels;  // normalized to the best channel (or ones)
  StarletFilters filters;
  std::vector<double> passband;  // 1 - Phi_J
  std::vector<HarmonicCoeffs> X_full;
  std::vector<HarmonicCoeffs> X_detail;
  double sigma2 = 0.0;
  PowerSpectrum noise;
  int n_s = 0;
};

Problem prepare(const Dataset& ds, const SolverConfig& cfg) {
  cfg.validate();
  if (ds.n_channels() == 0 || static_cast<int>(ds.X_hat.size()) != ds.n_channels()) {
    throw InvalidArgument("dataset has no harmonic data");
  }
  Problem p;
  p.grid = &ds.grid;
  const int L = ds.l_max();
  if (ds.kernels.n_channels() != ds.n_channels() || ds.kernels.l_max() != L) {
    throw InvalidArgument("kernel set does not match the data");
  }
  if (cfg.deconvolve) {
    p.kernels = model::normalize_to_best(ds.kernels);
  } else {
    p.kernels = ds.kernels;
    for (auto& h : p.kernels.transfer) std::fill(h.begin(), h.end(), 1.0);
  }
  p.filters = starlet::build_filters(L, cfg.J);
  p.passband = starlet::detail_passband(p.filters);
  p.X_full = ds.X_hat;
  p.X_detail = filtered(ds.X_hat, p.passband);
  p.sigma2 = cfg.sigma2 >= 0.0 ? cfg.sigma2 : ds.sigma2;
  p.noise = regularize::white_noise_spectrum(p.sigma2, ds.grid.n_pix(), L);
  p.n_s = cfg.n_s > 0 ? cfg.n_s : (ds.truth ? static_cast<int>(ds.truth->A.cols()) : 0);
  if (p.n_s < 1) throw InvalidArgument("number of sources unknown: set n_s");
  if (p.n_s > ds.n_channels()) throw InvalidArgument("more sources than channels");
  return p;
}

Eigen::MatrixXd noise_levels(const Problem& p, const SolverConfig& cfg, const MixingMatrix& A, const RegParams& reg,
                             const Bands& bands, std::span<const double> data_filter) {
  if (cfg.use_mad) {
    const Eigen::MatrixXd shape = noise_std_per_scale(A, p.kernels, reg, 1.0, p.grid->n_pix(), p.filters, data_filter);
    return estimate_sigma_mad(bands, &shape);
  }
  return noise_std_per_scale(A, p.kernels, reg, p.sigma2, p.grid->n_pix(), p.filters, data_filter);
}

// A-update that keeps the previous column wherever the new one degenerates
// or the system is singular.
MixingMatrix guarded_update_A(const Problem& p, const std::vector<HarmonicCoeffs>& s_hat, const MixingMatrix& previous,
                              bool nonneg, SolverResult& result, int iter) {
  std::vector<int> degenerate;
  MixingMatrix A;
  try {
    A = update_A(p.X_detail, p.kernels, s_hat, nonneg, &degenerate);
  } catch (const SingularSystem&) {
    return previous;
  }
  for (int c : degenerate) A.col(c) = previous.col(c);
  if (!degenerate.empty() && result.warnings.size() < 20) {
    result.warnings.push_back("iteration " + std::to_string(iter) + ": " + std::to_string(degenerate.size()) +
                              " degenerate column(s) of A kept from the previous iterate");
  }
  return A;
}

template <typename F>
auto with_context(const std::string& where, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const SingularSystem& e) {
    throw SingularSystem(std::string(e.what()) + " (" + where + ")", e.degree());
  } catch (const NumericalError& e) {
    throw NumericalError(std::string(e.what()) + " (" + where + ")");
  }
}

FinalRefineOutput final_refine_impl(const Problem& p, const MixingMatrix& A, const SolverConfig& cfg,
                                    std::vector<HarmonicCoeffs> current) {
  FinalRefineOutput out;
  std::optional<Bands> prev;
  ThresholdOutput last;
  out.converged = false;
  for (int it = 1; it <= cfg.max_iter_ref; ++it) {
    const RegParams reg = make_reg(cfg.strategy_ref, cfg.c_ref, A, p.kernels, spectra(current), p.noise);
    auto s_ls = update_S_ls(p.X_full, p.kernels, A, reg);
    Decomposed d = decompose(s_ls, p.filters, *p.grid);
    const Eigen::MatrixXd sigma = noise_levels(p, cfg, A, reg, d.bands, {});
    const Thresholds thr = compute_thresholds(d.bands, sigma, cfg.k, 1.0, prev ? &*prev : nullptr, prev.has_value());
    last = threshold_S(d.bands, d.coarse, thr, cfg.nonneg_S, *p.grid);
    const double rel = relative_change(last.S_hat, current);
    out.trace.push_back({it, Stage::final, cfg.c_ref, 1.0, rel});
    current = last.S_hat;
    prev = std::move(last.thresholded);
    if (it > 1 && rel <= cfg.eps_ref) {
      out.converged = true;
      break;
    }
  }
  out.S = std::move(last.S);
  out.S_hat = std::move(current);
  return out;
}

}  // namespace

double soft_threshold(double x, double lambda) {
  const double a = std::abs(x) - lambda;
  return a > 0.0 ? std::copysign(a, x) : 0.0;
}

MixingMatrix pca_init(const Dataset& dataset, int n_s, bool nonneg_A, int J) {
  const int n_c = dataset.n_channels();
  if (n_s < 1 || n_s > n_c) throw InitializationFailure("pca_init: need 1 <= n_s <= n_channels");
  const Dataset common = model::degrade_to_worst(dataset);
  const auto filters = starlet::build_filters(dataset.l_max(), J);
  const auto passband = starlet::detail_passband(filters);
  std::vector<HarmonicCoeffs> x = filtered(common.X_hat, passband);
  Eigen::MatrixXd cov(n_c, n_c);
  for (int a = 0; a < n_c; ++a) {
    for (int b = a; b < n_c; ++b) {
      cov(a, b) = cov(b, a) = inner_product(x[static_cast<std::size_t>(a)], x[static_cast<std::size_t>(b)]);
    }
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  if (es.info() != Eigen::Success) throw InitializationFailure("pca_init: eigen-solve failed");
  const auto& ev = es.eigenvalues();  // ascending
  const double top = ev(n_c - 1);
  if (!(top > 0.0) || ev(n_c - n_s) <= 1e-12 * top) {
    throw InitializationFailure("pca_init: data covariance has rank below n_s = " + std::to_string(n_s));
  }
  MixingMatrix A(n_c, n_s);
  for (int c = 0; c < n_s; ++c) {
    Eigen::VectorXd v = es.eigenvectors().col(n_c - 1 - c);
    Eigen::Index imax = 0;
    v.cwiseAbs().maxCoeff(&imax);
    if (v(imax) < 0.0) v = -v;
    if (nonneg_A) v = v.cwiseMax(0.0);
    A.col(c) = v / v.norm();
  }
  return A;
}

std::vector<HarmonicCoeffs> update_S_ls(const std::vector<HarmonicCoeffs>& X_hat, const KernelSet& kernels,
                                        const MixingMatrix& A, const RegParams& reg) {
  const int n_c = static_cast<int>(X_hat.size());
  const int n_s = static_cast<int>(A.cols());
  if (A.rows() != n_c || kernels.n_channels() != n_c) throw InvalidArgument("update_S_ls: channel count mismatch");
  const int L = kernels.l_max();
  if (reg.n_sources() != n_s || reg.l_max() != L) throw InvalidArgument("update_S_ls: RegParams shape mismatch");
  for (const auto& x : X_hat) {
    if (x.l_max() != L) throw InvalidArgument("update_S_ls: data l_max does not match the kernels");
  }
  std::vector<HarmonicCoeffs> out(static_cast<std::size_t>(n_s), HarmonicCoeffs(L));
  Eigen::VectorXcd x(n_c);
  for (int l = 0; l <= L; ++l) {
    const Eigen::MatrixXd HA = kernel_column(kernels, l).asDiagonal() * A;
    const Eigen::MatrixXd M = HA.transpose() * HA;
    const auto ldlt = regularized_factor(M, reg.eps.col(l), l, "update_S_ls");
    const Eigen::MatrixXd R = ldlt.solve(HA.transpose());  // N_s x N_c
    for (int m = 0; m <= l; ++m) {
      const std::size_t i = HarmonicCoeffs::index(l, m, L);
      for (int nu = 0; nu < n_c; ++nu) x(nu) = X_hat[static_cast<std::size_t>(nu)].data()[i];
      const Eigen::VectorXcd s = R * x;
      for (int n = 0; n < n_s; ++n) out[static_cast<std::size_t>(n)].data()[i] = s(n);
    }
  }
  return out;
}

MixingMatrix update_A(const std::vector<HarmonicCoeffs>& X_hat, const KernelSet& kernels,
                      const std::vector<HarmonicCoeffs>& S_hat, bool nonneg, std::vector<int>* degenerate) {
  const int n_c = static_cast<int>(X_hat.size());
  const int n_s = static_cast<int>(S_hat.size());
  if (kernels.n_channels() != n_c || n_s == 0) throw InvalidArgument("update_A: shape mismatch");
  const int L = kernels.l_max();

  // Sources with no energy cannot be estimated; their columns stay zero.
  std::vector<int> active;
  for (int n = 0; n < n_s; ++n) {
    if (S_hat[static_cast<std::size_t>(n)].squared_norm() > 0.0) active.push_back(n);
  }
  const int n_a = static_cast<int>(active.size());
  if (n_a == 0) throw SingularSystem("update_A: all sources are zero");

  // Per-degree source Gram G_l and cross terms C_{nu,l}, real parts only.
  std::vector<Eigen::MatrixXd> gram(static_cast<std::size_t>(L) + 1, Eigen::MatrixXd::Zero(n_a, n_a));
  std::vector<Eigen::MatrixXd> cross(static_cast<std::size_t>(L) + 1, Eigen::MatrixXd::Zero(n_c, n_a));
  Eigen::VectorXcd s(n_a);
  Eigen::VectorXcd x(n_c);
  for (int m = 0; m <= L; ++m) {
    const double w = multiplicity(m);
    for (int l = m; l <= L; ++l) {
      const std::size_t i = HarmonicCoeffs::index(l, m, L);
      for (int a = 0; a < n_a; ++a) s(a) = S_hat[static_cast<std::size_t>(active[static_cast<std::size_t>(a)])].data()[i];
      for (int nu = 0; nu < n_c; ++nu) x(nu) = X_hat[static_cast<std::size_t>(nu)].data()[i];
      gram[static_cast<std::size_t>(l)] += w * (s * s.adjoint()).real();
      cross[static_cast<std::size_t>(l)] += w * (x * s.adjoint()).real();
    }
  }

  MixingMatrix A = MixingMatrix::Zero(n_c, n_s);
  for (int nu = 0; nu < n_c; ++nu) {
    Eigen::MatrixXd G = Eigen::MatrixXd::Zero(n_a, n_a);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(n_a);
    const auto h = kernels.channel(nu);
    for (int l = 0; l <= L; ++l) {
      const double hl = h[static_cast<std::size_t>(l)];
      G += hl * hl * gram[static_cast<std::size_t>(l)];
      b += hl * cross[static_cast<std::size_t>(l)].row(nu).transpose();
    }
    Eigen::LDLT<Eigen::MatrixXd> ldlt(G);
    if (ldlt.info() != Eigen::Success || !(ldlt.rcond() > 1e-13)) {
      throw SingularSystem("update_A: singular source Gram matrix for channel " + std::to_string(nu));
    }
    const Eigen::VectorXd row = ldlt.solve(b);
    for (int a = 0; a < n_a; ++a) A(nu, active[static_cast<std::size_t>(a)]) = row(a);
  }

  if (nonneg) A = A.cwiseMax(0.0);
  if (degenerate) degenerate->clear();
  for (int c = 0; c < n_s; ++c) {
    const double norm = A.col(c).norm();
    if (norm > 0.0) {
      A.col(c) /= norm;
    } else if (degenerate) {
      degenerate->push_back(c);
    }
  }
  return A;
}

Eigen::MatrixXd noise_std_per_scale(const MixingMatrix& A, const KernelSet& kernels, const RegParams& reg,
                                    double sigma2, std::size_t n_pix, const StarletFilters& filters,
                                    std::span<const double> data_filter) {
  if (!(sigma2 >= 0.0)) throw InvalidArgument("noise_std_per_scale: sigma2 must be >= 0");
  const int n_s = static_cast<int>(A.cols());
  const int J = filters.n_scales();
  const int L = kernels.l_max();
  if (filters.l_max != L || reg.l_max() != L || reg.n_sources() != n_s) {
    throw InvalidArgument("noise_std_per_scale: shape mismatch");
  }
  if (!data_filter.empty() && static_cast<int>(data_filter.size()) <= L) {
    throw InvalidArgument("noise_std_per_scale: data filter too short");
  }
  Eigen::MatrixXd var = Eigen::MatrixXd::Zero(n_s, J);
  if (sigma2 == 0.0) return var;
  for (int l = 0; l <= L; ++l) {
    const Eigen::MatrixXd HA = kernel_column(kernels, l).asDiagonal() * A;
    const Eigen::MatrixXd M = HA.transpose() * HA;
    const auto ldlt = regularized_factor(M, reg.eps.col(l), l, "noise_std_per_scale");
    // Covariance of (M+E)^{-1} A^T H N per unit coefficient variance.
    const Eigen::MatrixXd R = ldlt.solve(HA.transpose());
    const Eigen::VectorXd q = (R * R.transpose()).diagonal();
    const double f = data_filter.empty() ? 1.0 : data_filter[static_cast<std::size_t>(l)];
    for (int j = 0; j < J; ++j) {
      const double hj = filters.detail[static_cast<std::size_t>(j)][static_cast<std::size_t>(l)];
      var.col(j) += (2.0 * l + 1.0) * f * f * hj * hj * q;
    }
  }
  return (var * (sigma2 / static_cast<double>(n_pix))).cwiseSqrt();
}

Eigen::MatrixXd estimate_sigma_mad(const Bands& bands, const Eigen::MatrixXd* shape) {
  if (bands.empty() || bands.front().empty()) throw InvalidArgument("estimate_sigma_mad: empty bands");
  const int n_s = static_cast<int>(bands.size());
  const int J = static_cast<int>(bands.front().size());
  auto mad = [](const Map& band) {
    std::vector<double> v = band.raw();
    if (v.empty()) throw InvalidArgument("estimate_sigma_mad: empty band");
    auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
    std::nth_element(v.begin(), mid, v.end());
    const double med = *mid;
    for (double& x : v) x = std::abs(x - med);
    std::nth_element(v.begin(), mid, v.end());
    return *mid / 0.6745;
  };
  Eigen::MatrixXd sigma(n_s, J);
  for (int n = 0; n < n_s; ++n) {
    const auto& b = bands[static_cast<std::size_t>(n)];
    const double finest = mad(b.front());
    for (int j = 0; j < J; ++j) {
      if (shape) {
        const double ref = (*shape)(n, 0);
        sigma(n, j) = ref > 0.0 ? finest * (*shape)(n, j) / ref : finest;
      } else {
        sigma(n, j) = j == 0 ? finest : mad(b[static_cast<std::size_t>(j)]);
      }
    }
  }
  return sigma;
}

Thresholds compute_thresholds(const Bands& bands, const Eigen::MatrixXd& sigma, double k, double K,
                              const Bands* previous, bool reweight) {
  if (!(k > 0.0)) throw InvalidArgument("compute_thresholds: k must be > 0");
  if (!(K >= 0.0 && K <= 1.0)) throw InvalidArgument("compute_thresholds: K must lie in [0, 1]");
  if (bands.empty() || bands.front().empty()) throw InvalidArgument("compute_thresholds: empty bands");
  const int n_s = static_cast<int>(bands.size());
  const int J = static_cast<int>(bands.front().size());
  if (sigma.rows() != n_s || sigma.cols() != J) throw InvalidArgument("compute_thresholds: sigma shape mismatch");
  Thresholds t;
  t.base.resize(n_s, J);
  std::vector<double> mags;
  for (int n = 0; n < n_s; ++n) {
    for (int j = 0; j < J; ++j) {
      const auto& v = bands[static_cast<std::size_t>(n)][static_cast<std::size_t>(j)].raw();
      if (v.empty()) throw InvalidArgument("compute_thresholds: empty band");
      const double T = k * sigma(n, j);
      mags.clear();
      for (double x : v) {
        if (std::abs(x) >= T) mags.push_back(std::abs(x));
      }
      const std::size_t C = mags.size();
      double base = T;
      if (C > 0) {
        const auto p0 = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(K * static_cast<double>(C))));
        auto nth = mags.begin() + static_cast<std::ptrdiff_t>(p0 - 1);
        std::nth_element(mags.begin(), nth, mags.end(), std::greater<>());
        base = *nth;
      }
      t.base(n, j) = base;
    }
  }
  if (reweight && previous) {
    if (static_cast<int>(previous->size()) != n_s) throw InvalidArgument("compute_thresholds: previous shape mismatch");
    t.weighted.resize(static_cast<std::size_t>(n_s));
    for (int n = 0; n < n_s; ++n) {
      t.weighted[static_cast<std::size_t>(n)].resize(static_cast<std::size_t>(J));
      for (int j = 0; j < J; ++j) {
        const auto& prev = (*previous)[static_cast<std::size_t>(n)][static_cast<std::size_t>(j)].raw();
        const double base = t.base(n, j);
        auto& w = t.weighted[static_cast<std::size_t>(n)][static_cast<std::size_t>(j)];
        w.resize(prev.size());
        for (std::size_t p = 0; p < prev.size(); ++p) w[p] = base > 0.0 ? base / (1.0 + std::abs(prev[p]) / base) : 0.0;
      }
    }
  }
  return t;
}

ThresholdOutput threshold_S(const Bands& bands, const std::vector<Map>& coarse, const Thresholds& thresholds,
                            bool nonneg, const SphereGrid& grid) {
  if (coarse.size() != bands.size()) throw InvalidArgument("threshold_S: band/coarse count mismatch");
  ThresholdOutput out;
  out.thresholded = apply_thresholds(bands, thresholds);
  out.S = sum_details(out.thresholded, grid.n_pix());
  for (std::size_t n = 0; n < out.S.size(); ++n) {
    out.S[n] += coarse[n];
    if (nonneg) clip(out.S[n]);
    out.S_hat.push_back(analyze(out.S[n], grid));
  }
  return out;
}

RegParams make_reg(Strategy strategy, double c, const MixingMatrix& A, const KernelSet& kernels,
                   const std::vector<PowerSpectrum>& source_spectra, const PowerSpectrum& noise_spectrum) {
  switch (strategy) {
    case Strategy::constant:
      return regularize::strategy1(c, static_cast<int>(A.cols()), kernels.l_max());
    case Strategy::spectral_radius:
      return regularize::strategy2(c, regularize::build_normal_matrices(A, kernels));
    case Strategy::noise_bound:
      return regularize::strategy3(c, regularize::build_normal_matrices(A, kernels), A);
    case Strategy::wiener:
      return regularize::strategy4(c, source_spectra, noise_spectrum);
  }
  throw InvalidArgument("unknown regularization strategy");
}

SolverResult run_sdecgmca(const Dataset& dataset, const SolverConfig& cfg) {
  const Problem p = prepare(dataset, cfg);
  const SphereGrid& grid = *p.grid;
  const int L = dataset.l_max();
  SolverResult result;
  MixingMatrix A = pca_init(dataset, p.n_s, cfg.nonneg_A, cfg.J);
  std::vector<HarmonicCoeffs> s_hat(static_cast<std::size_t>(p.n_s), HarmonicCoeffs(L));
  std::optional<Bands> prev;

  // Coarse-scale estimate used to apply non-negativity to the complete sources
  // while the separation itself only sees detail scales.
  auto coarse_estimate = [&](const MixingMatrix& a) {
    const RegParams reg = make_reg(Strategy::noise_bound, cfg.c_wu, a, p.kernels, {}, p.noise);
    auto ls = update_S_ls(p.X_full, p.kernels, a, reg);
    std::vector<Map> maps;
    for (auto& c : ls) maps.push_back(synthesize(convolve(c, p.filters.coarse), grid));
    return maps;
  };

  auto iterate = [&](Stage stage, int iter, double c, double K, bool reweight, bool nonneg) {
    const Strategy strategy = stage == Stage::warmup ? cfg.strategy_wu : cfg.strategy_ref;
    const RegParams reg = make_reg(strategy, c, A, p.kernels, spectra(s_hat), p.noise);
    auto s_ls = update_S_ls(p.X_detail, p.kernels, A, reg);
    Decomposed d = decompose(s_ls, p.filters, grid);
    const Eigen::MatrixXd sigma = noise_levels(p, cfg, A, reg, d.bands, p.passband);
    const Thresholds thr = compute_thresholds(d.bands, sigma, cfg.k, K, prev ? &*prev : nullptr, reweight && prev);
    ThresholdOutput t;
    if (nonneg) {
      t = threshold_S(d.bands, coarse_estimate(A), thr, true, grid);
      t.S_hat = filtered(t.S_hat, p.passband);
    } else {
      t = threshold_S(d.bands, d.coarse, thr, false, grid);
    }
    const double rel = relative_change(t.S_hat, s_hat);
    s_hat = std::move(t.S_hat);
    prev = std::move(t.thresholded);
    A = guarded_update_A(p, s_hat, A, cfg.nonneg_A, result, iter);
    result.trace.push_back({iter, stage, c, K, rel});
    return rel;
  };

  // Warm-up: decreasing c, growing support, no reweighting, no positivity on S.
  const int max_wu = cfg.max_iter_wu > 0 ? cfg.max_iter_wu : 2 * cfg.N_wu;
  int iter = 0;
  bool wu_converged = false;
  for (int i = 0; i < max_wu; ++i) {
    const int step = std::min(i, cfg.N_wu - 1);
    const double frac = cfg.N_wu > 1 ? static_cast<double>(step) / (cfg.N_wu - 1) : 1.0;
    const double c = step == cfg.N_wu - 1 ? cfg.c_wu : 10.0 * cfg.c_wu * std::pow(0.1, frac);
    const double K = step == cfg.N_wu - 1 ? cfg.K_max : cfg.K_max * frac;
    ++iter;
    const double rel =
        with_context("warm-up iteration " + std::to_string(iter), [&] { return iterate(Stage::warmup, iter, c, K, false, false); });
    if (i + 1 >= cfg.N_wu && rel <= cfg.eps_wu) {
      wu_converged = true;
      break;
    }
  }
  if (!wu_converged) {
    result.converged = false;
    result.warnings.push_back("warm-up reached its iteration cap");
  }

  // Refinement: spectrum-based regularization, reweighting, positivity.
  bool ref_converged = false;
  for (int i = 0; i < cfg.max_iter_ref; ++i) {
    ++iter;
    const double rel = with_context("refinement iteration " + std::to_string(iter), [&] {
      return iterate(Stage::refinement, iter, cfg.c_ref, cfg.K_max, true, cfg.nonneg_S);
    });
    if (i > 0 && rel <= cfg.eps_ref) {
      ref_converged = true;
      break;
    }
  }
  if (!ref_converged) {
    result.converged = false;
    result.warnings.push_back("refinement reached its iteration cap");
  }

  result.A = A;
  if (cfg.run_final) {
    // Start from the refined detail scales plus a least-squares coarse scale.
    const RegParams reg = make_reg(Strategy::noise_bound, cfg.c_wu, A, p.kernels, {}, p.noise);
    auto init = filtered(update_S_ls(p.X_full, p.kernels, A, reg), p.filters.coarse);
    for (std::size_t n = 0; n < init.size(); ++n) init[n] += s_hat[n];
    auto fin = with_context("final estimation", [&] { return final_refine_impl(p, A, cfg, std::move(init)); });
    result.S = std::move(fin.S);
    result.S_hat = std::move(fin.S_hat);
    result.final_trace = std::move(fin.trace);
    if (!fin.converged) {
      result.converged = false;
      result.warnings.push_back("final estimation reached its iteration cap");
    }
  } else {
    result.S_hat = s_hat;
    for (const auto& s : s_hat) result.S.push_back(synthesize(s, grid));
  }
  return result;
}

FinalRefineOutput final_refine(const Dataset& dataset, const MixingMatrix& A, const SolverConfig& config,
                               const std::vector<HarmonicCoeffs>* initial) {
  SolverConfig cfg = config;
  if (cfg.n_s == 0) cfg.n_s = static_cast<int>(A.cols());
  const Problem p = prepare(dataset, cfg);
  if (A.rows() != dataset.n_channels() || A.cols() != p.n_s) throw InvalidArgument("final_refine: A shape mismatch");
  std::vector<HarmonicCoeffs> start;
  if (initial) {
    if (static_cast<int>(initial->size()) != p.n_s) throw InvalidArgument("final_refine: initial iterate shape mismatch");
    start = *initial;
  } else {
    const RegParams reg = make_reg(Strategy::noise_bound, cfg.c_wu, A, p.kernels, {}, p.noise);
    start = update_S_ls(p.X_full, p.kernels, A, reg);
  }
  return final_refine_impl(p, A, cfg, std::move(start));
}

NonblindResult run_nonblind(const Dataset& dataset, const MixingMatrix& A_star, Strategy strategy, double c,
                            const SolverConfig& config) {
  SolverConfig cfg = config;
  if (cfg.n_s == 0) cfg.n_s = static_cast<int>(A_star.cols());
  const Problem p = prepare(dataset, cfg);
  const SphereGrid& grid = *p.grid;
  if (A_star.rows() != dataset.n_channels() || A_star.cols() != p.n_s) {
    throw InvalidArgument("run_nonblind: A shape mismatch");
  }
  std::vector<PowerSpectrum> truth_spectra;
  if (strategy == Strategy::wiener) {
    if (!dataset.truth) throw InvalidArgument("run_nonblind: strategy 4 needs ground-truth sources");
    // The deconvolution targets the best channel's resolution.
    const auto best = dataset.kernels.channel(dataset.kernels.best_channel());
    for (const auto& s : dataset.truth->S_hat) truth_spectra.push_back(power_spectrum(convolve(s, best)));
  }
  const RegParams reg = make_reg(strategy, c, A_star, p.kernels, truth_spectra, p.noise);
  const auto s_ls = update_S_ls(p.X_full, p.kernels, A_star, reg);
  const Decomposed d = decompose(s_ls, p.filters, grid);
  const Eigen::MatrixXd sigma = noise_levels(p, cfg, A_star, reg, d.bands, {});

  NonblindResult out;
  out.converged = false;
  std::optional<Bands> prev;
  std::vector<Map> detail_sum;
  Thresholds thr;
  for (int it = 1; it <= cfg.max_iter_ref; ++it) {
    thr = compute_thresholds(d.bands, sigma, cfg.k, 1.0, prev ? &*prev : nullptr, prev.has_value());
    Bands t = apply_thresholds(d.bands, thr);
    std::vector<Map> sum = sum_details(t, grid.n_pix());
    const double rel = detail_sum.empty() ? 1.0 : relative_change(sum, detail_sum);
    detail_sum = std::move(sum);
    prev = std::move(t);
    out.iterations = it;
    if (it > 1 && rel <= cfg.eps_ref) {
      out.converged = true;
      break;
    }
  }
  ThresholdOutput t = threshold_S(d.bands, d.coarse, thr, cfg.nonneg_S, grid);
  out.S = std::move(t.S);
  out.S_hat = std::move(t.S_hat);
  return out;
}

}  // namespace solver
}  // namespace sdec

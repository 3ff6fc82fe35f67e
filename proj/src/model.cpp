#include "sdec/model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>

#include "sdec/errors.hpp"
#include "sdec/random.hpp"
#include "sdec/starlet.hpp"

namespace sdec {

namespace {

int arg_extreme(const KernelSet& k, bool best) {
  const int n = k.n_channels();
  if (n == 0) throw InvalidArgument("empty kernel set");
  std::vector<double> score(static_cast<std::size_t>(n));
  const bool by_resolution = static_cast<int>(k.resolution.size()) == n;
  for (int nu = 0; nu < n; ++nu) {
    const auto h = k.channel(nu);
    score[static_cast<std::size_t>(nu)] =
        by_resolution ? k.resolution[static_cast<std::size_t>(nu)] : std::accumulate(h.begin(), h.end(), 0.0);
  }
  auto it = best ? std::max_element(score.begin(), score.end()) : std::min_element(score.begin(), score.end());
  return static_cast<int>(it - score.begin());
}

// Smooth non-negative field carried by the coarse starlet band.
Map coarse_field(const SphereGrid& grid, const StarletFilters& filters, Rng& rng) {
  const int L = grid.l_max();
  std::normal_distribution<double> gauss;
  HarmonicCoeffs c(L);
  for (int m = 0; m <= L; ++m) {
    for (int l = m; l <= L; ++l) {
      const double g = filters.coarse[static_cast<std::size_t>(l)];
      if (g == 0.0) continue;
      c(l, m) = m == 0 ? std::complex<double>(gauss(rng), 0.0)
                       : std::complex<double>(gauss(rng), gauss(rng)) * std::numbers::sqrt2 * 0.5;
      c(l, m) *= g;
    }
  }
  Map field = synthesize(c, grid);
  const double lo = *std::min_element(field.raw().begin(), field.raw().end());
  for (double& v : field.raw()) v -= lo;
  return field;
}

// Least-squares projection onto l <= cutoff (Jacobi iterations restricted to the band).
Map band_limited(const Map& map, const SphereGrid& grid, int cutoff) {
  return synthesize(analyze(map, grid, 8, cutoff), grid);
}

void clip_negative(Map& map) {
  for (double& v : map.raw()) v = std::max(v, 0.0);
}

}  // namespace

int KernelSet::best_channel() const { return arg_extreme(*this, true); }
int KernelSet::worst_channel() const { return arg_extreme(*this, false); }

namespace model {

std::vector<double> gaussian_kernel(double resolution, int l_max) {
  if (!(resolution > 0.0)) throw InvalidArgument("gaussian_kernel: resolution must be positive");
  if (l_max < 0) throw InvalidArgument("gaussian_kernel: l_max must be non-negative");
  std::vector<double> h(static_cast<std::size_t>(l_max) + 1);
  const double denom = resolution * (resolution + 1.0);
  for (int l = 0; l <= l_max; ++l) {
    h[static_cast<std::size_t>(l)] = std::exp(-static_cast<double>(l) * (l + 1.0) / denom * std::numbers::ln2);
  }
  return h;
}

KernelSet normalize_to_best(const KernelSet& kernels) {
  const int b = kernels.best_channel();
  const auto best = kernels.channel(b);
  for (std::size_t l = 0; l < best.size(); ++l) {
    if (!(std::abs(best[l]) > 0.0)) {
      throw DegenerateKernel("normalize_to_best: best channel vanishes at l = " + std::to_string(l));
    }
  }
  KernelSet out = kernels;
  for (auto& h : out.transfer) {
    if (h.size() != best.size()) throw InvalidArgument("normalize_to_best: kernel length mismatch");
    for (std::size_t l = 0; l < h.size(); ++l) h[l] /= best[l];
  }
  // The divisor itself is exactly one now.
  std::fill(out.transfer[static_cast<std::size_t>(b)].begin(), out.transfer[static_cast<std::size_t>(b)].end(), 1.0);
  return out;
}

Dataset degrade_to_worst(const Dataset& dataset) {
  const KernelSet& k = dataset.kernels;
  if (k.n_channels() != dataset.n_channels()) throw InvalidArgument("degrade_to_worst: kernel count mismatch");
  const int w = k.worst_channel();
  const auto worst = k.channel(w);
  Dataset out = dataset;
  for (int nu = 0; nu < dataset.n_channels(); ++nu) {
    const auto h = k.channel(nu);
    std::vector<double> ratio(worst.size(), 0.0);
    for (std::size_t l = 0; l < worst.size(); ++l) {
      if (worst[l] == 0.0) continue;
      if (h[l] == 0.0) {
        throw DegenerateKernel("degrade_to_worst: channel " + std::to_string(nu) + " vanishes at l = " +
                               std::to_string(l) + " where the worst channel does not");
      }
      ratio[l] = nu == w ? 1.0 : worst[l] / h[l];
    }
    if (nu == w) continue;
    const auto idx = static_cast<std::size_t>(nu);
    out.X_hat[idx] = convolve(dataset.X_hat[idx], ratio);
    out.X[idx] = synthesize(out.X_hat[idx], dataset.grid);
  }
  for (auto& h : out.kernels.transfer) h.assign(worst.begin(), worst.end());
  if (!out.kernels.resolution.empty()) {
    const double r = k.resolution[static_cast<std::size_t>(w)];
    std::fill(out.kernels.resolution.begin(), out.kernels.resolution.end(), r);
  }
  return out;
}

std::vector<Map> random_sources(int n_sources, const SphereGrid& grid, int cutoff, double sparsity,
                                std::uint64_t seed, int n_scales) {
  const int L = grid.l_max();
  if (n_sources < 1) throw InvalidArgument("random_sources: need at least one source");
  if (cutoff <= 0 || cutoff > L) throw InvalidArgument("random_sources: cutoff must lie in (0, l_max]");
  if (!(sparsity >= 0.0 && sparsity <= 1.0)) throw InvalidArgument("random_sources: sparsity must lie in [0, 1]");
  const StarletFilters filters = starlet::build_filters(L, n_scales);
  // Coarse band rms relative to the band-limited detail content.
  constexpr double kCoarseLevel = 0.1;
  constexpr int kProjectionRounds = 4;

  std::vector<Map> sources;
  sources.reserve(static_cast<std::size_t>(n_sources));
  for (int n = 0; n < n_sources; ++n) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(n)));
    std::uniform_real_distribution<double> unif;
    std::normal_distribution<double> gauss;

    // Bernoulli-Gaussian starlet coefficients; the starlet synthesis is their sum.
    Map details(grid.n_pix());
    for (int j = 0; j < n_scales; ++j) {
      for (double& v : details.raw()) {
        if (unif(rng) < sparsity) v += gauss(rng);
      }
    }
    Map coarse = coarse_field(grid, filters, rng);

    Map detail_part = details;
    clip_negative(detail_part);
    const double detail_rms = std::sqrt(band_limited(detail_part, grid, cutoff).squared_norm());
    const double coarse_rms = std::sqrt(coarse.squared_norm());
    if (coarse_rms > 0.0) {
      coarse *= detail_rms > 0.0 ? kCoarseLevel * detail_rms / coarse_rms : 1.0 / coarse_rms;
    }

    Map s = details + coarse;
    clip_negative(s);
    // Alternating projections between the band-limited maps and the positive
    // orthant; a single round leaves up to ~1.5% of the power out of band.
    for (int round = 0; round < kProjectionRounds; ++round) {
      s = band_limited(s, grid, cutoff);
      clip_negative(s);
    }
    const double norm = std::sqrt(s.squared_norm());
    if (!(norm > 0.0)) throw GenerationFailure("random_sources: generated an all-zero source");
    s *= 1.0 / norm;
    sources.push_back(std::move(s));
  }
  return sources;
}

double condition_number(const Eigen::MatrixXd& m) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  const auto& sv = svd.singularValues();
  if (sv.size() == 0 || sv(sv.size() - 1) <= 0.0) return std::numeric_limits<double>::infinity();
  return sv(0) / sv(sv.size() - 1);
}

MixingMatrix random_mixing(int n_channels, int n_sources, double cond, std::uint64_t seed) {
  if (n_sources < 1 || n_channels < n_sources) {
    throw InvalidArgument("random_mixing: need n_channels >= n_sources >= 1");
  }
  if (!(cond >= 1.0)) throw InvalidArgument("random_mixing: condition number must be >= 1");
  Rng rng(seed);
  std::uniform_real_distribution<double> unif;
  auto normalize_columns = [](MixingMatrix& a) {
    for (Eigen::Index c = 0; c < a.cols(); ++c) {
      const double n = a.col(c).norm();
      if (!(n > 0.0)) return false;
      a.col(c) /= n;
    }
    return true;
  };

  if (cond <= 1.0 + 1e-12) {
    // Disjoint row supports give exactly orthogonal non-negative columns.
    std::vector<int> owner(static_cast<std::size_t>(n_channels));
    std::iota(owner.begin(), owner.begin() + n_sources, 0);
    for (int r = n_sources; r < n_channels; ++r) {
      owner[static_cast<std::size_t>(r)] = static_cast<int>(unif(rng) * n_sources) % n_sources;
    }
    std::shuffle(owner.begin(), owner.end(), rng);
    MixingMatrix a = MixingMatrix::Zero(n_channels, n_sources);
    for (int r = 0; r < n_channels; ++r) a(r, owner[static_cast<std::size_t>(r)]) = 0.5 + 0.5 * unif(rng);
    normalize_columns(a);
    return a;
  }

  // Alternate between imposing the target singular-value ramp and the
  // non-negativity / unit-norm constraints.
  Eigen::VectorXd ramp(n_sources);
  for (int k = 0; k < n_sources; ++k) {
    ramp(k) = n_sources == 1 ? 1.0 : std::pow(cond, -static_cast<double>(k) / (n_sources - 1));
  }
  constexpr int kAttempts = 200;
  constexpr int kIterations = 100;
  MixingMatrix best;
  double best_err = std::numeric_limits<double>::infinity();
  for (int attempt = 0; attempt < kAttempts; ++attempt) {
    MixingMatrix a(n_channels, n_sources);
    for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = unif(rng);
    if (!normalize_columns(a)) continue;
    for (int it = 0; it < kIterations; ++it) {
      Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
      a = svd.matrixU() * ramp.asDiagonal() * svd.matrixV().transpose();
      a = a.cwiseMax(0.0);
      if (!normalize_columns(a)) break;
      const double err = std::abs(condition_number(a) / cond - 1.0);
      if (err < best_err) {
        best_err = err;
        best = a;
      }
      if (err <= 0.01) return a;
    }
  }
  if (best_err <= 0.05) return best;
  throw GenerationFailure("random_mixing: could not reach condition number " + std::to_string(cond));
}

std::vector<double> channel_resolutions(int n_channels, double r_min, int l_max) {
  if (n_channels < 1) throw InvalidArgument("channel_resolutions: need at least one channel");
  std::vector<double> r(static_cast<std::size_t>(n_channels));
  if (n_channels == 1) {
    r[0] = l_max;
    return r;
  }
  for (int nu = 0; nu < n_channels; ++nu) {
    r[static_cast<std::size_t>(nu)] = r_min + (l_max - r_min) * nu / (n_channels - 1.0);
  }
  return r;
}

Dataset simulate(const SimulationParams& p) {
  if (p.n_channels < p.n_sources) throw InvalidArgument("simulate: need n_channels >= n_sources");
  Dataset ds;
  ds.grid = SphereGrid(p.n_side);
  const SphereGrid& grid = ds.grid;
  const int L = grid.l_max();
  const int cutoff = p.cutoff < 0 ? L / 6 : p.cutoff;
  const double r_min = p.r_min > 0.0 ? p.r_min : L / 8.0;

  GroundTruth truth;
  truth.S = random_sources(p.n_sources, grid, cutoff, p.sparsity, derive_seed(p.seed, 1), p.n_scales);
  truth.A = random_mixing(p.n_channels, p.n_sources, p.cond, derive_seed(p.seed, 2));
  // The mixture is built from S_hat, so the reference maps are its synthesis
  // (they differ from the clipped generator output only by the sub-1% clip residue).
  for (auto& s : truth.S) {
    truth.S_hat.push_back(analyze(s, grid, 3));
    s = synthesize(truth.S_hat.back(), grid);
  }

  ds.kernels.resolution = channel_resolutions(p.n_channels, r_min, L);
  for (double r : ds.kernels.resolution) ds.kernels.transfer.push_back(gaussian_kernel(r, L));

  std::vector<Map> clean;
  double energy = 0.0;
  for (int nu = 0; nu < p.n_channels; ++nu) {
    HarmonicCoeffs mix(L);
    for (int n = 0; n < p.n_sources; ++n) {
      HarmonicCoeffs term = truth.S_hat[static_cast<std::size_t>(n)];
      term *= truth.A(nu, n);
      mix += term;
    }
    Map x = synthesize(convolve(mix, ds.kernels.channel(nu)), grid);
    energy += x.squared_norm();
    clean.push_back(std::move(x));
  }

  const double n_samples = static_cast<double>(p.n_channels) * static_cast<double>(grid.n_pix());
  ds.sigma2 = std::isinf(p.snr_db) && p.snr_db > 0 ? 0.0 : energy / (n_samples * std::pow(10.0, p.snr_db / 10.0));
  Rng rng(derive_seed(p.seed, 3));
  std::normal_distribution<double> gauss(0.0, std::sqrt(ds.sigma2));
  for (auto& x : clean) {
    if (ds.sigma2 > 0.0) {
      for (double& v : x.raw()) v += gauss(rng);
    }
    ds.X_hat.push_back(analyze(x, grid, p.analysis_iters));
    ds.X.push_back(std::move(x));
  }
  ds.truth = std::move(truth);
  return ds;
}

}  // namespace model
}  // namespace sdec

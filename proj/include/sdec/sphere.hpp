#pragma once

// HEALPix ring-scheme geometry and spherical harmonic transforms for real maps.

#include <complex>
#include <cstddef>
#include <memory>
#include <span>
#include <utility>
#include <vector>

namespace sdec {

namespace detail {
struct LegendreTables;
}

// One iso-latitude ring of the pixelization.
struct Ring {
  double z = 0.0;           // cos(colatitude)
  double theta = 0.0;       // colatitude
  double phi0 = 0.0;        // longitude of the first pixel
  std::size_t first_pixel = 0;
  int n_pixels = 0;
};

// Ring-scheme HEALPix grid. Immutable once built; copies share the cached
// Legendre tables.
class SphereGrid {
 public:
  // n_side must be a power of two in [1, 1024].
  explicit SphereGrid(int n_side);

  int n_side() const noexcept { return n_side_; }
  std::size_t n_pix() const noexcept { return n_pix_; }
  // Highest degree the sampled harmonics resolve: 3*n_side - 1.
  // (The commonly quoted "l_max = 384" at n_side = 128 counts degrees 0..383.)
  int l_max() const noexcept { return 3 * n_side_ - 1; }
  double pixel_area() const noexcept;

  const std::vector<Ring>& rings() const noexcept { return rings_; }

  // (colatitude, longitude) of pixel p; theta in [0, pi], phi in [0, 2 pi).
  std::pair<double, double> pixel_center(std::size_t p) const;

  const detail::LegendreTables& legendre() const { return *tables_; }

 private:
  int n_side_;
  std::size_t n_pix_;
  std::vector<Ring> rings_;
  std::shared_ptr<const detail::LegendreTables> tables_;
};

SphereGrid build_grid(int n_side);

// Real-valued pixel map.
class Map {
 public:
  Map() = default;
  explicit Map(std::size_t n_pix, double value = 0.0) : values_(n_pix, value) {}
  explicit Map(std::vector<double> values) : values_(std::move(values)) {}

  std::size_t size() const noexcept { return values_.size(); }
  double& operator[](std::size_t p) { return values_[p]; }
  double operator[](std::size_t p) const { return values_[p]; }

  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }
  std::vector<double>& raw() noexcept { return values_; }
  const std::vector<double>& raw() const noexcept { return values_; }

  double squared_norm() const noexcept;
  bool all_finite() const noexcept;

  Map& operator+=(const Map& other);
  Map& operator-=(const Map& other);
  Map& operator*=(double s);

  friend Map operator+(Map a, const Map& b) { return a += b; }
  friend Map operator-(Map a, const Map& b) { return a -= b; }
  friend Map operator*(double s, Map a) { return a *= s; }

 private:
  std::vector<double> values_;
};

// Harmonic coefficients of a real map, m >= 0 only; a_{l,-m} = (-1)^m conj(a_{l,m}).
// Storage is m-major: all l for m = 0, then all l >= 1 for m = 1, ...
class HarmonicCoeffs {
 public:
  using value_type = std::complex<double>;

  HarmonicCoeffs() = default;
  explicit HarmonicCoeffs(int l_max);

  static std::size_t count(int l_max) noexcept {
    return static_cast<std::size_t>(l_max + 1) * static_cast<std::size_t>(l_max + 2) / 2;
  }
  static std::size_t index(int l, int m, int l_max) noexcept {
    return static_cast<std::size_t>(m) * static_cast<std::size_t>(2 * l_max + 1 - m) / 2 +
           static_cast<std::size_t>(l);
  }

  int l_max() const noexcept { return l_max_; }
  std::size_t size() const noexcept { return data_.size(); }

  value_type& operator()(int l, int m) { return data_[index(l, m, l_max_)]; }
  const value_type& operator()(int l, int m) const { return data_[index(l, m, l_max_)]; }

  std::span<value_type> data() noexcept { return data_; }
  std::span<const value_type> data() const noexcept { return data_; }

  // Sum over all (l, m) with m in [-l, l] of |a_lm|^2.
  double squared_norm() const noexcept;

  HarmonicCoeffs& operator+=(const HarmonicCoeffs& other);
  HarmonicCoeffs& operator-=(const HarmonicCoeffs& other);
  HarmonicCoeffs& operator*=(double s);

  friend HarmonicCoeffs operator+(HarmonicCoeffs a, const HarmonicCoeffs& b) { return a += b; }
  friend HarmonicCoeffs operator-(HarmonicCoeffs a, const HarmonicCoeffs& b) { return a -= b; }
  friend HarmonicCoeffs operator*(double s, HarmonicCoeffs a) { return a *= s; }

 private:
  int l_max_ = -1;
  std::vector<value_type> data_;
};

// Real part of sum_{l,m in [-l,l]} a_lm conj(b_lm), i.e. the pixel-domain inner
// product up to the 4 pi / N_p factor.
double inner_product(const HarmonicCoeffs& a, const HarmonicCoeffs& b);

struct PowerSpectrum {
  std::vector<double> cl;

  int l_max() const noexcept { return static_cast<int>(cl.size()) - 1; }
  double operator[](int l) const { return cl[static_cast<std::size_t>(l)]; }
};

// Equal-weight quadrature projection (4 pi / N_p) sum_p conj(Y_lm(p)) x_p,
// followed by refine_iters Jacobi corrections against synthesize().
// l_max < 0 means the grid's l_max. Jacobi refinement converges much faster
// when l_max is the known band limit of the map: near 3 n_side the sampled
// harmonics are far from orthogonal.
HarmonicCoeffs analyze(const Map& map, const SphereGrid& grid, int refine_iters = 0, int l_max = -1);

// Real map x_p = sum_{l,m} a_lm Y_lm(p); coeffs.l_max() may be below grid.l_max().
Map synthesize(const HarmonicCoeffs& coeffs, const SphereGrid& grid);

PowerSpectrum power_spectrum(const HarmonicCoeffs& coeffs);

// Isotropic convolution: out_lm = kernel[l] * a_lm.
HarmonicCoeffs convolve(const HarmonicCoeffs& coeffs, std::span<const double> kernel);

// Zero every coefficient with l > cutoff.
HarmonicCoeffs band_limit(const HarmonicCoeffs& coeffs, int cutoff);

}  // namespace sdec

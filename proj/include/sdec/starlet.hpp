#pragma once

// Isotropic undecimated (starlet) wavelet transform on the sphere, realized
// as a bank of harmonic-domain filters with additive reconstruction.

#include <vector>

#include "sdec/sphere.hpp"

namespace sdec {

struct StarletFilters {
  int l_max = 0;
  // detail[j-1][l] = h_j(l), j = 1..J; h_1 is the highest-frequency band.
  std::vector<std::vector<double>> detail;
  // Low-pass filter of the coarse band, Phi_J(l).
  std::vector<double> coarse;

  int n_scales() const noexcept { return static_cast<int>(detail.size()); }
};

template <typename Band>
struct StarletDecomposition {
  std::vector<Band> details;
  Band coarse;
};

namespace starlet {

// Cubic B-spline scaling profile: B3(2t) / B3(0) on |t| <= 1, zero beyond.
double scaling_profile(double t);

// Phi_0 = 1, Phi_j(l) = profile(2^j l / (l_max + 1)), h_j = Phi_{j-1} - Phi_j.
// Requires J >= 1 and 2^J <= l_max.
StarletFilters build_filters(int l_max, int n_scales);

StarletDecomposition<HarmonicCoeffs> forward(const HarmonicCoeffs& coeffs, const StarletFilters& filters);

// Same bands, synthesized to pixel maps.
StarletDecomposition<Map> forward(const HarmonicCoeffs& coeffs, const StarletFilters& filters,
                                  const SphereGrid& grid);

HarmonicCoeffs inverse(const StarletDecomposition<HarmonicCoeffs>& decomp);
Map inverse(const StarletDecomposition<Map>& decomp);

// Sum of the detail filters, 1 - Phi_J(l): the pass-band of the detail scales.
std::vector<double> detail_passband(const StarletFilters& filters);

}  // namespace starlet
}  // namespace sdec

#include "sdec/starlet.hpp"

#include <cmath>
#include <string>

#include "sdec/errors.hpp"

namespace sdec::starlet {

namespace {

double b3(double t) {
  auto c = [](double x) { return std::abs(x) * x * x; };
  return (c(t - 2.0) - 4.0 * c(t - 1.0) + 6.0 * c(t) - 4.0 * c(t + 1.0) + c(t + 2.0)) / 12.0;
}

template <typename Band>
void check_bands(const StarletDecomposition<Band>& decomp) {
  for (const auto& d : decomp.details) {
    if (d.size() != decomp.coarse.size()) {
      throw InvalidArgument("starlet inverse: mismatched band sizes");
    }
  }
}

}  // namespace

double scaling_profile(double t) {
  if (std::abs(t) >= 1.0) return 0.0;
  return b3(2.0 * t) / b3(0.0);
}

StarletFilters build_filters(int l_max, int n_scales) {
  if (n_scales < 1) throw InvalidArgument("starlet: need at least one detail scale");
  if (l_max < 1 || (1L << n_scales) > l_max) {
    throw InvalidArgument("starlet: 2^J = " + std::to_string(1L << n_scales) + " exceeds l_max = " +
                          std::to_string(l_max));
  }
  const std::size_t n = static_cast<std::size_t>(l_max) + 1;
  StarletFilters f;
  f.l_max = l_max;
  std::vector<double> prev(n, 1.0);
  for (int j = 1; j <= n_scales; ++j) {
    std::vector<double> cur(n);
    const double scale = std::ldexp(1.0, j) / static_cast<double>(l_max + 1);
    for (std::size_t l = 0; l < n; ++l) cur[l] = scaling_profile(scale * static_cast<double>(l));
    std::vector<double> h(n);
    for (std::size_t l = 0; l < n; ++l) h[l] = prev[l] - cur[l];
    f.detail.push_back(std::move(h));
    prev = std::move(cur);
  }
  f.coarse = std::move(prev);
  return f;
}

StarletDecomposition<HarmonicCoeffs> forward(const HarmonicCoeffs& coeffs, const StarletFilters& filters) {
  if (coeffs.l_max() != filters.l_max) {
    throw InvalidArgument("starlet forward: coefficient l_max does not match the filters");
  }
  StarletDecomposition<HarmonicCoeffs> out;
  out.details.reserve(filters.detail.size());
  for (const auto& h : filters.detail) out.details.push_back(convolve(coeffs, h));
  out.coarse = convolve(coeffs, filters.coarse);
  return out;
}

StarletDecomposition<Map> forward(const HarmonicCoeffs& coeffs, const StarletFilters& filters,
                                  const SphereGrid& grid) {
  auto harmonic = forward(coeffs, filters);
  StarletDecomposition<Map> out;
  out.details.reserve(harmonic.details.size());
  for (const auto& d : harmonic.details) out.details.push_back(synthesize(d, grid));
  out.coarse = synthesize(harmonic.coarse, grid);
  return out;
}

HarmonicCoeffs inverse(const StarletDecomposition<HarmonicCoeffs>& decomp) {
  check_bands(decomp);
  HarmonicCoeffs out = decomp.coarse;
  for (const auto& d : decomp.details) out += d;
  return out;
}

Map inverse(const StarletDecomposition<Map>& decomp) {
  check_bands(decomp);
  Map out = decomp.coarse;
  for (const auto& d : decomp.details) out += d;
  return out;
}

std::vector<double> detail_passband(const StarletFilters& filters) {
  std::vector<double> out(filters.coarse.size());
  for (std::size_t l = 0; l < out.size(); ++l) out[l] = 1.0 - filters.coarse[l];
  return out;
}

}  // namespace sdec::starlet

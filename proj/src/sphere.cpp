#include "sdec/sphere.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "sdec/errors.hpp"

namespace sdec {

namespace detail {

// Fully normalized associated Legendre functions lambda_lm(z) such that
// Y_lm(theta, phi) = lambda_lm(cos theta) e^{i m phi}, evaluated on the northern
// rings (the southern ones follow from lambda_lm(-z) = (-1)^{l+m} lambda_lm(z)).
struct LegendreTables {
  int l_max = 0;
  std::vector<double> a;            // recurrence coefficients, m-major like HarmonicCoeffs
  std::vector<double> b;
  std::vector<double> log_mm_norm;  // log of sqrt((2m+1)/4pi * prod_{k<=m} (2k-1)/(2k))
  // Cached values per northern ring; empty when the grid is too large to cache.
  std::vector<std::vector<double>> cached;

  void evaluate(double z, double sin_theta, std::vector<double>& out) const;
};

void LegendreTables::evaluate(double z, double sin_theta, std::vector<double>& out) const {
  const int L = l_max;
  out.assign(HarmonicCoeffs::count(L), 0.0);
  const double log_sin = sin_theta > 0.0 ? std::log(sin_theta) : -INFINITY;
  for (int m = 0; m <= L; ++m) {
    const std::size_t base = HarmonicCoeffs::index(m, m, L);
    if (m > 0 && sin_theta <= 0.0) {
      continue;  // all zero at the poles
    }
    const double log_mm = log_mm_norm[static_cast<std::size_t>(m)] + m * log_sin;
    const double sign = (m & 1) ? -1.0 : 1.0;
    if (log_mm > -600.0) {
      double prev2 = 0.0;
      double prev = sign * std::exp(log_mm);
      out[base] = prev;
      for (int l = m + 1; l <= L; ++l) {
        const std::size_t i = base + static_cast<std::size_t>(l - m);
        const double cur = a[i] * (z * prev - b[i] * prev2);
        out[i] = cur;
        prev2 = prev;
        prev = cur;
      }
    } else {
      // Run the recurrence on a rescaled value and carry the exponent separately.
      double scale = log_mm;
      double prev2 = 0.0;
      double prev = sign;
      auto emit = [&](std::size_t i, double v) {
        if (v != 0.0) {
          const double e = scale + std::log(std::abs(v));
          out[i] = e > -700.0 ? std::copysign(std::exp(e), v) : 0.0;
        }
      };
      emit(base, prev);
      for (int l = m + 1; l <= L; ++l) {
        const std::size_t i = base + static_cast<std::size_t>(l - m);
        double cur = a[i] * (z * prev - b[i] * prev2);
        if (std::abs(cur) > 1e150) {
          cur *= 1e-150;
          prev *= 1e-150;
          scale += 150.0 * std::numbers::ln10;
        }
        emit(i, cur);
        prev2 = prev;
        prev = cur;
      }
    }
  }
}

namespace {

std::shared_ptr<const LegendreTables> make_tables(int l_max, const std::vector<Ring>& rings,
                                                  int n_north) {
  auto t = std::make_shared<LegendreTables>();
  t->l_max = l_max;
  const std::size_t n = HarmonicCoeffs::count(l_max);
  t->a.assign(n, 0.0);
  t->b.assign(n, 0.0);
  for (int m = 0; m <= l_max; ++m) {
    for (int l = m + 1; l <= l_max; ++l) {
      const std::size_t i = HarmonicCoeffs::index(l, m, l_max);
      const double ll = static_cast<double>(l) * l;
      const double mm = static_cast<double>(m) * m;
      t->a[i] = std::sqrt((4.0 * ll - 1.0) / (ll - mm));
      const double l1 = static_cast<double>(l - 1) * (l - 1);
      t->b[i] = std::sqrt((l1 - mm) / (4.0 * l1 - 1.0));
    }
  }
  t->log_mm_norm.resize(static_cast<std::size_t>(l_max) + 1);
  double acc = 0.0;
  for (int m = 0; m <= l_max; ++m) {
    if (m > 0) {
      acc += std::log1p(-1.0 / (2.0 * m));
    }
    t->log_mm_norm[static_cast<std::size_t>(m)] =
        0.5 * (std::log((2.0 * m + 1.0) / (4.0 * std::numbers::pi)) + acc);
  }
  // ~20 MB at n_side = 64; larger grids evaluate per ring on demand.
  if (static_cast<double>(n) * n_north <= 2.5e6) {
    t->cached.resize(static_cast<std::size_t>(n_north));
    for (int r = 0; r < n_north; ++r) {
      const Ring& ring = rings[static_cast<std::size_t>(r)];
      t->evaluate(ring.z, std::sin(ring.theta), t->cached[static_cast<std::size_t>(r)]);
    }
  }
  return t;
}

bool is_power_of_two(int n) { return n > 0 && (n & (n - 1)) == 0; }

// Values of the northern ring r, from the cache or freshly evaluated into scratch.
const std::vector<double>& ring_legendre(const SphereGrid& grid, int r, std::vector<double>& scratch) {
  const auto& t = grid.legendre();
  if (!t.cached.empty()) {
    return t.cached[static_cast<std::size_t>(r)];
  }
  const Ring& ring = grid.rings()[static_cast<std::size_t>(r)];
  t.evaluate(ring.z, std::sin(ring.theta), scratch);
  return scratch;
}

// x_j = Re[F_0 + 2 sum_{m>=1} F_m e^{i m phi_j}] over the pixels of one ring.
void ring_synthesis(const std::vector<std::complex<double>>& f, int m_max, const Ring& ring,
                    std::vector<double>& out) {
  const double dphi = 2.0 * std::numbers::pi / ring.n_pixels;
  for (int j = 0; j < ring.n_pixels; ++j) {
    const double phi = ring.phi0 + dphi * j;
    const std::complex<double> step(std::cos(phi), std::sin(phi));
    std::complex<double> rot = step;
    double acc = f[0].real();
    for (int m = 1; m <= m_max; ++m) {
      acc += 2.0 * (f[static_cast<std::size_t>(m)] * rot).real();
      rot *= step;
    }
    out[ring.first_pixel + static_cast<std::size_t>(j)] = acc;
  }
}

// G_m = sum_j x_j e^{-i m phi_j}.
void ring_analysis(const Map& map, const Ring& ring, int m_max, std::vector<std::complex<double>>& g) {
  std::fill(g.begin(), g.end(), std::complex<double>{});
  const double dphi = 2.0 * std::numbers::pi / ring.n_pixels;
  for (int j = 0; j < ring.n_pixels; ++j) {
    const double x = map[ring.first_pixel + static_cast<std::size_t>(j)];
    const double phi = ring.phi0 + dphi * j;
    const std::complex<double> step(std::cos(phi), -std::sin(phi));
    std::complex<double> rot(x, 0.0);
    g[0] += rot;
    for (int m = 1; m <= m_max; ++m) {
      rot *= step;
      g[static_cast<std::size_t>(m)] += rot;
    }
  }
}

}  // namespace
}  // namespace detail

SphereGrid::SphereGrid(int n_side) : n_side_(n_side) {
  if (!detail::is_power_of_two(n_side) || n_side > 1024) {
    throw InvalidArgument("n_side must be a power of two in [1, 1024], got " + std::to_string(n_side));
  }
  n_pix_ = 12 * static_cast<std::size_t>(n_side) * static_cast<std::size_t>(n_side);
  const int n_rings = 4 * n_side - 1;
  rings_.resize(static_cast<std::size_t>(n_rings));
  const double ns = n_side;
  for (int i = 1; i <= n_rings; ++i) {
    const int north = i > 2 * n_side ? 4 * n_side - i : i;
    Ring ring;
    std::size_t first = 0;
    double sin_theta = 0.0;
    bool shifted = true;
    if (north < n_side) {
      const double tmp = static_cast<double>(north) * north / (3.0 * ns * ns);
      ring.z = 1.0 - tmp;
      sin_theta = std::sqrt(tmp * (2.0 - tmp));
      ring.n_pixels = 4 * north;
      first = 2 * static_cast<std::size_t>(north) * static_cast<std::size_t>(north - 1);
    } else {
      ring.z = (2.0 * ns - north) * 2.0 / (3.0 * ns);
      sin_theta = std::sqrt((1.0 - ring.z) * (1.0 + ring.z));
      ring.n_pixels = 4 * n_side;
      shifted = ((north - n_side) & 1) == 0;
      const std::size_t n_cap = 2 * static_cast<std::size_t>(n_side) * static_cast<std::size_t>(n_side - 1);
      first = n_cap + static_cast<std::size_t>(north - n_side) * static_cast<std::size_t>(ring.n_pixels);
    }
    ring.theta = std::atan2(sin_theta, ring.z);
    if (north != i) {
      ring.z = -ring.z;
      ring.theta = std::numbers::pi - ring.theta;
      first = n_pix_ - first - static_cast<std::size_t>(ring.n_pixels);
    }
    ring.first_pixel = first;
    ring.phi0 = shifted ? std::numbers::pi / ring.n_pixels : 0.0;
    rings_[static_cast<std::size_t>(i - 1)] = ring;
  }
  tables_ = detail::make_tables(l_max(), rings_, 2 * n_side);
}

SphereGrid build_grid(int n_side) { return SphereGrid(n_side); }

double SphereGrid::pixel_area() const noexcept {
  return 4.0 * std::numbers::pi / static_cast<double>(n_pix_);
}

std::pair<double, double> SphereGrid::pixel_center(std::size_t p) const {
  if (p >= n_pix_) {
    throw InvalidArgument("pixel index " + std::to_string(p) + " out of range");
  }
  auto it = std::upper_bound(rings_.begin(), rings_.end(), p,
                             [](std::size_t v, const Ring& r) { return v < r.first_pixel; });
  const Ring& ring = *std::prev(it);
  const double j = static_cast<double>(p - ring.first_pixel);
  return {ring.theta, ring.phi0 + 2.0 * std::numbers::pi * j / ring.n_pixels};
}

double Map::squared_norm() const noexcept {
  double s = 0.0;
  for (double v : values_) s += v * v;
  return s;
}

bool Map::all_finite() const noexcept {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

Map& Map::operator+=(const Map& other) {
  if (other.size() != size()) throw InvalidArgument("map size mismatch");
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += other.values_[i];
  return *this;
}

Map& Map::operator-=(const Map& other) {
  if (other.size() != size()) throw InvalidArgument("map size mismatch");
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] -= other.values_[i];
  return *this;
}

Map& Map::operator*=(double s) {
  for (double& v : values_) v *= s;
  return *this;
}

HarmonicCoeffs::HarmonicCoeffs(int l_max) : l_max_(l_max) {
  if (l_max < 0) throw InvalidArgument("l_max must be non-negative");
  data_.assign(count(l_max), value_type{});
}

double HarmonicCoeffs::squared_norm() const noexcept {
  double s = 0.0;
  for (std::size_t i = 0; i < data_.size(); ++i) {
    const double w = i <= static_cast<std::size_t>(l_max_) ? 1.0 : 2.0;  // m = 0 block first
    s += w * std::norm(data_[i]);
  }
  return s;
}

HarmonicCoeffs& HarmonicCoeffs::operator+=(const HarmonicCoeffs& other) {
  if (other.l_max_ != l_max_) throw InvalidArgument("l_max mismatch");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

HarmonicCoeffs& HarmonicCoeffs::operator-=(const HarmonicCoeffs& other) {
  if (other.l_max_ != l_max_) throw InvalidArgument("l_max mismatch");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
  return *this;
}

HarmonicCoeffs& HarmonicCoeffs::operator*=(double s) {
  for (auto& v : data_) v *= s;
  return *this;
}

double inner_product(const HarmonicCoeffs& a, const HarmonicCoeffs& b) {
  if (a.l_max() != b.l_max()) throw InvalidArgument("l_max mismatch");
  const auto da = a.data();
  const auto db = b.data();
  double s = 0.0;
  for (std::size_t i = 0; i < da.size(); ++i) {
    const double w = i <= static_cast<std::size_t>(a.l_max()) ? 1.0 : 2.0;
    s += w * (da[i].real() * db[i].real() + da[i].imag() * db[i].imag());
  }
  return s;
}

namespace {

HarmonicCoeffs analyze_once(const Map& map, const SphereGrid& grid, int L) {
  const int GL = grid.l_max();
  HarmonicCoeffs out(L);
  auto a = out.data();
  const auto& rings = grid.rings();
  const int n_north = 2 * grid.n_side();
  const int n_rings = static_cast<int>(rings.size());
  const double w = grid.pixel_area();
  std::vector<std::complex<double>> g_n(static_cast<std::size_t>(L) + 1);
  std::vector<std::complex<double>> g_s(static_cast<std::size_t>(L) + 1);
  std::vector<double> scratch;
  for (int r = 0; r < n_north; ++r) {
    const int mirror = n_rings - 1 - r;
    const auto& lam = detail::ring_legendre(grid, r, scratch);
    detail::ring_analysis(map, rings[static_cast<std::size_t>(r)], L, g_n);
    const bool paired = mirror != r;
    if (paired) {
      detail::ring_analysis(map, rings[static_cast<std::size_t>(mirror)], L, g_s);
    }
    for (int m = 0; m <= L; ++m) {
      const std::complex<double> gn = g_n[static_cast<std::size_t>(m)] * w;
      const std::complex<double> gs = paired ? g_s[static_cast<std::size_t>(m)] * w : std::complex<double>{};
      // Even (l+m) terms see gn + gs, odd ones gn - gs.
      const std::complex<double> even = gn + gs;
      const std::complex<double> odd = gn - gs;
      const std::size_t base = HarmonicCoeffs::index(m, m, L);
      const std::size_t tab = HarmonicCoeffs::index(m, m, GL);
      for (int l = m; l <= L; ++l) {
        const std::size_t k = static_cast<std::size_t>(l - m);
        a[base + k] += lam[tab + k] * (((l - m) & 1) ? odd : even);
      }
    }
  }
  // Real-map convention: m = 0 coefficients are real.
  for (int l = 0; l <= L; ++l) {
    a[static_cast<std::size_t>(l)] = {a[static_cast<std::size_t>(l)].real(), 0.0};
  }
  return out;
}

}  // namespace

HarmonicCoeffs analyze(const Map& map, const SphereGrid& grid, int refine_iters, int l_max) {
  if (map.size() != grid.n_pix()) {
    throw InvalidArgument("analyze: map has " + std::to_string(map.size()) + " pixels, grid has " +
                          std::to_string(grid.n_pix()));
  }
  if (refine_iters < 0) throw InvalidArgument("analyze: refine_iters must be >= 0");
  if (l_max < 0) l_max = grid.l_max();
  if (l_max > grid.l_max()) throw InvalidArgument("analyze: l_max exceeds the grid's 3 n_side - 1");
  HarmonicCoeffs out = analyze_once(map, grid, l_max);
  for (int it = 0; it < refine_iters; ++it) {
    Map residual = map - synthesize(out, grid);
    out += analyze_once(residual, grid, l_max);
  }
  return out;
}

Map synthesize(const HarmonicCoeffs& coeffs, const SphereGrid& grid) {
  const int L = coeffs.l_max();
  if (L > grid.l_max()) {
    throw InvalidArgument("synthesize: coefficient l_max " + std::to_string(L) + " exceeds grid l_max " +
                          std::to_string(grid.l_max()));
  }
  const int GL = grid.l_max();
  Map out(grid.n_pix());
  const auto a = coeffs.data();
  const auto& rings = grid.rings();
  const int n_north = 2 * grid.n_side();
  const int n_rings = static_cast<int>(rings.size());
  std::vector<std::complex<double>> f_n(static_cast<std::size_t>(L) + 1);
  std::vector<std::complex<double>> f_s(static_cast<std::size_t>(L) + 1);
  std::vector<double> scratch;
  for (int r = 0; r < n_north; ++r) {
    const int mirror = n_rings - 1 - r;
    const auto& lam = detail::ring_legendre(grid, r, scratch);
    for (int m = 0; m <= L; ++m) {
      std::complex<double> even{};
      std::complex<double> odd{};
      const std::size_t src = HarmonicCoeffs::index(m, m, L);
      const std::size_t tab = HarmonicCoeffs::index(m, m, GL);
      for (int l = m; l <= L; ++l) {
        const std::complex<double> v = a[src + static_cast<std::size_t>(l - m)] *
                                       lam[tab + static_cast<std::size_t>(l - m)];
        if ((l - m) & 1) {
          odd += v;
        } else {
          even += v;
        }
      }
      f_n[static_cast<std::size_t>(m)] = even + odd;
      f_s[static_cast<std::size_t>(m)] = even - odd;
    }
    detail::ring_synthesis(f_n, L, rings[static_cast<std::size_t>(r)], out.raw());
    if (mirror != r) {
      detail::ring_synthesis(f_s, L, rings[static_cast<std::size_t>(mirror)], out.raw());
    }
  }
  return out;
}

PowerSpectrum power_spectrum(const HarmonicCoeffs& coeffs) {
  const int L = coeffs.l_max();
  PowerSpectrum ps;
  ps.cl.assign(static_cast<std::size_t>(L) + 1, 0.0);
  for (int m = 0; m <= L; ++m) {
    const double w = m == 0 ? 1.0 : 2.0;
    for (int l = m; l <= L; ++l) {
      ps.cl[static_cast<std::size_t>(l)] += w * std::norm(coeffs(l, m));
    }
  }
  for (int l = 0; l <= L; ++l) {
    ps.cl[static_cast<std::size_t>(l)] /= (2.0 * l + 1.0);
  }
  return ps;
}

HarmonicCoeffs convolve(const HarmonicCoeffs& coeffs, std::span<const double> kernel) {
  const int L = coeffs.l_max();
  if (kernel.size() < static_cast<std::size_t>(L) + 1) {
    throw InvalidArgument("convolve: kernel has " + std::to_string(kernel.size()) +
                          " degrees, need " + std::to_string(L + 1));
  }
  HarmonicCoeffs out = coeffs;
  auto d = out.data();
  for (int m = 0; m <= L; ++m) {
    const std::size_t base = HarmonicCoeffs::index(m, m, L);
    for (int l = m; l <= L; ++l) {
      d[base + static_cast<std::size_t>(l - m)] *= kernel[static_cast<std::size_t>(l)];
    }
  }
  return out;
}

HarmonicCoeffs band_limit(const HarmonicCoeffs& coeffs, int cutoff) {
  std::vector<double> mask(static_cast<std::size_t>(coeffs.l_max()) + 1, 0.0);
  for (int l = 0; l <= std::min(cutoff, coeffs.l_max()); ++l) mask[static_cast<std::size_t>(l)] = 1.0;
  return convolve(coeffs, mask);
}

}  // namespace sdec

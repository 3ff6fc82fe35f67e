#pragma once

// Separation quality in dB after resolving the permutation / sign ambiguity.

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sdec/model.hpp"
#include "sdec/sphere.hpp"

namespace sdec {

struct Alignment {
  // Estimated column permutation[i] matches true column i.
  std::vector<int> permutation;
  std::vector<int> signs;
};

struct MetricReport {
  double nmse_db = 0.0;
  double nmse_w_db = 0.0;
  double c_a_db = 0.0;
  Alignment alignment;
};

namespace metrics {

// Greedy maximum-|correlation| matching of the columns of A to those of A_star.
Alignment align(const Eigen::MatrixXd& A_star, const Eigen::MatrixXd& A);

Eigen::MatrixXd apply(const Alignment& al, const Eigen::MatrixXd& A);
std::vector<Map> apply(const Alignment& al, const std::vector<Map>& S);
std::vector<HarmonicCoeffs> apply(const Alignment& al, const std::vector<HarmonicCoeffs>& S);

// -10 log10(|S* - S|^2 / |S*|^2); +inf on exact recovery.
double nmse(const std::vector<Map>& S_star, const std::vector<Map>& S);

// NMSE against the true sources at the worst resolution, H_w * S*.
double nmse_w(const std::vector<HarmonicCoeffs>& S_star_hat, const std::vector<Map>& S_at_worst,
              std::span<const double> worst_kernel, const SphereGrid& grid);

// -10 log10(mean |A^+ A* - I|) with A^+ the pseudo-inverse of the estimate.
double c_a(const Eigen::MatrixXd& A_star, const Eigen::MatrixXd& A);

// Moore-Penrose pseudo-inverse; throws on column-rank deficiency.
Eigen::MatrixXd pinv(const Eigen::MatrixXd& A);

// Source estimates brought from the deconvolved resolution (best channel) to the
// worst one: convolution by H_w / H_b.
std::vector<Map> degrade_estimate(const std::vector<HarmonicCoeffs>& S_hat, const KernelSet& kernels,
                                  const SphereGrid& grid);

// Decimal text, "inf" / "-inf" for infinities.
std::string format_db(double v);

}  // namespace metrics
}  // namespace sdec

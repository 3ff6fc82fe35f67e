#include "sdec/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <limits>

#include "sdec/errors.hpp"

namespace sdec::metrics {

namespace {

double to_db(double num, double den) {
  if (!(den > 0.0)) throw InvalidArgument("reference has zero energy");
  if (num == 0.0) return std::numeric_limits<double>::infinity();
  return -10.0 * std::log10(num / den);
}

}  // namespace

Alignment align(const Eigen::MatrixXd& A_star, const Eigen::MatrixXd& A) {
  if (A_star.rows() != A.rows() || A_star.cols() != A.cols()) throw InvalidArgument("align: shape mismatch");
  const Eigen::Index n = A.cols();
  Eigen::MatrixXd corr(n, n);  // corr(i, j): true column i vs estimated column j
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      const double d = A_star.col(i).norm() * A.col(j).norm();
      corr(i, j) = d > 0.0 ? A_star.col(i).dot(A.col(j)) / d : 0.0;
    }
  }
  Alignment al;
  al.permutation.assign(static_cast<std::size_t>(n), -1);
  al.signs.assign(static_cast<std::size_t>(n), 1);
  std::vector<bool> used_true(static_cast<std::size_t>(n), false);
  std::vector<bool> used_est(static_cast<std::size_t>(n), false);
  for (Eigen::Index step = 0; step < n; ++step) {
    double best = -1.0;
    Eigen::Index bi = -1;
    Eigen::Index bj = -1;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (used_true[static_cast<std::size_t>(i)]) continue;
      for (Eigen::Index j = 0; j < n; ++j) {
        if (used_est[static_cast<std::size_t>(j)]) continue;
        if (std::abs(corr(i, j)) > best) {
          best = std::abs(corr(i, j));
          bi = i;
          bj = j;
        }
      }
    }
    used_true[static_cast<std::size_t>(bi)] = true;
    used_est[static_cast<std::size_t>(bj)] = true;
    al.permutation[static_cast<std::size_t>(bi)] = static_cast<int>(bj);
    al.signs[static_cast<std::size_t>(bi)] = corr(bi, bj) < 0.0 ? -1 : 1;
  }
  return al;
}

Eigen::MatrixXd apply(const Alignment& al, const Eigen::MatrixXd& A) {
  Eigen::MatrixXd out(A.rows(), A.cols());
  for (std::size_t i = 0; i < al.permutation.size(); ++i) {
    out.col(static_cast<Eigen::Index>(i)) = al.signs[i] * A.col(al.permutation[i]);
  }
  return out;
}

std::vector<Map> apply(const Alignment& al, const std::vector<Map>& S) {
  std::vector<Map> out;
  for (std::size_t i = 0; i < al.permutation.size(); ++i) {
    out.push_back(static_cast<double>(al.signs[i]) * S.at(static_cast<std::size_t>(al.permutation[i])));
  }
  return out;
}

std::vector<HarmonicCoeffs> apply(const Alignment& al, const std::vector<HarmonicCoeffs>& S) {
  std::vector<HarmonicCoeffs> out;
  for (std::size_t i = 0; i < al.permutation.size(); ++i) {
    out.push_back(static_cast<double>(al.signs[i]) * S.at(static_cast<std::size_t>(al.permutation[i])));
  }
  return out;
}

double nmse(const std::vector<Map>& S_star, const std::vector<Map>& S) {
  if (S_star.size() != S.size()) throw InvalidArgument("nmse: source count mismatch");
  double num = 0.0;
  double den = 0.0;
  for (std::size_t n = 0; n < S.size(); ++n) {
    num += (S_star[n] - S[n]).squared_norm();
    den += S_star[n].squared_norm();
  }
  return to_db(num, den);
}

double nmse_w(const std::vector<HarmonicCoeffs>& S_star_hat, const std::vector<Map>& S_at_worst,
              std::span<const double> worst_kernel, const SphereGrid& grid) {
  std::vector<Map> ref;
  for (const auto& s : S_star_hat) ref.push_back(synthesize(convolve(s, worst_kernel), grid));
  return nmse(ref, S_at_worst);
}

Eigen::MatrixXd pinv(const Eigen::MatrixXd& A) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  if (sv.size() == 0 || !(sv(sv.size() - 1) > 1e-12 * std::max(1.0, sv(0)))) {
    throw InvalidArgument("pseudo-inverse: matrix is column-rank deficient");
  }
  return svd.matrixV() * sv.cwiseInverse().asDiagonal() * svd.matrixU().transpose();
}

double c_a(const Eigen::MatrixXd& A_star, const Eigen::MatrixXd& A) {
  if (A_star.rows() != A.rows() || A_star.cols() != A.cols()) throw InvalidArgument("c_a: shape mismatch");
  // A^+ A = I exactly; the floating-point product would leave ~1e-16 residue.
  if (A == A_star) {
    (void)pinv(A);  // still rejects rank-deficient input
    return std::numeric_limits<double>::infinity();
  }
  const Eigen::MatrixXd D = pinv(A) * A_star - Eigen::MatrixXd::Identity(A.cols(), A.cols());
  const double mean = D.cwiseAbs().mean();
  if (mean == 0.0) return std::numeric_limits<double>::infinity();
  return -10.0 * std::log10(mean);
}

std::vector<Map> degrade_estimate(const std::vector<HarmonicCoeffs>& S_hat, const KernelSet& kernels,
                                  const SphereGrid& grid) {
  const auto best = kernels.channel(kernels.best_channel());
  const auto worst = kernels.channel(kernels.worst_channel());
  std::vector<double> ratio(worst.size(), 0.0);
  for (std::size_t l = 0; l < ratio.size(); ++l) {
    if (best[l] != 0.0) ratio[l] = worst[l] / best[l];
  }
  std::vector<Map> out;
  for (const auto& s : S_hat) out.push_back(synthesize(convolve(s, ratio), grid));
  return out;
}

std::string format_db(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace sdec::metrics

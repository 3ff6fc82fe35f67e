#include "sdec/baselines.hpp"

#include <cmath>
#include <random>

#include "sdec/errors.hpp"
#include "sdec/random.hpp"

namespace sdec::baselines {

Eigen::MatrixXd stack(const std::vector<Map>& maps) {
  if (maps.empty()) throw InvalidArgument("stack: no maps");
  Eigen::MatrixXd X(static_cast<Eigen::Index>(maps.size()), static_cast<Eigen::Index>(maps.front().size()));
  for (std::size_t r = 0; r < maps.size(); ++r) {
    if (maps[r].size() != maps.front().size()) throw InvalidArgument("stack: maps differ in size");
    X.row(static_cast<Eigen::Index>(r)) = Eigen::Map<const Eigen::RowVectorXd>(maps[r].raw().data(), static_cast<Eigen::Index>(maps[r].size()));
  }
  return X;
}

BaselineResult run_gmca(const Dataset& degraded, const SolverConfig& config) {
  SolverConfig cfg = config;
  cfg.deconvolve = false;
  cfg.strategy_wu = Strategy::constant;
  cfg.strategy_ref = Strategy::constant;
  cfg.c_wu = 0.0;
  cfg.c_ref = 0.0;
  cfg.use_mad = true;
  SolverResult r = solver::run_sdecgmca(degraded, cfg);
  BaselineResult out;
  out.A = std::move(r.A);
  out.S = std::move(r.S);
  out.iterations = static_cast<int>(r.trace.size() + r.final_trace.size());
  out.converged = r.converged;
  out.warnings = std::move(r.warnings);
  return out;
}

BaselineResult run_hals(const Eigen::MatrixXd& X_in, int n_s, std::uint64_t seed, const HalsOptions& opt) {
  if (n_s < 1) throw InvalidArgument("run_hals: n_s must be >= 1");
  if (X_in.rows() < 1 || X_in.cols() < 1) throw InvalidArgument("run_hals: empty data");
  if (opt.max_iters < 1 || !(opt.tol >= 0.0)) throw InvalidArgument("run_hals: bad options");
  BaselineResult out;
  const Eigen::MatrixXd X = X_in.cwiseMax(0.0);
  if ((X_in.array() < 0.0).any()) out.warnings.push_back("negative data clipped to zero");

  Rng rng(seed);
  std::uniform_real_distribution<double> unif;
  Eigen::MatrixXd A = Eigen::MatrixXd::NullaryExpr(X.rows(), n_s, [&] { return unif(rng); });
  A.colwise().normalize();
  Eigen::MatrixXd S = (A.transpose() * X).cwiseMax(0.0) / static_cast<double>(n_s);

  Eigen::MatrixXd R = X - A * S;
  double obj = R.squaredNorm();
  const double norm_x = X.squaredNorm();
  out.converged = false;
  for (int it = 1; it <= opt.max_iters; ++it) {
    for (int n = 0; n < n_s; ++n) {
      // Residual without component n, then exact block minimizations.
      R += A.col(n) * S.row(n);
      double a2 = A.col(n).squaredNorm();
      if (a2 == 0.0) {
        Eigen::Index p = 0;
        R.colwise().norm().maxCoeff(&p);
        A.col(n) = R.col(p).cwiseMax(0.0);
        a2 = A.col(n).squaredNorm();
        if (a2 == 0.0) {
          A.col(n).setConstant(1.0);
          a2 = static_cast<double>(A.rows());
        }
        out.warnings.push_back("sweep " + std::to_string(it) + ": component " + std::to_string(n) +
                               " reinitialized from the residual");
      }
      S.row(n) = (A.col(n).transpose() * R).cwiseMax(0.0) / a2;
      const double s2 = S.row(n).squaredNorm();
      if (s2 > 0.0) {
        A.col(n) = (R * S.row(n).transpose()).cwiseMax(0.0) / s2;
        const double an = A.col(n).norm();
        if (an > 0.0) {
          A.col(n) /= an;
          S.row(n) *= an;
        }
      }
      R -= A.col(n) * S.row(n);
    }
    const double next = R.squaredNorm();
    if (next > obj * (1.0 + 1e-12) + 1e-300) throw NumericalError("run_hals: objective increased");
    const double decrease = obj - next;
    obj = next;
    out.iterations = it;
    if (decrease <= opt.tol * std::max(obj, 1e-300) || obj <= 1e-30 * norm_x) {
      out.converged = true;
      break;
    }
  }
  for (int n = 0; n < n_s; ++n) {
    const double an = A.col(n).norm();
    if (an > 0.0) {
      A.col(n) /= an;
      S.row(n) *= an;
    }
  }
  out.A = A;
  for (Eigen::Index n = 0; n < S.rows(); ++n) {
    std::vector<double> v(static_cast<std::size_t>(S.cols()));
    for (Eigen::Index p = 0; p < S.cols(); ++p) v[static_cast<std::size_t>(p)] = S(n, p);
    out.S.emplace_back(std::move(v));
  }
  return out;
}

}  // namespace sdec::baselines

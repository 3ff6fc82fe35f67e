#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "sdec/errors.hpp"
#include "sdec/experiments.hpp"

using namespace sdec;
using namespace sdec::experiments;

namespace {

SimulationParams small() {
  SimulationParams p = desk_params();
  p.n_sources = 2;
  p.n_channels = 4;
  return p;
}

}  // namespace

TEST(Experiments, DeskDefaults) {
  const auto p = desk_params();
  EXPECT_EQ(p.n_side, 16);
  EXPECT_EQ(p.n_sources, 3);
  EXPECT_EQ(p.n_channels, 6);
  EXPECT_EQ(p.cutoff, 7);
  EXPECT_EQ(p.r_min, 5.0);
  EXPECT_EQ(p.snr_db, 10.0);
}

TEST(Experiments, MethodNames) {
  for (Method m : {Method::sdecgmca, Method::nonblind, Method::gmca, Method::hals, Method::oracle}) {
    EXPECT_EQ(parse_method(method_name(m)), m);
  }
  EXPECT_THROW(parse_method("ica"), InvalidArgument);
}

TEST(Experiments, LogGrid) {
  const auto v = CGrid{}.values();
  ASSERT_EQ(v.size(), 15u);
  EXPECT_DOUBLE_EQ(v.front(), 1e-4);
  EXPECT_NEAR(v.back(), 1e2, 1e-12);
  for (std::size_t i = 1; i < v.size(); ++i) EXPECT_NEAR(std::log10(v[i] / v[i - 1]), 6.0 / 14.0, 1e-12);
  EXPECT_EQ((CGrid{0.5, 0.5, 1}.values()), std::vector<double>{0.5});
}

TEST(Experiments, SetVariable) {
  SimulationParams p = desk_params();
  set_variable(p, "cond", 5.0);
  set_variable(p, "r_min", 11.0);
  set_variable(p, "n_c", 8.0);
  set_variable(p, "snr_db", -10.0);
  EXPECT_EQ(p.cond, 5.0);
  EXPECT_EQ(p.r_min, 11.0);
  EXPECT_EQ(p.n_channels, 8);
  EXPECT_EQ(p.snr_db, -10.0);
  EXPECT_THROW(set_variable(p, "n_side", 32.0), InvalidArgument);
}

TEST(Experiments, SolverConfigStrategies) {
  MethodSpec s;
  s.strategy = 2;
  const auto c = solver_config(s);
  EXPECT_EQ(c.strategy_wu, Strategy::spectral_radius);
  EXPECT_EQ(c.strategy_ref, Strategy::spectral_radius);
  s.strategy = 0;
  const auto d = solver_config(s);
  EXPECT_EQ(d.strategy_wu, Strategy::noise_bound);
  EXPECT_EQ(d.strategy_ref, Strategy::wiener);
}

TEST(Experiments, TrialDatasetsAreSeeded) {
  const auto a = trial_dataset(small(), 7, 0);
  const auto b = trial_dataset(small(), 7, 0);
  const auto c = trial_dataset(small(), 7, 1);
  EXPECT_EQ(a.X[0].raw(), b.X[0].raw());
  EXPECT_NE(a.X[0].raw(), c.X[0].raw());
}

TEST(Experiments, OracleOnNoiselessData) {
  SimulationParams p = small();
  p.snr_db = std::numeric_limits<double>::infinity();
  MethodSpec s;
  s.method = Method::oracle;
  s.oracle_grid = CGrid{1e-4, 1.0, 5};
  const auto out = run_method(trial_dataset(p, 1, 0), s, 0);
  ASSERT_TRUE(out.metrics.has_value());
  EXPECT_GT(out.metrics->nmse_db, 40.0);
  EXPECT_EQ(out.metrics->c_a_db, std::numeric_limits<double>::infinity());
}

TEST(Experiments, GridsearchNoiselessPicksSmallestC) {
  SimulationParams p = small();
  p.snr_db = std::numeric_limits<double>::infinity();
  MethodSpec s;
  s.method = Method::nonblind;
  s.strategy = 1;
  const std::vector<double> grid{1e-6, 1e-3, 1e-1, 1.0};
  const auto g = gridsearch(p, s, grid, 1, 3);
  ASSERT_EQ(g.rows.size(), grid.size());
  EXPECT_EQ(g.c_opt, 1e-6);
  EXPECT_EQ(g.best, 0u);
  const std::string csv = grid_csv(g);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "c,mean_nmse_db,mean_c_a_db,n_ok");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);
}

TEST(Experiments, CsvLayouts) {
  std::vector<TrialRow> rows(2);
  rows[0] = {0, "oracle", 0.5, std::numeric_limits<double>::infinity(), 20.0, 21.5, false, ""};
  rows[1] = {1, "oracle", 0.5, 0.0, 0.0, 0.0, true, "boom"};
  const std::string csv = metrics_csv(rows);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "trial,method,c_a_db,nmse_db,nmse_w_db");
  EXPECT_NE(csv.find("0,oracle,inf,20"), std::string::npos);
  EXPECT_NE(csv.find("1,oracle,failed"), std::string::npos);
  const auto s = summarize(rows);
  ASSERT_EQ(s.size(), 1u);
  EXPECT_EQ(s[0].n_ok, 1);
  EXPECT_EQ(s[0].mean_nmse_db, 20.0);
}

TEST(Experiments, SweepSharesTrialSeedsAndIsDeterministic) {
  MethodSpec s;
  s.method = Method::nonblind;
  s.strategy = 4;
  s.c_ref = 0.5;
  const auto a = sweep(small(), "snr_db", {0.0, 10.0}, {s}, 1, 11);
  const auto b = sweep(small(), "snr_db", {0.0, 10.0}, {s}, 1, 11);
  ASSERT_EQ(a.size(), 2u);
  EXPECT_EQ(sweep_csv(a), sweep_csv(b));
  EXPECT_LT(a[0].row.nmse_db, a[1].row.nmse_db);
}

TEST(Experiments, ParallelForCoversRange) {
  std::vector<int> hit(37, 0);
  parallel_for(37, [&](int i) { hit[static_cast<std::size_t>(i)] += 1; });
  for (int h : hit) EXPECT_EQ(h, 1);
  EXPECT_GE(worker_count(), 1);
}

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "sdec/io.hpp"
#include "sdec/model.hpp"
#include "test_util.hpp"

using namespace sdec;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("sdec_io_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST(Io, MapRoundTrip) {
  const auto dir = scratch("map");
  const SphereGrid grid(4);
  Map m(grid.n_pix());
  for (std::size_t p = 0; p < m.size(); ++p) m[p] = std::sin(1.0 + p) * 1e-7 + (p == 3 ? -0.0 : 0.0);
  m[5] = std::numeric_limits<double>::denorm_min();
  io::write_map(dir / "a.map", m, 4);
  int n_side = 0;
  const Map back = io::read_map(dir / "a.map", &n_side);
  EXPECT_EQ(n_side, 4);
  EXPECT_EQ(back.raw(), m.raw());
  EXPECT_THROW(io::write_map(dir / "b.map", m, 8), InvalidArgument);
  EXPECT_THROW(io::read_map(dir / "missing.map"), io::IoError);
  std::ofstream(dir / "junk.map") << "hello";
  EXPECT_THROW(io::read_map(dir / "junk.map"), io::IoError);
}

TEST(Io, CoefficientsAndMatrixRoundTrip) {
  const auto dir = scratch("coeffs");
  const auto c = sdec::testing::random_coeffs(9, 9, 4);
  io::write_coeffs_csv(dir / "c.csv", c);
  const auto back = io::read_coeffs_csv(dir / "c.csv");
  ASSERT_EQ(back.l_max(), 9);
  for (std::size_t i = 0; i < c.size(); ++i) EXPECT_EQ(back.data()[i], c.data()[i]);

  const MixingMatrix A = model::random_mixing(5, 3, 2.0, 1);
  io::write_matrix_csv(dir / "A.csv", A);
  EXPECT_EQ(io::read_matrix_csv(dir / "A.csv"), A);
  EXPECT_EQ(slurp(dir / "A.csv").substr(0, 9), "a0,a1,a2\n");
}

TEST(Io, KernelsRoundTrip) {
  const auto dir = scratch("kernels");
  KernelSet k;
  for (double r : {3.0, 7.5}) k.transfer.push_back(model::gaussian_kernel(r, 11));
  io::write_kernels_csv(dir / "k.csv", k);
  const auto back = io::read_kernels_csv(dir / "k.csv");
  EXPECT_EQ(back.transfer, k.transfer);
}

TEST(Io, FormatDouble) {
  EXPECT_EQ(io::format_double(0.1), "0.1");
  EXPECT_EQ(io::format_double(std::numeric_limits<double>::infinity()), "inf");
  EXPECT_EQ(io::format_double(-std::numeric_limits<double>::infinity()), "-inf");
  const double v = 1.0 / 3.0;
  EXPECT_EQ(std::stod(io::format_double(v)), v);
}

TEST(Io, ConfigJson) {
  const SolverConfig c = io::config_from_json(R"({"c_ref": 0.25, "K_max": 0.75, "nonneg_S": false, "N_wu": 40})");
  EXPECT_EQ(c.c_ref, 0.25);
  EXPECT_EQ(c.K_max, 0.75);
  EXPECT_FALSE(c.nonneg_S);
  EXPECT_EQ(c.N_wu, 40);
  EXPECT_EQ(c.k, 3.0);
  EXPECT_THROW(io::config_from_json(R"({"c_reff": 1})"), io::IoError);
  EXPECT_THROW(io::config_from_json("[1, 2]"), io::IoError);
  EXPECT_THROW(io::config_from_json("{"), io::IoError);
  const SolverConfig again = io::config_from_json(io::config_to_json(c));
  EXPECT_EQ(io::config_to_json(again), io::config_to_json(c));
}

TEST(Io, DatasetRoundTrip) {
  const auto dir = scratch("dataset");
  SimulationParams p;
  p.n_side = 8;
  p.n_sources = 2;
  p.n_channels = 3;
  p.seed = 6;
  const Dataset ds = model::simulate(p);
  io::write_dataset(dir, ds, p);
  for (const char* f : {"meta.json", "X_0.map", "X_2.map", "S_1.map", "S_0_alm.csv", "A.csv", "kernels.csv"}) {
    EXPECT_TRUE(fs::exists(dir / f)) << f;
  }
  const Dataset back = io::read_dataset(dir);
  EXPECT_EQ(back.grid.n_side(), 8);
  EXPECT_EQ(back.sigma2, ds.sigma2);
  ASSERT_EQ(back.n_channels(), 3);
  for (int nu = 0; nu < 3; ++nu) {
    EXPECT_EQ(back.X[nu].raw(), ds.X[nu].raw());
    EXPECT_LT(sdec::testing::rel_error(back.X_hat[nu], ds.X_hat[nu]), 1e-14);
  }
  EXPECT_EQ(back.kernels.transfer, ds.kernels.transfer);
  ASSERT_TRUE(back.truth.has_value());
  EXPECT_EQ(back.truth->A, ds.truth->A);

  // Byte-identical output for the same seed.
  const auto dir2 = scratch("dataset2");
  io::write_dataset(dir2, model::simulate(p), p);
  for (const auto& e : fs::directory_iterator(dir)) {
    EXPECT_EQ(slurp(e.path()), slurp(dir2 / e.path().filename())) << e.path().filename();
  }
}

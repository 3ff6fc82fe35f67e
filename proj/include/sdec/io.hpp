#pragma once

// On-disk formats: binary maps, CSV tables and JSON metadata / configs.

#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sdec/errors.hpp"
#include "sdec/model.hpp"
#include "sdec/regularize.hpp"
#include "sdec/solver.hpp"
#include "sdec/sphere.hpp"
#include "sdec/starlet.hpp"

namespace sdec::io {

namespace fs = std::filesystem;

class IoError : public Error {
 public:
  using Error::Error;
};

// "SDEC-MAP v1 n_side=<n>\n" followed by n_pix little-endian doubles.
void write_map(const fs::path& path, const Map& map, int n_side);
Map read_map(const fs::path& path, int* n_side = nullptr);
// One value per line, full precision.
void write_map_csv(const fs::path& path, const Map& map);

// Rows l,m,re,im for m >= 0.
void write_coeffs_csv(const fs::path& path, const HarmonicCoeffs& c);
HarmonicCoeffs read_coeffs_csv(const fs::path& path);

void write_filters_csv(const fs::path& path, const StarletFilters& f);  // j,l,value; coarse is j = J+1
void write_reg_csv(const fs::path& path, const RegParams& r);           // n,l,eps
void write_kernels_csv(const fs::path& path, const KernelSet& k);       // nu,l,value
KernelSet read_kernels_csv(const fs::path& path);

// Header row a0,a1,... then one row per channel.
void write_matrix_csv(const fs::path& path, const Eigen::MatrixXd& A, const std::string& prefix = "a");
Eigen::MatrixXd read_matrix_csv(const fs::path& path);

// iter,stage,c,K,rel_change
void write_diagnostics(const fs::path& path, const std::vector<IterationRecord>& trace);

// Keys are the SolverConfig field names; unknown keys are rejected.
SolverConfig config_from_json(const std::string& text, SolverConfig base = {});
SolverConfig load_config(const fs::path& path, SolverConfig base = {});
std::string config_to_json(const SolverConfig& cfg);

// Dataset directory: meta.json, X_<nu>.map, S_<n>.map, S_<n>_alm.csv, A.csv, kernels.csv.
void write_dataset(const fs::path& dir, const Dataset& ds, const SimulationParams& params);
Dataset read_dataset(const fs::path& dir);

// Shortest round-trip decimal text of a double.
std::string format_double(double v);

}  // namespace sdec::io

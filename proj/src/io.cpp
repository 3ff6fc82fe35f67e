#include "sdec/io.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

namespace sdec::io {

namespace {

using json = nlohmann::json;

std::ofstream open_out(const fs::path& path, bool binary = false) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

std::ifstream open_in(const fs::path& path, bool binary = false) {
  std::ifstream in(path, binary ? std::ios::binary : std::ios::in);
  if (!in) throw IoError("cannot read " + path.string());
  return in;
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  return out;
}

double parse_double(const std::string& s, const fs::path& where) {
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  double v = 0.0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) throw IoError(where.string() + ": bad number '" + s + "'");
  return v;
}

// Rows of a CSV file with a header line, parsed as doubles.
std::vector<std::vector<double>> read_table(const fs::path& path, std::size_t columns) {
  auto in = open_in(path);
  std::string line;
  if (!std::getline(in, line)) throw IoError(path.string() + ": empty file");
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split(line);
    if (columns && cells.size() != columns) throw IoError(path.string() + ": expected " + std::to_string(columns) + " columns");
    std::vector<double> row;
    for (const auto& c : cells) row.push_back(parse_double(c, path));
    rows.push_back(std::move(row));
  }
  return rows;
}

const char* kMapMagic = "SDEC-MAP v1 n_side=";

Strategy strategy_from(int id) {
  if (id < 1 || id > 4) throw InvalidArgument("strategy id must be 1..4");
  return static_cast<Strategy>(id);
}

}  // namespace

std::string format_double(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

void write_map(const fs::path& path, const Map& map, int n_side) {
  if (map.size() != 12ULL * static_cast<std::size_t>(n_side) * static_cast<std::size_t>(n_side)) {
    throw InvalidArgument("write_map: map size does not match n_side");
  }
  auto out = open_out(path, true);
  out << kMapMagic << n_side << '\n';
  for (double v : map.raw()) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    char bytes[8];
    for (int b = 0; b < 8; ++b) bytes[b] = static_cast<char>((bits >> (8 * b)) & 0xFF);
    out.write(bytes, 8);
  }
  if (!out) throw IoError("write failed: " + path.string());
}

Map read_map(const fs::path& path, int* n_side_out) {
  auto in = open_in(path, true);
  std::string header;
  std::getline(in, header);
  const std::string magic = kMapMagic;
  if (header.rfind(magic, 0) != 0) throw IoError(path.string() + ": not an SDEC map");
  int n_side = 0;
  const auto* b = header.data() + magic.size();
  const auto r = std::from_chars(b, header.data() + header.size(), n_side);
  if (r.ec != std::errc() || n_side < 1) throw IoError(path.string() + ": bad n_side");
  const std::size_t n_pix = 12ULL * static_cast<std::size_t>(n_side) * static_cast<std::size_t>(n_side);
  std::vector<double> v(n_pix);
  for (auto& x : v) {
    char bytes[8];
    if (!in.read(bytes, 8)) throw IoError(path.string() + ": truncated map");
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[b])) << (8 * b);
    x = std::bit_cast<double>(bits);
  }
  if (n_side_out) *n_side_out = n_side;
  return Map(std::move(v));
}

void write_map_csv(const fs::path& path, const Map& map) {
  auto out = open_out(path);
  out << "value\n";
  for (double v : map.raw()) out << format_double(v) << '\n';
}

void write_coeffs_csv(const fs::path& path, const HarmonicCoeffs& c) {
  auto out = open_out(path);
  out << "l,m,re,im\n";
  const int L = c.l_max();
  for (int l = 0; l <= L; ++l) {
    for (int m = 0; m <= l; ++m) {
      const auto z = c(l, m);
      out << l << ',' << m << ',' << format_double(z.real()) << ',' << format_double(z.imag()) << '\n';
    }
  }
}

HarmonicCoeffs read_coeffs_csv(const fs::path& path) {
  const auto rows = read_table(path, 4);
  int L = -1;
  for (const auto& r : rows) L = std::max(L, static_cast<int>(r[0]));
  if (L < 0) throw IoError(path.string() + ": no coefficients");
  HarmonicCoeffs c(L);
  for (const auto& r : rows) {
    const int l = static_cast<int>(r[0]);
    const int m = static_cast<int>(r[1]);
    if (l < 0 || m < 0 || m > l) throw IoError(path.string() + ": bad (l, m)");
    c(l, m) = {r[2], r[3]};
  }
  return c;
}

void write_filters_csv(const fs::path& path, const StarletFilters& f) {
  auto out = open_out(path);
  out << "j,l,value\n";
  for (int j = 0; j < f.n_scales(); ++j) {
    for (int l = 0; l <= f.l_max; ++l) out << j + 1 << ',' << l << ',' << format_double(f.detail[static_cast<std::size_t>(j)][static_cast<std::size_t>(l)]) << '\n';
  }
  for (int l = 0; l <= f.l_max; ++l) out << f.n_scales() + 1 << ',' << l << ',' << format_double(f.coarse[static_cast<std::size_t>(l)]) << '\n';
}

void write_reg_csv(const fs::path& path, const RegParams& r) {
  auto out = open_out(path);
  out << "n,l,eps\n";
  for (int n = 0; n < r.n_sources(); ++n) {
    for (int l = 0; l <= r.l_max(); ++l) out << n << ',' << l << ',' << format_double(r(n, l)) << '\n';
  }
}

void write_kernels_csv(const fs::path& path, const KernelSet& k) {
  auto out = open_out(path);
  out << "nu,l,value\n";
  for (int nu = 0; nu < k.n_channels(); ++nu) {
    const auto h = k.channel(nu);
    for (std::size_t l = 0; l < h.size(); ++l) out << nu << ',' << l << ',' << format_double(h[l]) << '\n';
  }
}

KernelSet read_kernels_csv(const fs::path& path) {
  const auto rows = read_table(path, 3);
  std::map<int, std::map<int, double>> byc;
  for (const auto& r : rows) byc[static_cast<int>(r[0])][static_cast<int>(r[1])] = r[2];
  KernelSet k;
  int expect = 0;
  for (const auto& [nu, ls] : byc) {
    if (nu != expect++) throw IoError(path.string() + ": channels must be numbered 0..N_c-1");
    std::vector<double> h;
    int el = 0;
    for (const auto& [l, v] : ls) {
      if (l != el++) throw IoError(path.string() + ": degrees must be contiguous from 0");
      h.push_back(v);
    }
    if (!k.transfer.empty() && h.size() != k.transfer.front().size()) throw IoError(path.string() + ": ragged kernels");
    k.transfer.push_back(std::move(h));
  }
  return k;
}

void write_matrix_csv(const fs::path& path, const Eigen::MatrixXd& A, const std::string& prefix) {
  auto out = open_out(path);
  for (Eigen::Index c = 0; c < A.cols(); ++c) out << (c ? "," : "") << prefix << c;
  out << '\n';
  for (Eigen::Index r = 0; r < A.rows(); ++r) {
    for (Eigen::Index c = 0; c < A.cols(); ++c) out << (c ? "," : "") << format_double(A(r, c));
    out << '\n';
  }
}

Eigen::MatrixXd read_matrix_csv(const fs::path& path) {
  const auto rows = read_table(path, 0);
  if (rows.empty()) throw IoError(path.string() + ": no rows");
  Eigen::MatrixXd A(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != rows.front().size()) throw IoError(path.string() + ": ragged matrix");
    for (std::size_t c = 0; c < rows[r].size(); ++c) A(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
  }
  return A;
}

void write_diagnostics(const fs::path& path, const std::vector<IterationRecord>& trace) {
  auto out = open_out(path);
  out << "iter,stage,c,K,rel_change\n";
  for (const auto& r : trace) {
    out << r.iter << ',' << stage_name(r.stage) << ',' << format_double(r.c) << ',' << format_double(r.K) << ','
        << format_double(r.rel_change) << '\n';
  }
}

SolverConfig config_from_json(const std::string& text, SolverConfig cfg) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw IoError(std::string("config: ") + e.what());
  }
  if (!j.is_object()) throw IoError("config: expected a JSON object");
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "n_s") cfg.n_s = v.get<int>();
      else if (key == "c_wu") cfg.c_wu = v.get<double>();
      else if (key == "c_ref") cfg.c_ref = v.get<double>();
      else if (key == "k") cfg.k = v.get<double>();
      else if (key == "K_max") cfg.K_max = v.get<double>();
      else if (key == "J") cfg.J = v.get<int>();
      else if (key == "N_wu") cfg.N_wu = v.get<int>();
      else if (key == "eps_wu") cfg.eps_wu = v.get<double>();
      else if (key == "eps_ref") cfg.eps_ref = v.get<double>();
      else if (key == "max_iter_wu") cfg.max_iter_wu = v.get<int>();
      else if (key == "max_iter_ref") cfg.max_iter_ref = v.get<int>();
      else if (key == "nonneg_S") cfg.nonneg_S = v.get<bool>();
      else if (key == "nonneg_A") cfg.nonneg_A = v.get<bool>();
      else if (key == "sigma2") cfg.sigma2 = v.get<double>();
      else if (key == "use_mad") cfg.use_mad = v.get<bool>();
      else if (key == "strategy_wu") cfg.strategy_wu = strategy_from(v.get<int>());
      else if (key == "strategy_ref") cfg.strategy_ref = strategy_from(v.get<int>());
      else if (key == "deconvolve") cfg.deconvolve = v.get<bool>();
      else if (key == "run_final") cfg.run_final = v.get<bool>();
      else throw IoError("config: unknown key '" + key + "'");
    }
  } catch (const json::type_error& e) {
    throw IoError(std::string("config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

SolverConfig load_config(const fs::path& path, SolverConfig base) {
  auto in = open_in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return config_from_json(ss.str(), base);
}

std::string config_to_json(const SolverConfig& c) {
  json j = {{"n_s", c.n_s},
            {"c_wu", c.c_wu},
            {"c_ref", c.c_ref},
            {"k", c.k},
            {"K_max", c.K_max},
            {"J", c.J},
            {"N_wu", c.N_wu},
            {"eps_wu", c.eps_wu},
            {"eps_ref", c.eps_ref},
            {"max_iter_wu", c.max_iter_wu},
            {"max_iter_ref", c.max_iter_ref},
            {"nonneg_S", c.nonneg_S},
            {"nonneg_A", c.nonneg_A},
            {"sigma2", c.sigma2},
            {"use_mad", c.use_mad},
            {"strategy_wu", static_cast<int>(c.strategy_wu)},
            {"strategy_ref", static_cast<int>(c.strategy_ref)},
            {"deconvolve", c.deconvolve},
            {"run_final", c.run_final}};
  return j.dump(2);
}

void write_dataset(const fs::path& dir, const Dataset& ds, const SimulationParams& p) {
  fs::create_directories(dir);
  const int n_side = ds.grid.n_side();
  json meta = {{"format", "sdec-dataset v1"},
               {"n_side", n_side},
               {"l_max", ds.l_max()},
               {"n_channels", ds.n_channels()},
               {"sigma2", ds.sigma2},
               {"resolutions", ds.kernels.resolution},
               {"params",
                {{"n_sources", p.n_sources},
                 {"n_channels", p.n_channels},
                 {"cond", p.cond},
                 {"r_min", p.r_min},
                 {"snr_db", std::isinf(p.snr_db) ? json("inf") : json(p.snr_db)},
                 {"n_side", p.n_side},
                 {"cutoff", p.cutoff},
                 {"sparsity", p.sparsity},
                 {"n_scales", p.n_scales},
                 {"analysis_iters", p.analysis_iters},
                 {"seed", p.seed}}}};
  if (ds.truth) {
    meta["n_sources"] = ds.truth->A.cols();
    meta["seeds"] = {{"base", p.seed}};
  }
  auto out = open_out(dir / "meta.json");
  out << meta.dump(2) << '\n';
  for (int nu = 0; nu < ds.n_channels(); ++nu) write_map(dir / ("X_" + std::to_string(nu) + ".map"), ds.X[static_cast<std::size_t>(nu)], n_side);
  write_kernels_csv(dir / "kernels.csv", ds.kernels);
  if (ds.truth) {
    write_matrix_csv(dir / "A.csv", ds.truth->A);
    for (std::size_t n = 0; n < ds.truth->S.size(); ++n) {
      write_map(dir / ("S_" + std::to_string(n) + ".map"), ds.truth->S[n], n_side);
      write_coeffs_csv(dir / ("S_" + std::to_string(n) + "_alm.csv"), ds.truth->S_hat[n]);
    }
  }
}

Dataset read_dataset(const fs::path& dir) {
  json meta;
  try {
    auto in = open_in(dir / "meta.json");
    meta = json::parse(in);
  } catch (const json::exception& e) {
    throw IoError((dir / "meta.json").string() + ": " + e.what());
  }
  Dataset ds;
  int analysis_iters = 3;
  try {
    ds.grid = SphereGrid(meta.at("n_side").get<int>());
    ds.sigma2 = meta.at("sigma2").get<double>();
    if (meta.contains("params")) analysis_iters = meta["params"].value("analysis_iters", 3);
    const int n_c = meta.at("n_channels").get<int>();
    for (int nu = 0; nu < n_c; ++nu) {
      int n_side = 0;
      ds.X.push_back(read_map(dir / ("X_" + std::to_string(nu) + ".map"), &n_side));
      if (n_side != ds.grid.n_side()) throw IoError("X_" + std::to_string(nu) + ".map: n_side mismatch");
      ds.X_hat.push_back(analyze(ds.X.back(), ds.grid, analysis_iters));
    }
    ds.kernels = read_kernels_csv(dir / "kernels.csv");
    if (meta.contains("resolutions")) ds.kernels.resolution = meta["resolutions"].get<std::vector<double>>();
    if (fs::exists(dir / "A.csv")) {
      GroundTruth t;
      t.A = read_matrix_csv(dir / "A.csv");
      for (Eigen::Index n = 0; n < t.A.cols(); ++n) {
        const auto base = "S_" + std::to_string(n);
        t.S.push_back(read_map(dir / (base + ".map")));
        const auto alm = dir / (base + "_alm.csv");
        t.S_hat.push_back(fs::exists(alm) ? read_coeffs_csv(alm) : analyze(t.S.back(), ds.grid, 3));
      }
      ds.truth = std::move(t);
    }
  } catch (const json::exception& e) {
    throw IoError((dir / "meta.json").string() + ": " + e.what());
  }
  if (ds.kernels.n_channels() != ds.n_channels() || ds.kernels.l_max() != ds.l_max()) {
    throw IoError(dir.string() + ": kernels.csv does not match the maps");
  }
  return ds;
}

}  // namespace sdec::io

#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "sdec/baselines.hpp"
#include "sdec/errors.hpp"
#include "sdec/metrics.hpp"
#include "sdec/model.hpp"
#include "sdec/regularize.hpp"
#include "sdec/solver.hpp"
#include "sdec/sphere.hpp"
#include "sdec/starlet.hpp"

namespace py = pybind11;
using namespace sdec;

namespace {

using RealArray = py::array_t<double, py::array::c_style | py::array::forcecast>;
using ComplexArray = py::array_t<std::complex<double>, py::array::c_style | py::array::forcecast>;

py::array_t<double> to_numpy(const Map& m) {
  py::array_t<double> out(static_cast<py::ssize_t>(m.size()));
  std::copy(m.raw().begin(), m.raw().end(), out.mutable_data());
  return out;
}

// Rows are maps.
py::array_t<double> to_numpy(const std::vector<Map>& maps) {
  const py::ssize_t n = static_cast<py::ssize_t>(maps.size());
  const py::ssize_t p = n ? static_cast<py::ssize_t>(maps.front().size()) : 0;
  py::array_t<double> out({n, p});
  for (py::ssize_t i = 0; i < n; ++i) std::copy(maps[i].raw().begin(), maps[i].raw().end(), out.mutable_data(i, 0));
  return out;
}

Map to_map(const RealArray& a) {
  if (a.ndim() != 1) throw InvalidArgument("expected a 1-d pixel array");
  return Map(std::vector<double>(a.data(), a.data() + a.size()));
}

std::vector<Map> to_maps(const RealArray& a) {
  if (a.ndim() != 2) throw InvalidArgument("expected a 2-d array with one map per row");
  std::vector<Map> out;
  for (py::ssize_t i = 0; i < a.shape(0); ++i) out.emplace_back(std::vector<double>(a.data(i, 0), a.data(i, 0) + a.shape(1)));
  return out;
}

py::array_t<std::complex<double>> to_numpy(const HarmonicCoeffs& c) {
  py::array_t<std::complex<double>> out(static_cast<py::ssize_t>(c.size()));
  std::copy(c.data().begin(), c.data().end(), out.mutable_data());
  return out;
}

HarmonicCoeffs to_coeffs(const ComplexArray& a, int l_max) {
  HarmonicCoeffs c(l_max);
  if (static_cast<std::size_t>(a.size()) != c.size()) throw InvalidArgument("coefficient array does not match l_max");
  std::copy(a.data(), a.data() + a.size(), c.data().begin());
  return c;
}

py::dict trace_dict(const std::vector<IterationRecord>& trace) {
  std::vector<int> iter;
  std::vector<std::string> stage;
  std::vector<double> c, K, rel;
  for (const auto& r : trace) {
    iter.push_back(r.iter);
    stage.emplace_back(stage_name(r.stage));
    c.push_back(r.c);
    K.push_back(r.K);
    rel.push_back(r.rel_change);
  }
  py::dict d;
  d["iter"] = iter;
  d["stage"] = stage;
  d["c"] = c;
  d["K"] = K;
  d["rel_change"] = rel;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Joint deconvolution and sparse blind source separation on HEALPix maps";

  py::register_exception<Error>(m, "SdecError", PyExc_RuntimeError);
  py::register_exception<InvalidArgument>(m, "InvalidArgument", PyExc_ValueError);
  py::register_exception<SingularSystem>(m, "SingularSystem", PyExc_ArithmeticError);

  py::class_<SphereGrid>(m, "SphereGrid")
      .def(py::init<int>(), py::arg("n_side"))
      .def_property_readonly("n_side", &SphereGrid::n_side)
      .def_property_readonly("n_pix", &SphereGrid::n_pix)
      .def_property_readonly("l_max", &SphereGrid::l_max)
      .def("pixel_center", &SphereGrid::pixel_center);

  m.def(
      "analyze",
      [](const RealArray& map, const SphereGrid& grid, int refine_iters, int l_max) {
        return to_numpy(analyze(to_map(map), grid, refine_iters, l_max));
      },
      py::arg("map"), py::arg("grid"), py::arg("refine_iters") = 0, py::arg("l_max") = -1,
      "Packed m-major coefficients (m >= 0).");
  m.def(
      "synthesize",
      [](const ComplexArray& coeffs, int l_max, const SphereGrid& grid) {
        return to_numpy(synthesize(to_coeffs(coeffs, l_max), grid));
      },
      py::arg("coeffs"), py::arg("l_max"), py::arg("grid"));
  m.def("coeff_index", &HarmonicCoeffs::index, py::arg("l"), py::arg("m"), py::arg("l_max"));
  m.def(
      "power_spectrum",
      [](const ComplexArray& coeffs, int l_max) { return power_spectrum(to_coeffs(coeffs, l_max)).cl; },
      py::arg("coeffs"), py::arg("l_max"));

  m.def(
      "starlet_filters",
      [](int l_max, int n_scales) {
        const auto f = starlet::build_filters(l_max, n_scales);
        return py::make_tuple(f.detail, f.coarse);
      },
      py::arg("l_max"), py::arg("n_scales") = 3, "(detail[j][l], coarse[l])");

  m.def("gaussian_kernel", &model::gaussian_kernel, py::arg("resolution"), py::arg("l_max"));
  m.def("random_mixing", &model::random_mixing, py::arg("n_channels"), py::arg("n_sources"), py::arg("cond"),
        py::arg("seed"));

  py::class_<SimulationParams>(m, "SimulationParams")
      .def(py::init<>())
      .def_readwrite("n_sources", &SimulationParams::n_sources)
      .def_readwrite("n_channels", &SimulationParams::n_channels)
      .def_readwrite("cond", &SimulationParams::cond)
      .def_readwrite("r_min", &SimulationParams::r_min)
      .def_readwrite("snr_db", &SimulationParams::snr_db)
      .def_readwrite("n_side", &SimulationParams::n_side)
      .def_readwrite("cutoff", &SimulationParams::cutoff)
      .def_readwrite("sparsity", &SimulationParams::sparsity)
      .def_readwrite("n_scales", &SimulationParams::n_scales)
      .def_readwrite("analysis_iters", &SimulationParams::analysis_iters)
      .def_readwrite("seed", &SimulationParams::seed);

  py::class_<Dataset>(m, "Dataset")
      .def_property_readonly("n_side", [](const Dataset& d) { return d.grid.n_side(); })
      .def_property_readonly("grid", [](const Dataset& d) { return d.grid; })
      .def_property_readonly("X", [](const Dataset& d) { return to_numpy(d.X); })
      .def_property_readonly("kernels", [](const Dataset& d) { return d.kernels.transfer; })
      .def_property_readonly("resolutions", [](const Dataset& d) { return d.kernels.resolution; })
      .def_property_readonly("sigma2", [](const Dataset& d) { return d.sigma2; })
      .def_property_readonly("A", [](const Dataset& d) -> py::object {
        return d.truth ? py::cast(d.truth->A) : py::none();
      })
      .def_property_readonly("S", [](const Dataset& d) -> py::object {
        return d.truth ? py::object(to_numpy(d.truth->S)) : py::none();
      });

  m.def("simulate", &model::simulate, py::arg("params"));
  m.def("degrade_to_worst", &model::degrade_to_worst, py::arg("dataset"));

  py::enum_<Strategy>(m, "Strategy")
      .value("constant", Strategy::constant)
      .value("spectral_radius", Strategy::spectral_radius)
      .value("noise_bound", Strategy::noise_bound)
      .value("wiener", Strategy::wiener);

  py::class_<SolverConfig>(m, "SolverConfig")
      .def(py::init<>())
      .def_readwrite("n_s", &SolverConfig::n_s)
      .def_readwrite("c_wu", &SolverConfig::c_wu)
      .def_readwrite("c_ref", &SolverConfig::c_ref)
      .def_readwrite("k", &SolverConfig::k)
      .def_readwrite("K_max", &SolverConfig::K_max)
      .def_readwrite("J", &SolverConfig::J)
      .def_readwrite("N_wu", &SolverConfig::N_wu)
      .def_readwrite("eps_wu", &SolverConfig::eps_wu)
      .def_readwrite("eps_ref", &SolverConfig::eps_ref)
      .def_readwrite("max_iter_wu", &SolverConfig::max_iter_wu)
      .def_readwrite("max_iter_ref", &SolverConfig::max_iter_ref)
      .def_readwrite("nonneg_S", &SolverConfig::nonneg_S)
      .def_readwrite("nonneg_A", &SolverConfig::nonneg_A)
      .def_readwrite("sigma2", &SolverConfig::sigma2)
      .def_readwrite("use_mad", &SolverConfig::use_mad)
      .def_readwrite("strategy_wu", &SolverConfig::strategy_wu)
      .def_readwrite("strategy_ref", &SolverConfig::strategy_ref)
      .def_readwrite("deconvolve", &SolverConfig::deconvolve)
      .def_readwrite("run_final", &SolverConfig::run_final)
      .def("validate", &SolverConfig::validate);

  m.def(
      "run_sdecgmca",
      [](const Dataset& ds, const SolverConfig& cfg) {
        SolverResult r;
        {
          py::gil_scoped_release release;
          r = solver::run_sdecgmca(ds, cfg);
        }
        py::dict d;
        d["A"] = r.A;
        d["S"] = to_numpy(r.S);
        d["trace"] = trace_dict(r.trace);
        d["final_trace"] = trace_dict(r.final_trace);
        d["converged"] = r.converged;
        d["warnings"] = r.warnings;
        return d;
      },
      py::arg("dataset"), py::arg("config") = SolverConfig{});

  m.def(
      "run_nonblind",
      [](const Dataset& ds, const Eigen::MatrixXd& A, Strategy strategy, double c, const SolverConfig& cfg) {
        solver::NonblindResult r;
        {
          py::gil_scoped_release release;
          r = solver::run_nonblind(ds, A, strategy, c, cfg);
        }
        return py::make_tuple(to_numpy(r.S), r.iterations, r.converged);
      },
      py::arg("dataset"), py::arg("A"), py::arg("strategy"), py::arg("c"), py::arg("config") = SolverConfig{});

  m.def(
      "run_gmca",
      [](const Dataset& degraded, const SolverConfig& cfg) {
        BaselineResult r;
        {
          py::gil_scoped_release release;
          r = baselines::run_gmca(degraded, cfg);
        }
        return py::make_tuple(r.A, to_numpy(r.S));
      },
      py::arg("degraded"), py::arg("config") = SolverConfig{});

  m.def(
      "run_hals",
      [](const Eigen::MatrixXd& X, int n_s, std::uint64_t seed, int max_iters, double tol) {
        const auto r = baselines::run_hals(X, n_s, seed, {max_iters, tol});
        return py::make_tuple(r.A, to_numpy(r.S), r.iterations);
      },
      py::arg("X"), py::arg("n_s"), py::arg("seed") = 0, py::arg("max_iters") = 500, py::arg("tol") = 1e-6);

  m.def(
      "reg_strategy",
      [](Strategy s, double c, const Eigen::MatrixXd& A, const std::vector<std::vector<double>>& kernels,
         const std::vector<std::vector<double>>& source_spectra, const std::vector<double>& noise_spectrum) {
        KernelSet k;
        k.transfer = kernels;
        std::vector<PowerSpectrum> ss;
        for (const auto& v : source_spectra) ss.push_back(PowerSpectrum{v});
        return solver::make_reg(s, c, A, k, ss, PowerSpectrum{noise_spectrum}).eps;
      },
      py::arg("strategy"), py::arg("c"), py::arg("A"), py::arg("kernels"),
      py::arg("source_spectra") = std::vector<std::vector<double>>{},
      py::arg("noise_spectrum") = std::vector<double>{}, "eps[n, l]");

  m.def("soft_threshold", &solver::soft_threshold, py::arg("x"), py::arg("threshold"));
  m.def(
      "support_threshold",
      [](const std::vector<double>& coeffs, double k_sigma, double K) {
        const Bands b{{Map(coeffs)}};
        return solver::compute_thresholds(b, Eigen::MatrixXd::Constant(1, 1, k_sigma), 1.0, K).base(0, 0);
      },
      py::arg("coeffs"), py::arg("k_sigma"), py::arg("K"));

  m.def(
      "nmse",
      [](const RealArray& S_star, const RealArray& S) { return metrics::nmse(to_maps(S_star), to_maps(S)); },
      py::arg("S_star"), py::arg("S"));
  m.def("c_a", &metrics::c_a, py::arg("A_star"), py::arg("A"));
  m.def(
      "align",
      [](const Eigen::MatrixXd& A_star, const Eigen::MatrixXd& A) {
        const auto al = metrics::align(A_star, A);
        return py::make_tuple(al.permutation, al.signs);
      },
      py::arg("A_star"), py::arg("A"), "(permutation, signs): estimate column permutation[i] matches true column i");
}

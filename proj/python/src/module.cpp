// Python bindings. Arrays cross as numpy: samples are (N, L) complex, stacks
// are (N, rows, cols) complex64, rasters are (bands, rows, cols) float64.
#include <pybind11/complex.h>
#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cstring>

#include "s2s/acaf.hpp"
#include "s2s/ces.hpp"
#include "s2s/cgg.hpp"
#include "s2s/config.hpp"
#include "s2s/errors.hpp"
#include "s2s/io.hpp"
#include "s2s/phase_linking.hpp"
#include "s2s/pipeline.hpp"
#include "s2s/simulation.hpp"

namespace py = pybind11;
using namespace s2s;

namespace {

using StackArray = py::array_t<std::complex<float>, py::array::c_style | py::array::forcecast>;
using RealArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

py::array_t<std::complex<float>> stack_to_numpy(const SlcStack& s) {
  py::array_t<std::complex<float>> a({s.n_acquisitions, s.rows, s.cols});
  std::memcpy(a.mutable_data(), s.data.data(), s.data.size() * sizeof(s.data[0]));
  return a;
}

SlcStack stack_from_numpy(const StackArray& a) {
  if (a.ndim() != 3) throw InvalidArgument("stack must have shape (N, rows, cols)");
  SlcStack s(int(a.shape(0)), int(a.shape(1)), int(a.shape(2)));
  std::memcpy(s.data.data(), a.data(), s.data.size() * sizeof(s.data[0]));
  return s;
}

py::array_t<double> raster_to_numpy(const Raster& r) {
  py::array_t<double> a({r.bands, r.rows, r.cols});
  std::memcpy(a.mutable_data(), r.data.data(), r.data.size() * sizeof(double));
  return a;
}

Raster raster_from_numpy(const RealArray& a) {
  if (a.ndim() != 3) throw InvalidArgument("raster must have shape (bands, rows, cols)");
  Raster r(int(a.shape(0)), int(a.shape(1)), int(a.shape(2)));
  std::memcpy(r.data.data(), a.data(), r.data.size() * sizeof(double));
  return r;
}

Config config_from(const std::string& json, bool paper_scale) {
  return json.empty() ? default_config(paper_scale) : parse_config(json, paper_scale);
}

py::dict link_result(const PhaseLinkResult& r) {
  py::dict d;
  d["theta"] = r.theta;
  d["iterations"] = r.iterations;
  d["converged"] = r.converged;
  d["informative"] = r.informative;
  d["objective"] = r.objective;
  d["gradient_norm"] = r.gradient_norm;
  d["objective_trace"] = r.objective_trace;
  d["magnitude_shrinkage"] = r.magnitude_shrinkage;
  return d;
}

}  // namespace

PYBIND11_MODULE(_s2s, m) {
  m.doc() = "SHP selection, CGG coherence estimation and phase linking";

  py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<InvalidArgument>(m, "InvalidArgument", PyExc_ValueError);
  py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);

  // --- estimators ---------------------------------------------------------
  m.def(
      "tyler",
      [](const CMatrix& samples, double tol, int max_iter) {
        const TylerFit f = tyler_fit(samples, {tol, max_iter});
        py::dict d;
        d["shape"] = f.shape.matrix();
        d["iterations"] = f.iterations;
        d["converged"] = f.converged;
        return d;
      },
      py::arg("samples"), py::arg("tol") = 1e-6, py::arg("max_iter") = 100,
      "Tyler shape estimate (trace N) of the columns of `samples`.");

  m.def(
      "estimate_cgg",
      [](const CMatrix& samples, double s_min, double s_max) {
        CggOptions o;
        o.search.s_min = s_min;
        o.search.s_max = s_max;
        const CggFit f = estimate_cgg(samples, o);
        py::dict d;
        d["s"] = f.s;
        d["scatter"] = f.scatter;
        d["iterations"] = f.iterations;
        d["converged"] = f.converged;
        d["log_likelihood"] = f.log_likelihood;
        d["s_at_bound"] = f.s_at_bound;
        return d;
      },
      py::arg("samples"), py::arg("s_min") = 0.01, py::arg("s_max") = 10.0,
      "Joint maximum-likelihood shape s and scatter of a CGG sample.");

  m.def("cgg_log_pdf", &cgg_log_pdf, py::arg("z"), py::arg("scatter"), py::arg("s"));

  m.def(
      "coherence",
      [](const CMatrix& scatter) { return normalize_to_coherence(scatter).matrix(); }, py::arg("scatter"),
      "Unit-diagonal coherence matrix of a scatter matrix.");

  // --- phase linking ------------------------------------------------------
  m.def(
      "cfpl", [](const CMatrix& gamma) { return link_result(cfpl_phases(CoherenceMatrix::from_matrix(gamma))); },
      py::arg("gamma"));
  m.def(
      "pta", [](const CMatrix& gamma) { return link_result(pta_phases(CoherenceMatrix::from_matrix(gamma))); },
      py::arg("gamma"));
  m.def(
      "cgg_mle",
      [](const CMatrix& samples, const RMatrix& g, double s, std::optional<RVector> init) {
        return link_result(cgg_mle_phases(samples, g, s, init ? *init : RVector::Zero(samples.rows())));
      },
      py::arg("samples"), py::arg("magnitudes"), py::arg("s"), py::arg("init") = py::none());

  // --- selection ----------------------------------------------------------
  m.def(
      "select_sshp",
      [](const CMatrix& vectors, int rows, int cols, int ref_index, double alpha, std::uint64_t seed) {
        WindowSamples w{vectors, rows, cols, ref_index};
        AcafConfig cfg;
        cfg.alpha = alpha;
        Rng rng = make_stream(seed);
        const SSHPMask mask = select_sshp(w, cfg, rng);
        py::array_t<std::uint8_t> sel({rows, cols});
        std::memcpy(sel.mutable_data(), mask.selected.data(), mask.selected.size());
        py::dict d;
        d["mask"] = sel;
        d["size"] = mask.final_size;
        d["reversals"] = mask.reversals;
        d["fallback"] = mask.fallback_triggered;
        d["mean_coherence"] = mask.mean_coherence;
        return d;
      },
      py::arg("vectors"), py::arg("rows"), py::arg("cols"), py::arg("ref_index"), py::arg("alpha") = 0.05,
      py::arg("seed") = 1, "ACAF selection on a window whose pixels are the columns of `vectors` (row-major).");

  // --- scenes, pipeline, I/O ----------------------------------------------
  m.def("default_config", [](bool paper_scale) { return dump_config(default_config(paper_scale)); },
        py::arg("paper_scale") = false, "Every default setting as JSON text.");

  m.def(
      "simulate",
      [](const std::string& config, bool paper_scale) {
        const Config c = config_from(config, paper_scale);
        c.scene.validate();
        Scene scene;
        {
          py::gil_scoped_release release;
          scene = gen_scene(c.scene);
        }
        py::array_t<int> labels({c.scene.rows, c.scene.cols});
        std::memcpy(labels.mutable_data(), scene.truth.labels.data(), scene.truth.labels.size() * sizeof(int));
        return py::make_tuple(stack_to_numpy(scene.stack), raster_to_numpy(scene.truth.phases), labels);
      },
      py::arg("config") = "", py::arg("paper_scale") = false,
      "Returns (stack, true phases, labels) for the scene in the JSON config.");

  m.def(
      "run_pipeline",
      [](const StackArray& stack, const std::string& config) {
        const Config c = config_from(config, false);
        c.pipeline.validate();
        const SlcStack s = stack_from_numpy(stack);
        ProductSet ps;
        {
          py::gil_scoped_release release;
          ps = run_pipeline(s, c.pipeline);
        }
        py::dict out;
        out["sshp_count"] = raster_to_numpy(ps.sshp_count);
        out["acaf_coherence"] = raster_to_numpy(ps.acaf_coherence);
        out["s_map"] = raster_to_numpy(ps.s_map);
        py::dict methods;
        for (const auto& v : ps.variants) {
          py::dict d;
          d["phases"] = raster_to_numpy(v.phases);
          d["phase_stat"] = raster_to_numpy(v.phase_stat);
          d["mean_coherence"] = raster_to_numpy(v.mean_coherence);
          d["diagnostics"] = raster_to_numpy(v.diagnostics);
          methods[py::str(v.variant.name())] = d;
        }
        out["methods"] = methods;
        return out;
      },
      py::arg("stack"), py::arg("config") = "");

  m.def(
      "rmse",
      [](const RealArray& est, const RealArray& truth) {
        return rmse_per_acquisition(raster_from_numpy(est), raster_from_numpy(truth));
      },
      py::arg("estimated"), py::arg("truth"), "Per-acquisition phase RMSE (radians).");

  m.def(
      "power_experiment",
      [](const std::string& config) {
        const Config c = config_from(config, false);
        c.power.validate();
        std::vector<PowerPoint> pts;
        {
          py::gil_scoped_release release;
          pts = power_experiment(c.power_reference, c.power_grid, c.power);
        }
        py::list rows;
        for (const auto& p : pts) {
          py::dict d;
          d["tau"] = p.het.tau;
          d["p_const"] = p.het.p_const;
          d["ref_coherence"] = p.ref_coherence;
          d["het_coherence"] = p.het_coherence;
          d["gap"] = p.gap;
          d["power"] = p.power;
          d["trials"] = p.trials;
          rows.append(d);
        }
        return rows;
      },
      py::arg("config") = "");

  m.def("write_stack", [](const StackArray& a, const std::filesystem::path& prefix) {
    io::write_stack(stack_from_numpy(a), prefix);
  });
  m.def("read_stack", [](const std::filesystem::path& header) { return stack_to_numpy(io::read_stack(header)); });
  m.def("write_raster", [](const RealArray& a, const std::filesystem::path& prefix, const std::string& description) {
    io::write_raster(raster_from_numpy(a), prefix, description);
  }, py::arg("raster"), py::arg("prefix"), py::arg("description") = "");
  m.def("read_raster", [](const std::filesystem::path& header) { return raster_to_numpy(io::read_raster(header)); });
}

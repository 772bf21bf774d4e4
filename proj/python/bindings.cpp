#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "rnnlab/analysis.hpp"
#include "rnnlab/batched.hpp"
#include "rnnlab/error.hpp"
#include "rnnlab/gradcheck.hpp"
#include "rnnlab/io.hpp"
#include "rnnlab/optim.hpp"
#include "rnnlab/tasks.hpp"

namespace py = pybind11;
using namespace rnnlab;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Array to_array(const Matrix& m) {
  Array out({m.rows(), m.cols()});
  std::copy(m.values().begin(), m.values().end(), out.mutable_data());
  return out;
}

Array to_array(const Vector& v) {
  Array out(static_cast<py::ssize_t>(v.size()));
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

Array to_array(const std::vector<Vector>& rows) {
  const std::size_t width = rows.empty() ? 0 : rows.front().size();
  Array out({rows.size(), width});
  double* dst = out.mutable_data();
  for (const auto& r : rows) dst = std::copy(r.begin(), r.end(), dst);
  return out;
}

Matrix to_matrix(const Array& a) {
  if (a.ndim() != 2) throw DimensionError("expected a 2-d array");
  return Matrix(static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)),
                std::vector<double>(a.data(), a.data() + a.size()));
}

Vector to_vector(const Array& a) {
  if (a.ndim() != 1) throw DimensionError("expected a 1-d array");
  return Vector(std::vector<double>(a.data(), a.data() + a.size()));
}

std::vector<Vector> to_rows(const Array& a) {
  if (a.ndim() != 2) throw DimensionError("expected a 2-d array of shape (T, m)");
  std::vector<Vector> rows;
  const auto cols = static_cast<std::size_t>(a.shape(1));
  for (py::ssize_t t = 0; t < a.shape(0); ++t)
    rows.emplace_back(std::vector<double>(a.data() + t * a.shape(1), a.data() + t * a.shape(1) + cols));
  return rows;
}

py::dict gradients_dict(const Gradients& g) {
  py::dict d;
  d["w_rec"] = to_array(g.w_rec);
  d["w_in"] = to_array(g.w_in);
  d["b"] = to_array(g.b);
  d["w_out"] = to_array(g.w_out);
  d["b_out"] = to_array(g.b_out);
  return d;
}

TaskSpec make_spec(const std::string& task, std::size_t T, std::size_t pattern_length, std::size_t symbols) {
  TaskSpec spec;
  spec.kind = tasks::parse_task(task);
  spec.T = T;
  spec.pattern_length = pattern_length;
  spec.symbol_count = symbols;
  spec.validate();
  return spec;
}

io::Json dict_to_json(const py::dict& d) {
  return io::Json::parse(py::module_::import("json").attr("dumps")(d).cast<std::string>());
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Recurrent network training and gradient-dynamics toolkit";

  static py::exception<Error> base(m, "RnnlabError", PyExc_RuntimeError);
  static py::exception<DimensionError> dim(m, "DimensionError", base.ptr());
  static py::exception<NonFiniteError> nonfinite(m, "NonFiniteError", base.ptr());
  static py::exception<UnsupportedError> unsupported(m, "UnsupportedError", base.ptr());
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const DimensionError& e) {
      py::set_error(dim, e.what());
    } catch (const NonFiniteError& e) {
      py::set_error(nonfinite, e.what());
    } catch (const UnsupportedError& e) {
      py::set_error(unsupported, e.what());
    } catch (const Error& e) {
      py::set_error(base, e.what());
    }
  });

  py::class_<RnnParams>(m, "Params")
      .def_property("w_rec", [](const RnnParams& p) { return to_array(p.w_rec); },
                    [](RnnParams& p, const Array& a) { p.w_rec = to_matrix(a); })
      .def_property("w_in", [](const RnnParams& p) { return to_array(p.w_in); },
                    [](RnnParams& p, const Array& a) { p.w_in = to_matrix(a); })
      .def_property("b", [](const RnnParams& p) { return to_array(p.b); },
                    [](RnnParams& p, const Array& a) { p.b = to_vector(a); })
      .def_property("w_out", [](const RnnParams& p) { return to_array(p.w_out); },
                    [](RnnParams& p, const Array& a) { p.w_out = to_matrix(a); })
      .def_property("b_out", [](const RnnParams& p) { return to_array(p.b_out); },
                    [](RnnParams& p, const Array& a) { p.b_out = to_vector(a); })
      .def_property("activation", [](const RnnParams& p) { return std::string(p.activation.name()); },
                    [](RnnParams& p, const std::string& s) { p.activation = Activation::parse(s); })
      .def_property_readonly("hidden", &RnnParams::hidden)
      .def_property_readonly("inputs", &RnnParams::inputs)
      .def_property_readonly("outputs", &RnnParams::outputs)
      .def("validate", &RnnParams::validate)
      .def("to_json", [](const RnnParams& p) { return io::to_json(p).dump(); })
      .def_static("from_json", [](const std::string& s) { return io::params_from_json(io::Json::parse(s)); });

  m.def(
      "init_params",
      [](std::size_t hidden, std::size_t inputs, std::size_t outputs, const std::string& activation,
         std::uint64_t seed, double stddev) {
        return model::init_params(hidden, inputs, outputs, Activation::parse(activation), seed, stddev);
      },
      py::arg("hidden"), py::arg("inputs"), py::arg("outputs"), py::arg("activation") = "tanh",
      py::arg("seed") = 1, py::arg("stddev") = 0.1);

  m.def(
      "forward",
      [](const RnnParams& p, const Array& inputs, std::optional<Array> x0) {
        const Vector start = x0 ? to_vector(*x0) : Vector(p.hidden());
        return to_array(model::forward(p, start, to_rows(inputs)).states);
      },
      py::arg("params"), py::arg("inputs"), py::arg("x0") = py::none(),
      "States x_0..x_T as a (T+1, n) array.");

  py::class_<TaskSample>(m, "Sample")
      .def_property_readonly("inputs", [](const TaskSample& s) { return to_array(s.inputs); })
      .def_property_readonly("target_steps", [](const TaskSample& s) { return s.target.steps; })
      .def_property_readonly("labels", [](const TaskSample& s) { return s.target.labels; })
      .def_property_readonly("values", [](const TaskSample& s) { return to_array(s.target.values); })
      .def_property_readonly("eval_steps", [](const TaskSample& s) { return s.eval_steps; })
      .def_property_readonly("positions", [](const TaskSample& s) { return s.positions; })
      .def_property_readonly("nominal_length", [](const TaskSample& s) { return s.nominal_length; })
      .def("__len__", &TaskSample::length);

  m.def(
      "make_set",
      [](const std::string& task, std::size_t T, std::uint64_t seed, std::size_t count, std::uint64_t first,
         std::size_t pattern_length, std::size_t symbols) {
        return tasks::make_set(make_spec(task, T, pattern_length, symbols), seed, first, count);
      },
      py::arg("task"), py::arg("T"), py::arg("seed"), py::arg("count"), py::arg("first") = 0,
      py::arg("pattern_length") = 5, py::arg("symbols") = 2);

  m.def(
      "task_dims",
      [](const std::string& task, std::size_t pattern_length, std::size_t symbols) {
        const TaskSpec spec = make_spec(task, 50, pattern_length, symbols);
        return py::make_tuple(spec.input_dim(), spec.output_dim());
      },
      py::arg("task"), py::arg("pattern_length") = 5, py::arg("symbols") = 2,
      "(input_dim, output_dim) of a task.");

  m.def(
      "batch_gradient",
      [](const RnnParams& p, const std::vector<TaskSample>& batch, const std::string& task, double alpha,
         bool reference) {
        const LossKind kind = make_spec(task, 50, 5, 2).loss_kind();
        const BatchGradient g = reference ? optim::batch_gradient(p, batch, kind, TimeReduction::sum, alpha)
                                          : batched::batch_gradient(p, batch, kind, TimeReduction::sum, alpha);
        py::dict d = gradients_dict(g.grads);
        d["loss"] = g.loss;
        d["omega"] = g.omega;
        d["mean_ratio"] = g.mean_ratio;
        return d;
      },
      py::arg("params"), py::arg("batch"), py::arg("task"), py::arg("alpha") = 0.0, py::arg("reference") = false);

  m.def(
      "evaluate",
      [](const RnnParams& p, const std::vector<TaskSample>& set) {
        const EvalResult r = batched::evaluate(p, set);
        return py::make_tuple(r.error_rate, r.errors);
      },
      py::arg("params"), py::arg("samples"), "(error_rate, errors) on a sample list.");

  m.def(
      "clip_norm",
      [](const Array& g, double threshold) {
        return to_array(Vector(optim::clip_norm({g.data(), static_cast<std::size_t>(g.size())}, threshold)));
      },
      py::arg("g"), py::arg("threshold"));
  m.def(
      "clip_elementwise",
      [](const Array& g, double threshold) {
        return to_array(Vector(optim::clip_elementwise({g.data(), static_cast<std::size_t>(g.size())}, threshold)));
      },
      py::arg("g"), py::arg("threshold"));

  m.def(
      "train",
      [](const py::dict& config) {
        const io::RunConfig cfg = io::config_from_json(dict_to_json(config));
        RnnParams params = model::init_params(cfg.hidden, cfg.task.input_dim(), cfg.task.output_dim(),
                                              cfg.activation, cfg.seed, cfg.init_stddev);
        TrainResult r;
        {
          py::gil_scoped_release release;
          r = optim::train(std::move(params), cfg.task, cfg.train);
        }
        py::dict out;
        out["status"] = std::string(optim::status_name(r.status));
        out["updates_run"] = r.updates_run;
        out["error_rate"] = r.final_eval ? py::cast(r.final_eval->error_rate) : py::none();
        out["message"] = r.message;
        out["params"] = r.params;
        std::vector<double> losses;
        for (const auto& u : r.log.updates) losses.push_back(u.loss);
        out["losses"] = losses;
        return out;
      },
      py::arg("config"), "Trains from a flat config dict, as accepted by `rnnlab train --config`.");

  m.def(
      "check_conditions",
      [](const Array& w_rec, const std::string& activation) {
        const auto r = analysis::check_conditions(to_matrix(w_rec), Activation::parse(activation));
        py::dict d;
        d["spectral_radius"] = r.spectral_radius;
        d["spectral_norm"] = r.spectral_norm;
        d["gamma"] = r.gamma;
        d["vanishing_sufficient"] = r.vanishing_sufficient;
        d["exploding_necessary"] = r.exploding_necessary;
        d["eta"] = r.eta ? py::cast(*r.eta) : py::none();
        return d;
      },
      py::arg("w_rec"), py::arg("activation") = "tanh");

  m.def(
      "exploding_direction",
      [](const Array& w, const Array& error_row, unsigned l) {
        const auto r = analysis::exploding_direction(to_matrix(w), to_vector(error_row), l);
        py::dict d;
        d["approx"] = to_array(r.approx);
        d["exact"] = to_array(r.exact);
        d["rel_error"] = r.rel_error;
        d["eigenvalue"] = r.eigenvalue;
        d["kept_terms"] = r.kept_terms;
        return d;
      },
      py::arg("w_rec"), py::arg("error_row"), py::arg("l"));

  m.def(
      "bifurcation_sweep",
      [](double w, const std::vector<double>& b_grid, double tol) {
        analysis::BifurcationOptions opts;
        opts.tol = tol;
        const auto sweep = analysis::bifurcation_sweep(w, b_grid, opts);
        std::vector<std::vector<double>> attractors;
        for (const auto& p : sweep.points) attractors.push_back(p.fixed_points);
        py::dict d;
        d["attractors"] = attractors;
        d["boundaries"] = sweep.boundaries;
        return d;
      },
      py::arg("w"), py::arg("b_grid"), py::arg("tol") = 1e-8);

  m.def(
      "surface_point",
      [](double w, double b, std::size_t steps) {
        analysis::SurfaceOptions opts;
        opts.steps = steps;
        const auto p = analysis::surface_point(w, b, opts);
        return py::make_tuple(p.loss, p.d_w, p.d_b, p.saturated);
      },
      py::arg("w"), py::arg("b"), py::arg("steps") = 50, "(E, dE/dw, dE/db, saturated).");

  m.def(
      "grad_check",
      [](std::size_t hidden, std::size_t steps, const std::string& activation, std::uint64_t seed) {
        const auto inst = gradcheck::random_instance(hidden, steps, Activation::parse(activation), seed);
        const auto r = gradcheck::check(inst.params, inst.x0, inst.inputs,
                                        {LossKind::softmax_per_step, TimeReduction::sum}, inst.target);
        py::dict d;
        d["bptt_max"] = r.bptt_max;
        d["omega_rel_error"] = r.omega_checked ? py::cast(r.omega_rel_error) : py::none();
        return d;
      },
      py::arg("hidden"), py::arg("T"), py::arg("activation") = "tanh", py::arg("seed") = 1);
}

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "verif/backends.hpp"
#include "verif/error.hpp"
#include "verif/infer.hpp"
#include "verif/npy.hpp"
#include "verif/onnx.hpp"
#include "verif/reduce.hpp"
#include "verif/runner.hpp"
#include "verif/simplify.hpp"

namespace py = pybind11;
using namespace verif;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const Array& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  return Tensor(std::move(shape), std::vector<double>(a.data(), a.data() + a.size()));
}

Array to_array(const Tensor& t) {
  Array out(std::vector<py::ssize_t>(t.shape().begin(), t.shape().end()));
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

py::object optional_array(const std::optional<Tensor>& t) { return t ? py::object(to_array(*t)) : py::none(); }

struct Network {
  NetworkPtr graph;
  ModelMetadata meta;

  static Network load(const std::filesystem::path& path) {
    auto model = parse_onnx(path);
    return {std::make_shared<const OperationGraph>(std::move(model.graph)), std::move(model.meta)};
  }
  static Network wrap(NetworkPtr graph) {
    auto meta = default_metadata(*graph);
    return {std::move(graph), std::move(meta)};
  }
  const Shape& input_shape() const { return graph->op(graph->inputs().at(0)).shape; }
  const Shape& output_shape() const { return graph->op(graph->outputs().at(0)).shape; }
};

struct Property {
  ParsedProperty parsed;
};

ParameterValues to_params(const py::dict& values) {
  ParameterValues out;
  for (const auto& [k, v] : values) out[py::str(k)] = py::str(v);
  return out;
}

NetworkMap to_networks(const py::dict& networks) {
  NetworkMap out;
  for (const auto& [k, v] : networks) {
    const std::string name = py::str(k);
    if (py::isinstance<Network>(v)) {
      out[name] = v.cast<const Network&>().graph;
    } else {
      out[name] = Network::load(py::str(v).cast<std::string>()).graph;
    }
  }
  return out;
}

VerificationProblem make_problem(const Property& p, const py::dict& networks, const py::dict& params) {
  return VerificationProblem::from(p.parsed, to_params(params), to_networks(networks));
}

py::tuple polytope(const HalfspacePolytope& h) {
  Array a(std::vector<py::ssize_t>{h.rows(), h.dimension()});
  std::copy(h.a().begin(), h.a().end(), a.mutable_data());
  Array b(std::vector<py::ssize_t>{h.rows()});
  std::copy(h.b().begin(), h.b().end(), b.mutable_data());
  return py::make_tuple(a, b);
}

py::dict report_dict(const SimplifyReport& r) {
  py::dict d;
  d["applications"] = r.applications;
  d["nodes_before"] = r.nodes_before;
  d["nodes_after"] = r.nodes_after;
  d["rounds"] = r.rounds;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Verification of DNNP properties of ONNX networks.";

  // Raised for every library error; `code` holds the ErrorCode name.
  static py::handle verif_error = py::exception<Error>(m, "VerifError", PyExc_RuntimeError).release();
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object exc = verif_error(e.what());
      exc.attr("code") = std::string(to_string(e.code()));
      PyErr_SetObject(verif_error.ptr(), exc.ptr());
    }
  });

  py::class_<Network>(m, "Network")
      .def_static("load", &Network::load, py::arg("path"))
      .def("save", [](const Network& n, const std::filesystem::path& path) {
        serialize_onnx(*n.graph, refresh_metadata(*n.graph, n.meta), path);
      }, py::arg("path"))
      .def_property_readonly("input_shape", &Network::input_shape)
      .def_property_readonly("output_shape", &Network::output_shape)
      .def_property_readonly("operations", [](const Network& n) {
        std::vector<std::string> kinds;
        for (const auto& op : n.graph->operations()) kinds.emplace_back(to_string(op.kind));
        return kinds;
      })
      .def("__call__", [](const Network& n, const Array& x) {
        return to_array(infer(*n.graph, std::vector<Tensor>{to_tensor(x)}).at(0));
      }, py::arg("x"))
      .def("simplify", [](const Network& n) {
        auto r = simplify(*n.graph);
        Network out{std::make_shared<const OperationGraph>(std::move(r.graph)), n.meta};
        return py::make_tuple(out, report_dict(r.report));
      });

  py::class_<Property>(m, "Property")
      .def_static("load", [](const std::filesystem::path& path) { return Property{parse_dnnp_file(path)}; },
                  py::arg("path"))
      .def_static("parse", [](const std::string& text, const std::filesystem::path& base_dir) {
        return Property{parse_dnnp(text, base_dir)};
      }, py::arg("text"), py::arg("base_dir") = std::filesystem::path())
      .def_property_readonly("parameters", [](const Property& p) {
        std::vector<std::string> names;
        for (const auto& d : p.parsed.parameters) names.push_back(d.name);
        return names;
      })
      .def_property_readonly("networks", [](const Property& p) {
        std::vector<std::string> names;
        for (const auto& n : p.parsed.networks) names.push_back(n.name);
        return names;
      })
      .def("canonical", [](const Property& p, const py::dict& networks, const py::dict& params) {
        return to_string(*make_problem(p, networks, params).canonical);
      }, py::arg("networks"), py::arg("params") = py::dict())
      .def("holds_at", [](const Property& p, const Array& x, const py::dict& networks, const py::dict& params) {
        return !validate_counterexample(make_problem(p, networks, params), to_tensor(x));
      }, py::arg("x"), py::arg("networks"), py::arg("params") = py::dict())
      .def("__str__", [](const Property& p) { return to_string(*p.parsed.expr); });

  py::class_<ReducedProblem>(m, "ReducedProblem")
      .def_readonly("disjunct", &ReducedProblem::disjunct)
      .def_readonly("input_shape", &ReducedProblem::input_shape)
      .def_property_readonly("network", [](const ReducedProblem& rp) { return Network::wrap(rp.network); })
      .def_property_readonly("input", [](const ReducedProblem& rp) { return polytope(rp.input); },
                             "(A, b) with input constraints A x <= b over the flattened input")
      .def_property_readonly("output", [](const ReducedProblem& rp) { return polytope(rp.output); },
                             "(A, b) with the violation region A y <= b over the flattened output")
      .def("is_violation", [](const ReducedProblem& rp, const Array& x) { return rp.is_violation(to_tensor(x)); },
           py::arg("x"))
      .def("write_nnet", [](const ReducedProblem& rp, const std::filesystem::path& p) { write_nnet(rp, p); },
           py::arg("path"))
      .def("write_rlv", [](const ReducedProblem& rp, const std::filesystem::path& p) { write_rlv(rp, p); },
           py::arg("path"))
      .def("write_vnnlib", [](const ReducedProblem& rp, const std::filesystem::path& onnx,
                              const std::filesystem::path& vnnlib) { write_vnnlib(rp, onnx, vnnlib); },
           py::arg("onnx_path"), py::arg("vnnlib_path"));

  py::class_<VerifierOutcome>(m, "Outcome")
      .def_property_readonly("status", [](const VerifierOutcome& o) { return std::string(to_string(o.status)); })
      .def_property_readonly("counterexample", [](const VerifierOutcome& o) { return optional_array(o.counterexample); })
      .def_readonly("reason", &VerifierOutcome::reason);

  py::class_<RunReport>(m, "Report")
      .def_property_readonly("status", [](const RunReport& r) { return std::string(to_string(r.status)); })
      .def_property_readonly("counterexample", [](const RunReport& r) { return optional_array(r.counterexample); })
      .def_readonly("reason", &RunReport::reason)
      .def_readonly("problems", &RunReport::reduced_problems)
      .def_readonly("translation_time", &RunReport::translation_time)
      .def_readonly("verification_time", &RunReport::verification_time);

  m.def("reduce", [](const Property& p, const py::dict& networks, const py::dict& params) {
    return reduce(make_problem(p, networks, params).canonical);
  }, py::arg("property"), py::arg("networks"), py::arg("params") = py::dict(),
        "Reduced problems of the negated property, one per disjunct.");

  m.def("ibp", [](const ReducedProblem& rp, double timeout) {
    py::gil_scoped_release unlocked;
    return ibp_verify(rp, timeout);
  }, py::arg("problem"), py::arg("timeout") = 0.0);

  m.def("sample", [](const ReducedProblem& rp, uint64_t budget, uint64_t seed) {
    py::gil_scoped_release unlocked;
    return sample_falsify(rp, budget, seed);
  }, py::arg("problem"), py::arg("budget") = 100000, py::arg("seed") = 0);

  m.def("verify", [](const Property& p, const py::dict& networks, const std::string& verifier,
                     const py::dict& params, uint64_t seed, double timeout, size_t jobs) {
    const auto registry = PluginRegistry::load_default();
    const VerifierPlugin* plugin = registry.find(verifier);
    if (!plugin) throw Error(ErrorCode::UnknownBackend, verifier);
    const auto problem = make_problem(p, networks, params);
    RunOptions options;
    options.seed = seed;
    options.timeout = timeout;
    options.jobs = jobs;
    py::gil_scoped_release unlocked;
    return run(problem, *plugin, options);
  }, py::arg("property"), py::arg("networks"), py::arg("verifier") = "ibp", py::arg("params") = py::dict(),
        py::arg("seed") = 0, py::arg("timeout") = 0.0, py::arg("jobs") = 1);

  m.def("verifiers", [] { return PluginRegistry::load_default().names(); });
  m.def("load_npy", [](const std::filesystem::path& p) { return to_array(load_npy(p)); }, py::arg("path"));
  m.def("save_npy", [](const std::filesystem::path& p, const Array& a) { save_npy(p, to_tensor(a)); },
        py::arg("path"), py::arg("array"));
}

#include <filesystem>
#include <string>
#include <vector>

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "bta/checkpoint.hpp"
#include "bta/config.hpp"
#include "bta/graph.hpp"
#include "bta/interactions.hpp"
#include "bta/manifest.hpp"
#include "bta/synthetic.hpp"
#include "bta/trace.hpp"

namespace py = pybind11;
namespace fs = std::filesystem;
using namespace bta;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor<double> to_tensor(const Array& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  return Tensor<double>(std::move(shape), std::vector<double>(a.data(), a.data() + a.size()));
}

template <typename T>
py::array to_array(const Tensor<T>& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  py::array_t<T> out(shape);
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return std::move(out);
}

std::vector<DependencyEdge> to_edges(const std::vector<std::tuple<std::size_t, std::size_t, std::string>>& e) {
  std::vector<DependencyEdge> out;
  for (const auto& [h, d, rel] : e) out.push_back({h, d, rel});
  return out;
}

py::dict trace_to_dict(const TraceDump& d) {
  py::dict matrices;
  for (const auto& [key, m] : d.matrices) {
    py::array_t<double> values({m.rows, m.cols});
    std::copy(m.values.begin(), m.values.end(), values.mutable_data());
    matrices[py::str(key)] = py::dict(py::arg("values") = values, py::arg("rows") = m.row_nodes,
                                      py::arg("cols") = m.col_nodes, py::arg("row_argmax") = m.row_argmax,
                                      py::arg("row_max") = m.row_max);
  }
  return py::dict(py::arg("sample_id") = d.sample_id, py::arg("lambda") = d.lambda, py::arg("frames") = d.frames,
                  py::arg("clips") = d.clips, py::arg("tokens") = d.tokens, py::arg("matrices") = matrices);
}

RunConfig parse_run(const std::string& config_json, const fs::path& base_dir) {
  return run_config_from_json(nlohmann::json::parse(config_json), base_dir);
}

template <typename T>
py::dict train_as(const RunConfig& rc) {
  const auto training = load_manifest<T>(rc.train_manifest);
  std::optional<Dataset<T>> validation;
  if (!rc.eval_manifest.empty()) validation = load_manifest<T>(rc.eval_manifest);
  ModelConfig mc = rc.model;
  adopt_dataset_shape(mc, training);
  Model<T> model(mc, rc.train.seed);
  AdamState<T> state;
  TrainReport report;
  {
    py::gil_scoped_release release;
    report = train(model, state, training, validation ? &*validation : nullptr, rc.train);
  }
  const fs::path out = rc.out.empty() ? fs::path(".") : fs::path(rc.out);
  fs::create_directories(out);
  const fs::path ckpt = rc.checkpoint.empty() ? out / "checkpoint.btac" : fs::path(rc.checkpoint);
  save_checkpoint(ckpt, model, state, rc.train);
  return py::dict(py::arg("epoch_loss") = report.epoch_loss, py::arg("epoch_metric") = report.epoch_metric,
                  py::arg("metric") = report.metric_name, py::arg("best_epoch") = report.best_epoch,
                  py::arg("best_metric") = report.best_metric, py::arg("wall_seconds") = report.wall_seconds,
                  py::arg("parameter_checksum") = report.parameter_checksum,
                  py::arg("checkpoint") = ckpt.string());
}

template <typename T>
std::pair<Model<T>, Dataset<T>> restore(const fs::path& checkpoint, const fs::path& manifest,
                                        const CheckpointHeader& h) {
  auto data = load_manifest<T>(manifest);
  ModelConfig expected = h.model;
  adopt_dataset_shape(expected, data);
  if (!(expected == h.model)) throw CheckpointMismatchError("dataset does not fit the checkpoint architecture");
  Model<T> model(h.model, 0);
  load_checkpoint<T>(checkpoint, model, nullptr);
  return {std::move(model), std::move(data)};
}

template <typename T>
std::pair<std::string, double> evaluate_as(const fs::path& checkpoint, const fs::path& manifest,
                                           const CheckpointHeader& h) {
  const auto [model, data] = restore<T>(checkpoint, manifest, h);
  py::gil_scoped_release release;
  const auto m = evaluate(model, data, h.train.forward(), thread_budget());
  return {m.name, m.value};
}

template <typename T>
py::list infer_as(const fs::path& checkpoint, const fs::path& manifest, const CheckpointHeader& h) {
  const auto [model, data] = restore<T>(checkpoint, manifest, h);
  py::list out;
  for (const auto& s : data.samples) {
    const auto p = run_sample(model, s, h.train.forward(), false).prediction;
    out.append(py::make_tuple(s.id, p.answer, to_array(p.output)));
  }
  return out;
}

}  // namespace

PYBIND11_MODULE(_bta, m) {
  m.doc() = "Graph-bridged video question answering";

  py::register_exception<ManifestError>(m, "ManifestError", PyExc_ValueError);
  py::register_exception<CheckpointMismatchError>(m, "CheckpointMismatchError", PyExc_ValueError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<IngestionError>(m, "IngestionError", PyExc_ValueError);
  py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);

  m.def("visual_edge_weights", [](const Array& x, double lambda) {
    return to_array(visual_edge_weights(to_tensor(x), lambda));
  }, py::arg("nodes"), py::arg("lam") = 10.0);
  m.def("question_affinity", [](const Array& u, double lambda) {
    return to_array(question_affinity(to_tensor(u), lambda));
  }, py::arg("nodes"), py::arg("lam") = 10.0);
  m.def("adjacency", [](const std::vector<std::tuple<std::size_t, std::size_t, std::string>>& edges, std::size_t k) {
    return to_array(adjacency_from_dependencies<double>(to_edges(edges), k));
  }, py::arg("edges"), py::arg("tokens"));
  m.def("question_graph_weights", [](const Array& u, const Array& a, double lambda) {
    return to_array(question_graph_weights(to_tensor(u), to_tensor(a), lambda));
  }, py::arg("nodes"), py::arg("adjacency"), py::arg("lam") = 10.0);
  m.def("interaction_matrix", [](const Array& x, const Array& u, double lambda) {
    return to_array(interaction_matrix(to_tensor(x), to_tensor(u), lambda));
  }, py::arg("nodes"), py::arg("question"), py::arg("lam") = 10.0);
  m.def("gcn_forward", [](const std::vector<Array>& weights, const Array& w, const Array& x, bool self_loops) {
    GCNStack<double> stack;
    for (const auto& a : weights) stack.weights.push_back(to_tensor(a));
    return to_array(gcn_forward(stack, to_tensor(w), to_tensor(x), self_loops));
  }, py::arg("weights"), py::arg("edge_weights"), py::arg("x"), py::arg("self_loops") = true);
  m.def("round_count", &round_count, py::arg("raw"), py::arg("count_min") = 1, py::arg("count_max") = 10);
  m.def("select_answer", [](const std::vector<double>& s) { return select_answer(std::span<const double>(s)); });

  m.def("write_tensor", [](const fs::path& path, const py::array& a) {
    if (py::dtype::of<float>().is(a.dtype())) {
      auto f = py::array_t<float, py::array::c_style | py::array::forcecast>::ensure(a);
      Shape shape(f.shape(), f.shape() + f.ndim());
      write_tensor_file(Tensor<float>(std::move(shape), std::vector<float>(f.data(), f.data() + f.size())), path);
    } else {
      write_tensor_file(to_tensor(Array::ensure(a)), path);
    }
  }, py::arg("path"), py::arg("array"));
  m.def("read_tensor", [](const fs::path& path) -> py::array {
    if (read_tensor_dtype(path) == DType::f32) return to_array(read_tensor_file<float>(path));
    return to_array(read_tensor_file<double>(path));
  }, py::arg("path"));

  m.def("write_synthetic", [](const fs::path& dir, const std::string& spec_json) {
    return write_synthetic_dataset(synthetic_spec_from_json(nlohmann::json::parse(spec_json)), dir);
  }, py::arg("directory"), py::arg("spec_json") = "{}");
  m.def("burst_direction", [](const std::string& spec_json) {
    return synthetic_burst_direction(synthetic_spec_from_json(nlohmann::json::parse(spec_json)));
  }, py::arg("spec_json") = "{}");

  m.def("train", [](const std::string& config_json, const fs::path& base_dir) {
    const auto rc = parse_run(config_json, base_dir);
    return rc.train.precision == Precision::f64 ? train_as<double>(rc) : train_as<float>(rc);
  }, py::arg("config_json"), py::arg("base_dir") = fs::path());
  m.def("evaluate", [](const fs::path& checkpoint, const fs::path& manifest) {
    const auto h = read_checkpoint_header(checkpoint);
    return h.precision == Precision::f64 ? evaluate_as<double>(checkpoint, manifest, h)
                                         : evaluate_as<float>(checkpoint, manifest, h);
  }, py::arg("checkpoint"), py::arg("manifest"));
  m.def("infer", [](const fs::path& checkpoint, const fs::path& manifest) {
    const auto h = read_checkpoint_header(checkpoint);
    return h.precision == Precision::f64 ? infer_as<double>(checkpoint, manifest, h)
                                         : infer_as<float>(checkpoint, manifest, h);
  }, py::arg("checkpoint"), py::arg("manifest"));
  m.def("dump_interactions", [](const fs::path& checkpoint, const fs::path& manifest, const std::string& sample_id,
                                const fs::path& out) {
    const auto h = read_checkpoint_header(checkpoint);
    auto run = [&](auto tag) {
      using T = decltype(tag);
      const auto [model, data] = restore<T>(checkpoint, manifest, h);
      const auto ev = run_sample(model, data.find(sample_id), h.train.forward(), false);
      dump_interaction_trace(ev.question_pass.trace, sample_id, h.train.lambda, out);
    };
    if (h.precision == Precision::f64) run(double{});
    else run(float{});
  }, py::arg("checkpoint"), py::arg("manifest"), py::arg("sample_id"), py::arg("out"));
  m.def("load_trace", [](const fs::path& path) { return trace_to_dict(load_trace_dump(path)); }, py::arg("path"));

  m.def("gradient_check", [](const std::string& task) {
    GradCheckReport r;
    {
      py::gil_scoped_release release;
      r = gradient_check_model(parse_task(task));
    }
    py::dict groups;
    for (const auto& g : r.groups) groups[py::str(g.parameter)] = g.max_relative_error;
    return py::dict(py::arg("passed") = r.passed, py::arg("max_relative_error") = r.max_relative_error,
                    py::arg("groups") = groups, py::arg("failures") = r.failures);
  }, py::arg("task"));
}

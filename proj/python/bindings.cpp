#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cmath>
#include <limits>
#include <sstream>

#include "gcnn/commands.hpp"
#include "gcnn/config.hpp"
#include "gcnn/errors.hpp"
#include "gcnn/model.hpp"
#include "gcnn/specgroup.hpp"
#include "gcnn/synthetic.hpp"
#include "gcnn/trainer.hpp"
#include "gcnn/tsdata.hpp"

namespace py = pybind11;
using namespace gcnn;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const Array& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  return Tensor(shape, std::vector<double>(a.data(), a.data() + a.size()));
}

Array to_array(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  Array out(shape);
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

// Missing cells come back as NaN.
Array dataset_values(const TimeSeriesDataset& d) {
  Array out({d.series_count(), d.length()});
  auto v = out.mutable_unchecked<2>();
  for (std::size_t i = 0; i < d.series_count(); ++i)
    for (std::size_t t = 0; t < d.length(); ++t)
      v(i, t) = d.present(i, t) ? d.value(i, t) : std::numeric_limits<double>::quiet_NaN();
  return out;
}

TimeSeriesDataset dataset_from_arrays(std::vector<std::string> names, const Array& values, std::vector<std::string> stamps) {
  if (values.ndim() != 2 || static_cast<std::size_t>(values.shape(0)) != names.size())
    throw ShapeError("values must be [series x steps] with one row per name");
  const std::size_t n = names.size(), len = values.shape(1);
  if (stamps.empty())
    for (std::size_t t = 0; t < len; ++t) stamps.push_back(std::to_string(t));
  if (stamps.size() != len) throw ShapeError("one stamp per step is required");
  std::ostringstream csv;
  csv << "time";
  for (const auto& name : names) csv << ',' << name;
  csv << '\n';
  // Round-trip through the CSV reader so stamps are parsed the same way as files.
  csv.precision(17);
  auto v = values.unchecked<2>();
  for (std::size_t t = 0; t < len; ++t) {
    csv << stamps[t];
    for (std::size_t i = 0; i < n; ++i) {
      csv << ',';
      if (!std::isnan(v(i, t))) csv << v(i, t);
    }
    csv << '\n';
  }
  std::istringstream in(csv.str());
  return load_csv(in, "<arrays>");
}

GroupAssignment to_assignment(const std::vector<std::size_t>& labels, std::size_t k) {
  GroupAssignment a{labels, k};
  a.validate();
  return a;
}

SimilarityGraph to_graph(const Array& w) { return SimilarityGraph::from_weights(to_tensor(w)); }

py::dict report_dict(const GapReport& r) {
  py::list fills, drops;
  for (const GapFill& f : r.fills) fills.append(py::dict(py::arg("series") = f.series, py::arg("start") = f.start, py::arg("length") = f.length));
  for (const SeriesDrop& d : r.drops) drops.append(py::dict(py::arg("series") = d.series, py::arg("reason") = d.reason));
  return py::dict(py::arg("fills") = fills, py::arg("drops") = drops);
}

WindowedRegressionSet to_set(const Array& inputs, const std::vector<double>& targets) {
  if (inputs.ndim() != 3) throw ShapeError("inputs must be [samples x channels x window]");
  if (static_cast<std::size_t>(inputs.shape(0)) != targets.size()) throw ShapeError("one target per sample is required");
  WindowedRegressionSet s;
  s.inputs = to_tensor(inputs);
  s.targets = targets;
  s.window = inputs.shape(2);
  for (std::size_t i = 0; i < targets.size(); ++i) {
    s.target_steps.push_back(i);
    s.target_stamps.push_back(std::to_string(i));
  }
  for (py::ssize_t c = 0; c < inputs.shape(1); ++c) s.channel_names.push_back("x" + std::to_string(c));
  s.target_name = "y";
  return s;
}

int run_command(const std::string& name, const RunConfig& cfg, std::ostream& log) {
  if (name == "ingest") return cmd_ingest(cfg, log);
  if (name == "cluster") return cmd_cluster(cfg, log);
  if (name == "train") return cmd_train(cfg, log);
  if (name == "eval") return cmd_eval(cfg, log);
  if (name == "compare") return cmd_compare(cfg, log);
  if (name == "param-count") return cmd_param_count(cfg, log);
  throw ConfigError("unknown command '" + name + "'");
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Grouped convolutional networks for multivariate time-series regression";

  static py::exception<ConfigError> config_error(m, "ConfigError", PyExc_ValueError);
  static py::exception<DataError> data_error(m, "DataError", PyExc_ValueError);
  static py::exception<ShapeError> shape_error(m, "ShapeError", PyExc_ValueError);
  static py::exception<NumericalError> numerical_error(m, "NumericalError", PyExc_ArithmeticError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const ConfigError& e) {
      py::set_error(config_error, e.what());
    } catch (const DataError& e) {
      py::set_error(data_error, e.what());
    } catch (const ShapeError& e) {
      py::set_error(shape_error, e.what());
    } catch (const NumericalError& e) {
      py::set_error(numerical_error, e.what());
    }
  });

  py::class_<TimeSeriesDataset>(m, "Dataset")
      .def_readonly("names", &TimeSeriesDataset::names)
      .def_readonly("stamps", &TimeSeriesDataset::stamps)
      .def_readonly("times", &TimeSeriesDataset::times)
      .def_readonly("time_column", &TimeSeriesDataset::time_column)
      .def_property_readonly("values", &dataset_values)
      .def_property_readonly("missing_count", &TimeSeriesDataset::missing_count)
      .def("__len__", &TimeSeriesDataset::length)
      .def("write_csv", [](const TimeSeriesDataset& d, const std::string& path) { write_csv(path, d); }, py::arg("path"))
      .def("__eq__", [](const TimeSeriesDataset& a, const TimeSeriesDataset& b) { return a == b; });

  m.def("load_csv", py::overload_cast<const std::string&>(&load_csv), py::arg("path"));
  m.def("dataset_from_arrays", &dataset_from_arrays, py::arg("names"), py::arg("values"),
        py::arg("stamps") = std::vector<std::string>{});
  m.def(
      "repair_gaps",
      [](const TimeSeriesDataset& d, std::size_t max_gap) {
        RepairResult r = repair_gaps(d, max_gap);
        return py::make_tuple(std::move(r.data), report_dict(r.report));
      },
      py::arg("dataset"), py::arg("max_gap") = 61);
  m.def(
      "synthetic",
      [](std::size_t groups, std::size_t per_group, std::size_t length, double ar, double noise, std::uint64_t seed) {
        SyntheticSpec s;
        s.groups = groups;
        s.series_per_group = per_group;
        s.length = length;
        s.ar = ar;
        s.noise = noise;
        s.seed = seed;
        SyntheticData d = grouped_synthetic(s);
        return py::make_tuple(std::move(d.dataset), d.truth.labels);
      },
      py::arg("groups") = 3, py::arg("per_group") = 4, py::arg("length") = 1000, py::arg("ar") = 0.8,
      py::arg("noise") = 0.3, py::arg("seed") = 0);

  m.def(
      "make_windows",
      [](const TimeSeriesDataset& d, const std::string& target, std::size_t window) {
        WindowedRegressionSet s = make_windows(d, target, window);
        return py::make_tuple(to_array(s.inputs), s.targets, s.channel_names);
      },
      py::arg("dataset"), py::arg("target"), py::arg("window"));

  m.def("similarity", [](const Array& rows) { return to_array(similarity_from_rows(to_tensor(rows)).weights); },
        py::arg("rows"), "|Pearson correlation| between the rows of a [series x steps] array.");
  m.def("spectral_cluster", [](const Array& w, std::size_t k, std::uint64_t seed) { return spectral_cluster(to_graph(w), k, seed).labels; },
        py::arg("weights"), py::arg("k"), py::arg("seed") = 0);
  m.def("ncut", [](const Array& w, const std::vector<std::size_t>& labels, std::size_t k) {
    return ncut_value(to_graph(w), to_assignment(labels, k));
  }, py::arg("weights"), py::arg("labels"), py::arg("k"));
  m.def("cut", [](const Array& w, const std::vector<std::size_t>& labels, std::size_t k) {
    return cut_value(to_graph(w), to_assignment(labels, k));
  }, py::arg("weights"), py::arg("labels"), py::arg("k"));
  m.def("brute_force_min_ncut", [](const Array& w, std::size_t k) {
    MinNcut r = brute_force_min_ncut(to_graph(w), k);
    return py::make_tuple(r.assignment.labels, r.value);
  }, py::arg("weights"), py::arg("k"));
  m.def("sym_eig", [](const Array& a) {
    EigenDecomposition e = sym_eig(to_tensor(a));
    return py::make_tuple(e.values, to_array(e.vectors));
  }, py::arg("matrix"));

  m.def("srmse", [](const std::vector<double>& t, const std::vector<double>& y) { return srmse(t, y).srmse; },
        py::arg("targets"), py::arg("predictions"));

  py::class_<Model>(m, "Model")
      .def_property_readonly("layer_plan", [](const Model& mdl) { return mdl.spec().layer_plan(); })
      .def_property_readonly("param_count", [](const Model& mdl) { return count_params(mdl); })
      .def_property_readonly("conv_kernel_params", [](const Model& mdl) { return count_conv_kernel_params(mdl); })
      .def_property_readonly("groups", [](const Model& mdl) {
        return mdl.assignment() ? py::cast(mdl.assignment()->labels) : py::none();
      })
      .def("coefficient_matrix", [](const Model& mdl) -> py::object {
        if (auto u = mdl.coefficient_matrix()) return to_array(*u);
        return py::none();
      })
      .def("predict", [](const Model& mdl, const Array& x) { return to_array(mdl.predict(to_tensor(x)).reshaped({static_cast<std::size_t>(x.shape(0))})); },
           py::arg("inputs"))
      .def("parameters", [](Model& mdl) {
        py::dict out;
        for (const NamedParam& p : mdl.parameters()) out[py::str(p.name)] = to_array(*p.value);
        return out;
      })
      .def("save", [](const Model& mdl, const std::string& path) { save_checkpoint(path, mdl); }, py::arg("path"));

  m.def("_build_model", [](const std::string& section, std::size_t inputs, std::size_t window,
                           std::optional<std::vector<std::size_t>> labels, std::uint64_t seed) {
    ModelSpec spec = parse_model_section(nlohmann::json::parse(section), "model").spec;
    spec.input_channels = inputs;
    spec.window = window;
    spec.validate();
    std::optional<GroupAssignment> a;
    if (labels) a = to_assignment(*labels, spec.groups);
    return build_model(spec, a, seed);
  }, py::arg("section"), py::arg("inputs"), py::arg("window"), py::arg("labels") = py::none(), py::arg("seed") = 0);
  m.def("load_checkpoint", py::overload_cast<const std::string&>(&load_checkpoint), py::arg("path"));

  m.def("_train", [](const Model& model, const Array& inputs, const std::vector<double>& targets, std::size_t epochs,
                     std::size_t batch_size, double lr, double momentum, double validation_fraction, std::uint64_t seed) {
    TrainConfig tc;
    tc.epochs = epochs;
    tc.batch_size = batch_size;
    tc.learning_rate = lr;
    tc.momentum = momentum;
    tc.validation_fraction = validation_fraction;
    tc.seed = seed;
    TrainResult r = [&] {
      py::gil_scoped_release release;
      return train(model, to_set(inputs, targets), tc);
    }();
    py::list history;
    for (const EpochRecord& e : r.history)
      history.append(py::dict(py::arg("epoch") = e.epoch, py::arg("train_srmse") = e.train_srmse,
                              py::arg("val_srmse") = e.val_srmse, py::arg("loss") = e.loss));
    return py::make_tuple(std::move(r.best), history, r.best_epoch);
  });

  m.def("config_hash", [](const std::string& doc) { return config_hash(nlohmann::json::parse(doc)); }, py::arg("document"));
  m.def(
      "run",
      [](const std::string& command, const std::string& config, const std::vector<std::string>& overrides,
         std::optional<std::uint64_t> seed, std::optional<std::string> out) {
        std::ostringstream log;
        int code = 0;
        {
          py::gil_scoped_release release;
          const RunConfig cfg = load_config(config, overrides, seed, out);
          log << "config_hash=" << cfg.hash << '\n';
          code = run_command(command, cfg, log);
        }
        return py::make_tuple(code, log.str());
      },
      py::arg("command"), py::arg("config"), py::arg("overrides") = std::vector<std::string>{},
      py::arg("seed") = py::none(), py::arg("out") = py::none());
}

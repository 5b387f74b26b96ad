// Python bindings for the simulator core: dataset synthesis/loading, the
// drift gate, the GRU forecaster, graph-convolution aggregation, analytic
// costs, metrics, and whole experiment runs.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "refol/experiment.hpp"

namespace py = pybind11;
using namespace refol;

namespace {

BoolMatrix bool_matrix_from_rows(const std::vector<std::vector<int>>& rows) {
  const int n = static_cast<int>(rows.size());
  BoolMatrix m(n);
  for (int i = 0; i < n; ++i) {
    if (static_cast<int>(rows[i].size()) != n) {
      throw ValidationError("adjacency must be a square 0/1 matrix");
    }
    for (int j = 0; j < n; ++j) m.set(i, j, rows[i][j] != 0);
  }
  return m;
}

py::dict summary_to_dict(const RunSummary& s) {
  py::dict d;
  d["method"] = s.method;
  d["F"] = s.forecast_horizon;
  d["scored_rounds"] = s.scored_rounds;
  d["rmse"] = s.rmse;
  d["mae"] = s.mae;
  d["pooled_rmse"] = s.pooled_rmse;
  if (s.msis) d["msis"] = *s.msis;
  else d["msis"] = py::none();
  d["participations"] = s.participations;
  d["participation_fraction"] = s.participation_fraction;
  d["total_flops"] = s.total_flops;
  d["total_bytes"] = s.total_bytes;
  return d;
}

ExperimentConfig config_from_kwargs(const py::dict& overrides) {
  std::string text;
  for (auto item : overrides) {
    text += py::str(item.first).cast<std::string>();
    text += " = ";
    text += py::str(item.second).cast<std::string>();
    text += "\n";
  }
  return parse_config_text(text);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "REFOL federated online learning simulator (C++ core)";

  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<RunError>(m, "RunError", PyExc_RuntimeError);

  // --- datasets ---
  py::class_<TrafficDataset>(m, "TrafficDataset")
      .def_readonly("node_count", &TrafficDataset::node_count)
      .def_readonly("time_count", &TrafficDataset::time_count)
      .def_readonly("history_horizon", &TrafficDataset::history_horizon)
      .def_readonly("forecast_horizon", &TrafficDataset::forecast_horizon)
      .def("speed_at", &TrafficDataset::speed_at, py::arg("t"), py::arg("node"))
      .def("first_round", &TrafficDataset::first_round)
      .def("last_round", &TrafficDataset::last_round)
      .def("adjacency_at", [](const TrafficDataset& ds, int i, int j) {
        return ds.adjacency.at(i, j);
      });

  m.def(
      "synthesize_drift",
      [](std::uint64_t seed, int nodes, int rounds, int segment_length, double density, int h,
         int f, int periodicity) {
        WindowConfig cfg{h, f, periodicity};
        return synthesize_drift(seed, nodes, rounds, segment_length, density, cfg);
      },
      py::arg("seed"), py::arg("nodes"), py::arg("rounds"), py::arg("segment_length"),
      py::arg("density"), py::arg("H") = 12, py::arg("F") = 1, py::arg("periodicity") = 288);

  m.def(
      "load_csv",
      [](const std::string& speeds, const std::string& adjacency, int h, int f, bool has_header,
         bool edge_list, int periodicity) {
        WindowConfig cfg{h, f, periodicity};
        CsvOptions opts;
        opts.has_header = has_header;
        opts.adjacency_edge_list = edge_list;
        return load_csv(speeds, adjacency, cfg, opts);
      },
      py::arg("speeds_path"), py::arg("adjacency_path"), py::arg("H") = 12, py::arg("F") = 1,
      py::arg("has_header") = false, py::arg("edge_list") = false, py::arg("periodicity") = 288);

  m.def(
      "make_window",
      [](const TrafficDataset& ds, int node, int round) {
        const Window w = make_window(ds, node, round);
        return py::make_tuple(w.input, w.target);
      },
      py::arg("dataset"), py::arg("node"), py::arg("round"));

  // --- drift gate ---
  m.def("to_distribution",
        [](const std::vector<double>& w) { return to_distribution(w); });
  m.def("kld", [](const std::vector<double>& p, const std::vector<double>& q) {
    return kld(p, q);
  });

  // --- forecaster ---
  py::class_<ModelParams>(m, "ModelParams")
      .def_readonly("hidden_size", &ModelParams::hidden_size)
      .def_readonly("forecast_horizon", &ModelParams::forecast_horizon);

  m.def("parameter_count", &parameter_count, py::arg("hs"), py::arg("F"));
  m.def("payload_bytes", &payload_bytes, py::arg("hs"), py::arg("F"));
  m.def("init_params", &init_params, py::arg("seed"), py::arg("hs"), py::arg("F"));
  m.def(
      "forward",
      [](const ModelParams& p, const std::vector<double>& input) {
        return forward(p, input).prediction;
      },
      py::arg("params"), py::arg("input"));
  m.def("mse_loss", [](const std::vector<double>& pred, const std::vector<double>& target) {
    return mse_loss(pred, target);
  });
  m.def(
      "ogd_update",
      [](const ModelParams& p, const std::vector<double>& input,
         const std::vector<double>& target, double lr, int epochs) {
        Window w;
        w.input = input;
        w.target = target;
        return ogd_update(p, w, lr, epochs);
      },
      py::arg("params"), py::arg("input"), py::arg("target"), py::arg("lr") = 1e-3,
      py::arg("epochs") = 5);
  m.def("serialize", [](const ModelParams& p) {
    const auto bytes = serialize(p);
    return py::bytes(reinterpret_cast<const char*>(bytes.data()), bytes.size());
  });
  m.def("deserialize", [](const py::bytes& raw) {
    const std::string s = raw;
    return deserialize(std::span<const std::uint8_t>(
        reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
  });

  // --- aggregation ---
  m.def(
      "aggregation_weights",
      [](const std::vector<std::vector<int>>& adjacency, const std::vector<int>& participants,
         int layers) {
        const auto graph = build_participant_graph(bool_matrix_from_rows(adjacency),
                                                   participants);
        return aggregation_weights_k(graph, layers).weights;
      },
      py::arg("adjacency"), py::arg("participants"), py::arg("layers") = 2,
      "Normalized aggregation weights; the last entry belongs to the previous global model");
  m.def(
      "participant_indegrees",
      [](const std::vector<std::vector<int>>& adjacency, const std::vector<int>& participants) {
        return build_participant_graph(bool_matrix_from_rows(adjacency), participants)
            .indegree_aug;
      },
      py::arg("adjacency"), py::arg("participants"));

  // --- analytic costs ---
  py::class_<CostModel>(m, "CostModel")
      .def(py::init([](int hs, int h, int f, int e, int bpp) {
             CostModel c;
             c.hidden_size = hs;
             c.history_horizon = h;
             c.forecast_horizon = f;
             c.epochs = e;
             c.bytes_per_param = bpp;
             return c;
           }),
           py::arg("hs"), py::arg("H"), py::arg("F"), py::arg("E") = 5,
           py::arg("bytes_per_param") = 4);
  m.def("forward_flops", &forward_flops);
  m.def("backward_flops", &backward_flops);
  m.def("kld_flops", &kld_flops);
  m.def("comm_bytes", &comm_bytes);
  m.def("fedostc_extra_params", &fedostc_extra_params, py::arg("hs"));
  m.def("fedostc_comm_bytes", &fedostc_comm_bytes);

  // --- experiments ---
  m.def(
      "run_experiment",
      [](const py::dict& config) {
        const ExperimentConfig cfg = config_from_kwargs(config);
        const RunOutput out = run_in_memory(cfg);
        return summary_to_dict(out.summary);
      },
      py::arg("config"),
      "Run one experiment from a config dict (keys as in the text config); returns the summary");
  m.def(
      "run_to_directory",
      [](const py::dict& config, const std::string& out_dir, bool force) {
        const ExperimentConfig cfg = config_from_kwargs(config);
        return summary_to_dict(run_to_directory(cfg, out_dir, force, false));
      },
      py::arg("config"), py::arg("out_dir"), py::arg("force") = false);
  m.def("default_config_text", [] { return render_config(ExperimentConfig{}); });
}

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "equiroute/cli.hpp"
#include "equiroute/equirouter.hpp"
#include "equiroute/eval.hpp"
#include "equiroute/oracle.hpp"

namespace py = pybind11;
using namespace equiroute;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Array to_numpy(const Matrix& m) {
  Array out({m.rows(), m.cols()});
  std::copy(m.values().begin(), m.values().end(), out.mutable_data());
  return out;
}

Matrix from_numpy(const Array& a, const char* what) {
  if (a.ndim() != 2) throw ValidationError(std::string(what) + " must be a 2-d array");
  const auto rows = static_cast<std::size_t>(a.shape(0));
  const auto cols = static_cast<std::size_t>(a.shape(1));
  return Matrix(rows, cols, std::vector<double>(a.data(), a.data() + rows * cols));
}

RoutingTable table_from_arrays(const Array& perf, const Array& cost, const Array& embeddings) {
  RoutingTable t;
  t.perf = from_numpy(perf, "perf");
  t.cost = from_numpy(cost, "cost");
  t.embeddings = from_numpy(embeddings, "embeddings");
  for (std::size_t j = 0; j < t.perf.cols(); ++j) t.models.push_back({j, "model-" + std::to_string(j), 1.0});
  for (std::size_t n = 0; n < t.perf.rows(); ++n) t.query_ids.push_back("q" + std::to_string(n));
  t.validate();
  return t;
}

py::dict metrics_dict(const MetricsSummary& m) {
  py::dict d;
  d["nauc"] = m.nauc ? py::cast(*m.nauc) : py::none();
  d["peak_score"] = m.peak_score;
  d["peak_cost"] = m.peak_cost;
  d["qnc"] = m.qnc.cost ? py::cast(*m.qnc.cost) : py::none();
  d["qnc_relative"] = m.qnc.relative ? py::cast(*m.qnc.relative) : py::none();
  d["rci"] = m.rci;
  d["a_max"] = m.standalone.a_max;
  d["x_max"] = m.standalone.x_max;
  d["j_max"] = m.standalone.j_max;
  return d;
}

std::vector<CostPerf> points_from(const std::vector<std::pair<double, double>>& xy) {
  std::vector<CostPerf> p;
  for (const auto& [x, y] : xy) p.push_back({x, y});
  return p;
}

ExperimentConfig config_from(const std::map<std::string, std::string>& settings) {
  ExperimentConfig cfg;
  for (const auto& [k, v] : settings) cfg.set(k, v);
  return cfg;
}

}  // namespace

PYBIND11_MODULE(_equiroute, m) {
  m.doc() = "Budget-constrained model routing";

  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<NumericsError>(m, "NumericsError", PyExc_ArithmeticError);

  py::class_<RoutingTable>(m, "RoutingTable")
      .def(py::init(&table_from_arrays), py::arg("perf"), py::arg("cost"), py::arg("embeddings"))
      .def_property_readonly("num_queries", &RoutingTable::num_queries)
      .def_property_readonly("num_models", &RoutingTable::num_models)
      .def_property_readonly("embed_dim", &RoutingTable::embed_dim)
      .def_property_readonly("perf", [](const RoutingTable& t) { return to_numpy(t.perf); })
      .def_property_readonly("cost", [](const RoutingTable& t) { return to_numpy(t.cost); })
      .def_property_readonly("embeddings", [](const RoutingTable& t) { return to_numpy(t.embeddings); })
      .def_readonly("query_ids", &RoutingTable::query_ids)
      .def_property_readonly("model_names",
                             [](const RoutingTable& t) {
                               std::vector<std::string> names;
                               for (const auto& mi : t.models) names.push_back(mi.name);
                               return names;
                             })
      .def("save", [](const RoutingTable& t, const std::filesystem::path& dir) { save_table(t, dir); });

  m.def("load_table", &load_table, py::arg("directory"));

  m.def(
      "generate_synthetic",
      [](std::size_t n_queries, std::size_t n_models, std::size_t embed_dim, double tie_fraction, double margin_scale,
         double cost_spread, std::uint64_t noise_seed) {
        SynthConfig c;
        c.n_queries = n_queries;
        c.n_models = n_models;
        c.embed_dim = embed_dim;
        c.tie_fraction = tie_fraction;
        c.margin_scale = margin_scale;
        c.cost_spread = cost_spread;
        c.noise_seed = noise_seed;
        return generate_synthetic(c);
      },
      py::arg("n_queries") = 2000, py::arg("n_models") = 6, py::arg("embed_dim") = 32, py::arg("tie_fraction") = 0.9,
      py::arg("margin_scale") = 1.0, py::arg("cost_spread") = 100.0, py::arg("noise_seed") = 0);

  m.def(
      "make_split",
      [](std::size_t n, const std::string& ratio, std::uint64_t seed) {
        const auto s = make_split(n, parse_split_ratio(ratio), seed);
        py::dict d;
        d["train"] = s.train;
        d["valid"] = s.valid;
        d["test"] = s.test;
        return d;
      },
      py::arg("n"), py::arg("ratio") = "3:1:6", py::arg("seed") = 42);

  m.def("oracle_select", &oracle_select, py::arg("table"), py::arg("query"), py::arg("budget"));
  m.def("margin", &margin, py::arg("table"), py::arg("query"), py::arg("budget"));
  m.def(
      "select_model",
      [](const std::vector<double>& scores, const std::vector<double>& costs, double budget) {
        const auto s = select_model(scores, costs, budget);
        return py::make_tuple(s.model, s.clamped);
      },
      py::arg("scores"), py::arg("costs"), py::arg("budget"));

  m.def(
      "ranking_loss",
      [](const std::vector<double>& scores, const std::vector<double>& perf, const std::vector<double>& cost) {
        if (scores.size() != perf.size() || perf.size() != cost.size()) {
          throw ValidationError("ranking_loss: length mismatch");
        }
        return ranking_loss(scores, build_pairs(perf, cost));
      },
      py::arg("scores"), py::arg("perf"), py::arg("cost"));

  m.def(
      "nauc", [](const std::vector<std::pair<double, double>>& xy) { return nauc(points_from(xy)); },
      py::arg("points"));
  m.def(
      "qnc",
      [](const std::vector<std::pair<double, double>>& xy, double a_max, double x_max) {
        const auto q = qnc(points_from(xy), a_max, x_max);
        return py::make_tuple(q.cost, q.relative);
      },
      py::arg("points"), py::arg("a_max"), py::arg("x_max"));
  m.def(
      "rci",
      [](const RoutingTable& t, const std::vector<std::size_t>& selections,
         const std::optional<std::vector<std::size_t>>& queries) {
        const auto q = queries.value_or(all_indices(t.num_queries()));
        const auto report = rci(t, selections, q);
        std::vector<double> scores;
        for (const auto& r : report.records) scores.push_back(r.score);
        return py::make_tuple(report.rci, scores);
      },
      py::arg("table"), py::arg("selections"), py::arg("queries") = py::none());

  m.def(
      "mc_selection_frequencies",
      [](const std::vector<double>& means, double sigma, std::size_t trials, std::uint64_t seed) {
        const auto f = mc_selection_frequencies(means, sigma, trials, seed);
        return py::make_tuple(f.frequency, f.standard_error);
      },
      py::arg("means"), py::arg("sigma"), py::arg("trials") = 100000, py::arg("seed") = 0);

  m.def(
      "noise_sensitivity",
      [](const RoutingTable& t, const std::vector<double>& sigmas, double budget, std::uint64_t seed) {
        py::list out;
        for (const auto& r : noise_sensitivity(t, all_indices(t.num_queries()), sigmas, budget, seed)) {
          py::dict d;
          d["sigma"] = r.sigma;
          d["accuracy"] = r.accuracy;
          d["strongest_share"] = r.strongest_share;
          out.append(d);
        }
        return out;
      },
      py::arg("table"), py::arg("sigmas"), py::arg("budget") = std::numeric_limits<double>::infinity(),
      py::arg("seed") = 42);

  m.def(
      "evaluate",
      [](const RoutingTable& t, const std::map<std::string, std::string>& settings) {
        const ExperimentConfig cfg = config_from(settings);
        const SplitIndices split = make_split(t.num_queries(), cfg.split_ratio, cfg.split_seed);
        std::unique_ptr<Router> router;
        CostSource source = cfg.cost_source;
        if (cfg.router == "oracle") {
          router = std::make_unique<OracleRouter>(t.num_models());
          source = CostSource::oracle;
        } else {
          router = train_router(cfg, t, split).router;
        }
        std::optional<CostPredictor> predictor;
        if (source == CostSource::predicted) {
          RegressorHyper ch = cfg.cost;
          ch.seed = cfg.seed;
          predictor = train_cost_predictor(t, split, ch).predictor;
        }
        const auto ev = evaluate_router(*router, t, split.test, cfg.grid_points, source,
                                        predictor ? &*predictor : nullptr);
        return metrics_dict(ev.metrics);
      },
      py::arg("table"), py::arg("settings") = std::map<std::string, std::string>{},
      "Trains the configured router on the train split and evaluates it on the test split. "
      "`settings` takes the same keys as a config file.");

  m.def(
      "pipeline",
      [](const std::map<std::string, std::string>& settings) { return metrics_dict(cmd_pipeline(config_from(settings))); },
      py::arg("settings"));

  m.def(
      "run_cli",
      [](std::vector<std::string> args) {
        args.insert(args.begin(), "equiroute");
        std::vector<const char*> argv;
        for (const auto& a : args) argv.push_back(a.c_str());
        return run_cli(static_cast<int>(argv.size()), argv.data());
      },
      py::arg("args"), "Runs the command-line tool in-process and returns its exit code.");
}

#include "compmap/bundle.hpp"
#include "compmap/cli.hpp"
#include "compmap/composition.hpp"
#include "compmap/czsl.hpp"
#include "compmap/errors.hpp"
#include "compmap/fewshot.hpp"
#include "compmap/intervention.hpp"
#include "compmap/report.hpp"
#include "compmap/synth.hpp"
#include "compmap/weights.hpp"

#include <json.hpp>
#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

namespace py = pybind11;
using namespace compmap;
using nlohmann::json;

namespace {

// Python objects cross into the core as JSON text.
json to_json_value(const py::object& obj) {
  if (obj.is_none()) return json::object();
  const auto text = py::module_::import("json").attr("dumps")(obj).cast<std::string>();
  return json::parse(text);
}

py::object from_json_value(const json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

TrainConfig train_config(const py::object& config, TrainConfig defaults) {
  from_json(to_json_value(config), defaults);
  defaults.validate();
  return defaults;
}

EvalInputs eval_inputs(const std::string& train_on, const std::string& eval_on, const std::string& intervene) {
  return EvalInputs{parse_input_source(train_on), parse_input_source(eval_on), parse_intervention_mode(intervene)};
}

LinearCompositionModel linear_model(const MatrixF& weights, const std::vector<Index>& composites) {
  if (static_cast<std::size_t>(weights.rows()) != composites.size()) {
    throw std::invalid_argument("weights rows must match the composite list");
  }
  LinearCompositionModel m;
  m.weights = weights;
  m.bias = VectorF::Zero(weights.rows());
  m.composites = composites;
  return m;
}

py::dict sweep_dict(const SweepResult& r) {
  py::dict auc, curves;
  for (std::size_t i = 0; i < r.ks.size(); ++i) {
    auc[py::int_(r.ks[i])] = r.auc[i];
    py::list pts;
    for (const auto& p : r.curves[i]) pts.append(py::make_tuple(p.bias, p.acc_seen, p.acc_unseen));
    curves[py::int_(r.ks[i])] = pts;
  }
  py::dict out;
  out["auc"] = auc;
  out["best_seen"] = r.best_seen;
  out["best_unseen"] = r.best_unseen;
  out["best_hm"] = r.best_hm;
  out["curves"] = curves;
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Composition mapping toolkit: bundles, composition models, CZSL and few-shot evaluation.";

  auto base = py::register_exception<UsageError>(m, "UsageError", PyExc_ValueError);
  py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);
  (void)base;

  py::class_<DatasetBundle>(m, "Bundle")
      .def_property_readonly("num_samples", &DatasetBundle::num_samples)
      .def_property_readonly("primitives", [](const DatasetBundle& b) { return b.vocab.primitives; })
      .def_property_readonly("composites", [](const DatasetBundle& b) { return b.vocab.composites; })
      .def_property_readonly("gt_composition", [](const DatasetBundle& b) { return b.vocab.gt_composition; })
      .def_property_readonly("activations", [](const DatasetBundle& b) { return b.activations.data; })
      .def_property_readonly("ground_truth", [](const DatasetBundle& b) { return b.ground_truth.data; })
      .def_property_readonly("sample_ids", [](const DatasetBundle& b) { return b.activations.sample_ids; })
      .def_property_readonly("labels", [](const DatasetBundle& b) { return b.split.labels; })
      .def_property_readonly("splits",
                             [](const DatasetBundle& b) {
                               std::vector<std::string> out;
                               for (Split s : b.split.split_of) out.emplace_back(to_string(s));
                               return out;
                             })
      .def_property_readonly("seen_set", [](const DatasetBundle& b) { return b.split.seen_set; })
      .def_property_readonly("candidate_set", [](const DatasetBundle& b) { return b.split.candidate_set; })
      .def_property_readonly("composite_embeddings",
                             [](const DatasetBundle& b) -> std::optional<MatrixF> {
                               if (!b.composite_embeddings) return std::nullopt;
                               return b.composite_embeddings->data;
                             })
      .def("rows", [](const DatasetBundle& b, const std::string& split) { return b.split.rows(parse_split(split)); },
           py::arg("split"), "Sample rows of a split: train, val or test.")
      .def("validate", &DatasetBundle::validate)
      .def("save", [](const DatasetBundle& b, const std::filesystem::path& dir) { save_bundle(b, dir); }, py::arg("dir"))
      .def("__eq__", [](const DatasetBundle& a, const DatasetBundle& b) { return a == b; })
      .def("__repr__", [](const DatasetBundle& b) {
        std::ostringstream os;
        os << "<Bundle " << b.num_samples() << " samples, " << b.vocab.num_primitives() << " primitives, "
           << b.vocab.num_composites() << " composites>";
        return os.str();
      });

  m.def("load_bundle", [](const std::filesystem::path& dir) { return load_bundle(dir); }, py::arg("dir"));

  m.def(
      "generate_synth",
      [](const py::object& config, std::optional<std::uint64_t> seed) {
        SynthConfig cfg;
        from_json(to_json_value(config), cfg);
        if (seed) cfg.seed = *seed;
        return generate(cfg);
      },
      py::arg("config") = py::none(), py::arg("seed") = py::none(),
      "Synthetic bundle from a generator config dict (unknown keys are rejected).");

  m.def("harmonic_mean", &harmonic_mean, py::arg("acc_seen"), py::arg("acc_unseen"));

  m.def(
      "sweep_calibration",
      [](const MatrixD& scores, const std::vector<Index>& candidates, const std::vector<Index>& labels,
         const std::vector<Index>& seen, const std::vector<int>& ks) {
        return sweep_dict(sweep_calibration(scores, candidates, labels, seen, ks));
      },
      py::arg("scores"), py::arg("candidates"), py::arg("labels"), py::arg("seen"),
      py::arg("ks") = std::vector<int>{1, 2, 3},
      "Bias sweep over a samples x candidates score matrix. Curves hold (bias, acc_seen, acc_unseen).");

  m.def(
      "train_logreg",
      [](const MatrixF& x, const std::vector<Index>& labels, const py::object& config) {
        const auto r = train_logreg(x, labels, train_config(config, TrainConfig::logreg_defaults()));
        py::dict out;
        out["weights"] = r.model.weights;
        out["bias"] = r.model.bias;
        out["composites"] = r.model.composites;
        out["final_loss"] = r.final_loss;
        return out;
      },
      py::arg("x"), py::arg("labels"), py::arg("config") = py::none());

  m.def(
      "topk_alignment",
      [](const MatrixF& weights, const std::vector<Index>& composites, const DatasetBundle& bundle, bool micro) {
        return topk_alignment(linear_model(weights, composites), bundle.vocab,
                              micro ? AlignmentAveraging::micro : AlignmentAveraging::per_composite);
      },
      py::arg("weights"), py::arg("composites"), py::arg("bundle"), py::arg("micro") = false);

  m.def(
      "model_inputs",
      [](const DatasetBundle& b, const std::vector<Index>& rows, const std::string& source,
         const std::string& intervene) {
        return model_inputs(b, rows, parse_input_source(source), parse_intervention_mode(intervene));
      },
      py::arg("bundle"), py::arg("rows"), py::arg("source") = "pred", py::arg("intervene") = "none");

  m.def(
      "sample_episodes",
      [](const DatasetBundle& b, std::size_t n, std::size_t k, std::size_t q, std::size_t tasks, std::uint64_t seed) {
        py::list out;
        for (const auto& s : sample_episodes(b, EpisodeConfig{n, k, q, tasks, seed})) {
          py::dict d;
          d["classes"] = s.classes;
          d["support"] = s.support;
          d["query"] = s.query;
          d["seed"] = s.seed;
          out.append(d);
        }
        return out;
      },
      py::arg("bundle"), py::arg("n"), py::arg("k"), py::arg("q") = 15, py::arg("tasks") = 600, py::arg("seed") = 0);

  m.def(
      "eval_fewshot",
      [](const DatasetBundle& b, std::size_t n, std::size_t k, std::size_t q, std::size_t tasks, std::uint64_t seed,
         const std::string& train_on, const std::string& eval_on, const std::string& intervene, std::size_t threads,
         const py::object& config) {
        const auto cfg = train_config(config, TrainConfig::logreg_defaults());
        const auto specs = sample_episodes(b, EpisodeConfig{n, k, q, tasks, seed});
        FewShotSummary s;
        {
          py::gil_scoped_release release;
          s = eval_episodes(specs, b, eval_inputs(train_on, eval_on, intervene), cfg, threads);
        }
        py::dict out;
        out["mean"] = s.mean;
        out["std"] = s.stddev;
        out["per_task"] = s.per_task;
        return out;
      },
      py::arg("bundle"), py::arg("n"), py::arg("k"), py::arg("q") = 15, py::arg("tasks") = 600, py::arg("seed") = 0,
      py::arg("train_on") = "pred", py::arg("eval_on") = "pred", py::arg("intervene") = "none",
      py::arg("threads") = 1, py::arg("config") = py::none());

  m.def(
      "eval_fullshot",
      [](const DatasetBundle& b, const std::string& train_on, const std::string& eval_on, const std::string& intervene,
         const py::object& config) {
        std::size_t excluded = 0;
        const double acc = eval_fullshot(b, eval_inputs(train_on, eval_on, intervene),
                                         train_config(config, TrainConfig::logreg_defaults()), &excluded);
        return py::make_tuple(acc, excluded);
      },
      py::arg("bundle"), py::arg("train_on") = "pred", py::arg("eval_on") = "pred", py::arg("intervene") = "none",
      py::arg("config") = py::none(), "Returns (accuracy, excluded test samples of untrained classes).");

  m.def("interpretability_delta", &interpretability_delta, py::arg("metric_gt"), py::arg("metric_pred_on_gt"));

  m.def(
      "delta_metrics",
      [](const py::object& oracle, const py::object& pred) {
        return from_json_value(delta_metrics(to_json_value(oracle), to_json_value(pred)));
      },
      py::arg("oracle_metrics"), py::arg("pred_metrics"));

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::vector<std::string> argv{"compmap"};
        argv.insert(argv.end(), args.begin(), args.end());
        std::ostringstream out, err;
        int code = 0;
        {
          py::gil_scoped_release release;
          code = run_cli(argv, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs one command line; returns (exit code, stdout, stderr).");
}

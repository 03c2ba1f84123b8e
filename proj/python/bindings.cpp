#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "bnpipe/data_prep.hpp"
#include "bnpipe/decomposition.hpp"
#include "bnpipe/icl_sequencer.hpp"
#include "bnpipe/metrics.hpp"
#include "bnpipe/model_io.hpp"
#include "bnpipe/neat.hpp"
#include "bnpipe/tensor.hpp"

namespace py = pybind11;
using namespace bnpipe;

namespace {

using PyIndex = std::vector<std::size_t>;
using PyEntry = std::pair<PyIndex, double>;

Index to_index(const PyIndex& idx) {
  if (idx.empty() || idx.size() > kMaxModes) throw Error(ErrorCode::ShapeMismatch, "index must have 2 or 3 coordinates");
  Index out{};
  std::copy(idx.begin(), idx.end(), out.begin());
  return out;
}

SparseTensor make_tensor(std::vector<std::size_t> shape, const std::vector<PyEntry>& entries, std::string name) {
  std::vector<Entry> out;
  out.reserve(entries.size());
  for (const auto& [idx, value] : entries) {
    if (idx.size() != shape.size()) throw Error(ErrorCode::ShapeMismatch, "index arity differs from the tensor shape");
    out.push_back({to_index(idx), value});
  }
  return SparseTensor(std::move(shape), std::move(out), std::move(name));
}

std::vector<PyEntry> tensor_entries(const SparseTensor& t) {
  std::vector<PyEntry> out;
  out.reserve(t.size());
  for (const auto& e : t.entries()) out.push_back({PyIndex(e.index.begin(), e.index.begin() + t.modes()), e.value});
  return out;
}

py::array_t<double> to_array(const Matrix& m) {
  py::array_t<double> a({m.rows, m.cols});
  std::copy(m.data.begin(), m.data.end(), a.mutable_data());
  return a;
}

py::dict report_dict(const FitReport& r) {
  py::dict d;
  d["final_train_rmse"] = r.final_train_rmse;
  d["final_rmse_x"] = r.final_rmse_x;
  d["final_rmse_y"] = r.final_rmse_y;
  d["stopped_early"] = r.stopped_early;
  d["seed"] = r.seed;
  std::vector<std::pair<std::size_t, double>> history;
  for (const auto& h : r.history) history.push_back({h.epoch, h.train_rmse});
  d["history"] = history;
  return d;
}

template <class Model>
py::tuple fit_pair(const FitResult<Model>& r) {
  return py::make_tuple(r.model, report_dict(r.report));
}

BehaviorLabel label_of(const std::string& text) {
  const auto l = parse_label(text);
  if (!l) throw Error(ErrorCode::ParseError, "unknown label '" + text + "'");
  return *l;
}

IclMode mode_of(const std::string& text) {
  const auto m = parse_mode(text);
  if (!m) throw Error(ErrorCode::ConfigError, "unknown mode '" + text + "'");
  return *m;
}

/// Forwards each context, as the parsed protocol request, to a Python callable.
class CallableLabeler : public Labeler {
 public:
  explicit CallableLabeler(py::function fn) : fn_(std::move(fn)) {}
  LabelDecision label(const PromptContext& context) override {
    const auto request = py::module_::import("json").attr("loads")(protocol_request(context));
    const auto result = fn_(request);
    if (py::isinstance<py::str>(result)) return {label_of(result.cast<std::string>()), std::nullopt};
    const auto pair = result.cast<std::pair<std::string, double>>();
    return {label_of(pair.first), pair.second};
  }

 private:
  py::function fn_;
};

py::list metrics_dict_rows(const MetricsReport& r) {
  py::list rows;
  for (const auto& c : r.per_class) {
    py::dict d;
    d["class"] = c.cls;
    d["support"] = c.support;
    d["precision"] = c.precision;
    d["recall"] = c.recall;
    d["f1"] = c.f1;
    d["f2"] = c.f2;
    rows.append(d);
  }
  return rows;
}

py::dict report_to_dict(const MetricsReport& r) {
  py::dict d;
  d["macro_f1"] = r.macro_f1;
  d["balanced_accuracy"] = r.balanced_accuracy;
  d["mcc"] = r.mcc;
  d["per_class"] = metrics_dict_rows(r);
  d["classes"] = r.confusion.classes;
  d["confusion"] = r.confusion.counts;
  return d;
}

ConfusionMatrix cm_of(const std::vector<std::string>& truth, const std::vector<std::string>& pred) {
  return confusion(truth, pred);
}

}  // namespace

PYBIND11_MODULE(_bnpipe, m) {
  m.doc() = "Coupled tensor decomposition, NeAT, behavior labeling and metrics";

  static py::exception<Error> error(m, "Error", PyExc_RuntimeError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::tuple args = py::make_tuple(std::string(to_string(e.code())), e.detail());
      PyErr_SetObject(error.ptr(), args.ptr());
    }
  });

  py::enum_<NonnegMap>(m, "NonnegMap").value("Softplus", NonnegMap::Softplus).value("Relu", NonnegMap::Relu);

  // tensor_core
  py::class_<SparseTensor>(m, "SparseTensor")
      .def(py::init(&make_tensor), py::arg("shape"), py::arg("entries"), py::arg("name") = "t")
      .def_property_readonly("shape", &SparseTensor::shape)
      .def_property_readonly("name", &SparseTensor::name)
      .def_property_readonly("modes", &SparseTensor::modes)
      .def("__len__", &SparseTensor::size)
      .def("entries", &tensor_entries)
      .def("__eq__", [](const SparseTensor& a, const SparseTensor& b) { return a == b; })
      .def("__repr__", [](const SparseTensor& t) {
        std::ostringstream s;
        s << "SparseTensor(shape=[";
        for (std::size_t i = 0; i < t.modes(); ++i) s << (i ? ", " : "") << t.dim(i);
        s << "], nnz=" << t.size() << ")";
        return s.str();
      });
  m.def("validate", [](const SparseTensor& t) {
    std::vector<std::tuple<std::string, std::size_t, std::string>> out;
    for (const auto& v : validate(t).violations) out.emplace_back(std::string(to_string(v.kind)), v.entry, v.detail);
    return out;
  });
  m.def("read_coo", &read_coo_file, py::arg("path"));
  m.def("write_coo", &write_coo_file, py::arg("path"), py::arg("tensor"));
  m.def("rmse_cp", [](const SparseTensor& t, const CpModel& model) {
    return rmse(t, [&](const Index& i) { return reconstruct_cp(model, i); });
  });

  // decomposition
  py::class_<TrainConfig>(m, "TrainConfig")
      .def(py::init<>())
      .def_readwrite("rank", &TrainConfig::rank)
      .def_readwrite("learning_rate", &TrainConfig::learning_rate)
      .def_readwrite("epochs", &TrainConfig::epochs)
      .def_readwrite("batch_size", &TrainConfig::batch_size)
      .def_readwrite("seed", &TrainConfig::seed)
      .def_readwrite("coupling_weight", &TrainConfig::coupling_weight)
      .def_readwrite("early_stop_patience", &TrainConfig::early_stop_patience)
      .def_readwrite("early_stop_delta", &TrainConfig::early_stop_delta)
      .def_readwrite("nonneg", &TrainConfig::nonneg)
      .def_readwrite("head_hidden", &TrainConfig::head_hidden);

  py::class_<CpModel>(m, "CpModel")
      .def_property_readonly("rank", &CpModel::rank)
      .def_property_readonly("weights", [](const CpModel& c) { return c.weights; })
      .def("factors", [](const CpModel& c) {
        std::vector<py::array_t<double>> out;
        for (const auto& f : c.factors) out.push_back(to_array(f));
        return out;
      })
      .def("predict", [](const CpModel& c, const PyIndex& i) { return reconstruct_cp(c, to_index(i)); })
      .def("__eq__", [](const CpModel& a, const CpModel& b) { return a == b; });

  py::class_<CoupledCpModel>(m, "CoupledCpModel")
      .def_property_readonly("rank", &CoupledCpModel::rank)
      .def_property_readonly("weights_x", [](const CoupledCpModel& c) { return c.weights_x; })
      .def_property_readonly("weights_y", [](const CoupledCpModel& c) { return c.weights_y; })
      .def("predict_x", [](const CoupledCpModel& c, const PyIndex& i) { return reconstruct_x(c, to_index(i)); })
      .def("predict_y", [](const CoupledCpModel& c, const PyIndex& i) { return reconstruct_y(c, to_index(i)); })
      .def("rank_components", [](const CoupledCpModel& c) {
        std::vector<std::tuple<std::size_t, double, double>> out;
        for (const auto& w : rank_components(c)) out.emplace_back(w.component, w.weight_x, w.weight_y);
        return out;
      })
      .def("__eq__", [](const CoupledCpModel& a, const CoupledCpModel& b) { return a == b; });

  py::class_<NeatModel>(m, "NeatModel")
      .def_property_readonly("rank", &NeatModel::rank)
      .def("predict", [](const NeatModel& n, const PyIndex& i) { return neat_predict(n, to_index(i)); })
      .def("contribution", [](const NeatModel& n, std::size_t r) { return component_contribution(n, r); })
      .def("__eq__", [](const NeatModel& a, const NeatModel& b) { return a == b; });

  py::class_<CoupledNeatModel>(m, "CoupledNeatModel")
      .def_property_readonly("rank", &CoupledNeatModel::rank)
      .def("predict_x", [](const CoupledNeatModel& n, const PyIndex& i) { return neat_predict(n, to_index(i), Which::X); })
      .def("predict_y", [](const CoupledNeatModel& n, const PyIndex& i) { return neat_predict(n, to_index(i), Which::Y); })
      .def("contributions", [](const CoupledNeatModel& n) {
        std::vector<std::pair<double, double>> out;
        for (std::size_t r = 0; r < n.rank(); ++r) {
          out.push_back({component_contribution(n, Which::X, r), component_contribution(n, Which::Y, r)});
        }
        return out;
      })
      .def("identify_components", [](const CoupledNeatModel& n, double threshold) {
        std::vector<std::string> out;
        for (auto t : identify_components(n, threshold)) out.emplace_back(to_string(t));
        return out;
      }, py::arg("threshold") = 0.5)
      .def("__eq__", [](const CoupledNeatModel& a, const CoupledNeatModel& b) { return a == b; });

  m.def("fit_cp", [](const SparseTensor& x, const TrainConfig& c) { return fit_pair(fit_cp(x, c)); });
  m.def("fit_coupled_cp",
        [](const SparseTensor& x, const SparseTensor& y, const TrainConfig& c) { return fit_pair(fit_coupled_cp(x, y, c)); });
  m.def("fit_neat", [](const SparseTensor& x, const TrainConfig& c) { return fit_pair(fit_neat(x, c)); });
  m.def("fit_coupled_neat", [](const SparseTensor& x, const SparseTensor& y, const TrainConfig& c) {
    return fit_pair(fit_coupled_neat(x, y, c));
  });
  m.def("tag_components",
        [](const std::vector<double>& x, const std::vector<double>& y, double threshold) {
          std::vector<std::string> out;
          for (auto t : tag_components(x, y, threshold)) out.emplace_back(to_string(t));
          return out;
        },
        py::arg("scores_x"), py::arg("scores_y"), py::arg("threshold") = 0.5);

  // model_io
  m.def("save_model", [](const std::string& path, const AnyModel& model) { write_model_file(path, model); },
        py::arg("path"), py::arg("model"));
  m.def("load_model", &read_model_file, py::arg("path"));
  m.def("model_kind", [](const AnyModel& model) { return std::string(model_kind(model)); });
  m.def("evaluate_model",
        [](const AnyModel& model, const SparseTensor& x, std::optional<SparseTensor> y) {
          const auto r = evaluate_model(model, x, y ? &*y : nullptr);
          return py::make_tuple(r.rmse_x, r.rmse_y);
        },
        py::arg("model"), py::arg("x"), py::arg("y") = py::none());

  // data_prep
  m.def("parse_label", [](const std::string& text) -> std::optional<std::string> {
    const auto l = parse_label(text);
    if (!l) return std::nullopt;
    return std::string(to_string(*l));
  });
  m.def("behavior_to_matrix", [](const std::vector<std::pair<std::string, std::vector<std::string>>>& trials) {
    std::vector<LabelSequence> seqs;
    for (const auto& [id, labels] : trials) {
      LabelSequence s;
      s.trial_id = id;
      for (const auto& l : labels) s.labels.push_back(label_of(l));
      seqs.push_back(std::move(s));
    }
    return behavior_to_matrix(seqs);
  });
  m.def("sample_zeros", &sample_zeros, py::arg("tensor"), py::arg("ratio") = 1.0, py::arg("seed") = 0);
  m.def("split",
        [](const SparseTensor& t, double fraction, std::uint64_t seed) {
          auto r = split(t, {fraction, seed});
          return py::make_tuple(r.train, r.test);
        },
        py::arg("tensor"), py::arg("train_fraction") = 0.9, py::arg("seed") = 0);
  m.def("grid_binarize", [](const std::vector<std::pair<double, double>>& events, std::size_t n) {
    std::vector<Point> pts;
    for (auto [x, y] : events) pts.push_back({x, y});
    const auto g = grid_binarize(pts, n);
    std::vector<std::vector<int>> rows(n, std::vector<int>(n));
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t c = 0; c < n; ++c) rows[r][c] = g.at(r, c);
    }
    return rows;
  });
  m.def("class_distribution", [](const std::vector<std::string>& labels) {
    LabelSequence s;
    for (const auto& l : labels) s.labels.push_back(label_of(l));
    std::vector<std::tuple<std::string, std::size_t, double>> out;
    for (const auto& c : class_distribution({s})) out.emplace_back(std::string(to_string(c.label)), c.count, c.proportion);
    return out;
  });

  // metrics
  m.def("confusion", [](const std::vector<std::string>& t, const std::vector<std::string>& p) {
    const auto cm = cm_of(t, p);
    return py::make_tuple(cm.classes, cm.counts);
  });
  m.def("classification_report", [](const std::vector<std::string>& t, const std::vector<std::string>& p) {
    return report_to_dict(classification_report(cm_of(t, p)));
  });
  m.def("fbeta", [](const std::vector<std::string>& t, const std::vector<std::string>& p, const std::string& cls, double beta) {
    const auto s = fbeta(cm_of(t, p), cls, beta);
    return py::make_tuple(s.precision, s.recall, s.f_beta);
  });
  m.def("macro_f1", [](const std::vector<std::string>& t, const std::vector<std::string>& p) { return macro_f1(cm_of(t, p)); });
  m.def("balanced_accuracy",
        [](const std::vector<std::string>& t, const std::vector<std::string>& p) { return balanced_accuracy(cm_of(t, p)); });
  m.def("mcc", [](const std::vector<std::string>& t, const std::vector<std::string>& p) { return mcc(cm_of(t, p)); });
  m.def("quadratic_weighted_kappa", [](const std::vector<std::pair<int, int>>& pairs) {
    std::vector<ScorePair> sp;
    for (auto [e, mo] : pairs) sp.push_back({e, mo});
    return quadratic_weighted_kappa(sp);
  });

  // icl_sequencer
  m.def(
      "run_sequence",
      [](const std::vector<std::string>& media, const std::vector<std::pair<std::string, std::string>>& examples,
         py::object labeler, const std::string& mode, bool include_next) {
        std::vector<Chunk> chunks;
        for (std::size_t t = 0; t < media.size(); ++t) chunks.push_back({"trial", t, media[t]});
        std::vector<Example> ex;
        for (std::size_t i = 0; i < examples.size(); ++i) {
          ex.push_back({{"example", i, examples[i].first}, label_of(examples[i].second)});
        }
        std::unique_ptr<Labeler> impl;
        if (py::isinstance<py::int_>(labeler)) {
          impl = std::make_unique<HashRuleLabeler>(labeler.cast<std::uint64_t>());
        } else {
          impl = std::make_unique<CallableLabeler>(labeler.cast<py::function>());
        }
        const auto m_ = mode_of(mode);
        const auto run = run_sequence(chunks, ex, *impl, m_, include_next);
        std::vector<std::string> labels;
        for (auto l : run.labels.labels) labels.emplace_back(to_string(l));
        std::ostringstream trace;
        write_trace_jsonl(trace, run.trace);
        py::list steps;
        const auto loads = py::module_::import("json").attr("loads");
        std::istringstream lines(trace.str());
        std::string line;
        while (std::getline(lines, line)) steps.append(loads(line));
        return py::make_tuple(labels, steps);
      },
      py::arg("media"), py::arg("examples"), py::arg("labeler"), py::arg("mode") = "ar_icl",
      py::arg("include_next") = true,
      "Labels chunks in order. `labeler` is an int seed for the hash rule or a callable taking the "
      "context dict and returning a label or (label, confidence).");
  m.def("evaluate_run", [](const std::vector<std::string>& pred, const std::vector<std::string>& gold) {
    LabelSequence p, g;
    for (const auto& l : pred) p.labels.push_back(label_of(l));
    for (const auto& l : gold) g.labels.push_back(label_of(l));
    return report_to_dict(evaluate_run(p, g));
  });
}

#include "bnpipe/model_io.hpp"

#include <fstream>
#include <ostream>

#include <json.hpp>

namespace bnpipe {

using nlohmann::json;

namespace {

json matrix_json(const Matrix& m) { return {{"rows", m.rows}, {"cols", m.cols}, {"data", m.data}}; }

json head_json(const ComponentHead& head) {
  json layers = json::array();
  for (const auto& l : head.layers) layers.push_back({{"weight", matrix_json(l.weight)}, {"bias", l.bias}});
  return layers;
}

json heads_json(const std::vector<ComponentHead>& heads) {
  json out = json::array();
  for (const auto& h : heads) out.push_back(head_json(h));
  return out;
}

[[noreturn]] void bad(const std::string& what) { throw Error(ErrorCode::ParseError, "model file: " + what); }

const json& field(const json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) bad(std::string("missing field '") + key + "'");
  return j.at(key);
}

std::vector<double> doubles(const json& j, const char* what) {
  if (!j.is_array()) bad(std::string(what) + " is not an array");
  std::vector<double> out;
  out.reserve(j.size());
  for (const auto& v : j) {
    if (!v.is_number()) bad(std::string(what) + " holds a non-number");
    out.push_back(v.get<double>());
  }
  return out;
}

std::size_t count(const json& j, const char* key) {
  const auto& v = field(j, key);
  if (!v.is_number_unsigned()) bad(std::string("'") + key + "' is not a non-negative integer");
  return v.get<std::size_t>();
}

Matrix matrix_from(const json& j, const char* what) {
  Matrix m;
  m.rows = count(j, "rows");
  m.cols = count(j, "cols");
  m.data = doubles(field(j, "data"), what);
  if (m.data.size() != m.rows * m.cols) bad(std::string(what) + " has the wrong number of values");
  return m;
}

ComponentHead head_from(const json& j) {
  if (!j.is_array() || j.empty()) bad("head is not a non-empty layer list");
  ComponentHead h;
  for (const auto& l : j) h.layers.push_back({matrix_from(field(l, "weight"), "head weight"), doubles(field(l, "bias"), "head bias")});
  return h;
}

std::vector<ComponentHead> heads_from(const json& j) {
  if (!j.is_array()) bad("heads is not an array");
  std::vector<ComponentHead> out;
  for (const auto& h : j) out.push_back(head_from(h));
  return out;
}

std::vector<Matrix> factors_from(const json& j) {
  if (!j.is_array()) bad("factors is not an array");
  std::vector<Matrix> out;
  for (const auto& m : j) out.push_back(matrix_from(m, "factor"));
  return out;
}

json factors_json(const std::vector<Matrix>& factors) {
  json out = json::array();
  for (const auto& f : factors) out.push_back(matrix_json(f));
  return out;
}

template <class T>
std::vector<std::size_t> x_shape_of(const T& m) {
  if constexpr (requires { m.x_shape(); }) {
    return m.x_shape();
  } else {
    return m.shape();
  }
}

}  // namespace

std::string_view model_kind(const AnyModel& model) {
  static constexpr std::string_view kinds[] = {"cpd", "coupled-cpd", "neat", "coupled-neat"};
  return kinds[model.index()];
}

void write_model(std::ostream& out, const AnyModel& model) {
  json j;
  j["format"] = std::string(kModelFormat);
  j["version"] = kModelVersion;
  j["kind"] = std::string(model_kind(model));
  std::visit(
      [&](const auto& m) {
        j["nonneg"] = std::string(to_string(m.nonneg));
        j["rank"] = m.rank();
        j["x_shape"] = x_shape_of(m);
      },
      model);

  json p;
  if (const auto* m = std::get_if<CpModel>(&model)) {
    p["factors"] = factors_json(m->factors);
    p["weights"] = m->weights;
  } else if (const auto* m = std::get_if<CoupledCpModel>(&model)) {
    j["y_shape"] = m->y_shape();
    p["trial"] = matrix_json(m->trial);
    p["time"] = matrix_json(m->time);
    p["neuron"] = matrix_json(m->neuron);
    if (m->behavior) p["behavior"] = matrix_json(*m->behavior);
    p["weights_x"] = m->weights_x;
    p["weights_y"] = m->weights_y;
  } else if (const auto* m = std::get_if<NeatModel>(&model)) {
    p["factors"] = factors_json(m->factors);
    p["heads"] = heads_json(m->heads);
  } else if (const auto* m = std::get_if<CoupledNeatModel>(&model)) {
    j["y_shape"] = m->y_shape();
    p["trial"] = matrix_json(m->trial);
    p["time"] = matrix_json(m->time);
    p["neuron"] = matrix_json(m->neuron);
    if (m->behavior) p["behavior"] = matrix_json(*m->behavior);
    p["heads_x"] = heads_json(m->heads_x);
    p["heads_y"] = heads_json(m->heads_y);
  }
  j["parameters"] = std::move(p);
  out << j.dump(1) << '\n';
}

void write_model_file(const std::string& path, const AnyModel& model) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write '" + path + "'");
  write_model(out, model);
  if (!out) throw Error(ErrorCode::IoError, "write to '" + path + "' failed");
}

AnyModel read_model(std::istream& in) {
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    bad(std::string("not valid JSON (") + e.what() + ")");
  }
  const auto& format = field(j, "format");
  if (!format.is_string() || format.get<std::string>() != kModelFormat) bad("not a bnpipe model");
  const auto& version = field(j, "version");
  if (!version.is_number_integer() || version.get<int>() != kModelVersion) {
    bad("unsupported version " + version.dump());
  }
  const auto& nonneg_text = field(j, "nonneg");
  const auto nonneg = nonneg_text.is_string() ? parse_nonneg(nonneg_text.get<std::string>()) : std::nullopt;
  if (!nonneg) bad("unknown nonneg map " + nonneg_text.dump());
  const auto& kind_field = field(j, "kind");
  const auto kind = kind_field.is_string() ? kind_field.get<std::string>() : std::string();
  const auto& p = field(j, "parameters");

  auto optional_behavior = [&]() -> std::optional<Matrix> {
    if (!p.contains("behavior")) return std::nullopt;
    return matrix_from(p.at("behavior"), "behavior");
  };

  AnyModel model;
  if (kind == "cpd") {
    CpModel m{factors_from(field(p, "factors")), doubles(field(p, "weights"), "weights"), *nonneg};
    check_layout(m);
    model = std::move(m);
  } else if (kind == "coupled-cpd") {
    CoupledCpModel m{matrix_from(field(p, "trial"), "trial"),
                     matrix_from(field(p, "time"), "time"),
                     matrix_from(field(p, "neuron"), "neuron"),
                     optional_behavior(),
                     doubles(field(p, "weights_x"), "weights_x"),
                     doubles(field(p, "weights_y"), "weights_y"),
                     *nonneg};
    check_layout(m);
    model = std::move(m);
  } else if (kind == "neat") {
    NeatModel m{factors_from(field(p, "factors")), heads_from(field(p, "heads")), *nonneg};
    check_layout(m);
    model = std::move(m);
  } else if (kind == "coupled-neat") {
    CoupledNeatModel m{matrix_from(field(p, "trial"), "trial"),
                       matrix_from(field(p, "time"), "time"),
                       matrix_from(field(p, "neuron"), "neuron"),
                       optional_behavior(),
                       heads_from(field(p, "heads_x")),
                       heads_from(field(p, "heads_y")),
                       *nonneg};
    check_layout(m);
    model = std::move(m);
  } else {
    bad("unknown model kind '" + kind + "'");
  }
  return model;
}

AnyModel read_model_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open '" + path + "'");
  try {
    return read_model(in);
  } catch (const Error& e) {
    throw Error(e.code(), path + ": " + e.detail());
  }
}

namespace {

void require_shape(const SparseTensor& t, const std::vector<std::size_t>& shape, const char* what) {
  if (!std::equal(t.shape().begin(), t.shape().end(), shape.begin(), shape.end())) {
    throw Error(ErrorCode::ShapeMismatch, std::string(what) + " tensor shape does not match the model");
  }
}

}  // namespace

EvalResult evaluate_model(const AnyModel& model, const SparseTensor& x, const SparseTensor* y) {
  const bool coupled = std::holds_alternative<CoupledCpModel>(model) || std::holds_alternative<CoupledNeatModel>(model);
  if (y && !coupled) throw Error(ErrorCode::ConfigError, "a single-tensor model takes no Y tensor");
  require_valid(x);
  if (y) require_valid(*y);

  EvalResult result{};
  if (const auto* m = std::get_if<CpModel>(&model)) {
    require_shape(x, m->shape(), "X");
    result.rmse_x = rmse(x, [m](const Index& i) { return reconstruct_cp(*m, i); });
  } else if (const auto* m = std::get_if<NeatModel>(&model)) {
    require_shape(x, m->shape(), "X");
    result.rmse_x = rmse(x, [m](const Index& i) { return neat_predict(*m, i); });
  } else if (const auto* m = std::get_if<CoupledCpModel>(&model)) {
    require_shape(x, m->x_shape(), "X");
    result.rmse_x = rmse(x, [m](const Index& i) { return reconstruct_x(*m, i); });
    if (y) {
      require_shape(*y, m->y_shape(), "Y");
      result.rmse_y = rmse(*y, [m](const Index& i) { return reconstruct_y(*m, i); });
    }
  } else if (const auto* m = std::get_if<CoupledNeatModel>(&model)) {
    require_shape(x, m->x_shape(), "X");
    result.rmse_x = rmse(x, [m](const Index& i) { return neat_predict(*m, i, Which::X); });
    if (y) {
      require_shape(*y, m->y_shape(), "Y");
      result.rmse_y = rmse(*y, [m](const Index& i) { return neat_predict(*m, i, Which::Y); });
    }
  }
  return result;
}

void write_fit_report(std::ostream& out, const FitReport& report) {
  json j;
  j["final_train_rmse"] = report.final_train_rmse;
  j["final_rmse_x"] = report.final_rmse_x;
  j["final_rmse_y"] = report.final_rmse_y ? json(*report.final_rmse_y) : json(nullptr);
  j["stopped_early"] = report.stopped_early;
  j["seed"] = report.seed;
  j["epochs_run"] = report.history.empty() ? 0 : report.history.back().epoch;
  json history = json::array();
  for (const auto& h : report.history) history.push_back({{"epoch", h.epoch}, {"train_rmse", h.train_rmse}});
  j["history"] = std::move(history);
  out << j.dump(1) << '\n';
}

}  // namespace bnpipe

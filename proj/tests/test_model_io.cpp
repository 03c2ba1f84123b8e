#include <gtest/gtest.h>

#include <sstream>

#include <json.hpp>

#include "bnpipe/model_io.hpp"
#include "support.hpp"

namespace bnpipe {
namespace {

using testing::code_of;
using testing::dense_tensor;
using testing::normal_matrix;
using testing::normal_vector;
using testing::random_head;

std::vector<AnyModel> sample_models() {
  Rng rng(1);
  CpModel cp;
  cp.nonneg = NonnegMap::Relu;
  for (std::size_t d : {3, 4, 2}) cp.factors.push_back(normal_matrix(rng, d, 2, 1e3));
  cp.weights = normal_vector(rng, 2, 1e-7);

  CoupledCpModel ccp;
  ccp.trial = normal_matrix(rng, 3, 2);
  ccp.time = normal_matrix(rng, 4, 2);
  ccp.neuron = normal_matrix(rng, 2, 2);
  ccp.behavior = normal_matrix(rng, 5, 2);
  ccp.weights_x = normal_vector(rng, 2);
  ccp.weights_y = normal_vector(rng, 2);

  NeatModel neat;
  for (std::size_t d : {3, 4}) neat.factors.push_back(normal_matrix(rng, d, 2));
  const std::size_t hidden[] = {3};
  neat.heads = {random_head(rng, 2, hidden), random_head(rng, 2, hidden)};

  CoupledNeatModel cneat;
  cneat.trial = normal_matrix(rng, 3, 1);
  cneat.time = normal_matrix(rng, 4, 1);
  cneat.neuron = normal_matrix(rng, 2, 1);
  cneat.heads_x = {random_head(rng, 3)};
  cneat.heads_y = {random_head(rng, 2)};
  return {cp, ccp, neat, cneat};
}

AnyModel round_trip(const AnyModel& m) {
  std::stringstream buf;
  write_model(buf, m);
  return read_model(buf);
}

TEST(ModelIo, RoundTripIsBitExact) {
  for (const auto& m : sample_models()) {
    const auto back = round_trip(m);
    EXPECT_EQ(back, m) << model_kind(m);
    EXPECT_EQ(model_kind(back), model_kind(m));
  }
}

TEST(ModelIo, KindsAndHeader) {
  const auto models = sample_models();
  const char* kinds[] = {"cpd", "coupled-cpd", "neat", "coupled-neat"};
  for (std::size_t i = 0; i < models.size(); ++i) {
    EXPECT_EQ(model_kind(models[i]), kinds[i]);
    std::stringstream buf;
    write_model(buf, models[i]);
    const auto j = nlohmann::json::parse(buf.str());
    EXPECT_EQ(j["format"], kModelFormat);
    EXPECT_EQ(j["version"], kModelVersion);
    EXPECT_EQ(j["kind"], kinds[i]);
  }
}

TEST(ModelIo, ReloadedModelEvaluatesIdentically) {
  Rng rng(2);
  const auto models = sample_models();
  const auto& ccp = std::get<CoupledCpModel>(models[1]);
  const auto x = dense_tensor(ccp.x_shape(), [&](const Index&) { return rng.uniform(); });
  const auto y = dense_tensor(ccp.y_shape(), [&](const Index&) { return rng.uniform(); });
  const auto a = evaluate_model(ccp, x, &y);
  const auto b = evaluate_model(round_trip(ccp), x, &y);
  EXPECT_EQ(a.rmse_x, b.rmse_x);
  EXPECT_EQ(a.rmse_y, b.rmse_y);
  EXPECT_EQ(a.rmse_x, rmse(x, [&](const Index& i) { return reconstruct_x(ccp, i); }));
}

TEST(ModelIo, EvaluateRejectsMismatches) {
  Rng rng(3);
  const auto models = sample_models();
  const auto x = dense_tensor({3, 4, 2}, [&](const Index&) { return rng.uniform(); });
  const auto wrong = dense_tensor({3, 4, 3}, [&](const Index&) { return rng.uniform(); });
  EXPECT_EQ(code_of([&] { evaluate_model(models[0], x, &x); }), ErrorCode::ConfigError);
  EXPECT_EQ(code_of([&] { evaluate_model(models[0], wrong); }), ErrorCode::ShapeMismatch);
  EXPECT_EQ(code_of([&] { evaluate_model(models[1], wrong); }), ErrorCode::ShapeMismatch);
}

TEST(ModelIo, MalformedInput) {
  for (const char* text : {"", "not json", R"({"format": "other", "version": 1, "kind": "cpd"})",
                           R"({"format": "bnpipe-model", "version": 99, "kind": "cpd"})",
                           R"({"format": "bnpipe-model", "version": 1, "kind": "tucker"})"}) {
    std::istringstream in(text);
    EXPECT_EQ(code_of([&] { read_model(in); }), ErrorCode::ParseError) << text;
  }
  EXPECT_EQ(code_of([] { read_model_file("/nonexistent/model.json"); }), ErrorCode::IoError);
}

TEST(ModelIo, InconsistentLayoutIsRejected) {
  std::stringstream buf;
  write_model(buf, sample_models()[0]);
  auto j = nlohmann::json::parse(buf.str());
  j["parameters"]["weights"].push_back(1.0);
  std::istringstream in(j.dump());
  const auto code = code_of([&] { read_model(in); });
  EXPECT_TRUE(code == ErrorCode::ShapeMismatch || code == ErrorCode::ParseError) << to_string(code);
}

TEST(FitReportJson, CarriesHistoryAndFinals) {
  FitReport r;
  r.final_train_rmse = 0.25;
  r.final_rmse_x = 0.25;
  r.history = {{0, 1.0}, {1, 0.5}};
  r.seed = 7;
  std::ostringstream out;
  write_fit_report(out, r);
  const auto j = nlohmann::json::parse(out.str());
  EXPECT_EQ(j["final_train_rmse"], 0.25);
  EXPECT_EQ(j["seed"], 7);
  EXPECT_TRUE(j["final_rmse_y"].is_null());
  EXPECT_EQ(j["history"].size(), 2u);
}

}  // namespace
}  // namespace bnpipe

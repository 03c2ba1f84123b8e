#include <gtest/gtest.h>

#include <cmath>

#include "bnpipe/neat.hpp"
#include "support.hpp"

namespace bnpipe {
namespace {

using testing::dense_tensor;
using testing::gradient_relative_error;
using testing::normal_matrix;
using testing::random_head;

using testing::code_of;

NeatModel random_neat(Rng& rng, const std::vector<std::size_t>& shape, std::size_t r,
                      std::span<const std::size_t> hidden = {}) {
  NeatModel m;
  for (auto d : shape) m.factors.push_back(normal_matrix(rng, d, r));
  for (std::size_t k = 0; k < r; ++k) m.heads.push_back(random_head(rng, shape.size(), hidden));
  return m;
}

CoupledNeatModel random_coupled_neat(Rng& rng, std::size_t i, std::size_t j, std::size_t k,
                                     std::optional<std::size_t> l, std::size_t r,
                                     std::span<const std::size_t> hidden = {}) {
  CoupledNeatModel m;
  m.trial = normal_matrix(rng, i, r);
  m.time = normal_matrix(rng, j, r);
  m.neuron = normal_matrix(rng, k, r);
  if (l) m.behavior = normal_matrix(rng, *l, r);
  for (std::size_t q = 0; q < r; ++q) {
    m.heads_x.push_back(random_head(rng, 3, hidden));
    m.heads_y.push_back(random_head(rng, l ? 3 : 2, hidden));
  }
  return m;
}

TEST(NeatPredict, ZeroHeadsPredictZero) {
  Rng rng(1);
  auto m = random_neat(rng, {3, 4, 2}, 3);
  for (auto& h : m.heads) h = ComponentHead::zeros(3);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(neat_predict(m, {i, i, i % 2}), 0.0);
}

TEST(NeatPredict, AffineHeadOnKnownFactorValues) {
  NeatModel m;
  m.nonneg = NonnegMap::Relu;
  m.factors = {Matrix(1, 1, 2.0), Matrix(1, 1, 3.0), Matrix(1, 1, 4.0)};
  auto head = ComponentHead::zeros(3);
  head.layers[0].weight.data = {1.0, 1.0, 1.0};
  m.heads = {head};
  EXPECT_EQ(neat_predict(m, {0, 0, 0}), 9.0);
}

TEST(NeatPredict, MatchesPerComponentLoopOracle) {
  Rng rng(2);
  const auto m = random_neat(rng, {3, 4, 2}, 3);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 4; ++j) {
      for (std::size_t k = 0; k < 2; ++k) {
        double expected = 0.0;
        for (std::size_t r = 0; r < 3; ++r) {
          const auto& layer = m.heads[r].layers[0];
          const double f[3] = {phi(m.nonneg, m.factors[0](i, r)), phi(m.nonneg, m.factors[1](j, r)),
                               phi(m.nonneg, m.factors[2](k, r))};
          expected += layer.bias[0];
          for (int q = 0; q < 3; ++q) expected += layer.weight.data[q] * f[q];
        }
        EXPECT_NEAR(neat_predict(m, {i, j, k}), expected, 1e-13);
      }
    }
  }
}

TEST(NeatPredict, OutOfRangeIndexThrows) {
  Rng rng(2);
  const auto m = random_neat(rng, {3, 4, 2}, 1);
  EXPECT_EQ(code_of([&] { neat_predict(m, {0, 4, 0}); }), ErrorCode::IndexOutOfBounds);
}

TEST(NeatPredict, AdditiveOverComponents) {
  Rng rng(3);
  const std::size_t hidden[] = {4, 3};
  for (int trial = 0; trial < 20; ++trial) {
    const bool deep = trial % 2 == 1;
    const auto m = random_neat(rng, {3, 3, 3}, 4, deep ? std::span<const std::size_t>(hidden) : std::span<const std::size_t>());
    for (std::size_t i = 0; i < 3; ++i) {
      const Index idx{i, (i + 1) % 3, (i + 2) % 3};
      double sum = 0.0;
      for (std::size_t r = 0; r < 4; ++r) {
        auto single = m;
        for (std::size_t q = 0; q < 4; ++q) {
          if (q != r) single.heads[q] = ComponentHead::zeros(3, deep ? std::span<const std::size_t>(hidden) : std::span<const std::size_t>());
        }
        sum += neat_predict(single, idx);
      }
      EXPECT_NEAR(neat_predict(m, idx), sum, 1e-12);
    }
  }
}

TEST(NeatPredict, CoupledPathsShareTrialAndTimeFactors) {
  Rng rng(4);
  const auto m = random_coupled_neat(rng, 3, 4, 2, std::nullopt, 2);
  NeatModel y_view;
  y_view.factors = {m.trial, m.time};
  y_view.heads = m.heads_y;
  NeatModel x_view;
  x_view.factors = {m.trial, m.time, m.neuron};
  x_view.heads = m.heads_x;
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(neat_predict(m, {i, 1, 0}, Which::Y), neat_predict(y_view, {i, 1, 0}));
    EXPECT_EQ(neat_predict(m, {i, 1, 1}, Which::X), neat_predict(x_view, {i, 1, 1}));
  }
}

TEST(NeatLayout, RejectsInconsistentModels) {
  Rng rng(5);
  auto m = random_neat(rng, {3, 4, 2}, 2);
  m.heads.pop_back();
  EXPECT_EQ(code_of([&] { check_layout(m); }), ErrorCode::ShapeMismatch);
  auto c = random_coupled_neat(rng, 3, 4, 2, std::nullopt, 2);
  c.heads_y[0] = ComponentHead::zeros(3);
  EXPECT_EQ(code_of([&] { check_layout(c); }), ErrorCode::ShapeMismatch);
}

TEST(NeatLoss, GradientMatchesFiniteDifferences) {
  Rng rng(6);
  const std::size_t hidden[] = {3};
  for (int point = 0; point < 20; ++point) {
    const bool deep = point % 4 == 3;
    const auto m = random_neat(rng, {3, 4, 2}, 1 + rng.below(3), deep ? std::span<const std::size_t>(hidden) : std::span<const std::size_t>());
    const auto t = testing::subsample(dense_tensor({3, 4, 2}, [&](const Index&) { return rng.normal(0, 1); }), 0.7, rng);
    const double err = gradient_relative_error(
        m, [&](const NeatModel& p) { return neat_loss(p, t); },
        [&](const NeatModel& p, NeatModel& g) { neat_loss_gradient(p, t, g); });
    EXPECT_LT(err, 1e-4) << "point " << point;
  }
}

TEST(CoupledNeatLoss, GradientMatchesFiniteDifferences) {
  Rng rng(7);
  for (int point = 0; point < 20; ++point) {
    const bool three_mode_y = point % 2 == 0;
    const auto m = random_coupled_neat(rng, 3, 4, 2, three_mode_y ? std::optional<std::size_t>(3) : std::nullopt,
                                       1 + rng.below(3));
    const auto x = testing::subsample(dense_tensor(m.x_shape(), [&](const Index&) { return rng.normal(0, 1); }), 0.7, rng);
    const auto y = testing::subsample(dense_tensor(m.y_shape(), [&](const Index&) { return rng.normal(0, 1); }), 0.7, rng);
    const double w = 0.5 + rng.uniform();
    const double err = gradient_relative_error(
        m, [&](const CoupledNeatModel& p) { return coupled_neat_loss(p, x, y, w); },
        [&](const CoupledNeatModel& p, CoupledNeatModel& g) { coupled_neat_loss_gradient(p, x, y, w, g); });
    EXPECT_LT(err, 1e-4) << "point " << point;
  }
}

TEST(CoupledNeatLoss, ZeroWeightEqualsSingleLoss) {
  Rng rng(8);
  const auto m = random_coupled_neat(rng, 3, 4, 2, std::nullopt, 2);
  const auto x = dense_tensor(m.x_shape(), [&](const Index&) { return rng.uniform(); });
  const auto y = dense_tensor(m.y_shape(), [&](const Index&) { return rng.uniform(); });
  NeatModel x_view;
  x_view.factors = {m.trial, m.time, m.neuron};
  x_view.heads = m.heads_x;
  EXPECT_EQ(coupled_neat_loss(m, x, y, 0.0), neat_loss(x_view, x));
}

TEST(FitNeat, AllZeroTensor) {
  const auto zeros = dense_tensor({4, 4, 4}, [](const Index&) { return 0.0; });
  TrainConfig c;
  c.rank = 2;
  EXPECT_LT(fit_neat(zeros, c).report.final_train_rmse, 1e-3);
}

TEST(FitNeat, RecoversDataFromKnownModel) {
  Rng rng(9);
  const auto truth = random_neat(rng, {8, 9, 5}, 2);
  const auto t = dense_tensor(truth.shape(), [&](const Index& i) { return neat_predict(truth, i); });
  TrainConfig c;
  c.rank = 2;
  c.epochs = 2000;
  c.batch_size = 64;
  EXPECT_LT(fit_neat(t, c).report.final_train_rmse, 1e-2);
}

TEST(FitNeat, SameSeedGivesIdenticalParameters) {
  Rng rng(10);
  const auto t = dense_tensor({4, 5, 3}, [&](const Index&) { return rng.uniform(); });
  TrainConfig c;
  c.rank = 2;
  c.epochs = 30;
  c.batch_size = 8;
  c.seed = 4;
  const auto a = fit_neat(t, c);
  const auto b = fit_neat(t, c);
  EXPECT_EQ(a.model, b.model);
  EXPECT_EQ(a.report, b.report);
}

TEST(FitNeat, DeepHeadsTrain) {
  Rng rng(11);
  const auto t = dense_tensor({4, 5, 3}, [&](const Index&) { return rng.uniform(); });
  TrainConfig c;
  c.rank = 2;
  c.epochs = 100;
  c.head_hidden = {4};
  const auto fit = fit_neat(t, c);
  EXPECT_EQ(fit.model.heads[0].depth(), 2u);
  EXPECT_LT(fit.report.final_train_rmse, fit.report.history.front().train_rmse);
  EXPECT_EQ(code_of([&] { component_contribution(fit.model, 0); }), ErrorCode::DeepHeadUnsupported);
}

/// Least-squares solve via normal equations with partial pivoting.
std::vector<double> least_squares(const std::vector<std::vector<double>>& rows, const std::vector<double>& target) {
  const std::size_t p = rows.front().size();
  std::vector<std::vector<double>> a(p, std::vector<double>(p + 1, 0.0));
  for (std::size_t n = 0; n < rows.size(); ++n) {
    for (std::size_t i = 0; i < p; ++i) {
      for (std::size_t j = 0; j < p; ++j) a[i][j] += rows[n][i] * rows[n][j];
      a[i][p] += rows[n][i] * target[n];
    }
  }
  for (std::size_t c = 0; c < p; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < p; ++r) {
      if (std::abs(a[r][c]) > std::abs(a[piv][c])) piv = r;
    }
    std::swap(a[c], a[piv]);
    for (std::size_t r = 0; r < p; ++r) {
      if (r == c) continue;
      const double f = a[r][c] / a[c][c];
      for (std::size_t k = c; k <= p; ++k) a[r][k] -= f * a[c][k];
    }
  }
  std::vector<double> beta(p);
  for (std::size_t i = 0; i < p; ++i) beta[i] = a[i][p] / a[i][i];
  return beta;
}

TEST(NeatExpressiveness, ContainsBestAffineFeatureBaseline) {
  Rng rng(12);
  const std::size_t r = 2;
  const auto t = dense_tensor({5, 6, 4}, [&](const Index& i) { return std::sin(double(i[0] * i[1])) + 0.1 * i[2]; });
  auto m = random_neat(rng, t.shape(), r);
  // Affine baseline on the features phi(a_ir), phi(b_jr), phi(c_kr) plus intercept.
  std::vector<std::vector<double>> features;
  std::vector<double> target;
  for (const auto& e : t.entries()) {
    std::vector<double> f;
    for (std::size_t q = 0; q < r; ++q) {
      for (std::size_t mode = 0; mode < 3; ++mode) f.push_back(phi(m.nonneg, m.factors[mode](e.index[mode], q)));
    }
    f.push_back(1.0);
    features.push_back(f);
    target.push_back(e.value);
  }
  const auto beta = least_squares(features, target);
  double sse = 0.0;
  for (std::size_t n = 0; n < features.size(); ++n) {
    double pred = 0.0;
    for (std::size_t k = 0; k < beta.size(); ++k) pred += beta[k] * features[n][k];
    sse += (pred - target[n]) * (pred - target[n]);
  }
  const double baseline = std::sqrt(sse / static_cast<double>(features.size()));

  // The same predictor as a NeAT model: head q carries the coefficients of its
  // component, head 0 also carries the intercept.
  for (std::size_t q = 0; q < r; ++q) {
    auto& layer = m.heads[q].layers[0];
    for (std::size_t mode = 0; mode < 3; ++mode) layer.weight.data[mode] = beta[3 * q + mode];
    layer.bias[0] = q == 0 ? beta.back() : 0.0;
  }
  const double neat = rmse(t, [&](const Index& i) { return neat_predict(m, i); });
  EXPECT_LE(neat, baseline + 1e-10);
  EXPECT_NEAR(neat, baseline, 1e-10);
}

TEST(FitCoupledNeat, EmptyYIsRejected) {
  Rng rng(13);
  const auto x = dense_tensor({3, 4, 2}, [&](const Index&) { return rng.uniform(); });
  EXPECT_EQ(code_of([&] { fit_coupled_neat(x, SparseTensor({3, 4}, {}), TrainConfig{}); }), ErrorCode::EmptyTensor);
}

TEST(FitCoupledNeat, ShapeMismatch) {
  Rng rng(13);
  const auto x = dense_tensor({3, 4, 2}, [&](const Index&) { return rng.uniform(); });
  const auto y = dense_tensor({3, 5}, [&](const Index&) { return rng.uniform(); });
  EXPECT_EQ(code_of([&] { fit_coupled_neat(x, y, TrainConfig{}); }), ErrorCode::ShapeMismatch);
}

TEST(FitCoupledNeat, SameSeedGivesIdenticalReport) {
  Rng rng(14);
  const auto x = dense_tensor({3, 4, 2}, [&](const Index&) { return rng.uniform(); });
  const auto y = dense_tensor({3, 4, 3}, [&](const Index&) { return rng.uniform(); });
  TrainConfig c;
  c.rank = 2;
  c.epochs = 25;
  c.batch_size = 8;
  const auto a = fit_coupled_neat(x, y, c);
  const auto b = fit_coupled_neat(x, y, c);
  EXPECT_EQ(a.report, b.report);
  EXPECT_EQ(a.model, b.model);
  EXPECT_TRUE(a.model.behavior.has_value());
}

TEST(FitCoupledNeat, BeatsSingleTensorCpdOnAdditiveSharedFactorData) {
  Rng rng(15);
  const std::size_t r = 2;
  CoupledNeatModel truth;
  truth.trial = normal_matrix(rng, 12, r);
  truth.time = normal_matrix(rng, 15, r);
  truth.neuron = normal_matrix(rng, 8, r);
  for (std::size_t q = 0; q < r; ++q) {
    for (auto* heads : {&truth.heads_x, &truth.heads_y}) {
      auto h = ComponentHead::zeros(heads == &truth.heads_x ? 3 : 2);
      for (auto& w : h.layers[0].weight.data) w = 0.5 + rng.uniform();
      heads->push_back(h);
    }
  }
  const auto x_all = dense_tensor(truth.x_shape(), [&](const Index& i) { return neat_predict(truth, i, Which::X); });
  const auto y_all = dense_tensor(truth.y_shape(), [&](const Index& i) { return neat_predict(truth, i, Which::Y); });
  Rng split_rng(1);
  std::vector<Entry> xtr, xte, ytr, yte;
  for (const auto& e : x_all.entries()) (split_rng.uniform() < 0.9 ? xtr : xte).push_back(e);
  for (const auto& e : y_all.entries()) (split_rng.uniform() < 0.9 ? ytr : yte).push_back(e);

  TrainConfig c;
  c.rank = r;
  c.epochs = 1000;
  c.batch_size = 128;
  const auto neat = fit_coupled_neat(x_all.with_entries(xtr), y_all.with_entries(ytr), c);
  const auto cpd_x = fit_cp(x_all.with_entries(xtr), c);
  const auto cpd_y = fit_cp(y_all.with_entries(ytr), c);
  const auto xt = x_all.with_entries(xte);
  const auto yt = y_all.with_entries(yte);
  EXPECT_LT(rmse(xt, [&](const Index& i) { return neat_predict(neat.model, i, Which::X); }),
            rmse(xt, [&](const Index& i) { return reconstruct_cp(cpd_x.model, i); }));
  EXPECT_LT(rmse(yt, [&](const Index& i) { return neat_predict(neat.model, i, Which::Y); }),
            rmse(yt, [&](const Index& i) { return reconstruct_cp(cpd_y.model, i); }));
}

TEST(ComponentContribution, SumOfWeightsAndBias) {
  auto head = ComponentHead::zeros(3);
  head.layers[0].weight.data = {0.2, 0.3, 0.1};
  head.layers[0].bias = {0.4};
  EXPECT_NEAR(component_contribution(head), 1.0, 1e-15);
  EXPECT_EQ(component_contribution(ComponentHead::zeros(3)), 0.0);
}

TEST(ComponentContribution, MatchesSummationOracle) {
  Rng rng(16);
  for (int trial = 0; trial < 50; ++trial) {
    const auto head = random_head(rng, 2 + rng.below(2));
    double expected = head.layers[0].bias[0];
    for (double w : head.layers[0].weight.data) expected += w;
    EXPECT_NEAR(component_contribution(head), expected, 1e-14);
  }
}

TEST(ComponentContribution, DeepHeadUnsupported) {
  const std::size_t hidden[] = {2};
  EXPECT_EQ(code_of([&] { component_contribution(ComponentHead::zeros(3, hidden)); }), ErrorCode::DeepHeadUnsupported);
}

TEST(TagComponents, SingleComponentIsShared) {
  const std::vector<double> x{0.7};
  const std::vector<double> y{2.0};
  EXPECT_EQ(tag_components(x, y), std::vector<ComponentTag>{ComponentTag::Shared});
}

TEST(TagComponents, ForcedByNormalization) {
  const std::vector<double> x{1.0, 0.01};
  const std::vector<double> y{0.01, 1.0};
  EXPECT_EQ(tag_components(x, y, 0.5), (std::vector<ComponentTag>{ComponentTag::XSpecific, ComponentTag::YSpecific}));
}

TEST(TagComponents, InactiveAndThresholdBoundary) {
  const std::vector<double> x{1.0, 0.5, 0.1};
  const std::vector<double> y{1.0, 0.2, -0.3};
  EXPECT_EQ(tag_components(x, y, 0.5),
            (std::vector<ComponentTag>{ComponentTag::Shared, ComponentTag::XSpecific, ComponentTag::Inactive}));
}

TEST(TagComponents, DegenerateAndMismatchedScores) {
  const std::vector<double> good{1.0, 0.5};
  const std::vector<double> bad{-1.0, 0.0};
  EXPECT_EQ(code_of([&] { tag_components(good, bad); }), ErrorCode::DegenerateScores);
  EXPECT_EQ(code_of([&] { tag_components(bad, good); }), ErrorCode::DegenerateScores);
  const std::vector<double> shorter{1.0};
  EXPECT_EQ(code_of([&] { tag_components(good, shorter); }), ErrorCode::ShapeMismatch);
}

TEST(TagComponents, InvariantUnderPositiveRescaling) {
  Rng rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t r = 1 + rng.below(6);
    std::vector<double> x(r), y(r);
    for (auto& v : x) v = rng.normal(0.5, 1.0);
    for (auto& v : y) v = rng.normal(0.5, 1.0);
    x[0] = std::abs(x[0]) + 0.1;
    y[0] = std::abs(y[0]) + 0.1;
    // powers of two keep the normalized ratios bit-identical
    const double scale = std::ldexp(1.0, static_cast<int>(rng.below(20)) - 10);
    auto xs = x;
    for (auto& v : xs) v *= scale;
    EXPECT_EQ(tag_components(x, y), tag_components(xs, y));
  }
}

TEST(IdentifyComponents, UsesHeadContributions) {
  Rng rng(18);
  auto m = random_coupled_neat(rng, 2, 2, 2, std::nullopt, 2);
  m.heads_x[0].layers[0].weight.data = {1.0, 1.0, 1.0};
  m.heads_x[0].layers[0].bias = {0.0};
  m.heads_x[1].layers[0].weight.data = {0.01, 0.0, 0.0};
  m.heads_x[1].layers[0].bias = {0.0};
  m.heads_y[0].layers[0].weight.data = {2.0, 0.0};
  m.heads_y[0].layers[0].bias = {0.0};
  m.heads_y[1].layers[0].weight.data = {2.0, 1.0};
  m.heads_y[1].layers[0].bias = {0.0};
  EXPECT_EQ(identify_components(m), (std::vector<ComponentTag>{ComponentTag::Shared, ComponentTag::YSpecific}));
  EXPECT_EQ(to_string(ComponentTag::XSpecific), "XSpecific");
}

}  // namespace
}  // namespace bnpipe

#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <numbers>
#include <set>

#include "hydo/numerics/adam.hpp"
#include "hydo/numerics/archive.hpp"
#include "hydo/numerics/errors.hpp"
#include "hydo/numerics/gaussian.hpp"
#include "hydo/numerics/graph.hpp"
#include "hydo/numerics/mlp.hpp"
#include "hydo/numerics/rng.hpp"
#include "support/gradcheck.hpp"

namespace hydo {
namespace {

using testing::check_gradients;

DenseArray random_array(std::size_t rows, std::size_t cols, RngStream& rng, double scale = 1.0) {
  DenseArray a(rows, cols);
  for (double& x : a.values()) x = scale * rng.normal();
  return a;
}

using Builder = std::function<Var(Graph&, const std::vector<Var>&)>;

// Analytic vs finite-difference gradient for a loss built from leaves.
double op_gradient_error(const Builder& build, const std::vector<DenseArray>& leaves) {
  Graph g;
  std::vector<Var> vars;
  for (const auto& leaf : leaves) vars.push_back(g.parameter(leaf));
  const Var loss = build(g, vars);
  const Gradients grads = g.backward(loss);
  std::vector<DenseArray> analytic;
  for (Var v : vars) analytic.push_back(grads.wrt(v));
  auto eval = [&](const std::vector<DenseArray>& probe) {
    Graph h;
    std::vector<Var> pv;
    for (const auto& p : probe) pv.push_back(h.parameter(p));
    return h.value(build(h, pv)).item();
  };
  return check_gradients(eval, leaves, analytic).max_relative_error;
}

// Weighted sum so that every output entry matters differently.
Var weighted_sum(Graph& g, Var x, std::uint64_t salt) {
  RngStream rng = seeded_rng(salt);
  const DenseArray& v = g.value(x);
  return g.sum(g.mul(x, g.constant(random_array(v.rows(), v.cols(), rng))));
}

// ---------------------------------------------------------------- mlp_forward

TEST(MlpForward, IdentityLayerPassesInputThrough) {
  MlpParams params;
  DenseLayer layer;
  layer.weight = DenseArray(2, 2, std::vector<double>{1, 0, 0, 1});
  layer.bias = DenseArray(1, 2, 0.0);
  params.layers.push_back(layer);
  Graph g;
  const Var out = mlp_forward(params, g.constant(DenseArray::row({1.0, 2.0})), g);
  EXPECT_EQ(g.value(out), DenseArray::row({1.0, 2.0}));
}

TEST(MlpForward, ZeroWeightsReturnBias) {
  MlpParams params;
  DenseLayer layer;
  layer.weight = DenseArray(3, 2, 0.0);
  layer.bias = DenseArray::row({0.5, -1.5});
  params.layers.push_back(layer);
  Graph g;
  const Var out = mlp_forward(params, g.constant(DenseArray::row({7.0, -3.0, 2.0})), g);
  EXPECT_EQ(g.value(out), DenseArray::row({0.5, -1.5}));
}

TEST(MlpForward, MatchesStraightLineReimplementation) {
  RngStream rng = seeded_rng(11);
  const std::vector<std::size_t> widths{3, 5, 2};
  MlpParams params = make_mlp(widths, Activation::tanh, Activation::tanh, rng);
  for (auto& layer : params.layers)
    for (double& b : layer.bias.values()) b = rng.normal();
  const DenseArray x = random_array(4, 3, rng);

  Graph g;
  const DenseArray& got = g.value(mlp_forward(params, g.constant(x), g));

  const auto& l0 = params.layers[0];
  const auto& l1 = params.layers[1];
  for (std::size_t r = 0; r < 4; ++r) {
    double hidden[5];
    for (std::size_t j = 0; j < 5; ++j) {
      double acc = l0.bias[j];
      for (std::size_t i = 0; i < 3; ++i) acc += x(r, i) * l0.weight(i, j);
      hidden[j] = std::tanh(acc);
    }
    for (std::size_t k = 0; k < 2; ++k) {
      double acc = l1.bias[k];
      for (std::size_t j = 0; j < 5; ++j) acc += hidden[j] * l1.weight(j, k);
      EXPECT_NEAR(got(r, k), std::tanh(acc), 1e-14);
    }
  }
}

TEST(MlpForward, ShapeMismatchIsConfigError) {
  RngStream rng = seeded_rng(1);
  const std::vector<std::size_t> widths{3, 4};
  const MlpParams params = make_mlp(widths, Activation::tanh, Activation::identity, rng);
  Graph g;
  EXPECT_THROW(mlp_forward(params, g.constant(DenseArray(1, 2)), g), ConfigError);
}

TEST(MlpForward, GlorotInitializationIsBounded) {
  RngStream rng = seeded_rng(2);
  const std::vector<std::size_t> widths{10, 30, 4};
  const MlpParams params = make_mlp(widths, Activation::relu, Activation::identity, rng);
  const double l0 = std::sqrt(6.0 / 40.0), l1 = std::sqrt(6.0 / 34.0);
  for (double w : params.layers[0].weight.values()) EXPECT_LE(std::abs(w), l0);
  for (double w : params.layers[1].weight.values()) EXPECT_LE(std::abs(w), l1);
}

// ------------------------------------------------------------------- backward

TEST(Backward, LinearLossGradientIsInput) {
  Graph g;
  const DenseArray x = DenseArray(3, 1, std::vector<double>{1.5, -2.0, 0.25});
  const Var w = g.parameter(DenseArray::row({0.3, 0.1, -0.7}));
  const Var loss = g.sum(g.matmul(w, g.constant(x)));
  const DenseArray dw = g.backward(loss).wrt(w);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(dw[i], x[i]);
}

TEST(Backward, LogSoftmaxGradientIsOneHotMinusSoftmax) {
  Graph g;
  const Var z = g.parameter(DenseArray::row({0.2, -1.0, 2.5, 0.0}));
  const Var logp = g.log_softmax_rows(z);
  const std::size_t j = 1;
  const Var loss = g.sum(g.slice_cols(logp, j, j + 1));
  const DenseArray dz = g.backward(loss).wrt(z);
  const DenseArray p = g.value(g.softmax_rows(z));
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(dz[i], (i == j ? 1.0 : 0.0) - p[i], 1e-15);
}

TEST(Backward, RandomThreeLayerNetMatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    RngStream rng = seeded_rng(100 + seed);
    const std::vector<std::size_t> widths{4, 6, 5, 3};
    MlpParams params = make_mlp(widths, Activation::tanh, Activation::identity, rng);
    const DenseArray x = random_array(7, 4, rng);
    const DenseArray target = random_array(7, 3, rng);

    auto loss_of = [&](Graph& g, const MlpParams& p, const BoundMlp& bound) {
      const Var out = mlp_forward(g, p, bound, g.constant(x));
      return g.mean(g.square(g.sub(out, g.constant(target))));
    };
    Graph g;
    const BoundMlp bound = bind_parameters(g, params);
    const Gradients grads = g.backward(loss_of(g, params, bound));
    const MlpParams dparams = gradients_of(grads, bound, params);

    std::vector<DenseArray> flat, analytic;
    for (const DenseArray* a : parameter_arrays(params)) flat.push_back(*a);
    for (const DenseArray* a : parameter_arrays(dparams)) analytic.push_back(*a);
    auto eval = [&](const std::vector<DenseArray>& probe) {
      MlpParams p = params;
      auto slots = parameter_arrays(p);
      for (std::size_t i = 0; i < slots.size(); ++i) *slots[i] = probe[i];
      Graph h;
      return h.value(loss_of(h, p, bind_parameters(h, p))).item();
    };
    EXPECT_LT(check_gradients(eval, flat, analytic).max_relative_error, 1e-4) << "seed " << seed;
  }
}

TEST(Backward, NonScalarLossIsUsageError) {
  Graph g;
  const Var x = g.parameter(DenseArray(2, 2, 1.0));
  EXPECT_THROW(g.backward(x), UsageError);
}

TEST(Backward, UntouchedLeavesGetZeroGradient) {
  Graph g;
  const Var used = g.parameter(DenseArray::row({1.0, 2.0}));
  const Var unused = g.parameter(DenseArray(3, 2, 4.0));
  const Gradients grads = g.backward(g.sum(g.square(used)));
  EXPECT_FALSE(grads.has(unused));
  EXPECT_EQ(grads.wrt(unused), DenseArray(3, 2, 0.0));
}

TEST(Backward, VisitsEachReachableNodeOnce) {
  Graph g;
  const Var a = g.parameter(DenseArray::row({1.0, 2.0}));
  const Var b = g.tanh(a);
  const Var c = g.mul(b, b);  // b reached twice through c
  g.exp(a);                   // not reachable from the loss
  const Var loss = g.sum(c);
  EXPECT_EQ(g.backward(loss).visited(), 4u);  // loss, c, b, a
}

TEST(Backward, NonFiniteValueIsNumericFault) {
  Graph g;
  const Var x = g.parameter(DenseArray::row({800.0}));
  EXPECT_THROW(g.exp(x), NumericFault);
  EXPECT_THROW(g.log(g.constant(DenseArray::row({-1.0}))), DomainError);
}

// Every differentiable op against central differences on random inputs.
TEST(Backward, EveryOpPassesFiniteDifferenceCheck) {
  struct Case {
    const char* name;
    std::vector<std::pair<std::size_t, std::size_t>> shapes;
    Builder build;
  };
  const DenseArray mask = DenseArray(2, 4, std::vector<double>{1, 0, 1, 1, 0, 1, 1, 0});
  std::vector<Case> cases = {
      {"matmul", {{3, 4}, {4, 2}}, [](Graph& g, const auto& v) { return weighted_sum(g, g.matmul(v[0], v[1]), 1); }},
      {"add_row", {{3, 4}, {1, 4}}, [](Graph& g, const auto& v) { return weighted_sum(g, g.add(v[0], v[1]), 2); }},
      {"sub_col", {{3, 4}, {3, 1}}, [](Graph& g, const auto& v) { return weighted_sum(g, g.sub(v[0], v[1]), 3); }},
      {"mul", {{3, 4}, {3, 4}}, [](Graph& g, const auto& v) { return weighted_sum(g, g.mul(v[0], v[1]), 4); }},
      {"mul_scalar", {{3, 4}, {1, 1}}, [](Graph& g, const auto& v) { return weighted_sum(g, g.mul(v[0], v[1]), 5); }},
      {"scale", {{2, 3}}, [](Graph& g, const auto& v) { return weighted_sum(g, g.add_scalar(g.scale(v[0], -1.7), 0.3), 6); }},
      {"tanh", {{2, 3}}, [](Graph& g, const auto& v) { return weighted_sum(g, g.tanh(v[0]), 7); }},
      {"relu", {{2, 3}}, [](Graph& g, const auto& v) { return weighted_sum(g, g.relu(g.add_scalar(v[0], 0.05)), 8); }},
      {"exp", {{2, 3}}, [](Graph& g, const auto& v) { return weighted_sum(g, g.exp(v[0]), 9); }},
      {"log", {{2, 3}}, [](Graph& g, const auto& v) { return weighted_sum(g, g.log(g.add_scalar(g.square(v[0]), 0.5)), 10); }},
      {"log_cosh", {{2, 3}}, [](Graph& g, const auto& v) { return weighted_sum(g, g.log_cosh(g.scale(v[0], 3.0)), 23); }},
      {"mean", {{2, 3}}, [](Graph& g, const auto& v) { return g.mean(g.square(v[0])); }},
      {"row_sum", {{3, 2}}, [](Graph& g, const auto& v) { return weighted_sum(g, g.row_sum(g.tanh(v[0])), 11); }},
      {"concat", {{2, 3}, {2, 1}}, [](Graph& g, const auto& v) { return weighted_sum(g, g.concat_cols({v[0], v[1], v[0]}), 12); }},
      {"slice_cols", {{2, 5}}, [](Graph& g, const auto& v) { return weighted_sum(g, g.slice_cols(v[0], 1, 4), 13); }},
      {"slice_rows", {{5, 2}}, [](Graph& g, const auto& v) { return weighted_sum(g, g.slice_rows(v[0], 2, 5), 14); }},
      {"gather_rows", {{4, 2}}, [](Graph& g, const auto& v) { return weighted_sum(g, g.gather_rows(v[0], {3, 0, 3}), 15); }},
      {"group_mean", {{6, 2}}, [](Graph& g, const auto& v) { return weighted_sum(g, g.group_mean(v[0], 3), 16); }},
      {"repeat_rows", {{2, 3}}, [](Graph& g, const auto& v) { return weighted_sum(g, g.repeat_rows(v[0], 3), 17); }},
      {"reshape", {{2, 6}}, [](Graph& g, const auto& v) { return weighted_sum(g, g.reshape(g.tanh(v[0]), 4, 3), 18); }},
      {"softmax", {{2, 4}}, [mask](Graph& g, const auto& v) { return weighted_sum(g, g.softmax_rows(v[0], mask), 19); }},
      {"log_softmax", {{2, 4}}, [mask](Graph& g, const auto& v) { return weighted_sum(g, g.log_softmax_rows(v[0], mask), 20); }},
      {"clip_st_interior", {{2, 3}}, [](Graph& g, const auto& v) { return weighted_sum(g, g.clip_st(g.scale(v[0], 0.2), -1.0, 1.0), 21); }},
      {"gaussian_log_prob", {{3, 2}, {3, 2}}, [](Graph& g, const auto& v) { return weighted_sum(g, g.gaussian_log_prob(v[0], v[1], 0.3), 22); }},
  };
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    for (const auto& c : cases) {
      RngStream rng = seeded_rng(1000 + seed);
      std::vector<DenseArray> leaves;
      for (auto [r, col] : c.shapes) leaves.push_back(random_array(r, col, rng));
      EXPECT_LT(op_gradient_error(c.build, leaves), 1e-4) << c.name << " seed " << seed;
    }
  }
}

TEST(Backward, ClipStraightThroughOutsideBandOnlyPassesInwardSteps) {
  Graph g;
  const Var x = g.parameter(DenseArray::row({1.5, 1.5, -2.0, 0.5}));
  const Var clipped = g.clip_st(x, -1.0, 1.0);
  EXPECT_EQ(g.value(clipped), DenseArray::row({1.0, 1.0, -1.0, 0.5}));
  // Loss gradient +1 on entry 0 (descent lowers it: inward), -1 on entry 1
  // (descent raises it: outward), +1 on entry 2 (outward), +1 inside.
  const Var loss = g.sum(g.mul(clipped, g.constant(DenseArray::row({1.0, -1.0, 1.0, 1.0}))));
  EXPECT_EQ(g.backward(loss).wrt(x), DenseArray::row({1.0, 0.0, 0.0, 1.0}));
}

// -------------------------------------------------------------------- softmax

TEST(Softmax, SumsToOneAndIsShiftInvariant) {
  RngStream rng = seeded_rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const DenseArray z = random_array(3, 7, rng, 5.0);
    DenseArray shifted = z;
    const double c = rng.uniform(-100.0, 100.0);
    for (double& x : shifted.values()) x += c;
    Graph g;
    const DenseArray p = g.value(g.softmax_rows(g.constant(z)));
    const DenseArray& q = g.value(g.softmax_rows(g.constant(shifted)));
    for (std::size_t r = 0; r < 3; ++r) {
      double total = 0.0;
      for (std::size_t c2 = 0; c2 < 7; ++c2) {
        total += p(r, c2);
        EXPECT_NEAR(p(r, c2), q(r, c2), 1e-12);
      }
      EXPECT_NEAR(total, 1.0, 1e-12);
    }
  }
}

// ----------------------------------------------------------------------- adam

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
  DenseArray p = DenseArray::row({1.0, -2.0});
  std::vector<DenseArray*> params{&p};
  AdamState state = make_adam(std::span<const DenseArray* const>(std::vector<const DenseArray*>{&p}), {});
  const std::vector<DenseArray> grads{DenseArray(1, 2, 0.0)};
  adam_step(params, grads, state);
  EXPECT_EQ(p, DenseArray::row({1.0, -2.0}));
  EXPECT_EQ(state.step, 1u);
}

TEST(Adam, ConstantGradientMovesAgainstItsSign) {
  DenseArray p = DenseArray::row({0.0, 0.0});
  std::vector<DenseArray*> params{&p};
  AdamState state = make_adam(std::span<const DenseArray* const>(std::vector<const DenseArray*>{&p}), {0.01});
  const std::vector<DenseArray> grads{DenseArray::row({2.0, -0.5})};
  for (int i = 0; i < 200; ++i) adam_step(params, grads, state);
  EXPECT_LT(p[0], 0.0);
  EXPECT_GT(p[1], 0.0);
  EXPECT_EQ(state.step, 200u);
}

TEST(Adam, FirstStepMatchesHandComputation) {
  DenseArray p = DenseArray::row({3.0});
  std::vector<DenseArray*> params{&p};
  AdamConfig config{0.1, 0.9, 0.999, 1e-8};
  AdamState state = make_adam(std::span<const DenseArray* const>(std::vector<const DenseArray*>{&p}), config);
  adam_step(params, std::vector<DenseArray>{DenseArray::row({1.0})}, state);
  // m = 0.1, v = 0.001; bias-corrected m_hat = 1, v_hat = 1.
  const double m_hat = (1.0 - 0.9) * 1.0 / (1.0 - 0.9);
  const double v_hat = (1.0 - 0.999) * 1.0 / (1.0 - 0.999);
  EXPECT_DOUBLE_EQ(p[0], 3.0 - 0.1 * m_hat / (std::sqrt(v_hat) + 1e-8));
}

TEST(Adam, NanGradientAbortsStepWithoutSideEffects) {
  DenseArray p = DenseArray::row({1.0});
  std::vector<DenseArray*> params{&p};
  AdamState state = make_adam(std::span<const DenseArray* const>(std::vector<const DenseArray*>{&p}), {});
  EXPECT_THROW(adam_step(params, std::vector<DenseArray>{DenseArray::row({std::nan("")})}, state),
               NumericFault);
  EXPECT_EQ(p[0], 1.0);
  EXPECT_EQ(state.step, 0u);
}

// ------------------------------------------------------------ gaussian_log_prob

TEST(GaussianLogProb, ClosedForms) {
  EXPECT_NEAR(gaussian_log_prob(DenseArray::row({0.3}), DenseArray::row({0.3}), 1.0),
              -0.5 * std::log(2.0 * std::numbers::pi), 1e-15);
  EXPECT_NEAR(gaussian_log_prob(DenseArray::row({0.0}), DenseArray::row({0.0}), 1.0), -0.9189385332, 1e-9);
  EXPECT_NEAR(gaussian_log_prob(DenseArray::row({1.0}), DenseArray::row({0.0}), 1.0), -1.4189385332, 1e-9);
}

TEST(GaussianLogProb, DensityIntegratesToOne) {
  // Trapezoid quadrature of exp(log p) over +-12 standard deviations.
  for (double var : {0.01, 0.5, 2.0}) {
    const double mean = 0.37;
    const double sd = std::sqrt(var);
    const int n = 200000;
    const double lo = mean - 12 * sd, hi = mean + 12 * sd, h = (hi - lo) / n;
    double total = 0.0;
    for (int i = 0; i <= n; ++i) {
      const double x = lo + h * i;
      const double w = (i == 0 || i == n) ? 0.5 : 1.0;
      total += w * std::exp(gaussian_log_prob(DenseArray::row({x}), DenseArray::row({mean}), var));
    }
    EXPECT_NEAR(total * h, 1.0, 1e-6) << "var " << var;
  }
}

TEST(GaussianLogProb, BatchIsSumOfRows) {
  RngStream rng = seeded_rng(8);
  const DenseArray x = random_array(4, 3, rng), m = random_array(4, 3, rng);
  Graph g;
  const DenseArray& rows = g.value(g.gaussian_log_prob(g.constant(x), g.constant(m), 0.2));
  double total = 0.0;
  for (double v : rows.values()) total += v;
  EXPECT_NEAR(total, gaussian_log_prob(x, m, 0.2), 1e-12);
}

TEST(GaussianLogProb, NonPositiveVarianceIsDomainError) {
  EXPECT_THROW(gaussian_log_prob(DenseArray::row({0.0}), DenseArray::row({0.0}), 0.0), DomainError);
  EXPECT_THROW(gaussian_log_prob(DenseArray::row({0.0}), DenseArray::row({0.0}), -1.0), DomainError);
  // Tiny variances are floored rather than rejected.
  EXPECT_DOUBLE_EQ(gaussian_log_prob(DenseArray::row({0.0}), DenseArray::row({0.0}), 1e-20),
                   gaussian_log_prob(DenseArray::row({0.0}), DenseArray::row({0.0}), kVarianceFloor));
}

// ------------------------------------------------------------------------ rng

TEST(Rng, SameSeedSameDraws) {
  RngStream a = seeded_rng(42), b = seeded_rng(42);
  for (int i = 0; i < 1000; ++i) ASSERT_EQ(a.next_u64(), b.next_u64());
}

TEST(Rng, LabelledSplitsAreDistinct) {
  const RngStream root = seeded_rng(42);
  RngStream actor = root.split("actor"), critic = root.split("critic");
  std::set<std::uint64_t> seen;
  int collisions = 0;
  for (int i = 0; i < 1000; ++i) {
    collisions += actor.next_u64() == critic.next_u64();
  }
  EXPECT_EQ(collisions, 0);
  EXPECT_NE(root.split("eval", 0).next_u64(), root.split("eval", 1).next_u64());
  EXPECT_EQ(root.counter(), 0u);
}

TEST(Rng, NormalSampleMeanNearZero) {
  RngStream rng = seeded_rng(7);
  double total = 0.0, sq = 0.0;
  const int n = 1000000;
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal();
    total += z;
    sq += z * z;
  }
  EXPECT_LT(std::abs(total / n), 0.005);
  EXPECT_NEAR(sq / n, 1.0, 0.01);
}

TEST(Rng, UniformIndexCoversRange) {
  RngStream rng = seeded_rng(3);
  std::vector<int> counts(5, 0);
  for (int i = 0; i < 50000; ++i) ++counts[rng.uniform_index(5)];
  for (int c : counts) EXPECT_NEAR(c, 10000, 500);
}

// ---------------------------------------------------------------- determinism

MlpParams train_regression(std::uint64_t seed, int steps) {
  RngStream rng = seeded_rng(seed);
  RngStream init = rng.split("init");
  const std::vector<std::size_t> widths{2, 8, 1};
  MlpParams params = make_mlp(widths, Activation::tanh, Activation::identity, init);
  AdamState adam = make_adam(params, {1e-2});
  RngStream data = rng.split("data");
  for (int s = 0; s < steps; ++s) {
    DenseArray x(16, 2), y(16, 1);
    for (std::size_t i = 0; i < 16; ++i) {
      x(i, 0) = data.normal();
      x(i, 1) = data.normal();
      y[i] = std::sin(x(i, 0)) + 0.5 * x(i, 1);
    }
    Graph g;
    const BoundMlp bound = bind_parameters(g, params);
    const Var out = mlp_forward(g, params, bound, g.constant(x));
    const Var loss = g.mean(g.square(g.sub(out, g.constant(y))));
    adam_step(params, gradients_of(g.backward(loss), bound, params), adam);
  }
  return params;
}

TEST(Determinism, SameSeedGivesBitIdenticalParameterTrajectories) {
  EXPECT_EQ(train_regression(9, 120), train_regression(9, 120));
  EXPECT_NE(train_regression(9, 120), train_regression(10, 120));
}

// -------------------------------------------------------------------- archive

TEST(Archive, RoundTripPreservesEveryBit) {
  RngStream rng = seeded_rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    Archive a;
    const std::size_t count = 1 + rng.uniform_index(6);
    for (std::size_t i = 0; i < count; ++i) {
      std::vector<std::size_t> shape(1 + rng.uniform_index(3));
      for (auto& d : shape) d = rng.uniform_index(5);
      DenseArray arr(shape);
      for (double& x : arr.values()) x = rng.normal() * std::pow(10.0, rng.uniform(-300, 300));
      a.put("arr" + std::to_string(i), arr);
    }
    a.put_u64("ints", {rng.next_u64(), ~std::uint64_t{0}, 0});
    a.put_string("text", "schema \"x\"\n\0end");
    EXPECT_EQ(Archive::from_bytes(a.to_bytes()), a);
  }
}

TEST(Archive, MlpAdamAndRngHelpersRoundTrip) {
  RngStream rng = seeded_rng(4);
  const std::vector<std::size_t> widths{3, 4, 2};
  const MlpParams params = make_mlp(widths, Activation::relu, Activation::tanh, rng);
  AdamState adam = make_adam(params, {0.003, 0.8, 0.99, 1e-7});
  adam.step = 17;
  adam.first_moment[1][2] = 0.123;
  Archive a;
  put_mlp(a, "net", params);
  put_adam(a, "opt", adam);
  rng.next_u64();
  put_rng(a, "rng", rng);
  const Archive b = Archive::from_bytes(a.to_bytes());
  EXPECT_EQ(get_mlp(b, "net"), params);
  EXPECT_EQ(get_adam(b, "opt"), adam);
  EXPECT_EQ(get_rng(b, "rng"), rng);
}

TEST(Archive, RejectsCorruptInput) {
  Archive a;
  a.put("x", DenseArray::row({1.0, 2.0}));
  std::string bytes = a.to_bytes();
  EXPECT_THROW(Archive::from_bytes(bytes.substr(0, bytes.size() - 3)), ParseError);
  EXPECT_THROW(Archive::from_bytes("NOTANARC" + bytes.substr(8)), ParseError);
  EXPECT_THROW(a.u64("x"), ParseError);
  EXPECT_THROW(a.array("missing"), ParseError);
}

}  // namespace
}  // namespace hydo

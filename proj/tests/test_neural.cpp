#include <gtest/gtest.h>

#include <cmath>

#include "t2d/data.hpp"
#include "t2d/neural.hpp"
#include "test_util.hpp"

namespace {

using namespace t2d;

TEST(MaxPool, WindowTwoStrideTwo) {
  const std::vector<double> v = {3, 1, 4, 1, 5, 9, 2, 6};
  EXPECT_EQ(max_pool_1d(v, 2, 2), (std::vector<double>{3, 4, 9, 6}));
}

TEST(MaxPool, PartialTailAndOverlap) {
  const std::vector<double> odd = {1, 7, 2, 0, 5};
  EXPECT_EQ(max_pool_1d(odd, 2, 2), (std::vector<double>{7, 2, 5}));
  EXPECT_EQ(max_pool_1d(odd, 3, 1), (std::vector<double>{7, 7, 5}));
  EXPECT_EQ(max_pool_1d(odd, 1, 1), odd);
}

TEST(MaxPool, Errors) {
  EXPECT_THROW(max_pool_1d(std::vector<double>{}, 2, 2), Error);
  EXPECT_THROW(max_pool_1d(std::vector<double>{1.0}, 2, 2), Error);
  EXPECT_THROW(max_pool_1d(std::vector<double>{1.0, 2.0}, 0, 1), Error);
}

TEST(Lstm, ZeroWeightsGiveZeroStateAndHalfGates) {
  const LstmLayer layer(1, 70);
  const auto trace = lstm_trace(layer, {{0.4}, {-2.0}, {1.5}});
  ASSERT_EQ(trace.steps.size(), 3u);
  for (const auto& st : trace.steps) {
    ASSERT_EQ(st.hidden.size(), 70u);
    for (std::size_t k = 0; k < 70; ++k) {
      EXPECT_EQ(st.hidden[k], 0.0);
      EXPECT_EQ(st.cell[k], 0.0);
      EXPECT_EQ(st.gate_i[k], 0.5);
      EXPECT_EQ(st.gate_f[k], 0.5);
      EXPECT_EQ(st.gate_o[k], 0.5);
    }
  }
}

TEST(Lstm, HiddenStatesBoundedAndShaped) {
  const LstmLayer layer = make_lstm(1, 70, 3);
  std::vector<std::vector<double>> seq;
  for (double v : {50.0, -40.0, 3.0, 1e3}) seq.push_back({v});
  const auto out = lstm_forward(layer, seq);
  ASSERT_EQ(out.hidden_states.size(), 4u);
  EXPECT_EQ(out.final_hidden, out.hidden_states.back());
  for (const auto& h : out.hidden_states) {
    ASSERT_EQ(h.size(), 70u);
    for (double v : h) EXPECT_LE(std::abs(v), 1.0);
  }
}

TEST(Lstm, HandComputedSingleUnit) {
  LstmLayer layer(1, 1);
  layer.w_input = {1.0, 2.0, -1.0, 0.5};
  layer.bias = {0.0, 0.0, 0.0, 0.1};
  const auto out = lstm_forward(layer, {{1.0}});
  const double i = sigmoid(1.0), o = sigmoid(-1.0), g = std::tanh(0.6);
  EXPECT_NEAR(out.final_hidden[0], o * std::tanh(i * g), 1e-15);
}

TEST(Lstm, PooledSequenceFromFeatures) {
  const std::vector<double> row = {0.1, 0.9, -0.3, 0.2, 0.5, 0.4, 0.0, -1.0};
  const auto seq = pooled_sequence(row, 2, 2);
  ASSERT_EQ(seq.size(), 4u);
  EXPECT_EQ(seq[1], std::vector<double>{0.2});
  EXPECT_EQ(seq[3], std::vector<double>{0.0});
}

TEST(Mlp, ZeroNetworkOutputsHalf) {
  const MlpNetwork net({70, 12, 8, 1});
  const std::vector<double> x(70, 1.5);
  EXPECT_EQ(mlp_forward(net, x, {}), 0.5);
}

TEST(Mlp, OutputInUnitIntervalAndShapeChecked) {
  const MlpNetwork net = make_mlp({70, 12, 8, 1}, 9);
  Rng rng(2);
  for (int t = 0; t < 200; ++t) {
    std::vector<double> x(70);
    for (double& v : x) v = rng.normal();
    const double y = mlp_forward(net, x, {});
    EXPECT_GT(y, 0.0);
    EXPECT_LT(y, 1.0);
  }
  EXPECT_THROW(mlp_forward(net, std::vector<double>(69, 0.0), {}), Error);
  EXPECT_THROW(MlpNetwork({4, 2}), Error);
}

TEST(Mlp, DropoutRateZeroMatchesInference) {
  const MlpNetwork net = make_mlp({6, 5, 4, 1}, 1);
  const std::vector<double> x = {0.3, -0.2, 1.0, 0.7, -1.1, 0.05};
  EXPECT_EQ(mlp_forward(net, x, DropoutSpec{0.0, 77, true}), mlp_forward(net, x, DropoutSpec{0.35, 77, false}));
}

TEST(Mlp, DropoutDeterministicPerSeed) {
  const MlpNetwork net = make_mlp({6, 5, 4, 1}, 1);
  const std::vector<double> x = {0.3, -0.2, 1.0, 0.7, -1.1, 0.05};
  const DropoutSpec d{0.35, 5, true};
  EXPECT_EQ(mlp_forward(net, x, d), mlp_forward(net, x, d));
  EXPECT_THROW(mlp_forward(net, x, DropoutSpec{1.0, 5, true}), Error);
}

TEST(Mlp, DropoutPreservesExpectedActivation) {
  // Inverted dropout: the mean of masked hidden units equals the unmasked value.
  MlpNetwork net({1, 1, 1});
  net.weights = {{1.0}, {1.0}};
  const std::vector<double> x = {2.0};
  double sum = 0.0;
  const int trials = 100000;
  for (int s = 0; s < trials; ++s) {
    const auto t = mlp_trace(net, x, DropoutSpec{0.35, static_cast<std::uint64_t>(s), true});
    sum += t.activations[1][0];
  }
  EXPECT_NEAR(sum / trials, 2.0, 2.0 * 0.02);
}

TEST(Ensemble, WeightedCombination) {
  EXPECT_DOUBLE_EQ(ensemble_combine(std::vector<double>{0.8, 0.6}, std::vector<double>{0.5, 0.5}), 0.7);
  EXPECT_DOUBLE_EQ(ensemble_combine(std::vector<double>{0.8, 0.6}, std::vector<double>{1.0, 0.0}), 0.8);
  EXPECT_THROW(ensemble_combine(std::vector<double>{0.8, 0.6}, std::vector<double>{0.6, 0.6}), Error);
  EXPECT_THROW(ensemble_combine(std::vector<double>{0.8, 0.6}, std::vector<double>{1.5, -0.5}), Error);
  EXPECT_THROW(ensemble_combine(std::vector<double>{0.8}, std::vector<double>{0.5, 0.5}), Error);
}

TEST(Loss, StableCrossEntropy) {
  EXPECT_NEAR(bce_from_logit(0.0, 1), std::log(2.0), 1e-15);
  EXPECT_NEAR(bce_from_logit(2.0, 0), -std::log(1.0 - sigmoid(2.0)), 1e-12);
  EXPECT_TRUE(std::isfinite(bce_from_logit(-800.0, 1)));
  EXPECT_NEAR(bce_from_logit(-800.0, 1), 800.0, 1e-9);
}

// ---------------------------------------------------------------------------
// Gradients

SequenceBatch random_batch(std::size_t n, std::size_t len, std::uint64_t seed) {
  Rng rng(seed);
  SequenceBatch b;
  for (std::size_t s = 0; s < n; ++s) {
    std::vector<std::vector<double>> seq;
    for (std::size_t t = 0; t < len; ++t) seq.push_back({rng.normal()});
    b.sequences.push_back(std::move(seq));
    b.labels.push_back(static_cast<Label>(s % 2));
  }
  return b;
}

template <typename Model>
void check_model_gradient(Model& model, const std::vector<double>& analytic,
                          const std::function<double()>& loss) {
  auto flat = flatten(model);
  ASSERT_EQ(flat.size(), analytic.size());
  const double h = 1e-5;
  for (std::size_t k = 0; k < flat.size(); ++k) {
    const double saved = flat[k];
    flat[k] = saved + h;
    unflatten(model, flat);
    const double up = loss();
    flat[k] = saved - h;
    unflatten(model, flat);
    const double down = loss();
    flat[k] = saved;
    unflatten(model, flat);
    const double numeric = (up - down) / (2 * h);
    const double scale = std::max({std::abs(numeric), std::abs(analytic[k]), 1e-4});
    EXPECT_LE(std::abs(numeric - analytic[k]) / scale, 1e-4) << "parameter " << k;
  }
}

TEST(Backprop, MatchesCentralDifferences) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    LstmLayer layer = make_lstm(1, 5, seed);
    for (double& b : layer.bias) b = 0.1 * static_cast<double>(&b - layer.bias.data()) / 20.0;
    MlpNetwork net = make_mlp({5, 4, 3, 1}, seed + 10);
    for (auto& bias : net.biases)
      for (double& b : bias) b = 0.05;
    const SequenceBatch batch = random_batch(3, 4, seed + 20);
    const DropoutSpec drop{0.3, seed, true};
    const Gradients g = backprop(layer, net, batch, drop);
    EXPECT_NEAR(g.loss, batch_loss(layer, net, batch, drop), 1e-12);
    check_model_gradient(layer, flatten(g.lstm), [&] { return batch_loss(layer, net, batch, drop); });
    check_model_gradient(net, flatten(g.mlp), [&] { return batch_loss(layer, net, batch, drop); });
  }
}

TEST(Backprop, DuplicatedBatchKeepsMeanGradient) {
  const LstmLayer layer = make_lstm(1, 4, 5);
  const MlpNetwork net = make_mlp({4, 3, 1}, 6);
  const SequenceBatch once = random_batch(3, 3, 7);
  SequenceBatch twice = once;
  twice.sequences.insert(twice.sequences.end(), once.sequences.begin(), once.sequences.end());
  twice.labels.insert(twice.labels.end(), once.labels.begin(), once.labels.end());
  const DropoutSpec none{0.0, 0, false};
  const auto a = flatten(backprop(layer, net, once, none).lstm);
  const auto b = flatten(backprop(layer, net, twice, none).lstm);
  for (std::size_t k = 0; k < a.size(); ++k) EXPECT_NEAR(a[k], b[k], 1e-14);
}

TEST(Backprop, Errors) {
  const LstmLayer layer = make_lstm(1, 4, 5);
  EXPECT_THROW(backprop(layer, make_mlp({4, 1}, 1), SequenceBatch{}, {}), Error);
  EXPECT_THROW(backprop(layer, make_mlp({3, 1}, 1), random_batch(2, 2, 1), {}), Error);
  SequenceBatch bad = random_batch(2, 2, 1);
  bad.sequences[1][0][0] = NAN;
  EXPECT_THROW_MSG(backprop(layer, make_mlp({4, 1}, 1), bad, {}), "sample 1");
}

// ---------------------------------------------------------------------------
// AdaGrad

TEST(AdaGrad, FirstStepFromHandCalculation) {
  AdaGradState st{0.2, 1e-8, {}};
  std::vector<double> p = {1.0};
  adagrad_step(st, p, std::vector<double>{3.0});
  EXPECT_NEAR(p[0], 0.8, 1e-8);
  EXPECT_EQ(st.accumulator[0], 9.0);
}

TEST(AdaGrad, ZeroGradientLeavesParameters) {
  AdaGradState st;
  std::vector<double> p = {1.0, -2.0};
  adagrad_step(st, p, std::vector<double>{0.0, 0.0});
  EXPECT_EQ(p, (std::vector<double>{1.0, -2.0}));
}

TEST(AdaGrad, StepsShrinkAndAccumulatorGrows) {
  AdaGradState st;
  std::vector<double> p = {0.0};
  double last_step = INFINITY, last_acc = 0.0;
  Rng rng(4);
  for (int t = 0; t < 50; ++t) {
    const double before = p[0];
    adagrad_step(st, p, std::vector<double>{1.0});
    const double step = std::abs(p[0] - before);
    EXPECT_LT(step, last_step);
    last_step = step;
    EXPECT_GE(st.accumulator[0], last_acc);
    last_acc = st.accumulator[0];
  }
  std::vector<double> q = {0.0, 0.0};
  AdaGradState st2;
  for (int t = 0; t < 50; ++t) {
    const std::vector<double> acc = st2.accumulator;
    adagrad_step(st2, q, std::vector<double>{rng.normal(), rng.normal()});
    for (std::size_t k = 0; k < acc.size(); ++k) EXPECT_GE(st2.accumulator[k], acc[k]);
  }
  EXPECT_THROW(adagrad_step(st2, q, std::vector<double>{1.0}), Error);
}

// ---------------------------------------------------------------------------
// Training

TEST(TrainEnsemble, LearnsSeparableDataDeterministically) {
  const FeatureMatrix data = standardize(synth_dataset(120, 8, 0.5, 6.0, 3)).first;
  NeuralConfig cfg;
  cfg.hidden_size = 10;
  cfg.epochs = 40;
  const NeuralEnsemble a = train_ensemble(data, cfg, 11);
  const NeuralEnsemble b = train_ensemble(data, cfg, 11);
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.epochs_trained, 40u);
  EXPECT_EQ(a.heads.size(), 3u);
  std::size_t ok = 0;
  for (std::size_t i = 0; i < data.rows(); ++i) {
    const double p = a.predict_proba(data.row(i));
    EXPECT_GT(p, 0.0);
    EXPECT_LT(p, 1.0);
    ok += (p >= 0.5) == (data.labels()[i] == 1);
  }
  EXPECT_GE(static_cast<double>(ok) / data.rows(), 0.9);
  EXPECT_NE(train_ensemble(data, cfg, 12), a);
}

TEST(TrainEnsemble, TrainingReducesLoss) {
  const FeatureMatrix data = standardize(synth_dataset(60, 4, 0.5, 3.0, 1)).first;
  NeuralConfig cfg;
  cfg.hidden_size = 6;
  cfg.dropout = 0.0;
  cfg.ensemble_size = 1;
  cfg.epochs = 0;
  const auto untrained = train_ensemble(data, cfg, 2);
  cfg.epochs = 30;
  const auto trained = train_ensemble(data, cfg, 2);
  const SequenceBatch batch = make_batch(data, 2, 2);
  const DropoutSpec none{0.0, 0, false};
  EXPECT_LT(batch_loss(trained.lstm, trained.heads[0], batch, none),
            batch_loss(untrained.lstm, untrained.heads[0], batch, none));
}

TEST(TrainEnsemble, Errors) {
  NeuralConfig cfg;
  EXPECT_THROW(train_ensemble(FeatureMatrix{}, cfg, 1), Error);
  cfg.learning_rate = 0.0;
  EXPECT_THROW(train_ensemble(synth_dataset(10, 2, 0.5, 1.0, 1), cfg, 1), Error);
}

}  // namespace

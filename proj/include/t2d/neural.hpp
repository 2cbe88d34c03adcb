#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "t2d/data.hpp"
#include "t2d/error.hpp"
#include "t2d/rng.hpp"

namespace t2d {

inline double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

/// Windowed maximum; a trailing partial window keeps the max of what remains.
inline std::vector<double> max_pool_1d(std::span<const double> v, std::size_t window,
                                       std::size_t stride) {
  if (v.empty()) throw data_error("max_pool_1d: empty input");
  if (window < 1 || stride < 1) throw usage_error("max_pool_1d: window and stride must be >= 1");
  if (window > v.size()) throw usage_error("max_pool_1d: window exceeds input length");
  std::vector<double> out;
  for (std::size_t start = 0; start < v.size(); start += stride) {
    const std::size_t end = std::min(start + window, v.size());
    out.push_back(*std::max_element(v.begin() + static_cast<std::ptrdiff_t>(start),
                                    v.begin() + static_cast<std::ptrdiff_t>(end)));
    if (end == v.size()) break;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Parameter containers. A gradient has the same type and shape as the thing
// it differentiates, so optimizers and checks can walk both in lockstep.

/// Gate blocks are stacked [input, forget, output, candidate], each
/// hidden_size rows.
struct LstmLayer {
  std::size_t input_size = 1;
  std::size_t hidden_size = 70;
  std::vector<double> w_input;      // 4H x I
  std::vector<double> w_recurrent;  // 4H x H
  std::vector<double> bias;         // 4H

  LstmLayer() = default;
  LstmLayer(std::size_t input, std::size_t hidden)
      : input_size(input),
        hidden_size(hidden),
        w_input(4 * hidden * input, 0.0),
        w_recurrent(4 * hidden * hidden, 0.0),
        bias(4 * hidden, 0.0) {}

  template <typename F>
  void visit(F&& f) {
    f(w_input);
    f(w_recurrent);
    f(bias);
  }
  template <typename F>
  void visit(F&& f) const {
    f(w_input);
    f(w_recurrent);
    f(bias);
  }

  friend bool operator==(const LstmLayer&, const LstmLayer&) = default;
};

/// Fully connected net: ReLU on every hidden layer, sigmoid on the single output.
struct MlpNetwork {
  std::vector<std::size_t> sizes;  // input, hidden..., 1
  std::vector<std::vector<double>> weights;  // layer l: sizes[l+1] x sizes[l]
  std::vector<std::vector<double>> biases;

  MlpNetwork() = default;
  explicit MlpNetwork(std::vector<std::size_t> layer_sizes) : sizes(std::move(layer_sizes)) {
    if (sizes.size() < 2 || sizes.back() != 1)
      throw usage_error("mlp: need at least an input and a width-1 output layer");
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
      weights.emplace_back(sizes[l + 1] * sizes[l], 0.0);
      biases.emplace_back(sizes[l + 1], 0.0);
    }
  }

  std::size_t input_size() const { return sizes.front(); }
  std::size_t layer_count() const { return weights.size(); }

  template <typename F>
  void visit(F&& f) {
    for (std::size_t l = 0; l < weights.size(); ++l) {
      f(weights[l]);
      f(biases[l]);
    }
  }
  template <typename F>
  void visit(F&& f) const {
    for (std::size_t l = 0; l < weights.size(); ++l) {
      f(weights[l]);
      f(biases[l]);
    }
  }

  friend bool operator==(const MlpNetwork&, const MlpNetwork&) = default;
};

struct DropoutSpec {
  double rate = 0.35;
  std::uint64_t seed = 0;
  bool training_mode = false;

  void validate() const {
    if (!(rate >= 0.0 && rate < 1.0)) throw usage_error("dropout rate must lie in [0, 1)");
  }
  bool active() const { return training_mode && rate > 0.0; }
};

/// Glorot-uniform weights, zero biases.
inline void init_glorot(std::vector<double>& w, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (double& v : w) v = rng.uniform(-limit, limit);
}

inline LstmLayer make_lstm(std::size_t input, std::size_t hidden, std::uint64_t seed) {
  LstmLayer layer(input, hidden);
  Rng rng(seed);
  init_glorot(layer.w_input, input + hidden, hidden, rng);
  init_glorot(layer.w_recurrent, input + hidden, hidden, rng);
  return layer;
}

inline MlpNetwork make_mlp(std::vector<std::size_t> sizes, std::uint64_t seed) {
  MlpNetwork net(std::move(sizes));
  Rng rng(seed);
  for (std::size_t l = 0; l < net.layer_count(); ++l)
    init_glorot(net.weights[l], net.sizes[l], net.sizes[l + 1], rng);
  return net;
}

// ---------------------------------------------------------------------------
// LSTM

struct LstmStep {
  std::vector<double> x;
  std::vector<double> gate_i, gate_f, gate_o, cand;
  std::vector<double> cell;
  std::vector<double> hidden;
};

struct LstmTrace {
  std::vector<LstmStep> steps;

  const std::vector<double>& final_hidden() const { return steps.back().hidden; }
};

inline LstmTrace lstm_trace(const LstmLayer& layer, const std::vector<std::vector<double>>& sequence) {
  if (sequence.empty()) throw data_error("lstm: empty sequence");
  const std::size_t H = layer.hidden_size, I = layer.input_size;
  LstmTrace trace;
  std::vector<double> h(H, 0.0), c(H, 0.0), pre(4 * H);
  for (const auto& x : sequence) {
    if (x.size() != I)
      throw data_error("lstm: input has " + std::to_string(x.size()) + " entries, expected " +
                       std::to_string(I));
    for (std::size_t r = 0; r < 4 * H; ++r) {
      double z = layer.bias[r];
      const double* wi = layer.w_input.data() + r * I;
      for (std::size_t k = 0; k < I; ++k) z += wi[k] * x[k];
      const double* wr = layer.w_recurrent.data() + r * H;
      for (std::size_t k = 0; k < H; ++k) z += wr[k] * h[k];
      pre[r] = z;
    }
    LstmStep s;
    s.x = x;
    s.gate_i.resize(H);
    s.gate_f.resize(H);
    s.gate_o.resize(H);
    s.cand.resize(H);
    s.cell.resize(H);
    s.hidden.resize(H);
    for (std::size_t k = 0; k < H; ++k) {
      s.gate_i[k] = sigmoid(pre[k]);
      s.gate_f[k] = sigmoid(pre[H + k]);
      s.gate_o[k] = sigmoid(pre[2 * H + k]);
      s.cand[k] = std::tanh(pre[3 * H + k]);
      s.cell[k] = s.gate_f[k] * c[k] + s.gate_i[k] * s.cand[k];
      s.hidden[k] = s.gate_o[k] * std::tanh(s.cell[k]);
    }
    h = s.hidden;
    c = s.cell;
    trace.steps.push_back(std::move(s));
  }
  return trace;
}

struct LstmOutput {
  std::vector<double> final_hidden;
  std::vector<std::vector<double>> hidden_states;
};

/// Zero initial state; returns h_T and every h_t.
inline LstmOutput lstm_forward(const LstmLayer& layer, const std::vector<std::vector<double>>& sequence) {
  LstmTrace trace = lstm_trace(layer, sequence);
  LstmOutput out;
  for (auto& s : trace.steps) out.hidden_states.push_back(std::move(s.hidden));
  out.final_hidden = out.hidden_states.back();
  return out;
}

/// Feature row -> max-pooled scalar sequence, one LSTM input per pooled value.
inline std::vector<std::vector<double>> pooled_sequence(std::span<const double> features,
                                                        std::size_t window, std::size_t stride) {
  const std::size_t w = std::min(window, features.size());
  std::vector<std::vector<double>> seq;
  for (double v : max_pool_1d(features, w, stride)) seq.push_back({v});
  return seq;
}

// ---------------------------------------------------------------------------
// MLP

struct MlpTrace {
  std::vector<std::vector<double>> activations;  // input, then each layer's output
  std::vector<std::vector<double>> pre;          // pre-activation per layer
  std::vector<std::vector<double>> keep_scale;   // per hidden layer: 0 or 1/(1-rate)
  double output = 0.5;
  double logit = 0.0;
};

inline MlpTrace mlp_trace(const MlpNetwork& net, std::span<const double> x, const DropoutSpec& dropout) {
  dropout.validate();
  if (x.size() != net.input_size())
    throw data_error("mlp: input has " + std::to_string(x.size()) + " entries, expected " +
                     std::to_string(net.input_size()));
  MlpTrace t;
  t.activations.emplace_back(x.begin(), x.end());
  Rng rng(dropout.seed);
  const double survive = 1.0 / (1.0 - dropout.rate);
  for (std::size_t l = 0; l < net.layer_count(); ++l) {
    const std::size_t in = net.sizes[l], out = net.sizes[l + 1];
    const auto& a = t.activations.back();
    std::vector<double> z(out);
    for (std::size_t r = 0; r < out; ++r) {
      double s = net.biases[l][r];
      const double* w = net.weights[l].data() + r * in;
      for (std::size_t k = 0; k < in; ++k) s += w[k] * a[k];
      z[r] = s;
    }
    const bool last = l + 1 == net.layer_count();
    std::vector<double> act(out);
    if (last) {
      t.logit = z[0];
      t.output = sigmoid(z[0]);
      act[0] = t.output;
    } else {
      std::vector<double> keep(out, 1.0);
      if (dropout.active())
        for (double& k : keep) k = rng.uniform() < dropout.rate ? 0.0 : survive;
      for (std::size_t r = 0; r < out; ++r) act[r] = std::max(0.0, z[r]) * keep[r];
      t.keep_scale.push_back(std::move(keep));
    }
    t.pre.push_back(std::move(z));
    t.activations.push_back(std::move(act));
  }
  return t;
}

/// ReLU hidden layers, sigmoid output. Inverted dropout on hidden units in
/// training mode, identity otherwise.
inline double mlp_forward(const MlpNetwork& net, std::span<const double> x, const DropoutSpec& dropout) {
  return mlp_trace(net, x, dropout).output;
}

/// y(x) = sum_i w_i y_i(x) with non-negative weights summing to one.
inline double ensemble_combine(std::span<const double> outputs, std::span<const double> weights) {
  if (outputs.size() != weights.size() || outputs.empty())
    throw usage_error("ensemble_combine: outputs and weights must have equal, non-zero length");
  double wsum = 0.0, y = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i] < 0.0) throw usage_error("ensemble_combine: negative weight");
    wsum += weights[i];
    y += weights[i] * outputs[i];
  }
  if (std::abs(wsum - 1.0) > 1e-9) throw usage_error("ensemble_combine: weights must sum to 1");
  return y;
}

// ---------------------------------------------------------------------------
// Backpropagation

/// Numerically stable binary cross-entropy from the logit.
inline double bce_from_logit(double logit, Label y) {
  return std::max(logit, 0.0) - logit * static_cast<double>(y) + std::log1p(std::exp(-std::abs(logit)));
}

struct Gradients {
  LstmLayer lstm;
  MlpNetwork mlp;
  double loss = 0.0;  // mean over the batch
};

/// A batch is a set of LSTM input sequences with labels.
struct SequenceBatch {
  std::vector<std::vector<std::vector<double>>> sequences;
  std::vector<Label> labels;

  std::size_t size() const { return labels.size(); }
};

inline SequenceBatch make_batch(const FeatureMatrix& rows, std::size_t window, std::size_t stride) {
  SequenceBatch b;
  for (std::size_t i = 0; i < rows.rows(); ++i) b.sequences.push_back(pooled_sequence(rows.row(i), window, stride));
  b.labels = rows.labels();
  return b;
}

/// Per-sample dropout seed, so a batch forward pass is reproducible.
inline DropoutSpec sample_dropout(const DropoutSpec& base, std::size_t sample) {
  DropoutSpec d = base;
  d.seed = derive_seed(base.seed, sample);
  return d;
}

inline double batch_loss(const LstmLayer& layer, const MlpNetwork& net, const SequenceBatch& batch,
                         const DropoutSpec& dropout) {
  double total = 0.0;
  for (std::size_t s = 0; s < batch.size(); ++s) {
    const LstmTrace lt = lstm_trace(layer, batch.sequences[s]);
    const MlpTrace mt = mlp_trace(net, lt.final_hidden(), sample_dropout(dropout, s));
    total += bce_from_logit(mt.logit, batch.labels[s]);
  }
  return total / static_cast<double>(batch.size());
}

/// Exact gradients of the mean binary cross-entropy over the batch with respect
/// to every LSTM and MLP parameter, through time over each sequence.
inline Gradients backprop(const LstmLayer& layer, const MlpNetwork& net, const SequenceBatch& batch,
                          const DropoutSpec& dropout) {
  if (batch.size() == 0) throw data_error("backprop: empty batch");
  if (net.input_size() != layer.hidden_size) throw usage_error("backprop: mlp input must equal lstm width");
  const std::size_t H = layer.hidden_size, I = layer.input_size;
  const double inv_n = 1.0 / static_cast<double>(batch.size());

  Gradients g;
  g.lstm = LstmLayer(I, H);
  g.mlp = MlpNetwork(net.sizes);
  std::vector<double> dpre(4 * H), dh(H), dc(H), dh_prev(H);

  for (std::size_t s = 0; s < batch.size(); ++s) {
    const LstmTrace lt = lstm_trace(layer, batch.sequences[s]);
    const MlpTrace mt = mlp_trace(net, lt.final_hidden(), sample_dropout(dropout, s));
    const double loss = bce_from_logit(mt.logit, batch.labels[s]);
    if (!std::isfinite(loss)) throw numeric_error("backprop: non-finite loss at sample " + std::to_string(s));
    g.loss += loss * inv_n;

    // MLP, output layer first.
    std::vector<double> delta = {(mt.output - static_cast<double>(batch.labels[s])) * inv_n};
    for (std::size_t l = net.layer_count(); l-- > 0;) {
      const std::size_t in = net.sizes[l], out = net.sizes[l + 1];
      const auto& a = mt.activations[l];
      for (std::size_t r = 0; r < out; ++r) {
        g.mlp.biases[l][r] += delta[r];
        double* gw = g.mlp.weights[l].data() + r * in;
        for (std::size_t k = 0; k < in; ++k) gw[k] += delta[r] * a[k];
      }
      std::vector<double> da(in, 0.0);
      for (std::size_t r = 0; r < out; ++r) {
        const double* w = net.weights[l].data() + r * in;
        for (std::size_t k = 0; k < in; ++k) da[k] += w[k] * delta[r];
      }
      if (l > 0) {
        const auto& keep = mt.keep_scale[l - 1];
        const auto& z = mt.pre[l - 1];
        for (std::size_t k = 0; k < in; ++k) da[k] = z[k] > 0.0 ? da[k] * keep[k] : 0.0;
      }
      delta = std::move(da);
    }

    // LSTM through time; only h_T feeds the head.
    std::copy(delta.begin(), delta.end(), dh.begin());
    std::fill(dc.begin(), dc.end(), 0.0);
    for (std::size_t t = lt.steps.size(); t-- > 0;) {
      const LstmStep& st = lt.steps[t];
      for (std::size_t k = 0; k < H; ++k) {
        const double tc = std::tanh(st.cell[k]);
        const double c_prev = t > 0 ? lt.steps[t - 1].cell[k] : 0.0;
        dc[k] += dh[k] * st.gate_o[k] * (1.0 - tc * tc);
        const double d_o = dh[k] * tc;
        const double d_i = dc[k] * st.cand[k];
        const double d_g = dc[k] * st.gate_i[k];
        const double d_f = dc[k] * c_prev;
        dpre[k] = d_i * st.gate_i[k] * (1.0 - st.gate_i[k]);
        dpre[H + k] = d_f * st.gate_f[k] * (1.0 - st.gate_f[k]);
        dpre[2 * H + k] = d_o * st.gate_o[k] * (1.0 - st.gate_o[k]);
        dpre[3 * H + k] = d_g * (1.0 - st.cand[k] * st.cand[k]);
        dc[k] *= st.gate_f[k];
      }
      std::fill(dh_prev.begin(), dh_prev.end(), 0.0);
      for (std::size_t r = 0; r < 4 * H; ++r) {
        const double d = dpre[r];
        g.lstm.bias[r] += d;
        double* gwi = g.lstm.w_input.data() + r * I;
        for (std::size_t k = 0; k < I; ++k) gwi[k] += d * st.x[k];
        if (t > 0) {
          const auto& h_prev = lt.steps[t - 1].hidden;
          double* gwr = g.lstm.w_recurrent.data() + r * H;
          const double* wr = layer.w_recurrent.data() + r * H;
          for (std::size_t k = 0; k < H; ++k) {
            gwr[k] += d * h_prev[k];
            dh_prev[k] += wr[k] * d;
          }
        }
      }
      dh.swap(dh_prev);
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// AdaGrad

struct AdaGradState {
  double learning_rate = 0.2;
  double epsilon = 1e-8;
  std::vector<double> accumulator;
};

/// accumulator += g^2; param -= lr * g / (sqrt(accumulator) + eps).
/// The accumulator is sized on first use.
inline void adagrad_step(AdaGradState& state, std::span<double> params, std::span<const double> grads) {
  if (params.size() != grads.size()) throw usage_error("adagrad: parameter and gradient lengths differ");
  if (state.accumulator.empty()) state.accumulator.assign(params.size(), 0.0);
  if (state.accumulator.size() != params.size()) throw usage_error("adagrad: state length differs");
  for (std::size_t k = 0; k < params.size(); ++k) {
    const double g = grads[k];
    state.accumulator[k] += g * g;
    params[k] -= state.learning_rate * g / (std::sqrt(state.accumulator[k]) + state.epsilon);
  }
}

template <typename Model>
std::vector<double> flatten(const Model& m) {
  std::vector<double> out;
  m.visit([&](const std::vector<double>& t) { out.insert(out.end(), t.begin(), t.end()); });
  return out;
}

template <typename Model>
void unflatten(Model& m, std::span<const double> flat) {
  std::size_t pos = 0;
  m.visit([&](std::vector<double>& t) {
    std::copy(flat.begin() + static_cast<std::ptrdiff_t>(pos),
              flat.begin() + static_cast<std::ptrdiff_t>(pos + t.size()), t.begin());
    pos += t.size();
  });
}

// ---------------------------------------------------------------------------
// Encoder + head ensemble

struct NeuralConfig {
  std::size_t hidden_size = 70;
  std::vector<std::size_t> mlp_hidden = {12, 8};
  std::size_t ensemble_size = 3;
  std::size_t epochs = 50;
  double learning_rate = 0.2;
  double dropout = 0.35;
  std::size_t pool_window = 2;
  std::size_t pool_stride = 2;

  void validate() const {
    if (hidden_size < 1) throw usage_error("neural: hidden_size must be >= 1");
    if (ensemble_size < 1) throw usage_error("neural: ensemble_size must be >= 1");
    if (!(learning_rate > 0.0)) throw usage_error("neural: learning_rate must be positive");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw usage_error("neural: dropout must lie in [0, 1)");
    if (pool_window < 1 || pool_stride < 1) throw usage_error("neural: pooling window/stride must be >= 1");
  }
};

/// One LSTM encoder shared by several MLP heads whose outputs are averaged
/// with fixed weights.
struct NeuralEnsemble {
  LstmLayer lstm;
  std::vector<MlpNetwork> heads;
  std::vector<double> weights;
  std::size_t pool_window = 2;
  std::size_t pool_stride = 2;
  std::size_t epochs_trained = 0;

  friend bool operator==(const NeuralEnsemble&, const NeuralEnsemble&) = default;

  std::vector<double> head_outputs(std::span<const double> features) const {
    const auto enc = lstm_trace(lstm, pooled_sequence(features, pool_window, pool_stride));
    std::vector<double> out;
    for (const auto& h : heads) out.push_back(mlp_forward(h, enc.final_hidden(), DropoutSpec{0.0, 0, false}));
    return out;
  }

  double predict_proba(std::span<const double> features) const {
    const auto outs = head_outputs(features);
    return ensemble_combine(outs, weights);
  }
};

/// Full-batch training of the encoder and all heads on the mean of the
/// per-head losses. Head h starts from seed-derived weights; dropout masks
/// are redrawn every epoch.
inline NeuralEnsemble train_ensemble(const FeatureMatrix& train, const NeuralConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  if (train.empty()) throw data_error("neural: empty training set");
  NeuralEnsemble model;
  model.pool_window = cfg.pool_window;
  model.pool_stride = cfg.pool_stride;
  model.lstm = make_lstm(1, cfg.hidden_size, derive_seed(seed, 0));
  std::vector<std::size_t> sizes = {cfg.hidden_size};
  sizes.insert(sizes.end(), cfg.mlp_hidden.begin(), cfg.mlp_hidden.end());
  sizes.push_back(1);
  for (std::size_t h = 0; h < cfg.ensemble_size; ++h)
    model.heads.push_back(make_mlp(sizes, derive_seed(seed, 1 + h)));
  model.weights.assign(cfg.ensemble_size, 1.0 / static_cast<double>(cfg.ensemble_size));

  const SequenceBatch batch = make_batch(train, cfg.pool_window, cfg.pool_stride);
  const double inv_m = 1.0 / static_cast<double>(cfg.ensemble_size);
  AdaGradState lstm_opt{cfg.learning_rate, 1e-8, {}};
  std::vector<AdaGradState> head_opt(cfg.ensemble_size, AdaGradState{cfg.learning_rate, 1e-8, {}});

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<double> lstm_grad(flatten(model.lstm).size(), 0.0);
    std::vector<std::vector<double>> head_grads;
    for (std::size_t h = 0; h < cfg.ensemble_size; ++h) {
      DropoutSpec drop{cfg.dropout, derive_seed(derive_seed(seed, 100 + h), epoch), true};
      Gradients g = backprop(model.lstm, model.heads[h], batch, drop);
      const auto gl = flatten(g.lstm);
      for (std::size_t k = 0; k < gl.size(); ++k) lstm_grad[k] += inv_m * gl[k];
      auto gh = flatten(g.mlp);
      for (double& v : gh) v *= inv_m;
      head_grads.push_back(std::move(gh));
    }
    auto lp = flatten(model.lstm);
    adagrad_step(lstm_opt, lp, lstm_grad);
    unflatten(model.lstm, lp);
    for (std::size_t h = 0; h < cfg.ensemble_size; ++h) {
      auto hp = flatten(model.heads[h]);
      adagrad_step(head_opt[h], hp, head_grads[h]);
      unflatten(model.heads[h], hp);
    }
    ++model.epochs_trained;
  }
  return model;
}

}  // namespace t2d

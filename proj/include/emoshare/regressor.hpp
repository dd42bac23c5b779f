#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <utility>
#include <string>
#include <vector>

#include "emoshare/batching.hpp"
#include "emoshare/errors.hpp"
#include "emoshare/random.hpp"
#include "emoshare/tensor.hpp"

namespace emoshare {

enum class Architecture { arch1, arch2 };
enum class AttentionScale { linear_Wl, sqrt_Wl };
enum class Mode { train, eval };

inline std::string to_string(Architecture a) { return a == Architecture::arch1 ? "arch1" : "arch2"; }
inline std::string to_string(AttentionScale s) { return s == AttentionScale::linear_Wl ? "linear_Wl" : "sqrt_Wl"; }

inline Architecture parse_architecture(std::string_view s) {
  if (s == "arch1") return Architecture::arch1;
  if (s == "arch2") return Architecture::arch2;
  throw ConfigurationError("unknown architecture '" + std::string(s) + "'");
}

inline AttentionScale parse_attention_scale(std::string_view s) {
  if (s == "linear_Wl") return AttentionScale::linear_Wl;
  if (s == "sqrt_Wl") return AttentionScale::sqrt_Wl;
  throw ConfigurationError("unknown attention scale '" + std::string(s) + "'");
}

struct RegressorConfig {
  Architecture architecture = Architecture::arch1;
  int input_dim = 40;
  int conv_channels = 256;
  ConvGeometry conv;
  int lstm_hidden = 128;
  int lstm_layers = 2;
  int ffnn_hidden = 64;
  double dropout = 0.2;
  AttentionScale attention_scale = AttentionScale::linear_Wl;
  std::uint64_t seed = 0;

  void validate() const {
    if (input_dim < 1 || conv_channels < 1 || lstm_hidden < 1 || lstm_layers < 1 || ffnn_hidden < 1)
      throw ConfigurationError("regressor dimensions must all be >= 1");
    if (conv.kernel < 1 || conv.stride < 1 || conv.padding < 0 || conv.padding >= conv.kernel)
      throw ConfigurationError("invalid conv geometry");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigurationError("dropout must lie in [0, 1)");
    if (architecture == Architecture::arch2 && lstm_layers != 2)
      throw ConfigurationError("arch2 builds its query from exactly 2 stacked LSTM states");
  }

  double attention_denominator() const {
    return attention_scale == AttentionScale::linear_Wl ? lstm_hidden : std::sqrt(static_cast<double>(lstm_hidden));
  }

  friend bool operator==(const RegressorConfig& a, const RegressorConfig& b) {
    return a.architecture == b.architecture && a.input_dim == b.input_dim && a.conv_channels == b.conv_channels &&
           a.conv.kernel == b.conv.kernel && a.conv.stride == b.conv.stride && a.conv.padding == b.conv.padding &&
           a.lstm_hidden == b.lstm_hidden && a.lstm_layers == b.lstm_layers && a.ffnn_hidden == b.ffnn_hidden &&
           a.dropout == b.dropout && a.attention_scale == b.attention_scale && a.seed == b.seed;
  }
};

template <typename T>
struct LstmLayerParams {
  RowMatrix<T> w_ih;  // 4H x in, gate blocks ordered input, forget, cell, output
  RowMatrix<T> w_hh;  // 4H x H
  RowVector<T> bias;  // 4H
};

template <typename T>
struct Parameters {
  RowMatrix<T> conv_w;  // C x (kernel * W); column k*W + c is tap k of input channel c
  RowVector<T> conv_b;
  std::vector<LstmLayerParams<T>> lstm;
  RowMatrix<T> w_q;  // 2H x H, arch2 only (empty otherwise)
  RowMatrix<T> ffn1_w;  // F x H
  RowVector<T> ffn1_b;
  RowMatrix<T> ffn2_w;  // 1 x F
  RowVector<T> ffn2_b;  // 1

  // Visits every tensor as a matrix view, in a fixed order with stable names.
  template <typename F>
  void for_each(F&& fn) {
    fn("conv.weight", conv_w);
    fn("conv.bias", conv_b);
    for (std::size_t l = 0; l < lstm.size(); ++l) {
      const std::string p = "lstm.l" + std::to_string(l) + ".";
      fn(p + "w_ih", lstm[l].w_ih);
      fn(p + "w_hh", lstm[l].w_hh);
      fn(p + "bias", lstm[l].bias);
    }
    if (w_q.size() > 0) fn("attn.w_q", w_q);
    fn("ffnn.0.weight", ffn1_w);
    fn("ffnn.0.bias", ffn1_b);
    fn("ffnn.1.weight", ffn2_w);
    fn("ffnn.1.bias", ffn2_b);
  }

  template <typename F>
  void for_each(F&& fn) const {
    const_cast<Parameters*>(this)->for_each([&](const std::string& name, auto& m) { fn(name, std::as_const(m)); });
  }

  Parameters zeros_like() const {
    Parameters z = *this;
    z.for_each([](const std::string&, auto& m) { m.setZero(); });
    return z;
  }

  std::size_t count() const {
    std::size_t n = 0;
    for_each([&](const std::string&, const auto& m) { n += static_cast<std::size_t>(m.size()); });
    return n;
  }

  template <typename U>
  Parameters<U> cast() const {
    Parameters<U> out;
    out.conv_w = conv_w.template cast<U>();
    out.conv_b = conv_b.template cast<U>();
    for (const auto& l : lstm) out.lstm.push_back({l.w_ih.template cast<U>(), l.w_hh.template cast<U>(), l.bias.template cast<U>()});
    out.w_q = w_q.template cast<U>();
    out.ffn1_w = ffn1_w.template cast<U>();
    out.ffn1_b = ffn1_b.template cast<U>();
    out.ffn2_w = ffn2_w.template cast<U>();
    out.ffn2_b = ffn2_b.template cast<U>();
    return out;
  }
};

// Expected shapes of every parameter for `cfg`, in for_each order.
template <typename T>
Parameters<T> zero_parameters(const RegressorConfig& cfg) {
  cfg.validate();
  const int H = cfg.lstm_hidden;
  Parameters<T> p;
  p.conv_w = RowMatrix<T>::Zero(cfg.conv_channels, cfg.conv.kernel * cfg.input_dim);
  p.conv_b = RowVector<T>::Zero(cfg.conv_channels);
  for (int l = 0; l < cfg.lstm_layers; ++l) {
    const int in = l == 0 ? cfg.conv_channels : H;
    p.lstm.push_back({RowMatrix<T>::Zero(4 * H, in), RowMatrix<T>::Zero(4 * H, H), RowVector<T>::Zero(4 * H)});
  }
  if (cfg.architecture == Architecture::arch2) p.w_q = RowMatrix<T>::Zero(2 * H, H);
  p.ffn1_w = RowMatrix<T>::Zero(cfg.ffnn_hidden, H);
  p.ffn1_b = RowVector<T>::Zero(cfg.ffnn_hidden);
  p.ffn2_w = RowMatrix<T>::Zero(1, cfg.ffnn_hidden);
  p.ffn2_b = RowVector<T>::Zero(1);
  return p;
}

// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for every tensor, drawn from
// cfg.seed. Shared layers are drawn before the attention projection so the
// two architectures start from identical conv/LSTM/FFNN weights.
template <typename T>
Parameters<T> init_parameters(const RegressorConfig& cfg) {
  Parameters<T> p = zero_parameters<T>(cfg);
  Random rng(cfg.seed);
  auto fill = [&](auto& m, int fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<T>(rng.uniform(-bound, bound));
  };
  const int H = cfg.lstm_hidden;
  fill(p.conv_w, cfg.conv.kernel * cfg.input_dim);
  fill(p.conv_b, cfg.conv.kernel * cfg.input_dim);
  for (auto& l : p.lstm) {
    fill(l.w_ih, H);
    fill(l.w_hh, H);
    fill(l.bias, H);
  }
  fill(p.ffn1_w, H);
  fill(p.ffn1_b, H);
  fill(p.ffn2_w, cfg.ffnn_hidden);
  fill(p.ffn2_b, cfg.ffnn_hidden);
  if (cfg.architecture == Architecture::arch2) fill(p.w_q, 2 * H);
  return p;
}

namespace kernels {

template <typename T>
T sigmoid(T x) {
  return T(1) / (T(1) + std::exp(-x));
}

// Gathers the conv receptive fields of one sample: row j holds the
// kernel taps around input step j*stride - padding, zeros outside [0, len).
template <typename T, typename In>
RowMatrix<T> im2col(const In& x, int len, const ConvGeometry& g) {
  const int out_len = g.output_length(len);
  const int W = static_cast<int>(x.cols());
  RowMatrix<T> cols = RowMatrix<T>::Zero(out_len, g.kernel * W);
  for (int j = 0; j < out_len; ++j)
    for (int k = 0; k < g.kernel; ++k) {
      const int src = j * g.stride + k - g.padding;
      if (src >= 0 && src < len) cols.row(j).segment(k * W, W) = x.row(src).template cast<T>();
    }
  return cols;
}

template <typename T>
struct ConvCache {
  RowMatrix<T> cols;
  RowMatrix<T> out;  // tanh(pre-activation), out_len x C
};

template <typename T, typename In>
ConvCache<T> conv_forward(const Parameters<T>& p, const ConvGeometry& g, const In& x, int len) {
  ConvCache<T> c;
  c.cols = im2col<T>(x, len, g);
  c.out = ((c.cols * p.conv_w.transpose()).rowwise() + p.conv_b).array().tanh().matrix();
  return c;
}

template <typename T>
struct LstmLayerCache {
  RowMatrix<T> input;   // steps x in
  RowMatrix<T> gates;   // steps x 4H, post-activation
  RowMatrix<T> cell;    // steps x H
  RowMatrix<T> cell_tanh;
  RowMatrix<T> hidden;  // steps x H
};

template <typename T>
LstmLayerCache<T> lstm_layer_forward(const LstmLayerParams<T>& p, RowMatrix<T> input) {
  const int steps = static_cast<int>(input.rows());
  const int H = static_cast<int>(p.w_hh.cols());
  LstmLayerCache<T> c;
  c.gates = (input * p.w_ih.transpose()).rowwise() + p.bias;
  c.input = std::move(input);
  c.cell.resize(steps, H);
  c.cell_tanh.resize(steps, H);
  c.hidden.resize(steps, H);
  RowVector<T> h = RowVector<T>::Zero(H);
  RowVector<T> cs = RowVector<T>::Zero(H);
  for (int t = 0; t < steps; ++t) {
    auto g = c.gates.row(t);
    if (t > 0) g.noalias() += h * p.w_hh.transpose();
    for (int k = 0; k < H; ++k) {
      g[k] = sigmoid(g[k]);
      g[H + k] = sigmoid(g[H + k]);
      g[2 * H + k] = std::tanh(g[2 * H + k]);
      g[3 * H + k] = sigmoid(g[3 * H + k]);
      cs[k] = g[H + k] * cs[k] + g[k] * g[2 * H + k];
      c.cell(t, k) = cs[k];
      c.cell_tanh(t, k) = std::tanh(cs[k]);
      h[k] = g[3 * H + k] * c.cell_tanh(t, k);
    }
    c.hidden.row(t) = h;
  }
  return c;
}

// Backpropagates through one layer. `d_hidden` holds dLoss/dh_t from above
// for every step; returns dLoss/dinput and accumulates parameter gradients.
template <typename T>
RowMatrix<T> lstm_layer_backward(const LstmLayerParams<T>& p, const LstmLayerCache<T>& c,
                                 const RowMatrix<T>& d_hidden, LstmLayerParams<T>& grad) {
  const int steps = static_cast<int>(c.hidden.rows());
  const int H = static_cast<int>(p.w_hh.cols());
  RowMatrix<T> d_pre(steps, 4 * H);
  RowVector<T> dh_next = RowVector<T>::Zero(H);
  RowVector<T> dc_next = RowVector<T>::Zero(H);
  for (int t = steps - 1; t >= 0; --t) {
    const auto g = c.gates.row(t);
    for (int k = 0; k < H; ++k) {
      const T i = g[k], f = g[H + k], gg = g[2 * H + k], o = g[3 * H + k];
      const T dh = d_hidden(t, k) + dh_next[k];
      const T tc = c.cell_tanh(t, k);
      const T dc = dc_next[k] + dh * o * (T(1) - tc * tc);
      const T c_prev = t > 0 ? c.cell(t - 1, k) : T(0);
      d_pre(t, k) = dc * gg * i * (T(1) - i);
      d_pre(t, H + k) = dc * c_prev * f * (T(1) - f);
      d_pre(t, 2 * H + k) = dc * i * (T(1) - gg * gg);
      d_pre(t, 3 * H + k) = dh * tc * o * (T(1) - o);
      dc_next[k] = dc * f;
    }
    dh_next.noalias() = d_pre.row(t) * p.w_hh;
  }
  if (steps > 1)
    grad.w_hh.noalias() += d_pre.bottomRows(steps - 1).transpose() * c.hidden.topRows(steps - 1);
  grad.w_ih.noalias() += d_pre.transpose() * c.input;
  grad.bias += d_pre.colwise().sum();
  return d_pre * p.w_ih;
}

template <typename T>
struct AttentionCache {
  RowVector<T> query_input;  // concatenated final states, 1 x 2H
  RowVector<T> query;        // 1 x H
  Vector<T> weights;         // steps
  RowVector<T> pooled;
};

template <typename T>
AttentionCache<T> attention_forward(const RowMatrix<T>& w_q, const RowVector<T>& query_input,
                                    const RowMatrix<T>& values, T denominator) {
  AttentionCache<T> c;
  c.query_input = query_input;
  c.query = query_input * w_q;
  Vector<T> logits = values * c.query.transpose() / denominator;
  const T peak = logits.maxCoeff();
  c.weights = (logits.array() - peak).exp().matrix();
  c.weights /= c.weights.sum();
  c.pooled = c.weights.transpose() * values;
  return c;
}

template <typename T>
struct HeadCache {
  RowVector<T> input;
  RowVector<T> hidden;   // tanh activations
  RowVector<T> dropped;  // after dropout
  RowVector<T> keep;     // dropout scale per unit (0 or 1/(1-p)); ones in eval
  T output{};
};

template <typename T>
HeadCache<T> head_forward(const Parameters<T>& p, const RowVector<T>& pooled, Mode mode, double dropout,
                          Random* rng) {
  HeadCache<T> c;
  c.input = pooled;
  c.hidden = ((pooled * p.ffn1_w.transpose()) + p.ffn1_b).array().tanh().matrix();
  c.keep = RowVector<T>::Ones(c.hidden.size());
  if (mode == Mode::train && dropout > 0.0) {
    if (rng == nullptr) throw ConfigurationError("train-mode dropout needs a random source");
    const T scale = T(1.0 / (1.0 - dropout));
    for (Eigen::Index k = 0; k < c.keep.size(); ++k) c.keep[k] = rng->uniform() < dropout ? T(0) : scale;
  }
  c.dropped = c.hidden.cwiseProduct(c.keep);
  c.output = c.dropped.dot(p.ffn2_w.row(0)) + p.ffn2_b[0];
  return c;
}

// Everything the backward pass needs for one sample.
template <typename T>
struct SampleCache {
  ConvCache<T> conv;
  std::vector<LstmLayerCache<T>> lstm;
  AttentionCache<T> attention;
  HeadCache<T> head;
};

template <typename T, typename In>
SampleCache<T> sample_forward(const RegressorConfig& cfg, const Parameters<T>& p, const In& x, int len, Mode mode,
                              Random* rng) {
  SampleCache<T> c;
  c.conv = conv_forward(p, cfg.conv, x, len);
  RowMatrix<T> layer_in = c.conv.out;
  for (const auto& lp : p.lstm) {
    c.lstm.push_back(lstm_layer_forward(lp, std::move(layer_in)));
    layer_in = c.lstm.back().hidden;
  }
  const RowMatrix<T>& outputs = c.lstm.back().hidden;
  RowVector<T> pooled;
  if (cfg.architecture == Architecture::arch1) {
    pooled = outputs.colwise().sum() / static_cast<T>(outputs.rows());
  } else {
    const int H = cfg.lstm_hidden;
    RowVector<T> q_in(2 * H);
    q_in << c.lstm[0].hidden.bottomRows(1), c.lstm[1].hidden.bottomRows(1);
    c.attention = attention_forward(p.w_q, q_in, outputs, static_cast<T>(cfg.attention_denominator()));
    pooled = c.attention.pooled;
  }
  c.head = head_forward(p, pooled, mode, cfg.dropout, rng);
  return c;
}

// Accumulates dLoss/dparams for one sample given dLoss/doutput.
template <typename T>
void sample_backward(const RegressorConfig& cfg, const Parameters<T>& p, const SampleCache<T>& c, T d_output,
                     Parameters<T>& grad) {
  const HeadCache<T>& h = c.head;
  grad.ffn2_w.row(0) += d_output * h.dropped;
  grad.ffn2_b[0] += d_output;
  const RowVector<T> d_hidden = (d_output * p.ffn2_w.row(0)).cwiseProduct(h.keep);
  const RowVector<T> d_z1 = d_hidden.array() * (T(1) - h.hidden.array().square());
  grad.ffn1_w.noalias() += d_z1.transpose() * h.input;
  grad.ffn1_b += d_z1;
  const RowVector<T> d_pooled = d_z1 * p.ffn1_w;

  const RowMatrix<T>& outputs = c.lstm.back().hidden;
  const int steps = static_cast<int>(outputs.rows());
  const int H = cfg.lstm_hidden;
  const int layers = static_cast<int>(p.lstm.size());
  std::vector<RowMatrix<T>> d_hidden_layers(layers, RowMatrix<T>::Zero(steps, H));

  if (cfg.architecture == Architecture::arch1) {
    d_hidden_layers.back().rowwise() += d_pooled / static_cast<T>(steps);
  } else {
    const AttentionCache<T>& a = c.attention;
    const T denom = static_cast<T>(cfg.attention_denominator());
    // pooled = sum_t w_t v_t with w = softmax(v_t . q / denom); keys == values.
    const Vector<T> d_w = outputs * d_pooled.transpose();
    const T mean_dw = a.weights.dot(d_w);
    const Vector<T> d_logits = a.weights.cwiseProduct((d_w.array() - mean_dw).matrix());
    const RowVector<T> d_query = d_logits.transpose() * outputs / denom;
    RowMatrix<T>& d_out = d_hidden_layers.back();
    d_out.noalias() += a.weights * d_pooled;
    d_out.noalias() += d_logits * (a.query / denom);
    grad.w_q.noalias() += a.query_input.transpose() * d_query;
    const RowVector<T> d_q_in = d_query * p.w_q.transpose();
    d_hidden_layers[0].row(steps - 1) += d_q_in.head(H);
    d_hidden_layers[1].row(steps - 1) += d_q_in.tail(H);
  }

  RowMatrix<T> d_input;
  for (int l = layers - 1; l >= 0; --l) {
    if (l < layers - 1) d_hidden_layers[l] += d_input;
    d_input = lstm_layer_backward(p.lstm[l], c.lstm[l], d_hidden_layers[l], grad.lstm[l]);
  }
  const RowMatrix<T> d_conv_pre = d_input.array() * (T(1) - c.conv.out.array().square());
  grad.conv_w.noalias() += d_conv_pre.transpose() * c.conv.cols;
  grad.conv_b += d_conv_pre.colwise().sum();
}

}  // namespace kernels

// ---------------------------------------------------------------------------
// Batch-level stages on padded tensors.
// ---------------------------------------------------------------------------

template <typename T>
struct Encoded {
  Tensor3<T> values;
  std::vector<int> lengths;
};

inline void check_lengths(std::span<const int> lengths, int n, int max_len) {
  if (static_cast<int>(lengths.size()) != n) throw ShapeError("lengths do not match batch size");
  for (int l : lengths)
    if (l < 1 || l > max_len) throw LengthError("length " + std::to_string(l) + " outside [1, " + std::to_string(max_len) + "]");
}

// One strided 1-D convolution plus tanh; positions past each sample's
// post-conv length are zero.
template <typename T>
Encoded<T> conv_encode(const RegressorConfig& cfg, const Parameters<T>& p, const PaddedBatch& batch) {
  if (batch.dim() != cfg.input_dim)
    throw ShapeError("batch feature dim " + std::to_string(batch.dim()) + " != configured " +
                     std::to_string(cfg.input_dim));
  check_lengths(batch.lengths, batch.size(), batch.max_length());
  const int out_len = cfg.conv.output_length(batch.max_length());
  Encoded<T> e{Tensor3<T>(batch.size(), out_len, cfg.conv_channels), {}};
  for (int i = 0; i < batch.size(); ++i) {
    const int len = cfg.conv.output_length(batch.lengths[i]);
    e.lengths.push_back(len);
    e.values.sample(i).topRows(len) = kernels::conv_forward(p, cfg.conv, batch.features.sample(i), batch.lengths[i]).out;
  }
  return e;
}

template <typename T>
struct LstmEncoded {
  Tensor3<T> outputs;        // N x L x H, zero past each length
  Tensor3<T> final_hidden;   // layers x N x H, states at step lengths[i]-1
};

template <typename T>
LstmEncoded<T> lstm_encode(const RegressorConfig& cfg, const Parameters<T>& p, const Tensor3<T>& x,
                           std::span<const int> lengths) {
  if (x.d() != cfg.conv_channels) throw ShapeError("LSTM input dim mismatch");
  check_lengths(lengths, x.n(), x.l());
  const int H = cfg.lstm_hidden;
  LstmEncoded<T> e{Tensor3<T>(x.n(), x.l(), H), Tensor3<T>(cfg.lstm_layers, x.n(), H)};
  for (int i = 0; i < x.n(); ++i) {
    RowMatrix<T> layer_in = x.sample(i).topRows(lengths[i]);
    for (int l = 0; l < cfg.lstm_layers; ++l) {
      auto c = kernels::lstm_layer_forward(p.lstm[l], std::move(layer_in));
      e.final_hidden.sample(l).row(i) = c.hidden.bottomRows(1);
      layer_in = std::move(c.hidden);
    }
    e.outputs.sample(i).topRows(lengths[i]) = layer_in;
  }
  return e;
}

// Mean over each sample's first lengths[i] steps.
template <typename T>
RowMatrix<T> masked_mean(const Tensor3<T>& outputs, std::span<const int> lengths) {
  check_lengths(lengths, outputs.n(), outputs.l());
  RowMatrix<T> pooled(outputs.n(), outputs.d());
  for (int i = 0; i < outputs.n(); ++i)
    pooled.row(i) = outputs.sample(i).topRows(lengths[i]).colwise().sum() / static_cast<T>(lengths[i]);
  return pooled;
}

template <typename T>
struct AttentionPooled {
  RowMatrix<T> pooled;   // N x H
  RowMatrix<T> weights;  // N x L, zero at masked steps
};

// Query from the two stacked final LSTM states, keys = values = outputs,
// logits scaled by 1/denominator and masked past each length.
template <typename T>
AttentionPooled<T> attention_pool(const RowMatrix<T>& w_q, const Tensor3<T>& outputs, const Tensor3<T>& final_hidden,
                                  std::span<const int> lengths, T denominator) {
  const int H = outputs.d();
  if (final_hidden.n() != 2 || final_hidden.l() != outputs.n() || final_hidden.d() != H)
    throw ShapeError("attention expects final states of shape 2 x N x H");
  if (w_q.rows() != 2 * H || w_q.cols() != H) throw ShapeError("query projection must be 2H x H");
  check_lengths(lengths, outputs.n(), outputs.l());
  AttentionPooled<T> a{RowMatrix<T>(outputs.n(), H), RowMatrix<T>::Zero(outputs.n(), outputs.l())};
  for (int i = 0; i < outputs.n(); ++i) {
    RowVector<T> q_in(2 * H);
    q_in << final_hidden.sample(0).row(i), final_hidden.sample(1).row(i);
    const RowMatrix<T> values = outputs.sample(i).topRows(lengths[i]);
    auto c = kernels::attention_forward(w_q, q_in, values, denominator);
    a.pooled.row(i) = c.pooled;
    a.weights.row(i).head(lengths[i]) = c.weights.transpose();
  }
  return a;
}

template <typename T>
std::vector<T> ffnn_head(const RegressorConfig& cfg, const Parameters<T>& p, const RowMatrix<T>& pooled, Mode mode,
                         Random* rng = nullptr) {
  if (pooled.cols() != cfg.lstm_hidden) throw ShapeError("pooled dim mismatch");
  std::vector<T> out;
  for (Eigen::Index i = 0; i < pooled.rows(); ++i)
    out.push_back(kernels::head_forward<T>(p, pooled.row(i), mode, cfg.dropout, rng).output);
  return out;
}

// ---------------------------------------------------------------------------
// The emotion regressor.
// ---------------------------------------------------------------------------

template <typename T>
class Regressor {
 public:
  explicit Regressor(RegressorConfig cfg)
      : cfg_(std::move(cfg)), params_(init_parameters<T>(cfg_)), dropout_rng_(cfg_.seed ^ 0x9e3779b97f4a7c15ULL) {}

  Regressor(RegressorConfig cfg, Parameters<T> params)
      : cfg_(std::move(cfg)), params_(std::move(params)), dropout_rng_(cfg_.seed ^ 0x9e3779b97f4a7c15ULL) {
    check_shapes(cfg_, params_);
  }

  const RegressorConfig& config() const { return cfg_; }
  const Parameters<T>& params() const { return params_; }
  Parameters<T>& params() { return params_; }

  // Composes the batch-level stages; eval mode is deterministic.
  std::vector<T> forward(const PaddedBatch& batch, Mode mode = Mode::eval) {
    const Encoded<T> conv = conv_encode(cfg_, params_, batch);
    const LstmEncoded<T> lstm = lstm_encode(cfg_, params_, conv.values, conv.lengths);
    RowMatrix<T> pooled;
    if (cfg_.architecture == Architecture::arch1) {
      pooled = masked_mean(lstm.outputs, conv.lengths);
    } else {
      pooled = attention_pool(params_.w_q, lstm.outputs, lstm.final_hidden, conv.lengths,
                              static_cast<T>(cfg_.attention_denominator()))
                   .pooled;
    }
    return ffnn_head(cfg_, params_, pooled, mode, &dropout_rng_);
  }

  std::vector<T> predict(const PaddedBatch& batch) const {
    if (batch.dim() != cfg_.input_dim) throw ShapeError("batch feature dim does not match the regressor");
    check_lengths(batch.lengths, batch.size(), batch.max_length());
    std::vector<T> out;
    for (int i = 0; i < batch.size(); ++i)
      out.push_back(
          kernels::sample_forward(cfg_, params_, batch.features.sample(i), batch.lengths[i], Mode::eval, nullptr)
              .head.output);
    return out;
  }

  // Mean squared error over the batch; adds its gradient into `grad`.
  T loss_and_gradient(const PaddedBatch& batch, Parameters<T>& grad, Mode mode = Mode::train) {
    if (batch.targets.size() != static_cast<std::size_t>(batch.size()))
      throw InputError("training batch lacks targets");
    if (batch.dim() != cfg_.input_dim) throw ShapeError("batch feature dim does not match the regressor");
    check_lengths(batch.lengths, batch.size(), batch.max_length());
    const T n = static_cast<T>(batch.size());
    T loss = 0;
    for (int i = 0; i < batch.size(); ++i) {
      const auto cache =
          kernels::sample_forward(cfg_, params_, batch.features.sample(i), batch.lengths[i], mode, &dropout_rng_);
      const T err = cache.head.output - static_cast<T>(batch.targets[i]);
      loss += err * err / n;
      kernels::sample_backward(cfg_, params_, cache, T(2) * err / n, grad);
    }
    return loss;
  }

  T loss(const PaddedBatch& batch) const {
    const auto pred = predict(batch);
    T total = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
      const T err = pred[i] - static_cast<T>(batch.targets.at(i));
      total += err * err;
    }
    return total / static_cast<T>(pred.size());
  }

  static void check_shapes(const RegressorConfig& cfg, const Parameters<T>& params) {
    const Parameters<T> expected = zero_parameters<T>(cfg);
    std::vector<std::pair<std::string, std::pair<Eigen::Index, Eigen::Index>>> want, have;
    expected.for_each([&](const std::string& n, const auto& m) { want.push_back({n, {m.rows(), m.cols()}}); });
    params.for_each([&](const std::string& n, const auto& m) { have.push_back({n, {m.rows(), m.cols()}}); });
    if (want != have) throw ShapeError("parameter shapes do not match the regressor config");
  }

 private:
  RegressorConfig cfg_;
  Parameters<T> params_;
  Random dropout_rng_;
};

}  // namespace emoshare

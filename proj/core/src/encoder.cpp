// SPDX-License-Identifier: Apache-2.0
#include "csa/encoder.hpp"

#include <algorithm>
#include <cmath>

namespace csa {

void EncoderConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError("encoder config: " + what);
  };
  require(heads >= 1, "heads must be >= 1");
  require(head_dim >= 1, "head_dim must be >= 1");
  require(hidden >= 1, "hidden must be >= 1");
  require(input_len >= 1, "input_len must be >= 1");
  require(ffn_mult >= 1, "ffn_mult must be >= 1");
  require(allow_hidden_mismatch || hidden == heads * head_dim,
          "hidden (" + std::to_string(hidden) + ") != heads * head_dim (" +
              std::to_string(heads * head_dim) + "); pass allow_hidden_mismatch to override");
}

namespace {
std::string style_name(SublayerStyle s) {
  return s == SublayerStyle::kPostNorm ? "post_norm" : "residual_norm";
}
}  // namespace

void to_json(nlohmann::json& j, const EncoderConfig& c) {
  j = nlohmann::json{{"depth", c.depth},
                     {"heads", c.heads},
                     {"head_dim", c.head_dim},
                     {"hidden", c.hidden},
                     {"input_len", c.input_len},
                     {"ffn_mult", c.ffn_mult},
                     {"mse_head_hidden", c.mse_head_hidden},
                     {"sublayer_style", style_name(c.sublayer_style)},
                     {"allow_hidden_mismatch", c.allow_hidden_mismatch}};
}

void from_json(const nlohmann::json& j, EncoderConfig& c) {
  c.depth = j.at("depth").get<std::size_t>();
  c.heads = j.at("heads").get<std::size_t>();
  c.head_dim = j.at("head_dim").get<std::size_t>();
  c.hidden = j.at("hidden").get<std::size_t>();
  c.input_len = j.at("input_len").get<std::size_t>();
  c.ffn_mult = j.at("ffn_mult").get<std::size_t>();
  c.mse_head_hidden = j.value("mse_head_hidden", std::size_t{0});
  const std::string style = j.value("sublayer_style", std::string("residual_norm"));
  if (style == "residual_norm") {
    c.sublayer_style = SublayerStyle::kResidualNorm;
  } else if (style == "post_norm") {
    c.sublayer_style = SublayerStyle::kPostNorm;
  } else {
    throw ConfigError("encoder config: unknown sublayer_style '" + style + "'");
  }
  c.allow_hidden_mismatch = j.value("allow_hidden_mismatch", false);
}

// ---------------------------------------------------------------------------
// Parameter containers

template <typename T>
EncoderParams<T> make_params(const EncoderConfig& c) {
  c.validate();
  const std::size_t hid = c.hidden;
  EncoderParams<T> p;
  p.proj_weight = Matrix<T>(c.input_len, hid);
  p.proj_bias = Matrix<T>(1, hid);
  p.layers.resize(c.depth);
  for (auto& layer : p.layers) {
    layer.heads.resize(c.heads);
    for (auto& h : layer.heads) {
      h.q_weight = Matrix<T>(hid, c.head_dim);
      h.k_weight = Matrix<T>(hid, c.head_dim);
      h.v_weight = Matrix<T>(hid, c.head_dim);
      h.q_bias = Matrix<T>(1, c.head_dim);
      h.k_bias = Matrix<T>(1, c.head_dim);
      h.v_bias = Matrix<T>(1, c.head_dim);
    }
    layer.fuse_weight = Matrix<T>(c.attention_width(), hid);
    layer.fuse_bias = Matrix<T>(1, hid);
    layer.norm1_gain = Matrix<T>(1, hid);
    layer.norm1_bias = Matrix<T>(1, hid);
    layer.ffn_weight1 = Matrix<T>(hid, c.ffn_dim());
    layer.ffn_bias1 = Matrix<T>(1, c.ffn_dim());
    layer.ffn_weight2 = Matrix<T>(c.ffn_dim(), hid);
    layer.ffn_bias2 = Matrix<T>(1, hid);
    layer.norm2_gain = Matrix<T>(1, hid);
    layer.norm2_bias = Matrix<T>(1, hid);
  }
  p.head_weight1 = Matrix<T>(hid, c.head_hidden());
  p.head_bias1 = Matrix<T>(1, c.head_hidden());
  p.head_weight2 = Matrix<T>(c.head_hidden(), c.input_len);
  p.head_bias2 = Matrix<T>(1, c.input_len);
  return p;
}

template <typename T>
EncoderParams<T> init_params(const EncoderConfig& config, Rng& rng) {
  EncoderParams<T> p = make_params<T>(config);
  p.visit([&](const std::string&, Matrix<T>& m, TensorRole role) {
    switch (role) {
      case TensorRole::kWeight: {
        const double bound = 1.0 / std::sqrt(static_cast<double>(m.rows()));
        for (auto& v : m.values()) v = static_cast<T>(rng.uniform(-bound, bound));
        break;
      }
      case TensorRole::kNormGain:
        m.fill(T{1});
        break;
      case TensorRole::kBias:
      case TensorRole::kNormBias:
        m.fill(T{0});
        break;
    }
  });
  return p;
}

std::size_t expected_parameter_count(const EncoderConfig& c) {
  const std::size_t hid = c.hidden;
  const std::size_t f = c.ffn_dim();
  const std::size_t hh = c.head_hidden();
  std::size_t per_layer = c.heads * 3 * (hid * c.head_dim + c.head_dim);
  per_layer += c.attention_width() * hid + hid;
  per_layer += 4 * hid;
  per_layer += hid * f + f + f * hid + hid;
  return c.input_len * hid + hid + c.depth * per_layer + hid * hh + hh + hh * c.input_len +
         c.input_len;
}

template <typename T>
std::size_t EncoderParams<T>::parameter_count() const {
  std::size_t n = 0;
  visit([&](const std::string&, const Matrix<T>& m, TensorRole) { n += m.size(); });
  return n;
}

template <typename T>
std::size_t EncoderParams<T>::tensor_count() const {
  std::size_t n = 0;
  visit([&](const std::string&, const Matrix<T>&, TensorRole) { ++n; });
  return n;
}

template <typename T>
bool EncoderParams<T>::all_finite() const {
  bool ok = true;
  visit([&](const std::string&, const Matrix<T>& m, TensorRole) { ok = ok && m.all_finite(); });
  return ok;
}

template <typename T>
EncoderParams<T> EncoderParams<T>::zeros_like() const {
  EncoderParams<T> out = *this;
  out.visit([](const std::string&, Matrix<T>& m, TensorRole) { m.fill(T{0}); });
  return out;
}

template <typename T>
template <typename U>
EncoderParams<U> EncoderParams<T>::cast() const {
  EncoderParams<U> out;
  out.layers.resize(layers.size());
  for (std::size_t l = 0; l < layers.size(); ++l) out.layers[l].heads.resize(layers[l].heads.size());
  std::vector<const Matrix<T>*> src;
  visit([&](const std::string&, const Matrix<T>& m, TensorRole) { src.push_back(&m); });
  std::size_t i = 0;
  out.visit([&](const std::string&, Matrix<U>& m, TensorRole) { m = src[i++]->template cast<U>(); });
  return out;
}

template <typename T>
void check_param_shapes(const EncoderParams<T>& params, const EncoderConfig& config) {
  const EncoderParams<T> expected = make_params<T>(config);
  std::vector<std::pair<std::string, std::string>> want;
  expected.visit([&](const std::string& name, const Matrix<T>& m, TensorRole) {
    want.emplace_back(name, m.shape());
  });
  std::size_t i = 0;
  params.visit([&](const std::string& name, const Matrix<T>& m, TensorRole) {
    if (i >= want.size()) throw ShapeError("params: unexpected tensor " + name);
    if (want[i].first != name || want[i].second != m.shape()) {
      throw ShapeError("params: tensor " + name + " " + m.shape() + " does not match config (" +
                       want[i].first + " " + want[i].second + ")");
    }
    ++i;
  });
  if (i != want.size()) throw ShapeError("params: missing tensor " + want[i].first);
}

// ---------------------------------------------------------------------------
// Recorded forward pass

template <typename T>
EncoderTape<T>::EncoderTape(const EncoderParams<T>& params, const EncoderConfig& config)
    : params_(params), config_(config) {}

template <typename T>
Var EncoderTape<T>::bind(const Matrix<T>& m) {
  auto [it, inserted] = bound_.try_emplace(&m);
  if (inserted) it->second = tape_.parameter(m);
  return it->second;
}

template <typename T>
Var EncoderTape<T>::record_mha(Var x, const EncoderLayer<T>& layer, std::size_t layer_index) {
  const bool any_padding = std::find(valid_.begin(), valid_.end(), false) != valid_.end();
  const std::size_t head_dim = layer.heads.empty() ? 1 : layer.heads.front().q_weight.cols();
  const T inv_sqrt = static_cast<T>(1.0 / std::sqrt(static_cast<double>(head_dim)));
  std::vector<Var> heads;
  heads.reserve(layer.heads.size());
  for (const auto& h : layer.heads) {
    Var q = tape_.add_row(tape_.matmul(x, bind(h.q_weight)), bind(h.q_bias));
    Var k = tape_.add_row(tape_.matmul(x, bind(h.k_weight)), bind(h.k_bias));
    Var v = tape_.add_row(tape_.matmul(x, bind(h.v_weight)), bind(h.v_bias));
    Var logits = tape_.scale(tape_.matmul_bt(q, k), inv_sqrt);
    if (any_padding) logits = tape_.mask_columns(logits, valid_, static_cast<T>(kMaskPenalty));
    Var weights = tape_.softmax_rows(logits);
    attention_[layer_index].push_back(weights);
    heads.push_back(tape_.matmul(weights, v));
  }
  Var cat = heads.size() == 1 ? heads.front() : tape_.concat_cols(heads);
  return tape_.add_row(tape_.matmul(cat, bind(layer.fuse_weight)), bind(layer.fuse_bias));
}

template <typename T>
Var EncoderTape<T>::record_layer(Var x, const EncoderLayer<T>& layer, std::size_t layer_index) {
  const bool post = config_.sublayer_style == SublayerStyle::kPostNorm;
  Var attn = record_mha(x, layer, layer_index);
  Var y1 = post ? tape_.layer_norm_rows(tape_.add(x, attn), bind(layer.norm1_gain),
                                        bind(layer.norm1_bias))
                : tape_.add(x, tape_.layer_norm_rows(attn, bind(layer.norm1_gain),
                                                     bind(layer.norm1_bias)));
  Var hidden = tape_.gelu(
      tape_.add_row(tape_.matmul(y1, bind(layer.ffn_weight1)), bind(layer.ffn_bias1)));
  Var ffn = tape_.add_row(tape_.matmul(hidden, bind(layer.ffn_weight2)), bind(layer.ffn_bias2));
  return post ? tape_.layer_norm_rows(tape_.add(y1, ffn), bind(layer.norm2_gain),
                                      bind(layer.norm2_bias))
              : tape_.add(y1, tape_.layer_norm_rows(ffn, bind(layer.norm2_gain),
                                                    bind(layer.norm2_bias)));
}

template <typename T>
Var EncoderTape<T>::begin_input(const Matrix<T>& x, const RowMask& valid, std::size_t layers) {
  if (input_.valid()) throw TapeError("encoder: forward() already recorded on this tape");
  if (valid.size() != x.rows()) {
    throw ShapeError("encoder: mask length " + std::to_string(valid.size()) + " vs " + x.shape());
  }
  valid_ = valid;
  attention_.assign(layers, {});
  input_ = tape_.input(x);
  return input_;
}

template <typename T>
const Matrix<T>& EncoderTape<T>::forward_attention_only(const Matrix<T>& x,
                                                        const EncoderLayer<T>& layer,
                                                        const RowMask& valid) {
  Var in = begin_input(x, valid, 1);
  refined_ = record_mha(in, layer, 0);
  return tape_.value(refined_);
}

template <typename T>
const Matrix<T>& EncoderTape<T>::forward_layer_only(const Matrix<T>& x,
                                                    const EncoderLayer<T>& layer,
                                                    const RowMask& valid) {
  Var in = begin_input(x, valid, 1);
  refined_ = record_layer(in, layer, 0);
  return tape_.value(refined_);
}

template <typename T>
const Matrix<T>& EncoderTape<T>::forward(const Matrix<T>& affinity, const RowMask& valid) {
  if (affinity.cols() != params_.proj_weight.rows()) {
    throw ShapeError("encoder_forward: affinity " + affinity.shape() + " vs input projection " +
                     params_.proj_weight.shape());
  }
  begin_input(affinity, valid, params_.layers.size());
  Var x = tape_.add_row(tape_.matmul(input_, bind(params_.proj_weight)), bind(params_.proj_bias));
  for (std::size_t l = 0; l < params_.layers.size(); ++l) {
    x = record_layer(x, params_.layers[l], l);
  }
  refined_ = x;
  return tape_.value(refined_);
}

template <typename T>
const Matrix<T>& EncoderTape<T>::reconstruct() {
  if (!refined_.valid()) throw TapeError("encoder: reconstruct() before forward()");
  if (!reconstruction_.valid()) {
    Var h = tape_.gelu(tape_.add_row(tape_.matmul(refined_, bind(params_.head_weight1)),
                                     bind(params_.head_bias1)));
    reconstruction_ =
        tape_.add_row(tape_.matmul(h, bind(params_.head_weight2)), bind(params_.head_bias2));
  }
  return tape_.value(reconstruction_);
}

template <typename T>
const Matrix<T>& EncoderTape<T>::refined() const {
  return tape_.value(refined_);
}

template <typename T>
const Matrix<T>& EncoderTape<T>::reconstruction() const {
  return tape_.value(reconstruction_);
}

template <typename T>
const Matrix<T>& EncoderTape<T>::attention(std::size_t layer, std::size_t head) const {
  return tape_.value(attention_.at(layer).at(head));
}

template <typename T>
void EncoderTape<T>::backward(const Matrix<T>* d_refined, const Matrix<T>* d_reconstruction) {
  if (!refined_.valid()) throw TapeError("encoder: backward() without a recorded forward pass");
  std::vector<std::pair<Var, const Matrix<T>*>> seeds;
  if (d_refined != nullptr) seeds.emplace_back(refined_, d_refined);
  if (d_reconstruction != nullptr) {
    if (!reconstruction_.valid()) throw TapeError("encoder: reconstruction seed without reconstruct()");
    seeds.emplace_back(reconstruction_, d_reconstruction);
  }
  if (seeds.empty()) {
    // Constant loss: every gradient is zero.
    const Matrix<T> zero(tape_.value(refined_).rows(), tape_.value(refined_).cols());
    tape_.backward(refined_, zero);
  } else {
    tape_.backward(seeds);
  }
  backward_done_ = true;
}

template <typename T>
void EncoderTape<T>::accumulate_gradients(EncoderParams<T>& grads) const {
  if (!backward_done_) throw TapeError("encoder: gradients requested before backward()");
  std::vector<const Matrix<T>*> order;
  params_.visit([&](const std::string&, const Matrix<T>& m, TensorRole) { order.push_back(&m); });
  std::size_t i = 0;
  grads.visit([&](const std::string& name, Matrix<T>& g, TensorRole) {
    const Matrix<T>* p = order.at(i++);
    if (!g.same_shape(*p)) throw ShapeError("gradient buffer " + name + " " + g.shape());
    auto it = bound_.find(p);
    if (it == bound_.end()) return;
    const Matrix<T>& d = tape_.grad(it->second);
    if (!d.empty()) add_inplace(g, d);
  });
}

template <typename T>
Matrix<T> EncoderTape<T>::input_gradient() const {
  if (!backward_done_) throw TapeError("encoder: gradients requested before backward()");
  const Matrix<T>& d = tape_.grad(input_);
  if (d.empty()) {
    const Matrix<T>& x = tape_.value(input_);
    return Matrix<T>(x.rows(), x.cols());
  }
  return d;
}

// ---------------------------------------------------------------------------
// Functional forms

template <typename T>
Matrix<T> mha_forward(const Matrix<T>& x, const EncoderLayer<T>& layer, const RowMask& valid) {
  const EncoderParams<T> shell;
  EncoderTape<T> pass(shell, EncoderConfig{});
  return pass.forward_attention_only(x, layer, valid);
}

template <typename T>
Matrix<T> encoder_layer_forward(const Matrix<T>& x, const EncoderLayer<T>& layer,
                                const RowMask& valid, SublayerStyle style) {
  const EncoderParams<T> shell;
  EncoderConfig cfg;
  cfg.sublayer_style = style;
  EncoderTape<T> pass(shell, cfg);
  return pass.forward_layer_only(x, layer, valid);
}

template <typename T>
Matrix<T> encoder_forward(const Matrix<T>& affinity, const RowMask& valid,
                          const EncoderParams<T>& params, const EncoderConfig& config) {
  EncoderTape<T> pass(params, config);
  return pass.forward(affinity, valid);
}

template <typename T>
Matrix<T> mse_head_forward(const Matrix<T>& refined, const EncoderParams<T>& params) {
  Matrix<T> h = gelu(add_row_vector(matmul(refined, params.head_weight1), params.head_bias1));
  return add_row_vector(matmul(h, params.head_weight2), params.head_bias2);
}

RefinedSequence encoder_forward(const AffinitySequence& seq, const EncoderParams<float>& params,
                                const EncoderConfig& config) {
  RefinedSequence out;
  out.candidate_ids = seq.candidate_ids;
  out.values = encoder_forward(seq.values, seq.row_valid, params, config);
  return out;
}

template <typename T>
EncoderGradients<T> encoder_backward(EncoderTape<T>& pass, const Matrix<T>* d_refined,
                                     const Matrix<T>* d_reconstruction) {
  pass.backward(d_refined, d_reconstruction);
  EncoderGradients<T> g;
  g.params = pass.params().zeros_like();
  pass.accumulate_gradients(g.params);
  g.input = pass.input_gradient();
  return g;
}

#define CSA_INSTANTIATE_ENCODER(T)                                                              \
  template struct EncoderParams<T>;                                                             \
  template EncoderParams<T> make_params<T>(const EncoderConfig&);                               \
  template EncoderParams<T> init_params<T>(const EncoderConfig&, Rng&);                         \
  template void check_param_shapes(const EncoderParams<T>&, const EncoderConfig&);              \
  template class EncoderTape<T>;                                                                \
  template Matrix<T> mha_forward(const Matrix<T>&, const EncoderLayer<T>&, const RowMask&);     \
  template Matrix<T> encoder_layer_forward(const Matrix<T>&, const EncoderLayer<T>&,            \
                                           const RowMask&, SublayerStyle);                      \
  template Matrix<T> encoder_forward(const Matrix<T>&, const RowMask&, const EncoderParams<T>&, \
                                     const EncoderConfig&);                                     \
  template Matrix<T> mse_head_forward(const Matrix<T>&, const EncoderParams<T>&);               \
  template EncoderGradients<T> encoder_backward(EncoderTape<T>&, const Matrix<T>*,              \
                                                const Matrix<T>*);

CSA_INSTANTIATE_ENCODER(float)
CSA_INSTANTIATE_ENCODER(double)

template EncoderParams<double> EncoderParams<float>::cast<double>() const;
template EncoderParams<float> EncoderParams<double>::cast<float>() const;
template EncoderParams<float> EncoderParams<float>::cast<float>() const;
template EncoderParams<double> EncoderParams<double>::cast<double>() const;

#undef CSA_INSTANTIATE_ENCODER

}  // namespace csa

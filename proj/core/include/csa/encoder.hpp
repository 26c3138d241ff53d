// SPDX-License-Identifier: Apache-2.0
//
// Re-ranking model: input projection, a stack of self-attention encoder
// layers without positional terms, and the reconstruction MLP used by the
// MSE objective. Forward passes are recorded on a Tape so the same code
// path serves inference and training.
#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "csa/affinity.hpp"
#include "csa/matrix.hpp"
#include "csa/rng.hpp"
#include "csa/tape.hpp"

namespace csa {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// How each sublayer output is merged back into the residual stream.
enum class SublayerStyle {
  kResidualNorm,  // x + LN(sublayer(x))
  kPostNorm,      // LN(x + sublayer(x))
};

struct EncoderConfig {
  std::size_t depth = 2;
  std::size_t heads = 12;
  std::size_t head_dim = 64;
  std::size_t hidden = 768;
  std::size_t input_len = 512;
  std::size_t ffn_mult = 4;
  std::size_t mse_head_hidden = 0;  // 0 selects `hidden`
  SublayerStyle sublayer_style = SublayerStyle::kResidualNorm;
  bool allow_hidden_mismatch = false;

  std::size_t ffn_dim() const noexcept { return ffn_mult * hidden; }
  std::size_t head_hidden() const noexcept {
    return mse_head_hidden == 0 ? hidden : mse_head_hidden;
  }
  std::size_t attention_width() const noexcept { return heads * head_dim; }

  /// Throws ConfigError on zero sizes, or when hidden != heads * head_dim
  /// and allow_hidden_mismatch is off.
  void validate() const;

  friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

void to_json(nlohmann::json& j, const EncoderConfig& c);
void from_json(const nlohmann::json& j, EncoderConfig& c);

enum class TensorRole { kWeight, kBias, kNormGain, kNormBias };

template <typename T>
struct AttentionHead {
  Matrix<T> q_weight, q_bias;
  Matrix<T> k_weight, k_bias;
  Matrix<T> v_weight, v_bias;
};

template <typename T>
struct EncoderLayer {
  std::vector<AttentionHead<T>> heads;
  Matrix<T> fuse_weight, fuse_bias;  // W_M: concatenated heads -> hidden
  Matrix<T> norm1_gain, norm1_bias;
  Matrix<T> ffn_weight1, ffn_bias1;
  Matrix<T> ffn_weight2, ffn_bias2;
  Matrix<T> norm2_gain, norm2_bias;
};

/// Every learnable tensor of the model. Weight matrices are (in x out) and
/// multiply row vectors from the right; biases and gains are 1 x out.
template <typename T>
struct EncoderParams {
  Matrix<T> proj_weight, proj_bias;  // W_p
  std::vector<EncoderLayer<T>> layers;
  Matrix<T> head_weight1, head_bias1;
  Matrix<T> head_weight2, head_bias2;

  /// Calls f(name, tensor, role) for every tensor in a fixed order.
  template <typename F>
  void visit(F&& f) {
    visit_impl(*this, f);
  }
  template <typename F>
  void visit(F&& f) const {
    visit_impl(*this, f);
  }

  std::size_t parameter_count() const;
  std::size_t tensor_count() const;
  bool all_finite() const;
  EncoderParams zeros_like() const;

  template <typename U>
  EncoderParams<U> cast() const;

 private:
  template <typename Self, typename F>
  static void visit_impl(Self& self, F& f) {
    f(std::string("input_proj.weight"), self.proj_weight, TensorRole::kWeight);
    f(std::string("input_proj.bias"), self.proj_bias, TensorRole::kBias);
    for (std::size_t l = 0; l < self.layers.size(); ++l) {
      auto& layer = self.layers[l];
      const std::string p = "layers." + std::to_string(l) + ".";
      for (std::size_t h = 0; h < layer.heads.size(); ++h) {
        auto& head = layer.heads[h];
        const std::string hp = p + "attn.heads." + std::to_string(h) + ".";
        f(hp + "q.weight", head.q_weight, TensorRole::kWeight);
        f(hp + "q.bias", head.q_bias, TensorRole::kBias);
        f(hp + "k.weight", head.k_weight, TensorRole::kWeight);
        f(hp + "k.bias", head.k_bias, TensorRole::kBias);
        f(hp + "v.weight", head.v_weight, TensorRole::kWeight);
        f(hp + "v.bias", head.v_bias, TensorRole::kBias);
      }
      f(p + "attn.fuse.weight", layer.fuse_weight, TensorRole::kWeight);
      f(p + "attn.fuse.bias", layer.fuse_bias, TensorRole::kBias);
      f(p + "norm1.gain", layer.norm1_gain, TensorRole::kNormGain);
      f(p + "norm1.bias", layer.norm1_bias, TensorRole::kNormBias);
      f(p + "ffn.fc1.weight", layer.ffn_weight1, TensorRole::kWeight);
      f(p + "ffn.fc1.bias", layer.ffn_bias1, TensorRole::kBias);
      f(p + "ffn.fc2.weight", layer.ffn_weight2, TensorRole::kWeight);
      f(p + "ffn.fc2.bias", layer.ffn_bias2, TensorRole::kBias);
      f(p + "norm2.gain", layer.norm2_gain, TensorRole::kNormGain);
      f(p + "norm2.bias", layer.norm2_bias, TensorRole::kNormBias);
    }
    f(std::string("mse_head.fc1.weight"), self.head_weight1, TensorRole::kWeight);
    f(std::string("mse_head.fc1.bias"), self.head_bias1, TensorRole::kBias);
    f(std::string("mse_head.fc2.weight"), self.head_weight2, TensorRole::kWeight);
    f(std::string("mse_head.fc2.bias"), self.head_bias2, TensorRole::kBias);
  }
};

/// Zero-filled parameters with the shapes implied by config (gains zero too).
template <typename T>
EncoderParams<T> make_params(const EncoderConfig& config);

/// Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)); biases 0; norm gains 1.
template <typename T = float>
EncoderParams<T> init_params(const EncoderConfig& config, Rng& rng);

/// Analytic parameter count from the config alone.
std::size_t expected_parameter_count(const EncoderConfig& config);

/// Throws ShapeError naming the first tensor whose shape disagrees.
template <typename T>
void check_param_shapes(const EncoderParams<T>& params, const EncoderConfig& config);

/// true = real row, false = padding.
using RowMask = std::vector<bool>;

inline constexpr double kMaskPenalty = -1e9;

/// Records one forward pass and its adjoint.
///
///   EncoderTape<float> pass(params, config);
///   pass.forward(affinity, valid);
///   pass.reconstruct();
///   pass.backward(&d_refined, &d_reconstruction);
///   pass.accumulate_gradients(grads);
///
/// params must outlive the pass.
template <typename T>
class EncoderTape {
 public:
  EncoderTape(const EncoderParams<T>& params, const EncoderConfig& config);

  /// Input projection followed by the encoder stack; returns refined rows.
  const Matrix<T>& forward(const Matrix<T>& affinity, const RowMask& valid);
  /// Reconstruction MLP on the refined rows (forward() first).
  const Matrix<T>& reconstruct();

  const Matrix<T>& refined() const;
  const Matrix<T>& reconstruction() const;
  /// Softmax weights of one head, K x K.
  const Matrix<T>& attention(std::size_t layer, std::size_t head) const;

  /// Records a single attention sublayer (or full layer) on input x instead
  /// of the whole model; used to exercise one block in isolation.
  const Matrix<T>& forward_attention_only(const Matrix<T>& x, const EncoderLayer<T>& layer,
                                          const RowMask& valid);
  const Matrix<T>& forward_layer_only(const Matrix<T>& x, const EncoderLayer<T>& layer,
                                      const RowMask& valid);

  const EncoderParams<T>& params() const noexcept { return params_; }

  /// Either seed may be null. Throws TapeError when nothing was recorded.
  void backward(const Matrix<T>* d_refined, const Matrix<T>* d_reconstruction);
  /// grads += d(loss)/d(params) from the last backward().
  void accumulate_gradients(EncoderParams<T>& grads) const;
  /// d(loss)/d(affinity input) from the last backward().
  Matrix<T> input_gradient() const;

 private:
  Var bind(const Matrix<T>& m);
  Var begin_input(const Matrix<T>& x, const RowMask& valid, std::size_t layers);
  Var record_mha(Var x, const EncoderLayer<T>& layer, std::size_t layer_index);
  Var record_layer(Var x, const EncoderLayer<T>& layer, std::size_t layer_index);

  const EncoderParams<T>& params_;
  EncoderConfig config_;
  Tape<T> tape_;
  std::unordered_map<const Matrix<T>*, Var> bound_;
  RowMask valid_;
  Var input_;
  Var refined_;
  Var reconstruction_;
  std::vector<std::vector<Var>> attention_;
  bool backward_done_ = false;
};

extern template class EncoderTape<float>;
extern template class EncoderTape<double>;

// ---------------------------------------------------------------------------
// Functional forms. Each records a throwaway tape.

/// Multi-head self-attention with padded keys excluded.
template <typename T>
Matrix<T> mha_forward(const Matrix<T>& x, const EncoderLayer<T>& layer, const RowMask& valid);

/// One encoder layer: attention sublayer then feed-forward sublayer.
template <typename T>
Matrix<T> encoder_layer_forward(const Matrix<T>& x, const EncoderLayer<T>& layer,
                                const RowMask& valid,
                                SublayerStyle style = SublayerStyle::kResidualNorm);

template <typename T>
Matrix<T> encoder_forward(const Matrix<T>& affinity, const RowMask& valid,
                          const EncoderParams<T>& params, const EncoderConfig& config);

/// Per row: W2 * gelu(W1 * y + b1) + b2, mapping hidden back to input_len.
template <typename T>
Matrix<T> mse_head_forward(const Matrix<T>& refined, const EncoderParams<T>& params);

struct RefinedSequence {
  std::vector<std::string> candidate_ids;
  MatrixF values;
};

RefinedSequence encoder_forward(const AffinitySequence& seq, const EncoderParams<float>& params,
                                const EncoderConfig& config);

template <typename T>
struct EncoderGradients {
  EncoderParams<T> params;
  Matrix<T> input;
};

/// Runs the adjoint of a recorded pass and returns fresh gradients.
template <typename T>
EncoderGradients<T> encoder_backward(EncoderTape<T>& pass, const Matrix<T>* d_refined,
                                     const Matrix<T>* d_reconstruction);

}  // namespace csa

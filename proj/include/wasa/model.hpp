#pragma once

// Decoder-only transformer with a tied, augmented embedding matrix of shape
// (V + V') x E. Next-token prediction is routed by the kind of the target:
// word targets use rows [0, V) as the output projection, watermark targets
// use rows [V, V + V'). Both heads share every other parameter.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "wasa/tokenizer.hpp"

namespace wasa {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

struct ModelConfig {
  int vocab_words = 0;      // V
  int vocab_watermark = 6;  // V'
  int embed = 64;           // E
  int layers = 2;
  int heads = 2;
  int block = 128;          // k
  int frozen_layers = 0;
  std::uint64_t seed = 0;

  int vocab_total() const { return vocab_words + vocab_watermark; }
  int head_dim() const { return embed / heads; }
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

template <typename Scalar>
struct LayerWeights {
  Matrix<Scalar> ln1_gain, ln1_bias;
  Matrix<Scalar> attn_qkv, attn_qkv_bias;    // E x 3E, 1 x 3E
  Matrix<Scalar> attn_proj, attn_proj_bias;  // E x E, 1 x E
  Matrix<Scalar> ln2_gain, ln2_bias;
  Matrix<Scalar> mlp_in, mlp_in_bias;    // E x 4E, 1 x 4E
  Matrix<Scalar> mlp_out, mlp_out_bias;  // 4E x E, 1 x E
};

/// Also used as the gradient container.
template <typename Scalar>
struct Parameters {
  ModelConfig config;
  Matrix<Scalar> token_embedding;     // (V + V') x E, tied with the output heads
  Matrix<Scalar> position_embedding;  // k x E
  std::vector<LayerWeights<Scalar>> layers;
  Matrix<Scalar> final_gain, final_bias;

  static Parameters zeros(const ModelConfig& config);

  /// Calls fn(name, matrix) for every tensor in a fixed order.
  template <typename Fn>
  void visit(Fn&& fn);
  template <typename Fn>
  void visit(Fn&& fn) const;

  template <typename Other>
  Parameters<Other> cast() const;

  std::size_t parameter_count() const;
  bool all_finite() const;
};

/// Normal(0, 0.02) weights, zero biases, unit layer-norm gains.
template <typename Scalar>
Parameters<Scalar> init_parameters(const ModelConfig& config, std::uint64_t seed);

enum class Route : std::uint8_t { None, Word, Watermark };

template <typename Scalar>
struct LayerCache {
  Matrix<Scalar> input;
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> ln1_mean, ln1_rstd;
  Matrix<Scalar> ln1_out, qkv;
  std::vector<Matrix<Scalar>> attention;  // per head, T x T
  Matrix<Scalar> attn_concat, residual_mid;
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> ln2_mean, ln2_rstd;
  Matrix<Scalar> ln2_out, mlp_pre, mlp_act;
};

template <typename Scalar>
struct ForwardTrace {
  std::vector<TokenId> ids;
  Matrix<Scalar> hidden;                 // h_l, T x E
  std::vector<Route> routes;             // routes[j] predicts ids[j + 1]
  std::vector<int> word_rows, watermark_rows;  // positions per head, ascending
  std::vector<int> word_targets, watermark_targets;  // class index within the head
  Matrix<Scalar> word_logits, word_probs;            // |word_rows| x V
  Matrix<Scalar> watermark_logits, watermark_probs;  // |watermark_rows| x V'

  // Saved activations for backward.
  std::vector<LayerCache<Scalar>> layers;
  Matrix<Scalar> final_input;
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> final_mean, final_rstd;
};

struct LossBreakdown {
  double lm = 0.0;   // mean CE over word-target positions
  double wtm = 0.0;  // mean CE over watermark-target positions
  double total = 0.0;
  std::size_t word_targets = 0;
  std::size_t watermark_targets = 0;
};

template <typename Scalar>
struct BackwardResult {
  Parameters<Scalar> grads;
  /// dLoss/dz for the full (V + V') logit vector of every position; rows of
  /// unrouted positions are zero.
  Matrix<Scalar> logit_grad;
};

/// ids.size() <= k. Targets of [PAD] produce no logits.
template <typename Scalar>
ForwardTrace<Scalar> forward(const Parameters<Scalar>& params, std::span<const TokenId> ids);

template <typename Scalar>
LossBreakdown loss(const ForwardTrace<Scalar>& trace);

/// Gradients of loss(trace).total. Layers below frozen_layers get zero grads.
template <typename Scalar>
BackwardResult<Scalar> backward(const Parameters<Scalar>& params, const ForwardTrace<Scalar>& trace);

/// Incremental decoding with cached keys/values; copyable so beams can fork.
template <typename Scalar>
class DecoderState {
 public:
  explicit DecoderState(const Parameters<Scalar>& params);

  /// Appends a token and returns the final normalized hidden state.
  const RowVector<Scalar>& push(TokenId id);
  std::size_t length() const { return length_; }
  bool full() const { return length_ >= static_cast<std::size_t>(params_->config.block); }
  const RowVector<Scalar>& hidden() const { return hidden_; }

  RowVector<Scalar> word_logits() const;
  RowVector<Scalar> watermark_logits() const;

 private:
  const Parameters<Scalar>* params_;
  std::vector<Matrix<Scalar>> keys_, values_;
  std::size_t length_ = 0;
  RowVector<Scalar> hidden_;
};

template <typename Scalar>
RowVector<Scalar> log_softmax(const RowVector<Scalar>& logits);

// ---- template members -------------------------------------------------------

template <typename Scalar>
template <typename Fn>
void Parameters<Scalar>::visit(Fn&& fn) {
  fn(std::string("token_embedding"), token_embedding);
  fn(std::string("position_embedding"), position_embedding);
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const std::string p = "layers." + std::to_string(i) + ".";
    auto& l = layers[i];
    fn(p + "ln1_gain", l.ln1_gain);
    fn(p + "ln1_bias", l.ln1_bias);
    fn(p + "attn_qkv", l.attn_qkv);
    fn(p + "attn_qkv_bias", l.attn_qkv_bias);
    fn(p + "attn_proj", l.attn_proj);
    fn(p + "attn_proj_bias", l.attn_proj_bias);
    fn(p + "ln2_gain", l.ln2_gain);
    fn(p + "ln2_bias", l.ln2_bias);
    fn(p + "mlp_in", l.mlp_in);
    fn(p + "mlp_in_bias", l.mlp_in_bias);
    fn(p + "mlp_out", l.mlp_out);
    fn(p + "mlp_out_bias", l.mlp_out_bias);
  }
  fn(std::string("final_gain"), final_gain);
  fn(std::string("final_bias"), final_bias);
}

template <typename Scalar>
template <typename Fn>
void Parameters<Scalar>::visit(Fn&& fn) const {
  const_cast<Parameters*>(this)->visit([&](const std::string& name, Matrix<Scalar>& m) {
    fn(name, static_cast<const Matrix<Scalar>&>(m));
  });
}

template <typename Scalar>
template <typename Other>
Parameters<Other> Parameters<Scalar>::cast() const {
  auto out = Parameters<Other>::zeros(config);
  std::vector<const Matrix<Scalar>*> src;
  visit([&](const std::string&, const Matrix<Scalar>& m) { src.push_back(&m); });
  std::size_t i = 0;
  out.visit([&](const std::string&, Matrix<Other>& m) { m = src[i++]->template cast<Other>(); });
  return out;
}

extern template struct Parameters<float>;
extern template struct Parameters<double>;
extern template class DecoderState<float>;
extern template class DecoderState<double>;

}  // namespace wasa

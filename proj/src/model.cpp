#include "wasa/model.hpp"

#include <cmath>
#include <random>

#include "wasa/errors.hpp"

namespace wasa {

namespace {

template <typename Scalar>
using Column = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

constexpr double kLayerNormEps = 1e-5;

template <typename Scalar>
void layer_norm(const Matrix<Scalar>& x, const Matrix<Scalar>& gain, const Matrix<Scalar>& bias, Matrix<Scalar>& out,
                Column<Scalar>& mean, Column<Scalar>& rstd) {
  const auto cols = static_cast<Scalar>(x.cols());
  mean = x.rowwise().sum() / cols;
  Matrix<Scalar> centered = x.colwise() - mean;
  const Column<Scalar> var = centered.array().square().rowwise().sum() / cols;
  rstd = (var.array() + static_cast<Scalar>(kLayerNormEps)).rsqrt();
  out = (centered.array().colwise() * rstd.array()).matrix();
  out = (out.array().rowwise() * gain.row(0).array()).matrix();
  out.rowwise() += bias.row(0);
}

template <typename Scalar>
Matrix<Scalar> layer_norm_backward(const Matrix<Scalar>& dy, const Matrix<Scalar>& x, const Column<Scalar>& mean,
                                   const Column<Scalar>& rstd, const Matrix<Scalar>& gain, Matrix<Scalar>& dgain,
                                   Matrix<Scalar>& dbias) {
  const Matrix<Scalar> xhat = ((x.colwise() - mean).array().colwise() * rstd.array()).matrix();
  dgain += (dy.array() * xhat.array()).colwise().sum().matrix();
  dbias += dy.colwise().sum();
  const Matrix<Scalar> dxhat = (dy.array().rowwise() * gain.row(0).array()).matrix();
  const Column<Scalar> m1 = dxhat.rowwise().mean();
  const Column<Scalar> m2 = (dxhat.array() * xhat.array()).rowwise().mean();
  Matrix<Scalar> dx = ((dxhat.colwise() - m1).array() - xhat.array().colwise() * m2.array()).matrix();
  return (dx.array().colwise() * rstd.array()).matrix();
}

template <typename Scalar>
Scalar gelu(Scalar x) {
  constexpr double c = 0.7978845608028654;  // sqrt(2 / pi)
  return static_cast<Scalar>(0.5) * x *
         (static_cast<Scalar>(1) + std::tanh(static_cast<Scalar>(c) * (x + static_cast<Scalar>(0.044715) * x * x * x)));
}

template <typename Scalar>
Scalar gelu_grad(Scalar x) {
  constexpr double c = 0.7978845608028654;
  const Scalar inner = static_cast<Scalar>(c) * (x + static_cast<Scalar>(0.044715) * x * x * x);
  const Scalar t = std::tanh(inner);
  const Scalar dinner = static_cast<Scalar>(c) * (static_cast<Scalar>(1) + static_cast<Scalar>(3 * 0.044715) * x * x);
  return static_cast<Scalar>(0.5) * (static_cast<Scalar>(1) + t) +
         static_cast<Scalar>(0.5) * x * (static_cast<Scalar>(1) - t * t) * dinner;
}

template <typename Scalar>
Matrix<Scalar> softmax_rows(const Matrix<Scalar>& z) {
  Matrix<Scalar> p = z.colwise() - z.rowwise().maxCoeff();
  p = p.array().exp().matrix();
  const Column<Scalar> sums = p.rowwise().sum();
  return (p.array().colwise() / sums.array()).matrix();
}

template <typename Scalar>
double row_log_softmax_at(const Matrix<Scalar>& logits, Eigen::Index row, int target) {
  const double mx = static_cast<double>(logits.row(row).maxCoeff());
  double sum = 0.0;
  for (Eigen::Index j = 0; j < logits.cols(); ++j) sum += std::exp(static_cast<double>(logits(row, j)) - mx);
  return static_cast<double>(logits(row, target)) - mx - std::log(sum);
}

template <typename Scalar>
void check_ids(const Parameters<Scalar>& params, std::span<const TokenId> ids) {
  const auto& c = params.config;
  if (ids.empty() || ids.size() > static_cast<std::size_t>(c.block)) {
    throw Error(ErrorKind::ShapeMismatch,
                "sequence length " + std::to_string(ids.size()) + " not in [1, " + std::to_string(c.block) + "]");
  }
  for (TokenId id : ids) {
    if (id < 0 || id >= c.vocab_total()) throw Error(ErrorKind::InvalidId, "token id " + std::to_string(id));
  }
}

}  // namespace

void ModelConfig::validate() const {
  auto fail = [](const std::string& msg) { throw Error(ErrorKind::InvalidArgument, "model config: " + msg); };
  if (vocab_words < static_cast<int>(Vocab::kMinSize)) fail("vocab_words too small");
  if (vocab_watermark < 1) fail("vocab_watermark must be positive");
  if (embed < 1 || heads < 1 || embed % heads != 0) fail("embed must be a positive multiple of heads");
  if (layers < 1) fail("layers must be positive");
  if (block < 2) fail("block must be at least 2");
  if (frozen_layers < 0 || frozen_layers > layers) fail("frozen_layers must be in [0, layers]");
}

template <typename Scalar>
Parameters<Scalar> Parameters<Scalar>::zeros(const ModelConfig& config) {
  config.validate();
  const int E = config.embed;
  Parameters p;
  p.config = config;
  p.token_embedding = Matrix<Scalar>::Zero(config.vocab_total(), E);
  p.position_embedding = Matrix<Scalar>::Zero(config.block, E);
  p.layers.resize(static_cast<std::size_t>(config.layers));
  for (auto& l : p.layers) {
    l.ln1_gain = Matrix<Scalar>::Zero(1, E);
    l.ln1_bias = Matrix<Scalar>::Zero(1, E);
    l.attn_qkv = Matrix<Scalar>::Zero(E, 3 * E);
    l.attn_qkv_bias = Matrix<Scalar>::Zero(1, 3 * E);
    l.attn_proj = Matrix<Scalar>::Zero(E, E);
    l.attn_proj_bias = Matrix<Scalar>::Zero(1, E);
    l.ln2_gain = Matrix<Scalar>::Zero(1, E);
    l.ln2_bias = Matrix<Scalar>::Zero(1, E);
    l.mlp_in = Matrix<Scalar>::Zero(E, 4 * E);
    l.mlp_in_bias = Matrix<Scalar>::Zero(1, 4 * E);
    l.mlp_out = Matrix<Scalar>::Zero(4 * E, E);
    l.mlp_out_bias = Matrix<Scalar>::Zero(1, E);
  }
  p.final_gain = Matrix<Scalar>::Zero(1, E);
  p.final_bias = Matrix<Scalar>::Zero(1, E);
  return p;
}

template <typename Scalar>
std::size_t Parameters<Scalar>::parameter_count() const {
  std::size_t n = 0;
  visit([&](const std::string&, const Matrix<Scalar>& m) { n += static_cast<std::size_t>(m.size()); });
  return n;
}

template <typename Scalar>
bool Parameters<Scalar>::all_finite() const {
  bool ok = true;
  visit([&](const std::string&, const Matrix<Scalar>& m) { ok = ok && m.allFinite(); });
  return ok;
}

template <typename Scalar>
Parameters<Scalar> init_parameters(const ModelConfig& config, std::uint64_t seed) {
  auto p = Parameters<Scalar>::zeros(config);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 0.02);
  p.visit([&](const std::string& name, Matrix<Scalar>& m) {
    if (name.ends_with("_bias")) return;
    if (name.ends_with("_gain")) {
      m.setOnes();
      return;
    }
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<Scalar>(normal(rng));
  });
  return p;
}

template <typename Scalar>
ForwardTrace<Scalar> forward(const Parameters<Scalar>& params, std::span<const TokenId> ids) {
  check_ids(params, ids);
  const auto& c = params.config;
  const auto T = static_cast<Eigen::Index>(ids.size());
  const int E = c.embed;
  const int D = c.head_dim();
  const int V = c.vocab_words;
  const auto scale = static_cast<Scalar>(1.0 / std::sqrt(static_cast<double>(D)));

  ForwardTrace<Scalar> trace;
  trace.ids.assign(ids.begin(), ids.end());

  Matrix<Scalar> x(T, E);
  for (Eigen::Index t = 0; t < T; ++t) {
    x.row(t) = params.token_embedding.row(ids[static_cast<std::size_t>(t)]) + params.position_embedding.row(t);
  }

  trace.layers.resize(params.layers.size());
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const auto& w = params.layers[l];
    auto& cache = trace.layers[l];
    cache.input = x;
    layer_norm(x, w.ln1_gain, w.ln1_bias, cache.ln1_out, cache.ln1_mean, cache.ln1_rstd);
    cache.qkv = cache.ln1_out * w.attn_qkv;
    cache.qkv.rowwise() += w.attn_qkv_bias.row(0);
    cache.attn_concat.resize(T, E);
    cache.attention.resize(static_cast<std::size_t>(c.heads));
    for (int h = 0; h < c.heads; ++h) {
      const auto q = cache.qkv.middleCols(h * D, D);
      const auto k = cache.qkv.middleCols(E + h * D, D);
      const auto v = cache.qkv.middleCols(2 * E + h * D, D);
      Matrix<Scalar> scores = (q * k.transpose()) * scale;
      for (Eigen::Index i = 0; i < T; ++i) {
        const Scalar mx = scores.row(i).head(i + 1).maxCoeff();
        Scalar sum = 0;
        for (Eigen::Index j = 0; j <= i; ++j) {
          scores(i, j) = std::exp(scores(i, j) - mx);
          sum += scores(i, j);
        }
        scores.row(i).head(i + 1) /= sum;
        scores.row(i).tail(T - i - 1).setZero();
      }
      cache.attn_concat.middleCols(h * D, D) = scores * v;
      cache.attention[static_cast<std::size_t>(h)] = std::move(scores);
    }
    x = cache.input + cache.attn_concat * w.attn_proj;
    x.rowwise() += w.attn_proj_bias.row(0);
    cache.residual_mid = x;
    layer_norm(x, w.ln2_gain, w.ln2_bias, cache.ln2_out, cache.ln2_mean, cache.ln2_rstd);
    cache.mlp_pre = cache.ln2_out * w.mlp_in;
    cache.mlp_pre.rowwise() += w.mlp_in_bias.row(0);
    cache.mlp_act = cache.mlp_pre.unaryExpr([](Scalar s) { return gelu(s); });
    x = cache.residual_mid + cache.mlp_act * w.mlp_out;
    x.rowwise() += w.mlp_out_bias.row(0);
  }
  trace.final_input = x;
  layer_norm(x, params.final_gain, params.final_bias, trace.hidden, trace.final_mean, trace.final_rstd);

  trace.routes.assign(ids.size(), Route::None);
  for (std::size_t j = 0; j + 1 < ids.size(); ++j) {
    const TokenId target = ids[j + 1];
    if (target == special::kPad) continue;
    if (target >= V) {
      trace.routes[j] = Route::Watermark;
      trace.watermark_rows.push_back(static_cast<int>(j));
      trace.watermark_targets.push_back(target - V);
    } else {
      trace.routes[j] = Route::Word;
      trace.word_rows.push_back(static_cast<int>(j));
      trace.word_targets.push_back(target);
    }
  }

  const auto word_head = params.token_embedding.topRows(V);
  const auto watermark_head = params.token_embedding.bottomRows(c.vocab_watermark);
  const Matrix<Scalar> word_hidden = trace.hidden(trace.word_rows, Eigen::all);
  const Matrix<Scalar> watermark_hidden = trace.hidden(trace.watermark_rows, Eigen::all);
  trace.word_logits = word_hidden * word_head.transpose();
  trace.watermark_logits = watermark_hidden * watermark_head.transpose();
  trace.word_probs = softmax_rows(trace.word_logits);
  trace.watermark_probs = softmax_rows(trace.watermark_logits);
  return trace;
}

template <typename Scalar>
LossBreakdown loss(const ForwardTrace<Scalar>& trace) {
  LossBreakdown out;
  out.word_targets = trace.word_rows.size();
  out.watermark_targets = trace.watermark_rows.size();
  for (std::size_t r = 0; r < trace.word_rows.size(); ++r) {
    out.lm -= row_log_softmax_at(trace.word_logits, static_cast<Eigen::Index>(r), trace.word_targets[r]);
  }
  for (std::size_t r = 0; r < trace.watermark_rows.size(); ++r) {
    out.wtm -= row_log_softmax_at(trace.watermark_logits, static_cast<Eigen::Index>(r), trace.watermark_targets[r]);
  }
  if (out.word_targets) out.lm /= static_cast<double>(out.word_targets);
  if (out.watermark_targets) out.wtm /= static_cast<double>(out.watermark_targets);
  out.total = out.lm + out.wtm;
  return out;
}

template <typename Scalar>
BackwardResult<Scalar> backward(const Parameters<Scalar>& params, const ForwardTrace<Scalar>& trace) {
  const auto& c = params.config;
  const auto T = static_cast<Eigen::Index>(trace.ids.size());
  const int E = c.embed;
  const int D = c.head_dim();
  const int V = c.vocab_words;
  const int Vw = c.vocab_watermark;
  const auto scale = static_cast<Scalar>(1.0 / std::sqrt(static_cast<double>(D)));

  BackwardResult<Scalar> result{Parameters<Scalar>::zeros(c), Matrix<Scalar>::Zero(T, c.vocab_total())};
  auto& g = result.grads;

  // Output side: one (V + V') gradient row per position, [dz_u, 0] for word
  // targets and [0, dz_w] for watermark targets.
  if (!trace.word_rows.empty()) {
    const auto inv = static_cast<Scalar>(1.0 / static_cast<double>(trace.word_rows.size()));
    for (std::size_t r = 0; r < trace.word_rows.size(); ++r) {
      auto row = result.logit_grad.row(trace.word_rows[r]).head(V);
      row = trace.word_probs.row(static_cast<Eigen::Index>(r)) * inv;
      row(trace.word_targets[r]) -= inv;
    }
  }
  if (!trace.watermark_rows.empty()) {
    const auto inv = static_cast<Scalar>(1.0 / static_cast<double>(trace.watermark_rows.size()));
    for (std::size_t r = 0; r < trace.watermark_rows.size(); ++r) {
      auto row = result.logit_grad.row(trace.watermark_rows[r]).tail(Vw);
      row = trace.watermark_probs.row(static_cast<Eigen::Index>(r)) * inv;
      row(trace.watermark_targets[r]) -= inv;
    }
  }
  g.token_embedding.noalias() += result.logit_grad.transpose() * trace.hidden;
  Matrix<Scalar> dx = result.logit_grad * params.token_embedding;

  dx = layer_norm_backward(dx, trace.final_input, trace.final_mean, trace.final_rstd, params.final_gain, g.final_gain,
                           g.final_bias);

  for (std::size_t li = params.layers.size(); li-- > 0;) {
    const auto& w = params.layers[li];
    const auto& cache = trace.layers[li];
    auto& gw = g.layers[li];

    gw.mlp_out_bias += dx.colwise().sum();
    gw.mlp_out.noalias() += cache.mlp_act.transpose() * dx;
    Matrix<Scalar> dpre = dx * w.mlp_out.transpose();
    dpre = (dpre.array() * cache.mlp_pre.unaryExpr([](Scalar s) { return gelu_grad(s); }).array()).matrix();
    gw.mlp_in.noalias() += cache.ln2_out.transpose() * dpre;
    gw.mlp_in_bias += dpre.colwise().sum();
    const Matrix<Scalar> dln2 = dpre * w.mlp_in.transpose();
    Matrix<Scalar> dmid = dx + layer_norm_backward(dln2, cache.residual_mid, cache.ln2_mean, cache.ln2_rstd,
                                                   w.ln2_gain, gw.ln2_gain, gw.ln2_bias);

    gw.attn_proj.noalias() += cache.attn_concat.transpose() * dmid;
    gw.attn_proj_bias += dmid.colwise().sum();
    const Matrix<Scalar> dconcat = dmid * w.attn_proj.transpose();

    Matrix<Scalar> dqkv = Matrix<Scalar>::Zero(T, 3 * E);
    for (int h = 0; h < c.heads; ++h) {
      const auto& A = cache.attention[static_cast<std::size_t>(h)];
      const auto q = cache.qkv.middleCols(h * D, D);
      const auto k = cache.qkv.middleCols(E + h * D, D);
      const auto v = cache.qkv.middleCols(2 * E + h * D, D);
      const auto dy = dconcat.middleCols(h * D, D);
      const Matrix<Scalar> dA = dy * v.transpose();
      dqkv.middleCols(2 * E + h * D, D).noalias() += A.transpose() * dy;
      const Column<Scalar> inner = (dA.array() * A.array()).rowwise().sum();
      const Matrix<Scalar> dS = (A.array() * (dA.colwise() - inner).array()).matrix() * scale;
      dqkv.middleCols(h * D, D).noalias() += dS * k;
      dqkv.middleCols(E + h * D, D).noalias() += dS.transpose() * q;
    }
    gw.attn_qkv.noalias() += cache.ln1_out.transpose() * dqkv;
    gw.attn_qkv_bias += dqkv.colwise().sum();
    const Matrix<Scalar> dln1 = dqkv * w.attn_qkv.transpose();
    dx = dmid + layer_norm_backward(dln1, cache.input, cache.ln1_mean, cache.ln1_rstd, w.ln1_gain, gw.ln1_gain,
                                    gw.ln1_bias);
  }

  for (Eigen::Index t = 0; t < T; ++t) {
    g.token_embedding.row(trace.ids[static_cast<std::size_t>(t)]) += dx.row(t);
    g.position_embedding.row(t) += dx.row(t);
  }

  for (int l = 0; l < c.frozen_layers; ++l) {
    auto& gw = g.layers[static_cast<std::size_t>(l)];
    for (auto* m : {&gw.ln1_gain, &gw.ln1_bias, &gw.attn_qkv, &gw.attn_qkv_bias, &gw.attn_proj, &gw.attn_proj_bias,
                    &gw.ln2_gain, &gw.ln2_bias, &gw.mlp_in, &gw.mlp_in_bias, &gw.mlp_out, &gw.mlp_out_bias}) {
      m->setZero();
    }
  }
  return result;
}

template <typename Scalar>
RowVector<Scalar> log_softmax(const RowVector<Scalar>& logits) {
  const Scalar mx = logits.maxCoeff();
  const Scalar lse = mx + std::log((logits.array() - mx).exp().sum());
  return (logits.array() - lse).matrix();
}

template <typename Scalar>
DecoderState<Scalar>::DecoderState(const Parameters<Scalar>& params) : params_(&params) {
  const auto& c = params.config;
  keys_.assign(params.layers.size(), Matrix<Scalar>::Zero(c.block, c.embed));
  values_.assign(params.layers.size(), Matrix<Scalar>::Zero(c.block, c.embed));
  hidden_ = RowVector<Scalar>::Zero(c.embed);
}

template <typename Scalar>
const RowVector<Scalar>& DecoderState<Scalar>::push(TokenId id) {
  const auto& p = *params_;
  const auto& c = p.config;
  if (full()) throw Error(ErrorKind::ShapeMismatch, "decoder context exceeds block size");
  if (id < 0 || id >= c.vocab_total()) throw Error(ErrorKind::InvalidId, "token id " + std::to_string(id));
  const int E = c.embed;
  const int D = c.head_dim();
  const auto t = static_cast<Eigen::Index>(length_);
  const auto scale = static_cast<Scalar>(1.0 / std::sqrt(static_cast<double>(D)));

  Matrix<Scalar> x = p.token_embedding.row(id) + p.position_embedding.row(t);
  Column<Scalar> mean, rstd;
  Matrix<Scalar> a;
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    const auto& w = p.layers[l];
    layer_norm(x, w.ln1_gain, w.ln1_bias, a, mean, rstd);
    Matrix<Scalar> qkv = a * w.attn_qkv + w.attn_qkv_bias;
    keys_[l].row(t) = qkv.middleCols(E, E);
    values_[l].row(t) = qkv.middleCols(2 * E, E);
    Matrix<Scalar> y(1, E);
    for (int h = 0; h < c.heads; ++h) {
      const auto q = qkv.middleCols(h * D, D);
      const auto k = keys_[l].block(0, h * D, t + 1, D);
      const auto v = values_[l].block(0, h * D, t + 1, D);
      Matrix<Scalar> scores = (q * k.transpose()) * scale;
      scores = softmax_rows(scores);
      y.middleCols(h * D, D) = scores * v;
    }
    x += y * w.attn_proj + w.attn_proj_bias;
    layer_norm(x, w.ln2_gain, w.ln2_bias, a, mean, rstd);
    Matrix<Scalar> pre = a * w.mlp_in + w.mlp_in_bias;
    x += pre.unaryExpr([](Scalar s) { return gelu(s); }) * w.mlp_out + w.mlp_out_bias;
  }
  layer_norm(x, p.final_gain, p.final_bias, a, mean, rstd);
  hidden_ = a.row(0);
  ++length_;
  return hidden_;
}

template <typename Scalar>
RowVector<Scalar> DecoderState<Scalar>::word_logits() const {
  return hidden_ * params_->token_embedding.topRows(params_->config.vocab_words).transpose();
}

template <typename Scalar>
RowVector<Scalar> DecoderState<Scalar>::watermark_logits() const {
  return hidden_ * params_->token_embedding.bottomRows(params_->config.vocab_watermark).transpose();
}

#define WASA_INSTANTIATE_MODEL(Scalar)                                                                      \
  template struct Parameters<Scalar>;                                                                      \
  template class DecoderState<Scalar>;                                                                     \
  template Parameters<Scalar> init_parameters<Scalar>(const ModelConfig&, std::uint64_t);                  \
  template ForwardTrace<Scalar> forward<Scalar>(const Parameters<Scalar>&, std::span<const TokenId>);      \
  template LossBreakdown loss<Scalar>(const ForwardTrace<Scalar>&);                                        \
  template BackwardResult<Scalar> backward<Scalar>(const Parameters<Scalar>&, const ForwardTrace<Scalar>&); \
  template RowVector<Scalar> log_softmax<Scalar>(const RowVector<Scalar>&);

WASA_INSTANTIATE_MODEL(float)
WASA_INSTANTIATE_MODEL(double)

#undef WASA_INSTANTIATE_MODEL

}  // namespace wasa

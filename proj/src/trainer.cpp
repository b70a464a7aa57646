#include "wasa/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include <json.hpp>

#include "wasa/errors.hpp"

namespace wasa {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw Error(ErrorKind::InvalidArgument, "learning rate must be positive");
  if (epochs < 0) throw Error(ErrorKind::InvalidArgument, "epochs must be non-negative");
  if (batch_size < 1) throw Error(ErrorKind::InvalidArgument, "batch size must be at least 1");
  if (grad_accumulation < 1) throw Error(ErrorKind::InvalidArgument, "grad accumulation must be at least 1");
}

std::string TrainLog::to_jsonl() const {
  std::string out;
  for (const auto& r : records) {
    nlohmann::ordered_json j;
    j["step"] = r.step;
    j["loss_lm"] = r.loss_lm;
    j["loss_wtm"] = r.loss_wtm;
    out += j.dump();
    out.push_back('\n');
  }
  return out;
}

template <typename Scalar>
Adam<Scalar>::Adam(const ModelConfig& config, double learning_rate, double beta1, double beta2, double epsilon)
    : first_(Parameters<Scalar>::zeros(config)),
      second_(Parameters<Scalar>::zeros(config)),
      learning_rate_(learning_rate),
      beta1_(beta1),
      beta2_(beta2),
      epsilon_(epsilon) {}

template <typename Scalar>
void Adam<Scalar>::step(Parameters<Scalar>& params, const Parameters<Scalar>& grads) {
  ++steps_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(steps_));
  const auto b1 = static_cast<Scalar>(beta1_);
  const auto b2 = static_cast<Scalar>(beta2_);
  const auto step_size = static_cast<Scalar>(learning_rate_ / c1);
  const auto inv_sqrt_c2 = static_cast<Scalar>(1.0 / std::sqrt(c2));
  const auto eps = static_cast<Scalar>(epsilon_);

  std::vector<const Matrix<Scalar>*> g;
  std::vector<Matrix<Scalar>*> m, v;
  grads.visit([&](const std::string&, const Matrix<Scalar>& x) { g.push_back(&x); });
  first_.visit([&](const std::string&, Matrix<Scalar>& x) { m.push_back(&x); });
  second_.visit([&](const std::string&, Matrix<Scalar>& x) { v.push_back(&x); });
  std::size_t i = 0;
  params.visit([&](const std::string&, Matrix<Scalar>& p) {
    auto& mi = *m[i];
    auto& vi = *v[i];
    const auto& gi = *g[i];
    ++i;
    mi = b1 * mi + (Scalar(1) - b1) * gi;
    vi = b2 * vi + (Scalar(1) - b2) * gi.cwiseProduct(gi);
    p.array() -= step_size * mi.array() / (vi.array().sqrt() * inv_sqrt_c2 + eps);
  });
}

template <typename Scalar>
Parameters<Scalar> batch_gradient(const Parameters<Scalar>& params, std::span<const Block* const> blocks,
                                  TrainRecord& losses) {
  auto total = Parameters<Scalar>::zeros(params.config);
  std::vector<Matrix<Scalar>*> acc;
  total.visit([&](const std::string&, Matrix<Scalar>& x) { acc.push_back(&x); });

  double lm = 0.0, wtm = 0.0;
  std::size_t with_wtm = 0;
  for (const Block* block : blocks) {
    const auto trace = forward(params, std::span<const TokenId>(block->ids));
    const auto l = loss(trace);
    lm += l.lm;
    if (l.watermark_targets) {
      wtm += l.wtm;
      ++with_wtm;
    }
    const auto result = backward(params, trace);
    std::size_t i = 0;
    result.grads.visit([&](const std::string&, const Matrix<Scalar>& x) { *acc[i++] += x; });
  }
  if (!blocks.empty()) {
    const auto inv = static_cast<Scalar>(1.0 / static_cast<double>(blocks.size()));
    for (auto* x : acc) *x *= inv;
    losses.loss_lm = lm / static_cast<double>(blocks.size());
  }
  losses.loss_wtm = with_wtm ? wtm / static_cast<double>(with_wtm) : 0.0;
  return total;
}

template <typename Scalar>
TrainLog train(Parameters<Scalar>& params, std::span<const Block> blocks, const TrainConfig& config,
               const StepCallback& on_step) {
  config.validate();
  TrainLog log;
  if (blocks.empty()) return log;

  Adam<Scalar> optimizer(params.config, config.learning_rate, config.beta1, config.beta2, config.epsilon);
  const std::size_t per_step = static_cast<std::size_t>(config.batch_size) * config.grad_accumulation;
  std::vector<std::size_t> order(blocks.size());
  std::size_t step = 0;
  const std::size_t total_steps = static_cast<std::size_t>(config.epochs) * ((blocks.size() + per_step - 1) / per_step);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(mix_seed(config.seed, 0x7a1a, static_cast<std::uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), rng);

    for (std::size_t start = 0; start < order.size(); start += per_step) {
      const std::size_t end = std::min(order.size(), start + per_step);
      std::vector<const Block*> batch;
      for (std::size_t i = start; i < end; ++i) batch.push_back(&blocks[order[i]]);

      TrainRecord record;
      record.step = ++step;
      const auto grads = batch_gradient(params, std::span<const Block* const>(batch), record);
      if (!std::isfinite(record.loss_lm) || !std::isfinite(record.loss_wtm) || !grads.all_finite()) {
        throw Error(ErrorKind::NonFiniteLoss, "non-finite loss or gradient at step " + std::to_string(step));
      }
      if (config.linear_decay) {
        const double remaining = static_cast<double>(total_steps - step + 1) / static_cast<double>(total_steps);
        optimizer.set_learning_rate(config.learning_rate * remaining);
      }
      optimizer.step(params, grads);
      log.records.push_back(record);
      if (on_step) on_step(record);
    }
  }
  return log;
}

template <typename Scalar>
double perplexity(const Parameters<Scalar>& params, std::span<const Block> blocks) {
  double nll = 0.0;
  std::size_t count = 0;
  for (const auto& block : blocks) {
    const auto trace = forward(params, std::span<const TokenId>(block.ids));
    const auto l = loss(trace);
    nll += l.lm * static_cast<double>(l.word_targets);
    count += l.word_targets;
  }
  if (count == 0) return 1.0;
  return std::exp(nll / static_cast<double>(count));
}

template class Adam<float>;
template class Adam<double>;
template Parameters<float> batch_gradient<float>(const Parameters<float>&, std::span<const Block* const>, TrainRecord&);
template Parameters<double> batch_gradient<double>(const Parameters<double>&, std::span<const Block* const>,
                                                   TrainRecord&);
template TrainLog train<float>(Parameters<float>&, std::span<const Block>, const TrainConfig&, const StepCallback&);
template TrainLog train<double>(Parameters<double>&, std::span<const Block>, const TrainConfig&, const StepCallback&);
template double perplexity<float>(const Parameters<float>&, std::span<const Block>);
template double perplexity<double>(const Parameters<double>&, std::span<const Block>);

}  // namespace wasa

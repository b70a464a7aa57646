#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "wasa/model.hpp"

namespace wasa {

struct TrainConfig {
  double learning_rate = 5e-4;
  int epochs = 1;
  int batch_size = 1;
  int grad_accumulation = 1;
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  /// Linear decay of the learning rate to zero over all steps.
  bool linear_decay = false;

  void validate() const;
};

struct TrainRecord {
  std::size_t step = 0;
  double loss_lm = 0.0;
  double loss_wtm = 0.0;
};

struct TrainLog {
  std::vector<TrainRecord> records;

  std::string to_jsonl() const;
};

/// Plain Adam without weight decay.
template <typename Scalar>
class Adam {
 public:
  Adam(const ModelConfig& config, double learning_rate, double beta1, double beta2, double epsilon);

  void step(Parameters<Scalar>& params, const Parameters<Scalar>& grads);
  void set_learning_rate(double learning_rate) { learning_rate_ = learning_rate; }
  std::size_t steps() const { return steps_; }

 private:
  Parameters<Scalar> first_, second_;
  double learning_rate_, beta1_, beta2_, epsilon_;
  std::size_t steps_ = 0;
};

/// Mean gradient of the per-block total loss over `blocks`, plus the mean
/// per-block losses (loss_wtm averaged over blocks that have watermark targets).
template <typename Scalar>
Parameters<Scalar> batch_gradient(const Parameters<Scalar>& params, std::span<const Block* const> blocks,
                                  TrainRecord& losses);

using StepCallback = std::function<void(const TrainRecord&)>;

/// Each epoch shuffles block order with a seed derived from (seed, epoch);
/// one optimizer step consumes batch_size * grad_accumulation blocks.
template <typename Scalar>
TrainLog train(Parameters<Scalar>& params, std::span<const Block> blocks, const TrainConfig& config,
               const StepCallback& on_step = {});

/// exp(mean CE) over word-target positions; watermark and [PAD] targets excluded.
template <typename Scalar>
double perplexity(const Parameters<Scalar>& params, std::span<const Block> blocks);

extern template class Adam<float>;
extern template class Adam<double>;

}  // namespace wasa

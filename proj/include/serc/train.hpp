#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "serc/eval.hpp"
#include "serc/model.hpp"

namespace serc {

struct TrainConfig {
  int max_epochs = 100;
  int batch_size = 16;  // instances per optimizer step (gradient accumulation)
  nn::AdamConfig adam;
  double grad_clip_norm = 5.0;
  int patience = 10;  // epochs without dev micro-F1 improvement
  std::uint64_t seed = 1;
  bool class_weights = false;  // inverse-frequency loss weights
  bool unfreeze = false;       // joint training: fine-tune the sub-model encoders too
  /// Stop once the running train accuracy of an epoch reaches this percentage (0 disables).
  double stop_at_train_accuracy = 0.0;

  void validate() const;
};

struct EpochStats {
  int epoch = 0;
  double train_loss = 0;
  double train_accuracy = 0;       // percent, measured during the epoch
  std::optional<double> dev_f1;    // micro-F1 percent; absent without a dev set
  double seconds = 0;

  /// Equality of everything but the wall-clock time.
  bool same_trajectory(const EpochStats& o) const {
    return epoch == o.epoch && train_loss == o.train_loss && train_accuracy == o.train_accuracy && dev_f1 == o.dev_f1;
  }
};

std::string history_jsonl(std::span<const EpochStats> history);

struct StepInfo {
  int epoch = 0;
  std::int64_t step = 0;
  double norm_before_clip = 0;
  double norm_after_clip = 0;
};

struct TrainHooks {
  std::function<void(const StepInfo&)> on_step;
  std::function<void(const EpochStats&)> on_epoch;
};

template <typename Model>
struct TrainResult {
  Model model;
  std::vector<EpochStats> history;
  int best_epoch = -1;  // epoch whose parameters were returned (-1: final parameters)
};

TrainResult<SercModel<float>> train(SercModel<float> model, std::span<const EncodedInstance> train_set,
                                    std::span<const EncodedInstance> dev_set, const TrainConfig& cfg,
                                    const TrainHooks& hooks = {});

/// Joint head on top of two trained sub-models. Throws ConfigError when the checkpoints
/// were built with different inventories or embedding widths.
TrainResult<JointModel<float>> train_joint(const Checkpoint& temporal, const Checkpoint& causal,
                                           std::span<const EncodedInstance> train_set,
                                           std::span<const EncodedInstance> dev_set, const TrainConfig& cfg,
                                           const TrainHooks& hooks = {});

std::vector<int> predict_ids(const SercModel<float>& model, std::span<const EncodedInstance> xs);
std::vector<int> predict_ids(const JointModel<float>& model, std::span<const EncodedInstance> xs);

template <typename Model>
ConfusionMatrix evaluate(const Model& model, std::span<const EncodedInstance> xs, Task task) {
  const auto preds = predict_ids(model, xs);
  std::vector<int> golds;
  golds.reserve(xs.size());
  for (const auto& x : xs) golds.push_back(x.label_id);
  return confusion(std::span<const int>(golds), std::span<const int>(preds), task);
}

}  // namespace serc

#include "serc/train.hpp"

#include <algorithm>
#include <chrono>
#include <numeric>

#include <json.hpp>

namespace serc {

void TrainConfig::validate() const {
  if (max_epochs < 1) throw ConfigError("train.max_epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (patience < 1) throw ConfigError("train.patience must be >= 1");
  if (!(grad_clip_norm > 0)) throw ConfigError("train.grad_clip_norm must be > 0");
  if (adam.lr < 0 || adam.beta1 < 0 || adam.beta1 >= 1 || adam.beta2 < 0 || adam.beta2 >= 1 || adam.eps <= 0)
    throw ConfigError("optimizer hyperparameters out of range");
}

std::string history_jsonl(std::span<const EpochStats> history) {
  std::string out;
  for (const auto& e : history) {
    nlohmann::json j{{"epoch", e.epoch},
                     {"train_loss", e.train_loss},
                     {"train_accuracy", e.train_accuracy},
                     {"dev_f1", e.dev_f1 ? nlohmann::json(*e.dev_f1) : nlohmann::json(nullptr)},
                     {"seconds", e.seconds}};
    out += j.dump() + "\n";
  }
  return out;
}

std::vector<int> predict_ids(const SercModel<float>& model, std::span<const EncodedInstance> xs) {
  std::vector<int> out;
  out.reserve(xs.size());
  SercTape<float> tape;
  for (const auto& x : xs) out.push_back(argmax(forward(model, x, tape).probs));
  return out;
}

std::vector<int> predict_ids(const JointModel<float>& model, std::span<const EncodedInstance> xs) {
  std::vector<int> out;
  out.reserve(xs.size());
  JointTape<float> tape;
  for (const auto& x : xs) out.push_back(argmax(joint_forward(model, x, tape)));
  return out;
}

namespace {

std::vector<float> class_weights_for(std::span<const EncodedInstance> xs, int classes, bool enabled) {
  std::vector<float> w(static_cast<std::size_t>(classes), 1.0f);
  if (!enabled) return w;
  std::vector<long> counts(static_cast<std::size_t>(classes), 0);
  for (const auto& x : xs) ++counts[static_cast<std::size_t>(x.label_id)];
  const long present = std::count_if(counts.begin(), counts.end(), [](long c) { return c > 0; });
  for (std::size_t c = 0; c < counts.size(); ++c)
    if (counts[c] > 0)
      w[c] = static_cast<float>(static_cast<double>(xs.size()) / (static_cast<double>(present) * counts[c]));
  return w;
}

void check_labels(std::span<const EncodedInstance> xs, int classes, const char* which) {
  for (std::size_t i = 0; i < xs.size(); ++i)
    if (xs[i].label_id < 0 || xs[i].label_id >= classes)
      throw ValidationError(std::string(which) + " instance " + std::to_string(i) + " has label id " +
                            std::to_string(xs[i].label_id) + " outside the model's " + std::to_string(classes) +
                            " classes");
}

/// Shared epoch loop. A learner exposes:
///   float accumulate(std::size_t i, float weight, int& predicted)  forward + backward of train item i
///   std::vector<int> predict_dev()
///   nn::TensorViews<float> params(), grads(); void zero_grads();
///   Model snapshot() const; void restore(const Model&);
template <typename Model, typename Learner>
TrainResult<Model> run_loop(Learner& learner, std::span<const EncodedInstance> train_set,
                            std::span<const EncodedInstance> dev_set, Task task, const TrainConfig& cfg,
                            const TrainHooks& hooks) {
  cfg.validate();
  if (train_set.empty()) throw ValidationError("training set is empty");
  const int classes = static_cast<int>(LabelSet::of(task).size());
  check_labels(train_set, classes, "train");
  check_labels(dev_set, classes, "dev");
  const auto weights = class_weights_for(train_set, classes, cfg.class_weights);

  nn::Adam<float> adam(cfg.adam);
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  TrainResult<Model> result;
  std::optional<Model> best;
  double best_f1 = -1.0;
  int since_best = 0;
  std::int64_t steps = 0;

  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    std::shuffle(order.begin(), order.end(), rng);
    learner.zero_grads();
    double loss_sum = 0.0;
    long correct = 0;
    int pending = 0;

    auto apply = [&]() {
      auto grads = learner.grads();
      const float inv = 1.0f / static_cast<float>(pending);
      for (auto& g : grads)
        for (float& v : g.data) v *= inv;
      StepInfo info{epoch, ++steps, nn::global_norm(grads), 0.0};
      info.norm_after_clip = nn::clip_global_norm(grads, cfg.grad_clip_norm);
      if (!std::isfinite(info.norm_after_clip))
        throw NumericalError("non-finite gradient norm at epoch " + std::to_string(epoch));
      adam.step(learner.params(), grads);
      if (hooks.on_step) hooks.on_step(info);
      learner.zero_grads();
      pending = 0;
    };

    for (std::size_t i : order) {
      int predicted = 0;
      const float loss = learner.accumulate(i, weights[static_cast<std::size_t>(train_set[i].label_id)], predicted);
      if (!std::isfinite(loss))
        throw NumericalError("non-finite loss on training instance " + std::to_string(i) + " at epoch " +
                             std::to_string(epoch));
      loss_sum += loss;
      if (predicted == train_set[i].label_id) ++correct;
      if (++pending == cfg.batch_size) apply();
    }
    if (pending > 0) apply();

    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = loss_sum / static_cast<double>(train_set.size());
    stats.train_accuracy = 100.0 * static_cast<double>(correct) / static_cast<double>(train_set.size());
    if (!dev_set.empty()) {
      const auto preds = learner.predict_dev();
      std::vector<int> golds;
      for (const auto& x : dev_set) golds.push_back(x.label_id);
      stats.dev_f1 = micro_metrics(confusion(std::span<const int>(golds), std::span<const int>(preds), task)).f1;
    }
    stats.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.history.push_back(stats);
    if (hooks.on_epoch) hooks.on_epoch(stats);

    if (stats.dev_f1) {
      if (*stats.dev_f1 > best_f1) {
        best_f1 = *stats.dev_f1;
        best = learner.snapshot();
        result.best_epoch = epoch;
        since_best = 0;
      } else if (++since_best >= cfg.patience) {
        break;
      }
    }
    if (cfg.stop_at_train_accuracy > 0 && stats.train_accuracy >= cfg.stop_at_train_accuracy) break;
  }
  if (best) learner.restore(*best);
  result.model = learner.snapshot();
  return result;
}

class SercLearner {
 public:
  SercLearner(SercModel<float> model, std::span<const EncodedInstance> train_set,
              std::span<const EncodedInstance> dev_set, std::uint64_t seed)
      : model_(std::move(model)), grads_(model_.params.zeros_like()), train_(train_set), dev_(dev_set),
        dropout_rng_(seed ^ 0xd509ULL) {}

  float accumulate(std::size_t i, float weight, int& predicted) {
    const auto& x = train_[i];
    ForwardOptions<float> opts;
    opts.dropout_rng = &dropout_rng_;
    forward(model_, x, tape_, opts);
    predicted = argmax(tape_.probs);
    const float loss = attach_loss(tape_, x.label_id, weight);
    backward(model_, tape_, grads_);
    return loss;
  }

  std::vector<int> predict_dev() const { return predict_ids(model_, dev_); }
  nn::TensorViews<float> params() { return model_.params.views(); }
  nn::TensorViews<float> grads() { return grads_.views(); }
  void zero_grads() {
    for (auto& g : grads_.views()) std::fill(g.data.begin(), g.data.end(), 0.0f);
  }
  SercModel<float> snapshot() const { return model_; }
  void restore(const SercModel<float>& m) { model_ = m; }

 private:
  SercModel<float> model_;
  SercParams<float> grads_;
  SercTape<float> tape_;
  std::span<const EncodedInstance> train_;
  std::span<const EncodedInstance> dev_;
  std::mt19937_64 dropout_rng_;
};

/// Frozen encoders: sub-model summaries are computed once and only the head is trained.
/// Unfrozen: full joint forward/backward per instance.
class JointLearner {
 public:
  JointLearner(JointModel<float> model, std::span<const EncodedInstance> train_set,
               std::span<const EncodedInstance> dev_set)
      : model_(std::move(model)), grads_(JointGrads<float>::zeros_for(model_)), train_(train_set), dev_(dev_set) {
    if (frozen()) {
      train_features_ = summarize(train_set);
      dev_features_ = summarize(dev_set);
    }
  }

  bool frozen() const { return model_.temporal_frozen && model_.causal_frozen; }

  float accumulate(std::size_t i, float weight, int& predicted) {
    const auto& x = train_[i];
    if (frozen()) {
      const auto& [ft, fc] = train_features_[i];
      joint_head_forward(model_.head, ft, fc, tape_);
    } else {
      joint_forward(model_, x, tape_);
    }
    predicted = argmax(tape_.probs);
    const float loss = attach_loss(tape_, x.label_id, weight);
    joint_backward(model_, tape_, grads_);
    return loss;
  }

  std::vector<int> predict_dev() {
    if (!frozen()) return predict_ids(model_, dev_);
    std::vector<int> out;
    JointTape<float> tape;
    for (const auto& [ft, fc] : dev_features_) out.push_back(argmax(joint_head_forward(model_.head, ft, fc, tape)));
    return out;
  }

  nn::TensorViews<float> params() { return trainable_views(model_); }
  nn::TensorViews<float> grads() { return grads_.views(); }
  void zero_grads() {
    for (auto& g : grads_.views()) std::fill(g.data.begin(), g.data.end(), 0.0f);
  }
  JointModel<float> snapshot() const { return model_; }
  void restore(const JointModel<float>& m) { model_ = m; }

 private:
  using Features = std::pair<nn::Vector<float>, nn::Vector<float>>;

  std::vector<Features> summarize(std::span<const EncodedInstance> xs) const {
    std::vector<Features> out;
    SercTape<float> tape;
    for (const auto& x : xs) {
      auto ft = forward(model_.temporal, x, tape).feature;
      auto fc = forward(model_.causal, x, tape).feature;
      out.emplace_back(std::move(ft), std::move(fc));
    }
    return out;
  }

  JointModel<float> model_;
  JointGrads<float> grads_;
  JointTape<float> tape_;
  std::span<const EncodedInstance> train_;
  std::span<const EncodedInstance> dev_;
  std::vector<Features> train_features_;
  std::vector<Features> dev_features_;
};

}  // namespace

TrainResult<SercModel<float>> train(SercModel<float> model, std::span<const EncodedInstance> train_set,
                                    std::span<const EncodedInstance> dev_set, const TrainConfig& cfg,
                                    const TrainHooks& hooks) {
  const Task task = model.config.task;
  SercLearner learner(std::move(model), train_set, dev_set, cfg.seed);
  return run_loop<SercModel<float>>(learner, train_set, dev_set, task, cfg, hooks);
}

TrainResult<JointModel<float>> train_joint(const Checkpoint& temporal, const Checkpoint& causal,
                                           std::span<const EncodedInstance> train_set,
                                           std::span<const EncodedInstance> dev_set, const TrainConfig& cfg,
                                           const TrainHooks& hooks) {
  if (!(temporal.inventories.pos == causal.inventories.pos) || !(temporal.inventories.dep == causal.inventories.dep) ||
      temporal.inventories.vocab.digest() != causal.inventories.vocab.digest())
    throw ConfigError("temporal and causal checkpoints were built with different inventories");
  if (temporal.model.config.embedding_dim != causal.model.config.embedding_dim ||
      temporal.model.config.event_marker != causal.model.config.event_marker)
    throw ConfigError("temporal and causal checkpoints disagree on input encoding");
  if (temporal.model.config.task == Task::Causal3) throw ConfigError("the temporal checkpoint holds a causal model");
  for (const auto& x : train_set)
    if (x.task != Task::Causal3) throw ValidationError("joint training expects CAUSAL3 instances");

  JointLearner learner(init_joint<float>(temporal.model, causal.model, cfg.seed, cfg.unfreeze), train_set, dev_set);
  return run_loop<JointModel<float>>(learner, train_set, dev_set, Task::Causal3, cfg, hooks);
}

}  // namespace serc

#include <gtest/gtest.h>

#include <algorithm>
#include <bit>
#include <cmath>

#include <json.hpp>

#include "serc/error.hpp"
#include "serc/train.hpp"

using namespace serc;

namespace {

struct Data {
  Inventories inv;
  std::vector<EncodedInstance> temporal;
  std::vector<EncodedInstance> causal;
};

// Small coupled corpus: temporal and causal views of the same 48 event pairs.
const Data& data() {
  static const Data d = [] {
    Data d;
    SyntheticSpec spec;
    spec.num_classes = 6;
    spec.num_instances = 48;
    spec.coupling = Coupling::TemporalDrivesCausal;
    const auto corpus = generate_synthetic(spec, 4);
    d.inv = build_inventories(corpus.docs);
    const auto emb = synthetic_embeddings(spec.lexicon_size, 12, 4);
    d.temporal = encode_all(corpus.docs, corpus.instances, d.inv, emb);
    d.causal = encode_all(corpus.docs, corpus.causal, d.inv, emb);
    return d;
  }();
  return d;
}

SercConfig small_config(Task task, std::uint64_t seed) {
  auto cfg = default_config(task, 12, static_cast<int>(data().inv.pos.size()), static_cast<int>(data().inv.dep.size()));
  cfg.word_hidden = 8;
  cfg.pos_hidden = 4;
  cfg.dep_hidden = 4;
  cfg.stacked_hidden = 8;
  cfg.dense_hidden = 8;
  cfg.seed = seed;
  return cfg;
}

std::span<const EncodedInstance> head(const std::vector<EncodedInstance>& xs, std::size_t n) { return {xs.data(), n}; }
std::span<const EncodedInstance> tail(const std::vector<EncodedInstance>& xs, std::size_t from) {
  return {xs.data() + from, xs.size() - from};
}

template <typename S>
bool bitwise_equal(nn::TensorViews<S> a, nn::TensorViews<S> b) {
  if (a.size() != b.size()) return false;
  for (std::size_t k = 0; k < a.size(); ++k) {
    if (a[k].name != b[k].name || a[k].data.size() != b[k].data.size()) return false;
    for (std::size_t i = 0; i < a[k].data.size(); ++i)
      if (std::bit_cast<std::uint32_t>(a[k].data[i]) != std::bit_cast<std::uint32_t>(b[k].data[i])) return false;
  }
  return true;
}

double dev_f1(const SercModel<float>& m, std::span<const EncodedInstance> dev) {
  return micro_metrics(evaluate(m, dev, m.config.task)).f1;
}

}  // namespace

TEST(Train, ZeroLearningRateLeavesParametersUnchanged) {
  auto model = init_model<float>(small_config(Task::Temporal6, 1));
  TrainConfig cfg;
  cfg.max_epochs = 3;
  cfg.adam.lr = 0.0;
  auto r = train(model, head(data().temporal, 32), {}, cfg);
  EXPECT_TRUE(bitwise_equal(model.params.views(), r.model.params.views()));
  ASSERT_EQ(r.history.size(), 3u);
  // Per-instance losses are identical every epoch; only the summation order changes.
  for (const auto& e : r.history) EXPECT_NEAR(e.train_loss, r.history[0].train_loss, 1e-12 * r.history[0].train_loss);
  EXPECT_EQ(r.history[1].train_accuracy, r.history[0].train_accuracy);
  EXPECT_EQ(r.best_epoch, -1);
}

TEST(Train, SameSeedSameTrajectory) {
  TrainConfig cfg;
  cfg.max_epochs = 4;
  cfg.batch_size = 5;
  cfg.seed = 9;
  auto run = [&] {
    return train(init_model<float>(small_config(Task::Temporal6, 2)), head(data().temporal, 36),
                 tail(data().temporal, 36), cfg);
  };
  auto a = run();
  auto b = run();
  ASSERT_EQ(a.history.size(), b.history.size());
  for (std::size_t k = 0; k < a.history.size(); ++k) EXPECT_TRUE(a.history[k].same_trajectory(b.history[k])) << k;
  EXPECT_EQ(a.best_epoch, b.best_epoch);
  EXPECT_TRUE(bitwise_equal(a.model.params.views(), b.model.params.views()));
  EXPECT_EQ(serialize_checkpoint(Checkpoint{a.model, data().inv, {}}),
            serialize_checkpoint(Checkpoint{b.model, data().inv, {}}));
}

TEST(Train, DifferentShuffleSeedChangesTrajectory) {
  TrainConfig cfg;
  cfg.max_epochs = 2;
  cfg.batch_size = 4;
  auto model = init_model<float>(small_config(Task::Temporal6, 2));
  cfg.seed = 1;
  auto a = train(model, head(data().temporal, 32), {}, cfg);
  cfg.seed = 2;
  auto b = train(model, head(data().temporal, 32), {}, cfg);
  EXPECT_FALSE(bitwise_equal(a.model.params.views(), b.model.params.views()));
}

TEST(Train, ClippedNormNeverExceedsBound) {
  for (double bound : {0.01, 0.5, 5.0}) {
    TrainConfig cfg;
    cfg.max_epochs = 3;
    cfg.batch_size = 3;
    cfg.grad_clip_norm = bound;
    int steps = 0, clipped = 0;
    TrainHooks hooks;
    hooks.on_step = [&](const StepInfo& s) {
      ++steps;
      EXPECT_LE(s.norm_after_clip, bound + 1e-4);
      if (s.norm_before_clip > bound) {
        ++clipped;
        EXPECT_NEAR(s.norm_after_clip, bound, 1e-4 * bound);
      } else {
        EXPECT_EQ(s.norm_after_clip, s.norm_before_clip);
      }
    };
    train(init_model<float>(small_config(Task::Temporal6, 3)), head(data().temporal, 30), {}, cfg, hooks);
    EXPECT_EQ(steps, 3 * 10);
    if (bound == 0.01) EXPECT_EQ(clipped, steps);
  }
}

TEST(Train, StepCountFollowsAccumulation) {
  TrainConfig cfg;
  cfg.max_epochs = 2;
  cfg.batch_size = 7;
  std::vector<std::int64_t> seen;
  TrainHooks hooks;
  hooks.on_step = [&](const StepInfo& s) { seen.push_back(s.step); };
  train(init_model<float>(small_config(Task::Temporal6, 3)), head(data().temporal, 30), {}, cfg, hooks);
  // ceil(30 / 7) = 5 optimizer steps per epoch.
  ASSERT_EQ(seen.size(), 10u);
  for (std::size_t k = 0; k < seen.size(); ++k) EXPECT_EQ(seen[k], static_cast<std::int64_t>(k + 1));
}

TEST(Train, ReturnsBestDevModel) {
  TrainConfig cfg;
  cfg.max_epochs = 15;
  cfg.patience = 4;
  cfg.batch_size = 4;
  cfg.adam.lr = 0.01;
  const auto dev = tail(data().temporal, 32);
  const auto r = train(init_model<float>(small_config(Task::Temporal6, 5)), head(data().temporal, 32), dev, cfg);
  double best = -1;
  int arg = -1;
  for (const auto& e : r.history) {
    ASSERT_TRUE(e.dev_f1);
    if (*e.dev_f1 > best) best = *e.dev_f1, arg = e.epoch;
  }
  EXPECT_EQ(r.best_epoch, arg);
  EXPECT_EQ(dev_f1(r.model, dev), best);
  // Early stopping: no more than `patience` epochs after the best one.
  EXPECT_LE(static_cast<int>(r.history.size()), std::min(cfg.max_epochs, arg + 1 + cfg.patience));
  for (const auto& e : r.history) {
    EXPECT_TRUE(std::isfinite(e.train_loss));
    EXPECT_GE(e.train_accuracy, 0.0);
    EXPECT_LE(e.train_accuracy, 100.0);
    EXPECT_GE(*e.dev_f1, 0.0);
    EXPECT_LE(*e.dev_f1, 100.0);
  }
}

TEST(Train, StopsOnceTrainAccuracyReached) {
  TrainConfig cfg;
  cfg.max_epochs = 50;
  cfg.stop_at_train_accuracy = 1e-9;  // any correct prediction ends training
  const auto r = train(init_model<float>(small_config(Task::Temporal6, 6)), head(data().temporal, 32), {}, cfg);
  ASSERT_FALSE(r.history.empty());
  EXPECT_LT(r.history.size(), 50u);
  EXPECT_GT(r.history.back().train_accuracy, 0.0);
}

TEST(Train, NonFiniteLossNamesTheInstance) {
  auto xs = std::vector<EncodedInstance>(data().temporal.begin(), data().temporal.begin() + 10);
  xs[6].word_vecs(0, 0) = std::numeric_limits<float>::quiet_NaN();
  TrainConfig cfg;
  cfg.max_epochs = 1;
  try {
    train(init_model<float>(small_config(Task::Temporal6, 7)), xs, {}, cfg);
    FAIL() << "expected NumericalError";
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("instance 6"), std::string::npos) << e.what();
  }
}

TEST(Train, InputValidation) {
  auto model = init_model<float>(small_config(Task::Temporal6, 8));
  TrainConfig cfg;
  EXPECT_THROW(train(model, {}, {}, cfg), ValidationError);
  // Label id outside the six temporal classes.
  auto xs = std::vector<EncodedInstance>(data().temporal.begin(), data().temporal.begin() + 3);
  xs[1].label_id = 6;
  EXPECT_THROW(train(model, xs, {}, cfg), ValidationError);
  TrainConfig bad;
  bad.max_epochs = 0;
  EXPECT_THROW(train(model, head(data().temporal, 3), {}, bad), ConfigError);
  bad = TrainConfig{};
  bad.batch_size = 0;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = TrainConfig{};
  bad.patience = 0;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = TrainConfig{};
  bad.adam.beta1 = 1.0;
  EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(Train, HistoryJsonLines) {
  TrainConfig cfg;
  cfg.max_epochs = 3;
  const auto r = train(init_model<float>(small_config(Task::Temporal6, 9)), head(data().temporal, 16),
                       tail(data().temporal, 40), cfg);
  const auto text = history_jsonl(r.history);
  std::size_t lines = 0, start = 0;
  for (std::size_t end; (end = text.find('\n', start)) != std::string::npos; start = end + 1, ++lines) {
    const auto j = nlohmann::json::parse(text.substr(start, end - start));
    const auto& e = r.history[lines];
    EXPECT_EQ(j.at("epoch").get<int>(), e.epoch);
    EXPECT_EQ(j.at("train_loss").get<double>(), e.train_loss);
    EXPECT_EQ(j.at("dev_f1").get<double>(), *e.dev_f1);
    EXPECT_TRUE(j.contains("seconds"));
  }
  EXPECT_EQ(lines, r.history.size());
}

namespace {

struct SubModels {
  Checkpoint temporal;
  Checkpoint causal;
};

SubModels sub_models() {
  TrainConfig cfg;
  cfg.max_epochs = 2;
  auto t = train(init_model<float>(small_config(Task::Temporal6, 10)), head(data().temporal, 32), {}, cfg);
  auto c = train(init_model<float>(small_config(Task::Causal3, 11)), head(data().causal, 32), {}, cfg);
  return {Checkpoint{t.model, data().inv, {}}, Checkpoint{c.model, data().inv, {}}};
}

}  // namespace

TEST(TrainJoint, FrozenEncodersStayBitwiseEqual) {
  auto subs = sub_models();
  TrainConfig cfg;
  cfg.max_epochs = 3;
  const auto initial = init_joint<float>(subs.temporal.model, subs.causal.model, cfg.seed);
  auto r = train_joint(subs.temporal, subs.causal, head(data().causal, 32), tail(data().causal, 32), cfg);
  EXPECT_TRUE(r.model.temporal_frozen && r.model.causal_frozen);
  EXPECT_TRUE(bitwise_equal(subs.temporal.model.params.views(), r.model.temporal.params.views()));
  EXPECT_TRUE(bitwise_equal(subs.causal.model.params.views(), r.model.causal.params.views()));
  auto init_head = initial.head;
  EXPECT_FALSE(bitwise_equal(init_head.views(), r.model.head.views()));
}

TEST(TrainJoint, ZeroLearningRateLeavesHeadUnchanged) {
  auto subs = sub_models();
  TrainConfig cfg;
  cfg.max_epochs = 1;
  cfg.adam.lr = 0.0;
  auto initial = init_joint<float>(subs.temporal.model, subs.causal.model, cfg.seed);
  auto r = train_joint(subs.temporal, subs.causal, head(data().causal, 32), {}, cfg);
  EXPECT_TRUE(bitwise_equal(initial.views(), r.model.views()));
}

TEST(TrainJoint, UnfrozenUpdatesEncoders) {
  auto subs = sub_models();
  TrainConfig cfg;
  cfg.max_epochs = 1;
  cfg.unfreeze = true;
  auto r = train_joint(subs.temporal, subs.causal, head(data().causal, 16), {}, cfg);
  EXPECT_FALSE(r.model.temporal_frozen);
  EXPECT_FALSE(bitwise_equal(subs.temporal.model.params.views(), r.model.temporal.params.views()));
  EXPECT_FALSE(bitwise_equal(subs.causal.model.params.views(), r.model.causal.params.views()));
}

TEST(TrainJoint, FrozenAndFullForwardAgree) {
  // Precomputed sub-model features must give the same predictions as the full joint forward.
  auto subs = sub_models();
  TrainConfig cfg;
  cfg.max_epochs = 2;
  auto r = train_joint(subs.temporal, subs.causal, head(data().causal, 32), tail(data().causal, 32), cfg);
  const auto dev = tail(data().causal, 32);
  EXPECT_EQ(micro_metrics(evaluate(r.model, dev, Task::Causal3)).f1, *r.history[static_cast<std::size_t>(r.best_epoch)].dev_f1);
}

TEST(TrainJoint, InventoryMismatchIsAConfigError) {
  auto subs = sub_models();
  SyntheticSpec spec;
  spec.lexicon_size = 30;
  auto other = build_inventories(generate_synthetic(spec, 99).docs);
  auto altered = subs.causal;
  altered.inventories = other;
  TrainConfig cfg;
  EXPECT_THROW(train_joint(subs.temporal, altered, head(data().causal, 8), {}, cfg), ConfigError);
  EXPECT_THROW(train_joint(subs.causal, subs.causal, head(data().causal, 8), {}, cfg), ConfigError);
  EXPECT_THROW(train_joint(subs.temporal, subs.causal, head(data().temporal, 8), {}, cfg), ValidationError);
}

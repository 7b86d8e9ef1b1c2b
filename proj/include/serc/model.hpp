#pragma once

// SERC single-task classifier and the joint temporal+causal classifier.
//
//   word path  -> BiLSTM(word_hidden)  -----------------------------.
//   POS tags   -> BiLSTM(pos_hidden) -.                               > time-axis concat
//   dep labels -> BiLSTM(dep_hidden) -'-> feature-wise concat -------'
//        -> stacked BiLSTM(stacked_hidden) -> [last fwd h || first bwd h]
//        -> dense(dense_hidden, relu) -> dense(C) -> softmax
//
// The joint model concatenates the stacked summaries of a temporal and a causal model and
// feeds them through its own dense(32, relu) -> dense(3) -> softmax head.

#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>

#include "serc/corpus.hpp"
#include "serc/features.hpp"
#include "serc/nn.hpp"

namespace serc {

struct SercConfig {
  int word_hidden = 64;
  int dep_hidden = 32;
  int pos_hidden = 32;
  int stacked_hidden = 64;
  int dense_hidden = 32;
  int num_classes = 6;
  int embedding_dim = 100;
  int pos_dim = 2;  // POS one-hot width, including the marker column when enabled
  int dep_dim = 2;
  std::uint64_t seed = 1;
  bool event_marker = false;
  double dropout = 0.0;
  Task task = Task::Temporal6;

  int merged_width() const { return 2 * word_hidden; }
  int feature_width() const { return 2 * stacked_hidden; }

  /// Throws ConfigError when sizes are invalid or the merge widths disagree.
  void validate() const;

  bool operator==(const SercConfig&) const = default;
};

/// Config with the architecture defaults for `task` and the given input widths.
SercConfig default_config(Task task, int embedding_dim, int pos_dim, int dep_dim);

template <typename S>
struct SercParams {
  nn::BiLstmParams<S> word, pos, dep, stacked;
  nn::DenseParams<S> hidden, output;

  /// Stable, named order shared by checkpoints, the optimizer, and gradient checks.
  nn::TensorViews<S> views() {
    nn::TensorViews<S> v;
    word.views(v, "word");
    pos.views(v, "pos");
    dep.views(v, "dep");
    stacked.views(v, "stacked");
    hidden.views(v, "hidden");
    output.views(v, "output");
    return v;
  }

  SercParams zeros_like() const {
    SercParams z = *this;
    for (auto& t : z.views()) std::fill(t.data.begin(), t.data.end(), S(0));
    return z;
  }

  template <typename T>
  SercParams<T> cast() const {
    return {word.template cast<T>(),  pos.template cast<T>(),    dep.template cast<T>(),
            stacked.template cast<T>(), hidden.template cast<T>(), output.template cast<T>()};
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (auto& t : const_cast<SercParams*>(this)->views()) n += t.data.size();
    return n;
  }
};

template <typename S>
struct SercModel {
  SercConfig config;
  SercParams<S> params;

  template <typename T>
  SercModel<T> cast() const {
    return {config, params.template cast<T>()};
  }
};

/// Deterministic initialization from `cfg.seed`.
template <typename S = float>
SercModel<S> init_model(const SercConfig& cfg) {
  cfg.validate();
  SercModel<S> m;
  m.config = cfg;
  auto& p = m.params;
  p.word = nn::BiLstmParams<S>(cfg.embedding_dim, cfg.word_hidden);
  p.pos = nn::BiLstmParams<S>(cfg.pos_dim, cfg.pos_hidden);
  p.dep = nn::BiLstmParams<S>(cfg.dep_dim, cfg.dep_hidden);
  p.stacked = nn::BiLstmParams<S>(cfg.merged_width(), cfg.stacked_hidden);
  p.hidden = nn::DenseParams<S>(cfg.feature_width(), cfg.dense_hidden, nn::Activation::Relu);
  p.output = nn::DenseParams<S>(cfg.dense_hidden, cfg.num_classes, nn::Activation::Identity);
  std::mt19937_64 rng(cfg.seed);
  nn::init_bilstm(p.word, rng);
  nn::init_bilstm(p.pos, rng);
  nn::init_bilstm(p.dep, rng);
  nn::init_bilstm(p.stacked, rng);
  nn::init_dense(p.hidden, rng);
  nn::init_dense(p.output, rng);
  return m;
}

template <typename S>
struct ForwardOptions {
  std::mt19937_64* dropout_rng = nullptr;  // training mode when set and dropout > 0
  S logit_offset = S(0);                   // added to every logit (argmax-invariance checks)
};

/// Cached activations of one SERC forward pass.
template <typename S>
struct SercTape {
  nn::BiLstmCache<S> word, pos, dep, stacked;
  Eigen::Index path_len = 0;
  Eigen::Index text_len = 0;
  Eigen::Index word_width = 0;
  Eigen::Index pos_width = 0;
  nn::Vector<S> dropout_mask;  // empty when no dropout was applied
  nn::DenseCache<S> hidden, output;
  nn::Vector<S> logits;
  nn::Vector<S> probs;
  // Set by attach_loss.
  bool has_loss = false;
  S loss = S(0);
  S loss_weight = S(1);
  nn::Vector<S> dlogits;
};

template <typename S>
struct ForwardResult {
  nn::Vector<S> probs;
  nn::Vector<S> feature;
  nn::Matrix<S> merged;  // (T1 + T2) x merged width, kept for shape checks
};

/// Word/POS/dep encoders and the merge: (T1 + T2) x 128 under the default config.
template <typename S>
nn::Matrix<S> merge_sequences(const nn::Matrix<S>& word_h, const nn::Matrix<S>& pos_h,
                              const nn::Matrix<S>& dep_h) {
  const Eigen::Index width = pos_h.cols() + dep_h.cols();
  nn::require(word_h.cols() == width, "merge: word width " + std::to_string(word_h.cols()) +
                                          " != tag width " + std::to_string(width));
  nn::require(pos_h.rows() == dep_h.rows(), "merge: POS and dependency sequences are not aligned");
  nn::Matrix<S> merged(word_h.rows() + pos_h.rows(), width);
  merged.topRows(word_h.rows()) = word_h;
  merged.bottomRows(pos_h.rows()) << pos_h, dep_h;
  return merged;
}

template <typename S>
ForwardResult<S> forward(const SercModel<S>& m, const EncodedInstance& x, SercTape<S>& tape,
                         const ForwardOptions<S>& opts = {}) {
  const auto& p = m.params;
  nn::require(x.word_vecs.cols() == p.word.input(),
              "forward: embedding width " + std::to_string(x.word_vecs.cols()) + " != " +
                  std::to_string(p.word.input()));
  nn::require(x.pos_onehots.cols() == p.pos.input(),
              "forward: POS inventory width " + std::to_string(x.pos_onehots.cols()) + " != " +
                  std::to_string(p.pos.input()));
  nn::require(x.dep_onehots.cols() == p.dep.input(),
              "forward: dependency inventory width " + std::to_string(x.dep_onehots.cols()) + " != " +
                  std::to_string(p.dep.input()));
  tape = SercTape<S>{};

  const nn::Matrix<S> word_h = nn::bilstm_forward(p.word, nn::Matrix<S>(x.word_vecs.cast<S>()), tape.word);
  const nn::Matrix<S> pos_h = nn::bilstm_forward(p.pos, nn::Matrix<S>(x.pos_onehots.cast<S>()), tape.pos);
  const nn::Matrix<S> dep_h = nn::bilstm_forward(p.dep, nn::Matrix<S>(x.dep_onehots.cast<S>()), tape.dep);
  tape.path_len = word_h.rows();
  tape.text_len = pos_h.rows();
  tape.word_width = word_h.cols();
  tape.pos_width = pos_h.cols();

  ForwardResult<S> r;
  r.merged = merge_sequences(word_h, pos_h, dep_h);
  const nn::Matrix<S> stacked_h = nn::bilstm_forward(p.stacked, r.merged, tape.stacked);
  const Eigen::Index H = p.stacked.hidden(), T = stacked_h.rows();
  r.feature.resize(2 * H);
  r.feature << stacked_h.row(T - 1).leftCols(H).transpose(), stacked_h.row(0).rightCols(H).transpose();

  nn::Vector<S> dense_in = r.feature;
  if (opts.dropout_rng && m.config.dropout > 0.0) {
    const double keep = 1.0 - m.config.dropout;
    std::bernoulli_distribution coin(keep);
    tape.dropout_mask.resize(dense_in.size());
    for (Eigen::Index k = 0; k < dense_in.size(); ++k)
      tape.dropout_mask[k] = coin(*opts.dropout_rng) ? static_cast<S>(1.0 / keep) : S(0);
    dense_in = dense_in.cwiseProduct(tape.dropout_mask);
  }
  const nn::Vector<S> hidden = nn::dense_forward(p.hidden, dense_in, tape.hidden);
  tape.logits = nn::dense_forward(p.output, hidden, tape.output).array() + opts.logit_offset;
  tape.probs = nn::softmax(tape.logits);
  r.probs = tape.probs;
  return r;
}

/// Softmax cross-entropy against `gold`, scaled by `weight`. Completes the tape for backward.
template <typename S>
S attach_loss(SercTape<S>& tape, int gold, S weight = S(1)) {
  auto x = nn::softmax_xent(tape.logits, gold);
  tape.has_loss = true;
  tape.loss = weight * x.loss;
  tape.loss_weight = weight;
  tape.dlogits = weight * x.dlogits;
  return tape.loss;
}

/// d(loss)/d(summary feature) pushed back through the encoders; grads accumulate.
template <typename S>
nn::Matrix<S> backward_from_feature(const SercModel<S>& m, const SercTape<S>& tape,
                                    const nn::Vector<S>& dfeature, SercParams<S>& grads) {
  const auto& p = m.params;
  const Eigen::Index H = p.stacked.hidden();
  const Eigen::Index T = tape.path_len + tape.text_len;
  nn::Matrix<S> dstacked = nn::Matrix<S>::Zero(T, 2 * H);
  dstacked.row(T - 1).leftCols(H) = dfeature.head(H).transpose();
  dstacked.row(0).rightCols(H) += dfeature.tail(H).transpose();
  const nn::Matrix<S> dmerged = nn::bilstm_backward(p.stacked, tape.stacked, dstacked, grads.stacked);

  const nn::Matrix<S> dword_h = dmerged.topRows(tape.path_len);
  const nn::Matrix<S> dpos_h = dmerged.bottomRows(tape.text_len).leftCols(tape.pos_width);
  const nn::Matrix<S> ddep_h = dmerged.bottomRows(tape.text_len).rightCols(dmerged.cols() - tape.pos_width);
  nn::bilstm_backward(p.pos, tape.pos, dpos_h, grads.pos);
  nn::bilstm_backward(p.dep, tape.dep, ddep_h, grads.dep);
  return nn::bilstm_backward(p.word, tape.word, dword_h, grads.word);
}

/// Reverse pass for a completed tape. Accumulates into `grads` and returns the gradient with
/// respect to the path-word embedding rows (T1 x dim).
template <typename S>
nn::Matrix<S> backward(const SercModel<S>& m, const SercTape<S>& tape, SercParams<S>& grads) {
  if (!tape.has_loss) throw StateError("backward called without a completed forward pass and loss");
  const auto& p = m.params;
  const nn::Vector<S> dhidden = nn::dense_backward(p.output, tape.output, tape.dlogits, &grads.output);
  nn::Vector<S> dfeature = nn::dense_backward(p.hidden, tape.hidden, dhidden, &grads.hidden);
  if (tape.dropout_mask.size() > 0) dfeature = dfeature.cwiseProduct(tape.dropout_mask);
  return backward_from_feature(m, tape, dfeature, grads);
}

/// Index of the largest probability; ties go to the lowest class id.
template <typename S>
int argmax(const nn::Vector<S>& probs) {
  int best = 0;
  for (Eigen::Index k = 1; k < probs.size(); ++k)
    if (probs[k] > probs[best]) best = static_cast<int>(k);
  return best;
}

template <typename S>
const std::string& predict(const SercModel<S>& m, const EncodedInstance& x) {
  SercTape<S> tape;
  const auto r = forward(m, x, tape);
  return LabelSet::of(m.config.task).label(argmax(r.probs));
}

// ---- Joint model -----------------------------------------------------------------------

template <typename S>
struct JointHead {
  nn::DenseParams<S> hidden;
  nn::DenseParams<S> output;

  nn::TensorViews<S> views() {
    nn::TensorViews<S> v;
    hidden.views(v, "joint.hidden");
    output.views(v, "joint.output");
    return v;
  }

  template <typename T>
  JointHead<T> cast() const {
    return {hidden.template cast<T>(), output.template cast<T>()};
  }
};

template <typename S>
struct JointModel {
  SercModel<S> temporal;
  SercModel<S> causal;
  bool temporal_frozen = true;
  bool causal_frozen = true;
  JointHead<S> head;
  std::uint64_t seed = 1;

  int input_width() const { return temporal.config.feature_width() + causal.config.feature_width(); }

  /// Every trainable tensor: sub-model tensors are prefixed with "temporal." / "causal.".
  nn::TensorViews<S> views() {
    nn::TensorViews<S> v;
    for (auto t : temporal.params.views()) {
      t.name = "temporal." + t.name;
      v.push_back(std::move(t));
    }
    for (auto t : causal.params.views()) {
      t.name = "causal." + t.name;
      v.push_back(std::move(t));
    }
    for (auto t : head.views()) v.push_back(std::move(t));
    return v;
  }

  template <typename T>
  JointModel<T> cast() const {
    return {temporal.template cast<T>(), causal.template cast<T>(), temporal_frozen, causal_frozen,
            head.template cast<T>(), seed};
  }
};

constexpr int kJointHidden = 32;

template <typename S = float>
JointModel<S> init_joint(SercModel<S> temporal, SercModel<S> causal, std::uint64_t seed,
                         bool unfreeze = false) {
  if (temporal.config.feature_width() != causal.config.feature_width())
    throw DimensionError("joint: sub-model feature widths differ (" +
                         std::to_string(temporal.config.feature_width()) + " vs " +
                         std::to_string(causal.config.feature_width()) + ")");
  if (causal.config.task != Task::Causal3) throw ConfigError("joint: causal sub-model must be a CAUSAL3 model");
  JointModel<S> j;
  j.temporal = std::move(temporal);
  j.causal = std::move(causal);
  j.temporal_frozen = j.causal_frozen = !unfreeze;
  j.seed = seed;
  const int classes = static_cast<int>(LabelSet::of(Task::Causal3).size());
  j.head.hidden = nn::DenseParams<S>(j.input_width(), kJointHidden, nn::Activation::Relu);
  j.head.output = nn::DenseParams<S>(kJointHidden, classes, nn::Activation::Identity);
  std::mt19937_64 rng(seed);
  nn::init_dense(j.head.hidden, rng);
  nn::init_dense(j.head.output, rng);
  return j;
}

template <typename S>
struct JointTape {
  SercTape<S> temporal;
  SercTape<S> causal;
  Eigen::Index temporal_width = 0;
  nn::DenseCache<S> hidden, output;
  nn::Vector<S> logits;
  nn::Vector<S> probs;
  bool has_loss = false;
  S loss = S(0);
  nn::Vector<S> dlogits;
};

/// Head only, over precomputed sub-model summaries.
template <typename S>
nn::Vector<S> joint_head_forward(const JointHead<S>& head, const nn::Vector<S>& feature_t,
                                 const nn::Vector<S>& feature_c, JointTape<S>& tape) {
  nn::Vector<S> in(feature_t.size() + feature_c.size());
  in << feature_t, feature_c;
  tape.temporal_width = feature_t.size();
  const nn::Vector<S> hidden = nn::dense_forward(head.hidden, in, tape.hidden);
  tape.logits = nn::dense_forward(head.output, hidden, tape.output);
  tape.probs = nn::softmax(tape.logits);
  return tape.probs;
}

template <typename S>
nn::Vector<S> joint_forward(const JointModel<S>& j, const EncodedInstance& x, JointTape<S>& tape) {
  tape = JointTape<S>{};
  const auto ft = forward(j.temporal, x, tape.temporal).feature;
  const auto fc = forward(j.causal, x, tape.causal).feature;
  if (ft.size() != fc.size()) throw DimensionError("joint: sub-model feature widths differ");
  return joint_head_forward(j.head, ft, fc, tape);
}

template <typename S>
S attach_loss(JointTape<S>& tape, int gold, S weight = S(1)) {
  auto x = nn::softmax_xent(tape.logits, gold);
  tape.has_loss = true;
  tape.loss = weight * x.loss;
  tape.dlogits = weight * x.dlogits;
  return tape.loss;
}

/// Gradients of a joint pass. Frozen sub-models have no entry at all.
template <typename S>
struct JointGrads {
  std::optional<SercParams<S>> temporal;
  std::optional<SercParams<S>> causal;
  JointHead<S> head;

  static JointGrads zeros_for(const JointModel<S>& j) {
    JointGrads g;
    if (!j.temporal_frozen) g.temporal = j.temporal.params.zeros_like();
    if (!j.causal_frozen) g.causal = j.causal.params.zeros_like();
    g.head = j.head;
    for (auto& t : g.head.views()) std::fill(t.data.begin(), t.data.end(), S(0));
    return g;
  }

  /// Same order as JointModel::views() restricted to the unfrozen parts.
  nn::TensorViews<S> views() {
    nn::TensorViews<S> v;
    if (temporal)
      for (auto t : temporal->views()) {
        t.name = "temporal." + t.name;
        v.push_back(std::move(t));
      }
    if (causal)
      for (auto t : causal->views()) {
        t.name = "causal." + t.name;
        v.push_back(std::move(t));
      }
    for (auto t : head.views()) v.push_back(std::move(t));
    return v;
  }
};

/// Views of the trainable part of a joint model, aligned with JointGrads::views().
template <typename S>
nn::TensorViews<S> trainable_views(JointModel<S>& j) {
  nn::TensorViews<S> v;
  if (!j.temporal_frozen)
    for (auto t : j.temporal.params.views()) {
      t.name = "temporal." + t.name;
      v.push_back(std::move(t));
    }
  if (!j.causal_frozen)
    for (auto t : j.causal.params.views()) {
      t.name = "causal." + t.name;
      v.push_back(std::move(t));
    }
  for (auto t : j.head.views()) v.push_back(std::move(t));
  return v;
}

/// Head backward; returns d(loss)/d(concatenated feature).
template <typename S>
nn::Vector<S> joint_head_backward(const JointHead<S>& head, const JointTape<S>& tape, JointHead<S>& grads) {
  if (!tape.has_loss) throw StateError("joint backward called without a completed forward pass and loss");
  const nn::Vector<S> dhidden = nn::dense_backward(head.output, tape.output, tape.dlogits, &grads.output);
  return nn::dense_backward(head.hidden, tape.hidden, dhidden, &grads.hidden);
}

template <typename S>
void joint_backward(const JointModel<S>& j, const JointTape<S>& tape, JointGrads<S>& grads) {
  const nn::Vector<S> din = joint_head_backward(j.head, tape, grads.head);
  const Eigen::Index wt = tape.temporal_width;
  if (grads.temporal) backward_from_feature(j.temporal, tape.temporal, nn::Vector<S>(din.head(wt)), *grads.temporal);
  if (grads.causal)
    backward_from_feature(j.causal, tape.causal, nn::Vector<S>(din.tail(din.size() - wt)), *grads.causal);
}

template <typename S>
const std::string& predict(const JointModel<S>& j, const EncodedInstance& x) {
  JointTape<S> tape;
  return LabelSet::of(Task::Causal3).label(argmax(joint_forward(j, x, tape)));
}

/// Copies of the gradient tensors keyed by name.
template <typename S>
std::map<std::string, nn::Matrix<S>> gradient_map(nn::TensorViews<S> views) {
  std::map<std::string, nn::Matrix<S>> out;
  for (const auto& v : views)
    out.emplace(v.name, Eigen::Map<const nn::Matrix<S>>(v.data.data(), v.rows, v.cols));
  return out;
}

// ---- Gradient checks ------------------------------------------------------------------

/// Precision of the perturbed forward passes in a gradient check. Analytic gradients are
/// always computed in double. Double-precision differences at eps = 1e-5 carry roughly 1e-11
/// of rounding noise, which dominates gradients smaller than about 1e-5.
enum class FdPrecision { Double, Extended };

/// Finite-difference check of every SERC parameter. `grad_hook` may edit the analytic
/// gradients before comparison (fault injection in tests).
nn::GradCheckResult grad_check_model(SercModel<double> model, const EncodedInstance& x,
                                     const std::function<void(nn::TensorViews<double>&)>& grad_hook = {},
                                     FdPrecision precision = FdPrecision::Extended);

/// Same for the joint graph with both encoders unfrozen.
nn::GradCheckResult grad_check_joint(JointModel<double> model, const EncodedInstance& x,
                                     FdPrecision precision = FdPrecision::Extended);

/// Reduced-dimension SERC-t model and instance used by the `gradcheck` command.
struct GradCheckFixture {
  SercModel<double> model;
  EncodedInstance instance;
};
GradCheckFixture reduced_gradcheck_fixture(std::uint64_t seed);

/// Joint model over the reduced temporal model and a causal model of the same shape, with
/// both encoders unfrozen, plus the fixture instance relabelled for the causal task.
struct JointGradCheckFixture {
  JointModel<double> model;
  EncodedInstance instance;
};
JointGradCheckFixture reduced_joint_gradcheck_fixture(std::uint64_t seed);

// ---- Checkpoints -------------------------------------------------------------------------

inline constexpr char kCheckpointMagic[9] = "SERCCKP1";
inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  SercModel<float> model;
  Inventories inventories;
  std::map<std::string, std::string> provenance;
};

struct JointCheckpoint {
  JointModel<float> model;
  Inventories inventories;
  std::map<std::string, std::string> provenance;
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);
std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(std::string_view bytes);

void save_checkpoint(const JointCheckpoint& ckpt, const std::filesystem::path& path);
JointCheckpoint load_joint_checkpoint(const std::filesystem::path& path);
std::string serialize_checkpoint(const JointCheckpoint& ckpt);
JointCheckpoint deserialize_joint_checkpoint(std::string_view bytes);

/// "serc" or "joint", read from the header.
std::string checkpoint_kind(const std::filesystem::path& path);

}  // namespace serc

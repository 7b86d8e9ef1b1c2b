#include "serc/model.hpp"

namespace serc {

void SercConfig::validate() const {
  for (auto [name, v] : {std::pair{"word_hidden", word_hidden}, {"dep_hidden", dep_hidden},
                         {"pos_hidden", pos_hidden}, {"stacked_hidden", stacked_hidden},
                         {"dense_hidden", dense_hidden}, {"num_classes", num_classes},
                         {"embedding_dim", embedding_dim}, {"pos_dim", pos_dim}, {"dep_dim", dep_dim}}) {
    if (v < 1) throw ConfigError(std::string("model.") + name + " must be >= 1");
  }
  if (2 * word_hidden != 2 * dep_hidden + 2 * pos_hidden)
    throw ConfigError("merge width mismatch: word BiLSTM gives " + std::to_string(2 * word_hidden) +
                      " but POS + dependency BiLSTMs give " + std::to_string(2 * dep_hidden + 2 * pos_hidden));
  if (num_classes != static_cast<int>(LabelSet::of(task).size()))
    throw ConfigError("num_classes " + std::to_string(num_classes) + " does not match task " +
                      std::string(to_string(task)));
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("model.dropout must be in [0, 1)");
}

SercConfig default_config(Task task, int embedding_dim, int pos_dim, int dep_dim) {
  SercConfig cfg;
  cfg.task = task;
  cfg.num_classes = static_cast<int>(LabelSet::of(task).size());
  cfg.embedding_dim = embedding_dim;
  cfg.pos_dim = pos_dim;
  cfg.dep_dim = dep_dim;
  return cfg;
}

namespace {

template <typename P>
nn::GradCheckResult fd_serc(const SercModel<double>& model, const EncodedInstance& x,
                            const nn::TensorViews<double>& analytic) {
  auto wide = model.template cast<P>();
  auto loss = [&]() {
    SercTape<P> t;
    forward(wide, x, t);
    return attach_loss(t, x.label_id);
  };
  return nn::grad_check(wide.params.views(), analytic, loss);
}

template <typename P>
nn::GradCheckResult fd_joint(const JointModel<double>& model, const EncodedInstance& x,
                             const nn::TensorViews<double>& analytic) {
  auto wide = model.template cast<P>();
  auto loss = [&]() {
    JointTape<P> t;
    joint_forward(wide, x, t);
    return attach_loss(t, x.label_id);
  };
  return nn::grad_check(wide.views(), analytic, loss);
}

}  // namespace

nn::GradCheckResult grad_check_model(SercModel<double> model, const EncodedInstance& x,
                                     const std::function<void(nn::TensorViews<double>&)>& grad_hook,
                                     FdPrecision precision) {
  auto grads = model.params.zeros_like();
  SercTape<double> tape;
  forward(model, x, tape);
  attach_loss(tape, x.label_id);
  backward(model, tape, grads);
  auto analytic = grads.views();
  if (grad_hook) grad_hook(analytic);
  return precision == FdPrecision::Extended ? fd_serc<long double>(model, x, analytic)
                                            : fd_serc<double>(model, x, analytic);
}

nn::GradCheckResult grad_check_joint(JointModel<double> model, const EncodedInstance& x, FdPrecision precision) {
  model.temporal_frozen = model.causal_frozen = false;
  auto grads = JointGrads<double>::zeros_for(model);
  JointTape<double> tape;
  joint_forward(model, x, tape);
  attach_loss(tape, x.label_id);
  joint_backward(model, tape, grads);
  const auto analytic = grads.views();
  return precision == FdPrecision::Extended ? fd_joint<long double>(model, x, analytic)
                                            : fd_joint<double>(model, x, analytic);
}

GradCheckFixture reduced_gradcheck_fixture(std::uint64_t seed) {
  SercConfig cfg = default_config(Task::Temporal6, 3, 4, 5);
  cfg.word_hidden = 4;
  cfg.pos_hidden = 2;
  cfg.dep_hidden = 2;
  cfg.stacked_hidden = 4;
  cfg.seed = seed;

  GradCheckFixture f{init_model<double>(cfg), {}};
  std::mt19937_64 rng(seed ^ 0x5eedULL);
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  f.instance.task = cfg.task;
  f.instance.word_vecs.resize(3, cfg.embedding_dim);
  for (Eigen::Index k = 0; k < f.instance.word_vecs.size(); ++k) f.instance.word_vecs.data()[k] = u(rng);
  f.instance.pos_onehots = Eigen::MatrixXf::Zero(5, cfg.pos_dim);
  f.instance.dep_onehots = Eigen::MatrixXf::Zero(5, cfg.dep_dim);
  for (Eigen::Index t = 0; t < 5; ++t) {
    f.instance.pos_onehots(t, std::uniform_int_distribution<int>(0, cfg.pos_dim - 1)(rng)) = 1.0f;
    f.instance.dep_onehots(t, std::uniform_int_distribution<int>(0, cfg.dep_dim - 1)(rng)) = 1.0f;
  }
  f.instance.label_id = std::uniform_int_distribution<int>(0, cfg.num_classes - 1)(rng);
  return f;
}

JointGradCheckFixture reduced_joint_gradcheck_fixture(std::uint64_t seed) {
  auto base = reduced_gradcheck_fixture(seed);
  auto causal_cfg = base.model.config;
  causal_cfg.task = Task::Causal3;
  causal_cfg.num_classes = 3;
  causal_cfg.seed = seed + 1;
  JointGradCheckFixture f{init_joint<double>(base.model, init_model<double>(causal_cfg), seed + 2, true),
                          base.instance};
  f.instance.task = Task::Causal3;
  f.instance.label_id %= 3;
  return f;
}

}  // namespace serc

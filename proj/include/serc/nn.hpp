#pragma once

// Differentiable kernels for the SERC models. Everything is templated on the scalar so the
// same code trains in float and is gradient-checked in double.

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "serc/error.hpp"

namespace serc::nn {

template <typename S>
using Matrix = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <typename S>
using Vector = Eigen::Matrix<S, Eigen::Dynamic, 1>;

/// A named view over one parameter (or gradient) tensor's contiguous storage.
template <typename S>
struct TensorView {
  std::string name;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  std::span<S> data;
};

template <typename S>
using TensorViews = std::vector<TensorView<S>>;

template <typename S, typename Derived>
void append_view(TensorViews<S>& out, std::string name, Eigen::PlainObjectBase<Derived>& t) {
  out.push_back({std::move(name), t.rows(), t.cols(), std::span<S>(t.data(), static_cast<std::size_t>(t.size()))});
}

template <typename S>
S sigmoid(S x) {
  return S(1) / (S(1) + std::exp(-x));
}

inline void require(bool ok, const std::string& what) {
  if (!ok) throw DimensionError(what);
}

// ---- Parameters ----------------------------------------------------------------

template <typename S>
struct LstmParams {
  Matrix<S> W;  // 4H x D, gate blocks i, f, g, o
  Matrix<S> U;  // 4H x H
  Vector<S> b;  // 4H

  LstmParams() = default;
  LstmParams(Eigen::Index input, Eigen::Index hidden)
      : W(Matrix<S>::Zero(4 * hidden, input)), U(Matrix<S>::Zero(4 * hidden, hidden)), b(Vector<S>::Zero(4 * hidden)) {}

  Eigen::Index hidden() const { return U.cols(); }
  Eigen::Index input() const { return W.cols(); }

  template <typename T>
  LstmParams<T> cast() const {
    LstmParams<T> p;
    p.W = W.template cast<T>();
    p.U = U.template cast<T>();
    p.b = b.template cast<T>();
    return p;
  }

  void views(TensorViews<S>& out, const std::string& prefix) {
    append_view(out, prefix + ".W", W);
    append_view(out, prefix + ".U", U);
    append_view(out, prefix + ".b", b);
  }
};

template <typename S>
struct BiLstmParams {
  LstmParams<S> fwd;
  LstmParams<S> bwd;

  BiLstmParams() = default;
  BiLstmParams(Eigen::Index input, Eigen::Index hidden) : fwd(input, hidden), bwd(input, hidden) {}

  Eigen::Index hidden() const { return fwd.hidden(); }
  Eigen::Index input() const { return fwd.input(); }
  Eigen::Index output() const { return 2 * hidden(); }

  template <typename T>
  BiLstmParams<T> cast() const {
    BiLstmParams<T> p;
    p.fwd = fwd.template cast<T>();
    p.bwd = bwd.template cast<T>();
    return p;
  }

  void views(TensorViews<S>& out, const std::string& prefix) {
    fwd.views(out, prefix + ".fwd");
    bwd.views(out, prefix + ".bwd");
  }
};

enum class Activation { Relu, Identity };

template <typename S>
struct DenseParams {
  Matrix<S> W;  // out x in
  Vector<S> b;
  Activation activation = Activation::Identity;

  DenseParams() = default;
  DenseParams(Eigen::Index in, Eigen::Index out, Activation act)
      : W(Matrix<S>::Zero(out, in)), b(Vector<S>::Zero(out)), activation(act) {}

  template <typename T>
  DenseParams<T> cast() const {
    DenseParams<T> p;
    p.W = W.template cast<T>();
    p.b = b.template cast<T>();
    p.activation = activation;
    return p;
  }

  void views(TensorViews<S>& out, const std::string& prefix) {
    append_view(out, prefix + ".W", W);
    append_view(out, prefix + ".b", b);
  }
};

/// Uniform in +-sqrt(6 / (fan_in + fan_out)), fan_in = cols, fan_out = rows.
template <typename S, typename Derived>
void glorot_uniform(Eigen::PlainObjectBase<Derived>& t, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(t.rows() + t.cols()));
  std::uniform_real_distribution<double> u(-limit, limit);
  for (Eigen::Index k = 0; k < t.size(); ++k) t.data()[k] = static_cast<S>(u(rng));
}

template <typename S>
void init_lstm(LstmParams<S>& p, std::mt19937_64& rng) {
  glorot_uniform<S>(p.W, rng);
  glorot_uniform<S>(p.U, rng);
  p.b.setZero();
  p.b.segment(p.hidden(), p.hidden()).setOnes();  // forget gate
}

template <typename S>
void init_bilstm(BiLstmParams<S>& p, std::mt19937_64& rng) {
  init_lstm(p.fwd, rng);
  init_lstm(p.bwd, rng);
}

template <typename S>
void init_dense(DenseParams<S>& p, std::mt19937_64& rng) {
  glorot_uniform<S>(p.W, rng);
  p.b.setZero();
}

// ---- LSTM --------------------------------------------------------------------------

template <typename S>
struct LstmState {
  Vector<S> h;
  Vector<S> c;
};

/// One cell step: i, f, o = sigmoid, g = tanh; c' = f*c + i*g; h' = o*tanh(c').
template <typename S>
LstmState<S> lstm_step(const LstmParams<S>& p, const Vector<S>& x, const Vector<S>& h, const Vector<S>& c) {
  const Eigen::Index H = p.hidden();
  require(x.size() == p.input(), "lstm_step: input width " + std::to_string(x.size()) + " != " +
                                     std::to_string(p.input()));
  require(h.size() == H && c.size() == H, "lstm_step: state width mismatch");
  Vector<S> z = p.W * x + p.U * h + p.b;
  LstmState<S> next{Vector<S>(H), Vector<S>(H)};
  for (Eigen::Index k = 0; k < H; ++k) {
    const S i = sigmoid(z[k]);
    const S f = sigmoid(z[H + k]);
    const S g = std::tanh(z[2 * H + k]);
    const S o = sigmoid(z[3 * H + k]);
    next.c[k] = f * c[k] + i * g;
    next.h[k] = o * std::tanh(next.c[k]);
  }
  return next;
}

/// Activations of a unidirectional pass, kept for the backward sweep.
template <typename S>
struct LstmCache {
  Matrix<S> x;      // T x D
  Matrix<S> gates;  // T x 4H, post-nonlinearity (i, f, g, o)
  Matrix<S> c;      // T x H
  Matrix<S> tanh_c; // T x H
  Matrix<S> h;      // T x H
};

template <typename S>
Matrix<S> lstm_forward(const LstmParams<S>& p, const Matrix<S>& seq, LstmCache<S>& cache) {
  const Eigen::Index T = seq.rows(), H = p.hidden();
  require(seq.cols() == p.input(), "lstm: sequence width " + std::to_string(seq.cols()) + " != " +
                                       std::to_string(p.input()));
  cache.x = seq;
  cache.gates.resize(T, 4 * H);
  cache.c.resize(T, H);
  cache.tanh_c.resize(T, H);
  cache.h.resize(T, H);
  // Input projections for all steps at once: T x 4H.
  Matrix<S> zin = seq * p.W.transpose();
  zin.rowwise() += p.b.transpose();
  Vector<S> h = Vector<S>::Zero(H), c = Vector<S>::Zero(H);
  Vector<S> z(4 * H);
  for (Eigen::Index t = 0; t < T; ++t) {
    z.noalias() = zin.row(t).transpose();
    z.noalias() += p.U * h;
    for (Eigen::Index k = 0; k < H; ++k) {
      const S i = sigmoid(z[k]);
      const S f = sigmoid(z[H + k]);
      const S g = std::tanh(z[2 * H + k]);
      const S o = sigmoid(z[3 * H + k]);
      cache.gates(t, k) = i;
      cache.gates(t, H + k) = f;
      cache.gates(t, 2 * H + k) = g;
      cache.gates(t, 3 * H + k) = o;
      c[k] = f * c[k] + i * g;
      const S tc = std::tanh(c[k]);
      cache.c(t, k) = c[k];
      cache.tanh_c(t, k) = tc;
      h[k] = o * tc;
    }
    cache.h.row(t) = h.transpose();
  }
  return cache.h;
}

/// Accumulates parameter gradients into `grad`; returns d(loss)/d(input sequence).
template <typename S>
Matrix<S> lstm_backward(const LstmParams<S>& p, const LstmCache<S>& cache, const Matrix<S>& dh_out,
                        LstmParams<S>& grad) {
  const Eigen::Index T = cache.x.rows(), H = p.hidden();
  Matrix<S> dz_all(T, 4 * H);
  Vector<S> dh_next = Vector<S>::Zero(H), dc_next = Vector<S>::Zero(H);
  Vector<S> dz(4 * H);
  for (Eigen::Index t = T - 1; t >= 0; --t) {
    for (Eigen::Index k = 0; k < H; ++k) {
      const S i = cache.gates(t, k), f = cache.gates(t, H + k);
      const S g = cache.gates(t, 2 * H + k), o = cache.gates(t, 3 * H + k);
      const S tc = cache.tanh_c(t, k);
      const S c_prev = t > 0 ? cache.c(t - 1, k) : S(0);
      const S dh = dh_out(t, k) + dh_next[k];
      const S dc = dh * o * (S(1) - tc * tc) + dc_next[k];
      dz[k] = dc * g * i * (S(1) - i);
      dz[H + k] = dc * c_prev * f * (S(1) - f);
      dz[2 * H + k] = dc * i * (S(1) - g * g);
      dz[3 * H + k] = dh * tc * o * (S(1) - o);
      dc_next[k] = dc * f;
    }
    dz_all.row(t) = dz.transpose();
    dh_next.noalias() = p.U.transpose() * dz;
  }
  grad.W.noalias() += dz_all.transpose() * cache.x;
  if (T > 1) grad.U.noalias() += dz_all.bottomRows(T - 1).transpose() * cache.h.topRows(T - 1);
  grad.b.noalias() += dz_all.colwise().sum().transpose();
  return dz_all * p.W;
}

// ---- BiLSTM ---------------------------------------------------------------------------

template <typename S>
struct BiLstmCache {
  LstmCache<S> fwd;
  LstmCache<S> bwd;  // over the reversed sequence
};

/// Rows are [forward h_t || backward h_t]; both directions start from the zero state.
template <typename S>
Matrix<S> bilstm_forward(const BiLstmParams<S>& p, const Matrix<S>& seq, BiLstmCache<S>& cache) {
  if (seq.rows() == 0) throw DimensionError("bilstm: empty sequence");
  const Eigen::Index T = seq.rows(), H = p.hidden();
  Matrix<S> out(T, 2 * H);
  out.leftCols(H) = lstm_forward(p.fwd, seq, cache.fwd);
  const Matrix<S> reversed = seq.colwise().reverse();
  out.rightCols(H) = lstm_forward(p.bwd, reversed, cache.bwd).colwise().reverse();
  return out;
}

template <typename S>
Matrix<S> bilstm_backward(const BiLstmParams<S>& p, const BiLstmCache<S>& cache, const Matrix<S>& dout,
                          BiLstmParams<S>& grad) {
  const Eigen::Index H = p.hidden();
  Matrix<S> dx = lstm_backward(p.fwd, cache.fwd, Matrix<S>(dout.leftCols(H)), grad.fwd);
  const Matrix<S> dback = dout.rightCols(H).colwise().reverse();
  dx += lstm_backward(p.bwd, cache.bwd, dback, grad.bwd).colwise().reverse();
  return dx;
}

// ---- Dense --------------------------------------------------------------------------

template <typename S>
struct DenseCache {
  Vector<S> x;
  Vector<S> y;
};

template <typename S>
Vector<S> dense_forward(const DenseParams<S>& p, const Vector<S>& x, DenseCache<S>& cache) {
  require(x.size() == p.W.cols(), "dense: input width " + std::to_string(x.size()) + " != " +
                                      std::to_string(p.W.cols()));
  cache.x = x;
  Vector<S> y = p.W * x + p.b;
  if (p.activation == Activation::Relu) y = y.cwiseMax(S(0));
  cache.y = y;
  return y;
}

template <typename S>
Vector<S> dense_backward(const DenseParams<S>& p, const DenseCache<S>& cache, const Vector<S>& dy,
                         DenseParams<S>* grad) {
  Vector<S> dpre = dy;
  if (p.activation == Activation::Relu)
    for (Eigen::Index k = 0; k < dpre.size(); ++k)
      if (cache.y[k] <= S(0)) dpre[k] = S(0);
  if (grad) {
    grad->W.noalias() += dpre * cache.x.transpose();
    grad->b += dpre;
  }
  return p.W.transpose() * dpre;
}

// ---- Softmax cross-entropy -------------------------------------------------------------

template <typename S>
struct SoftmaxXent {
  S loss;
  Vector<S> probs;
  Vector<S> dlogits;
};

// std::exp rather than Eigen's packet exp: the latter clamps large negative inputs, so a
// saturated class never reaches exactly zero probability.
template <typename S>
Vector<S> exp_of(const Vector<S>& v) {
  return v.unaryExpr([](S z) { return std::exp(z); });
}

template <typename S>
Vector<S> softmax(const Vector<S>& logits) {
  const Vector<S> e = exp_of(Vector<S>(logits.array() - logits.maxCoeff()));
  return e / e.sum();
}

template <typename S>
SoftmaxXent<S> softmax_xent(const Vector<S>& logits, int gold) {
  if (gold < 0 || gold >= logits.size())
    throw DimensionError("softmax_xent: gold class " + std::to_string(gold) + " outside [0, " +
                         std::to_string(logits.size()) + ")");
  const S shift = logits.maxCoeff();
  const Vector<S> shifted = logits.array() - shift;
  const S log_z = std::log(exp_of(shifted).sum());
  SoftmaxXent<S> r;
  r.probs = exp_of(Vector<S>(shifted.array() - log_z));
  r.loss = log_z - shifted[gold];
  r.dlogits = r.probs;
  r.dlogits[gold] -= S(1);
  return r;
}

// ---- Optimizer --------------------------------------------------------------------------

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected first/second moment update over a fixed list of tensors.
template <typename S>
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  const AdamConfig& config() const { return cfg_; }
  std::int64_t step_count() const { return t_; }
  const std::vector<Vector<S>>& first_moments() const { return m_; }
  const std::vector<Vector<S>>& second_moments() const { return v_; }

  void step(const TensorViews<S>& params, const TensorViews<S>& grads) {
    require(params.size() == grads.size(), "adam: parameter/gradient list length mismatch");
    if (m_.empty()) {
      for (const auto& p : params) {
        m_.push_back(Vector<S>::Zero(static_cast<Eigen::Index>(p.data.size())));
        v_.push_back(Vector<S>::Zero(static_cast<Eigen::Index>(p.data.size())));
      }
    }
    require(m_.size() == params.size(), "adam: tensor list changed between steps");
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    const S b1 = static_cast<S>(cfg_.beta1), b2 = static_cast<S>(cfg_.beta2);
    for (std::size_t k = 0; k < params.size(); ++k) {
      auto& p = params[k].data;
      const auto& g = grads[k].data;
      require(p.size() == g.size() && static_cast<Eigen::Index>(p.size()) == m_[k].size(),
              "adam: shape mismatch for " + params[k].name);
      for (std::size_t j = 0; j < p.size(); ++j) {
        auto& m = m_[k][static_cast<Eigen::Index>(j)];
        auto& v = v_[k][static_cast<Eigen::Index>(j)];
        m = b1 * m + (S(1) - b1) * g[j];
        v = b2 * v + (S(1) - b2) * g[j] * g[j];
        const double mhat = static_cast<double>(m) / c1;
        const double vhat = static_cast<double>(v) / c2;
        p[j] -= static_cast<S>(cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps));
      }
    }
  }

 private:
  AdamConfig cfg_;
  std::int64_t t_ = 0;
  std::vector<Vector<S>> m_;
  std::vector<Vector<S>> v_;
};

// ---- Gradient utilities ----------------------------------------------------------------

template <typename S>
double global_norm(const TensorViews<S>& grads) {
  double sq = 0.0;
  for (const auto& g : grads)
    for (S v : g.data) sq += static_cast<double>(v) * static_cast<double>(v);
  return std::sqrt(sq);
}

/// Rescales so the global norm is at most `max_norm`. Returns the norm after clipping.
template <typename S>
double clip_global_norm(const TensorViews<S>& grads, double max_norm) {
  const double norm = global_norm(grads);
  if (norm <= max_norm || norm == 0.0) return norm;
  const S scale = static_cast<S>(max_norm / norm);
  for (const auto& g : grads)
    for (S& v : g.data) v *= scale;
  return global_norm(grads);
}

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t checked = 0;
};

/// |a - n| / max(|a|, |n|, 1e-8)
inline double relative_error(double a, double n) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-8});
}

/// Central differences of `loss` against every entry of `params`, compared with `analytic`
/// (same order and shapes). `loss` must read the current parameter values. The perturbed
/// parameters may live in a wider type than the analytic gradients.
template <typename P, typename LossFn>
GradCheckResult grad_check(const TensorViews<P>& params, const TensorViews<double>& analytic, LossFn&& loss,
                           double eps = 1e-5) {
  require(params.size() == analytic.size(), "grad_check: parameter/gradient list mismatch");
  auto eval = [&]() {
    const P l = loss();
    if (!std::isfinite(static_cast<double>(l))) throw NumericalError("grad_check: non-finite loss");
    return l;
  };
  eval();
  GradCheckResult r;
  const P step = static_cast<P>(eps);
  for (std::size_t k = 0; k < params.size(); ++k) {
    require(params[k].name == analytic[k].name && params[k].data.size() == analytic[k].data.size(),
            "grad_check: shape mismatch for " + params[k].name);
    for (std::size_t j = 0; j < params[k].data.size(); ++j) {
      P& w = params[k].data[j];
      const P saved = w;
      w = saved + step;
      const P up = eval();
      w = saved - step;
      const P down = eval();
      w = saved;
      const double numeric = static_cast<double>((up - down) / (2 * step));
      const double a = analytic[k].data[j];
      const double err = relative_error(a, numeric);
      ++r.checked;
      if (r.worst_parameter.empty() || err > r.max_relative_error) {
        r.max_relative_error = err;
        r.worst_parameter = params[k].name;
        r.worst_index = j;
        r.analytic = a;
        r.numeric = numeric;
      }
    }
  }
  return r;
}

}  // namespace serc::nn

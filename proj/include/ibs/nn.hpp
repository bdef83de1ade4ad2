#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "ibs/errors.hpp"
#include "ibs/random.hpp"

namespace ibs::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class Head { softmax, linear };

inline const char* to_string(Head h) { return h == Head::softmax ? "softmax" : "linear"; }

/// Column-wise softmax with max-shift; each column of `z` is one sample.
inline Matrix softmax_columns(const Matrix& z) {
  Matrix out(z.rows(), z.cols());
  for (Eigen::Index c = 0; c < z.cols(); ++c) {
    const double m = z.col(c).maxCoeff();
    out.col(c) = (z.col(c).array() - m).exp().matrix();
    out.col(c) /= out.col(c).sum();
  }
  return out;
}

/// Same shapes as the network parameters; used for gradients and Adam moments.
struct Gradients {
  std::vector<Matrix> weights;
  std::vector<Vector> biases;

  void set_zero() {
    for (auto& w : weights) w.setZero();
    for (auto& b : biases) b.setZero();
  }
  bool all_finite() const {
    for (const auto& w : weights)
      if (!w.allFinite()) return false;
    for (const auto& b : biases)
      if (!b.allFinite()) return false;
    return true;
  }
};

class Mlp;

/// Activations kept by forward() for the matching backward() call.
struct ForwardCache {
  const Mlp* owner = nullptr;
  std::uint64_t version = 0;
  std::vector<Matrix> inputs;  // input to each affine layer
  std::vector<Matrix> pre;     // pre-activation of each layer
  Matrix output;
};

/// Fully connected network: ReLU hidden layers, softmax or identity head.
/// Weights are stored out x in; inputs are batched column-wise.
class Mlp {
 public:
  Mlp() = default;

  Mlp(std::vector<int> widths, Head head) : widths_(std::move(widths)), head_(head) {
    if (widths_.size() < 2) throw ContractViolation("Mlp: need at least input and output widths");
    for (int w : widths_)
      if (w <= 0) throw ContractViolation("Mlp: widths must be positive");
    for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
      weights_.emplace_back(Matrix::Zero(widths_[l + 1], widths_[l]));
      biases_.emplace_back(Vector::Zero(widths_[l + 1]));
    }
  }

  /// Uniform fan-in initialization, U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
  void initialize(Rng& rng) {
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(widths_[l]));
      std::uniform_real_distribution<double> u(-bound, bound);
      for (Eigen::Index i = 0; i < weights_[l].size(); ++i) weights_[l].data()[i] = u(rng);
      for (Eigen::Index i = 0; i < biases_[l].size(); ++i) biases_[l][i] = u(rng);
    }
    touch();
  }

  int input_width() const { return widths_.front(); }
  int output_width() const { return widths_.back(); }
  const std::vector<int>& widths() const { return widths_; }
  Head head() const { return head_; }
  std::size_t n_layers() const { return weights_.size(); }

  std::vector<Matrix>& weights() { return weights_; }
  std::vector<Vector>& biases() { return biases_; }
  const std::vector<Matrix>& weights() const { return weights_; }
  const std::vector<Vector>& biases() const { return biases_; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < weights_.size(); ++l) n += weights_[l].size() + biases_[l].size();
    return n;
  }

  /// Parameter edits made through weights()/biases() must call touch() so
  /// that caches from earlier forward passes are recognised as stale.
  void touch() { ++version_; }
  std::uint64_t version() const { return version_; }

  Gradients zeros_like() const {
    Gradients g;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      g.weights.emplace_back(Matrix::Zero(weights_[l].rows(), weights_[l].cols()));
      g.biases.emplace_back(Vector::Zero(biases_[l].size()));
    }
    return g;
  }

  Matrix forward(const Matrix& x, ForwardCache* cache = nullptr) const {
    if (x.rows() != input_width()) {
      throw ContractViolation("Mlp::forward: input has " + std::to_string(x.rows()) + " rows, expected " +
                              std::to_string(input_width()));
    }
    if (cache != nullptr) {
      cache->owner = this;
      cache->version = version_;
      cache->inputs.clear();
      cache->pre.clear();
    }
    Matrix a = x;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      Matrix z = weights_[l] * a;
      z.colwise() += biases_[l];
      const bool last = l + 1 == weights_.size();
      if (cache != nullptr) {
        cache->inputs.push_back(std::move(a));
        cache->pre.push_back(z);
      }
      if (!last) {
        a = z.cwiseMax(0.0);
      } else {
        a = head_ == Head::softmax ? softmax_columns(z) : std::move(z);
      }
    }
    if (cache != nullptr) cache->output = a;
    return a;
  }

  Vector forward_one(const Vector& x) const { return forward(Matrix(x)).col(0); }

  /// Reverse-mode gradients of a scalar loss L given dL/dy (same shape as the
  /// forward output). The gradients are summed over the batch columns.
  Gradients backward(const ForwardCache& cache, const Matrix& upstream) const {
    if (cache.owner != this || cache.version != version_ || cache.pre.size() != weights_.size()) {
      throw ContractViolation("Mlp::backward: cache does not belong to the current parameters");
    }
    if (upstream.rows() != cache.output.rows() || upstream.cols() != cache.output.cols()) {
      throw ContractViolation("Mlp::backward: upstream shape mismatch");
    }
    Gradients g = zeros_like();
    Matrix delta;
    if (head_ == Head::softmax) {
      // dL/dz = y * (g - <g, y>) per column.
      const Matrix& y = cache.output;
      const Eigen::RowVectorXd dot = (upstream.array() * y.array()).colwise().sum();
      delta = (y.array() * (upstream.array().rowwise() - dot.array())).matrix();
    } else {
      delta = upstream;
    }
    for (std::size_t l = weights_.size(); l-- > 0;) {
      g.weights[l].noalias() = delta * cache.inputs[l].transpose();
      g.biases[l] = delta.rowwise().sum();
      if (l > 0) {
        Matrix back = weights_[l].transpose() * delta;
        delta = (back.array() * (cache.pre[l - 1].array() > 0.0).cast<double>()).matrix();
      }
    }
    return g;
  }

  /// target <- (1 - rate) * target + rate * source, elementwise.
  void soft_update_from(const Mlp& source, double rate) {
    check_same_shape(source);
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      weights_[l] = (1.0 - rate) * weights_[l] + rate * source.weights_[l];
      biases_[l] = (1.0 - rate) * biases_[l] + rate * source.biases_[l];
    }
    touch();
  }

  void copy_parameters_from(const Mlp& source) {
    check_same_shape(source);
    weights_ = source.weights_;
    biases_ = source.biases_;
    touch();
  }

  void check_same_shape(const Mlp& other) const {
    if (other.widths_ != widths_ || other.head_ != head_) throw ContractViolation("Mlp: architecture mismatch");
  }

  void save(std::ostream& os) const;
  static Mlp load(std::istream& is);

 private:
  std::vector<int> widths_;
  Head head_ = Head::linear;
  std::vector<Matrix> weights_;
  std::vector<Vector> biases_;
  std::uint64_t version_ = 0;
};

struct AdamState {
  Gradients m;
  Gradients v;
  std::int64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static AdamState for_network(const Mlp& net) {
    AdamState s;
    s.m = net.zeros_like();
    s.v = net.zeros_like();
    return s;
  }
};

namespace detail {
template <class P, class G>
void adam_apply(P& param, const G& grad, G& m, G& v, double lr, double b1, double b2, double eps, double c1, double c2) {
  m = b1 * m + (1.0 - b1) * grad;
  v = b2 * v + (1.0 - b2) * grad.cwiseProduct(grad);
  param.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
}
}  // namespace detail

/// Bias-corrected Adam. Rejects the whole step if any gradient is non-finite.
inline void adam_step(Mlp& net, const Gradients& grads, AdamState& state, double lr) {
  if (grads.weights.size() != net.n_layers() || state.m.weights.size() != net.n_layers()) {
    throw ContractViolation("adam_step: shape mismatch");
  }
  if (!grads.all_finite()) throw NumericalError("adam_step: non-finite gradient, update rejected");
  ++state.step;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t l = 0; l < net.n_layers(); ++l) {
    detail::adam_apply(net.weights()[l], grads.weights[l], state.m.weights[l], state.v.weights[l], lr, state.beta1,
                       state.beta2, state.eps, c1, c2);
    detail::adam_apply(net.biases()[l], grads.biases[l], state.m.biases[l], state.v.biases[l], lr, state.beta1,
                       state.beta2, state.eps, c1, c2);
  }
  net.touch();
}

/// Adam on a single scalar parameter (used for the log entropy coefficient).
struct ScalarAdam {
  double m = 0.0;
  double v = 0.0;
  std::int64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  void apply(double& param, double grad, double lr) {
    if (!std::isfinite(grad)) throw NumericalError("ScalarAdam: non-finite gradient, update rejected");
    ++step;
    m = beta1 * m + (1.0 - beta1) * grad;
    v = beta2 * v + (1.0 - beta2) * grad * grad;
    const double mh = m / (1.0 - std::pow(beta1, static_cast<double>(step)));
    const double vh = v / (1.0 - std::pow(beta2, static_cast<double>(step)));
    param -= lr * mh / (std::sqrt(vh) + eps);
  }
};

// ---- finite-difference verification ----

/// Scalar loss of the network output with its gradient dL/dy.
struct OutputLoss {
  std::function<double(const Matrix&)> value;
  std::function<Matrix(const Matrix&)> grad;
};

/// Loss sum(c .* y) for a fixed coefficient matrix c.
inline OutputLoss linear_output_loss(Matrix coeff) {
  return {[coeff](const Matrix& y) { return (coeff.array() * y.array()).sum(); },
          [coeff](const Matrix&) { return coeff; }};
}

struct FiniteDiffReport {
  bool pass = false;
  double max_rel_error = 0.0;
  int probes = 0;
  int kinks_skipped = 0;  // probes redrawn because a ReLU changed state within +-h
};

/// True when some hidden pre-activation has a different sign in `a` and `b`.
inline bool relu_state_differs(const ForwardCache& a, const ForwardCache& b) {
  for (std::size_t l = 0; l + 1 < a.pre.size(); ++l)
    if (((a.pre[l].array() > 0.0) != (b.pre[l].array() > 0.0)).any()) return true;
  return false;
}

/// Relative error with a magnitude floor so that vanishing partials compare absolutely.
inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// Central differences (step h) on `n_probes` randomly chosen parameters.
/// When `analytic` is supplied it is checked instead of a fresh backward pass.
/// A probe whose +-h evaluations straddle a ReLU kink has no derivative to
/// compare against, so it is redrawn (at most 10 * n_probes times in total).
inline FiniteDiffReport finite_diff_check(Mlp net, const Matrix& x, const OutputLoss& loss, double tol, int n_probes,
                                          Rng& rng, const Gradients* analytic = nullptr, double h = 1e-5) {
  Gradients computed;
  if (analytic == nullptr) {
    ForwardCache cache;
    const Matrix y = net.forward(x, &cache);
    computed = net.backward(cache, loss.grad(y));
    analytic = &computed;
  }
  std::uniform_int_distribution<std::size_t> pick_layer(0, net.n_layers() - 1);
  FiniteDiffReport rep;
  while (rep.probes < n_probes) {
    const std::size_t l = pick_layer(rng);
    const bool bias = uniform01(rng) < 0.25;
    double* param;
    double a;
    if (bias) {
      std::uniform_int_distribution<Eigen::Index> pick(0, net.biases()[l].size() - 1);
      const Eigen::Index i = pick(rng);
      param = &net.biases()[l][i];
      a = analytic->biases[l][i];
    } else {
      std::uniform_int_distribution<Eigen::Index> pick(0, net.weights()[l].size() - 1);
      const Eigen::Index i = pick(rng);
      param = net.weights()[l].data() + i;
      a = analytic->weights[l].data()[i];
    }
    const double saved = *param;
    ForwardCache up_cache, down_cache;
    *param = saved + h;
    net.touch();
    const double up = loss.value(net.forward(x, &up_cache));
    *param = saved - h;
    net.touch();
    const double down = loss.value(net.forward(x, &down_cache));
    *param = saved;
    net.touch();
    if (relu_state_differs(up_cache, down_cache)) {
      if (++rep.kinks_skipped > 10 * n_probes) break;
      continue;
    }
    const double numeric = (up - down) / (2.0 * h);
    rep.max_rel_error = std::max(rep.max_rel_error, relative_error(a, numeric));
    ++rep.probes;
  }
  rep.pass = rep.probes == n_probes && rep.max_rel_error < tol;
  return rep;
}

// ---- checkpoint text format ----
// Header line "ibs-mlp 1", then head, widths, and every parameter as a C99
// hexadecimal float so that save -> load -> save is byte-identical.

inline std::string hexfloat(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%a", v);
  return buf;
}

inline void Mlp::save(std::ostream& os) const {
  os << "ibs-mlp 1\n";
  os << "head " << to_string(head_) << "\n";
  os << "widths " << widths_.size();
  for (int w : widths_) os << ' ' << w;
  os << "\n";
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    os << "W" << l;
    for (Eigen::Index i = 0; i < weights_[l].size(); ++i) os << ' ' << hexfloat(weights_[l].data()[i]);
    os << "\nb" << l;
    for (Eigen::Index i = 0; i < biases_[l].size(); ++i) os << ' ' << hexfloat(biases_[l][i]);
    os << "\n";
  }
}

inline Mlp Mlp::load(std::istream& is) {
  auto fail = [](const std::string& what) { return CheckpointError("Mlp::load: " + what); };
  std::string tag;
  int version = 0;
  if (!(is >> tag >> version) || tag != "ibs-mlp" || version != 1) throw fail("bad header");
  std::string key, head_name;
  if (!(is >> key >> head_name) || key != "head") throw fail("missing head");
  Head head;
  if (head_name == "softmax") head = Head::softmax;
  else if (head_name == "linear") head = Head::linear;
  else throw fail("unknown head '" + head_name + "'");
  std::size_t n = 0;
  if (!(is >> key >> n) || key != "widths" || n < 2 || n > 64) throw fail("bad widths line");
  std::vector<int> widths(n);
  for (auto& w : widths) {
    if (!(is >> w) || w <= 0) throw fail("bad width");
  }
  Mlp net(widths, head);
  auto read_values = [&](const std::string& expect, double* dst, Eigen::Index count) {
    if (!(is >> key) || key != expect) throw fail("expected section " + expect);
    std::string tok;
    for (Eigen::Index i = 0; i < count; ++i) {
      if (!(is >> tok)) throw fail("truncated section " + expect);
      char* end = nullptr;
      dst[i] = std::strtod(tok.c_str(), &end);
      if (end == tok.c_str() || *end != '\0') throw fail("bad number in " + expect);
    }
  };
  for (std::size_t l = 0; l < net.n_layers(); ++l) {
    read_values("W" + std::to_string(l), net.weights_[l].data(), net.weights_[l].size());
    read_values("b" + std::to_string(l), net.biases_[l].data(), net.biases_[l].size());
  }
  net.touch();
  return net;
}

}  // namespace ibs::nn

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "ibs/errors.hpp"
#include "ibs/nn.hpp"
#include "ibs/random.hpp"

namespace ibs::sac {

using nn::Matrix;
using nn::Vector;

struct Transition {
  std::vector<double> s;
  int a = 0;
  double r = 0.0;
  std::vector<double> s_next;
  bool done = false;
};

/// Column-major mini-batch: one sample per column.
struct Batch {
  Matrix s;
  std::vector<int> a;
  Vector r;
  Matrix s_next;
  Vector done;

  Eigen::Index size() const { return s.cols(); }
};

/// Fixed-capacity ring of transitions with uniform sampling (with replacement).
class ReplayBuffer {
 public:
  ReplayBuffer(std::size_t capacity, int obs_dim) : capacity_(capacity), obs_dim_(obs_dim) {
    if (capacity == 0 || obs_dim <= 0) throw ContractViolation("ReplayBuffer: capacity and obs_dim must be > 0");
  }

  void push(std::span<const double> s, int a, double r, std::span<const double> s_next, bool done) {
    if (s.size() != static_cast<std::size_t>(obs_dim_) || s_next.size() != static_cast<std::size_t>(obs_dim_)) {
      throw ContractViolation("ReplayBuffer::push: observation width mismatch");
    }
    const std::size_t d = static_cast<std::size_t>(obs_dim_);
    if (size_ < capacity_) {
      states_.insert(states_.end(), s.begin(), s.end());
      next_states_.insert(next_states_.end(), s_next.begin(), s_next.end());
      actions_.push_back(a);
      rewards_.push_back(r);
      dones_.push_back(done ? 1.0 : 0.0);
      ++size_;
    } else {
      std::copy(s.begin(), s.end(), states_.begin() + static_cast<std::ptrdiff_t>(head_ * d));
      std::copy(s_next.begin(), s_next.end(), next_states_.begin() + static_cast<std::ptrdiff_t>(head_ * d));
      actions_[head_] = a;
      rewards_[head_] = r;
      dones_[head_] = done ? 1.0 : 0.0;
    }
    head_ = (head_ + 1) % capacity_;
    ++total_pushed_;
  }

  void push(const Transition& t) { push(t.s, t.a, t.r, t.s_next, t.done); }

  std::size_t size() const { return size_; }
  std::size_t capacity() const { return capacity_; }
  std::uint64_t total_pushed() const { return total_pushed_; }

  /// Physical slot of the i-th oldest stored transition.
  std::size_t slot_of(std::size_t i) const { return size_ < capacity_ ? i : (head_ + i) % capacity_; }

  Transition at_slot(std::size_t slot) const {
    if (slot >= size_) throw ContractViolation("ReplayBuffer::at_slot: out of range");
    const std::size_t d = static_cast<std::size_t>(obs_dim_);
    Transition t;
    t.s.assign(states_.begin() + static_cast<std::ptrdiff_t>(slot * d),
               states_.begin() + static_cast<std::ptrdiff_t>((slot + 1) * d));
    t.s_next.assign(next_states_.begin() + static_cast<std::ptrdiff_t>(slot * d),
                    next_states_.begin() + static_cast<std::ptrdiff_t>((slot + 1) * d));
    t.a = actions_[slot];
    t.r = rewards_[slot];
    t.done = dones_[slot] != 0.0;
    return t;
  }

  Transition oldest(std::size_t i = 0) const { return at_slot(slot_of(i)); }

  std::vector<std::size_t> sample_slots(std::size_t n, Rng& rng) const {
    if (size_ < n || n == 0) {
      throw ContractViolation("ReplayBuffer::sample: " + std::to_string(size_) + " stored, " + std::to_string(n) +
                              " requested");
    }
    std::uniform_int_distribution<std::size_t> pick(0, size_ - 1);
    std::vector<std::size_t> slots(n);
    for (auto& s : slots) s = pick(rng);
    return slots;
  }

  Batch gather(std::span<const std::size_t> slots) const {
    const auto n = static_cast<Eigen::Index>(slots.size());
    Batch b;
    b.s.resize(obs_dim_, n);
    b.s_next.resize(obs_dim_, n);
    b.a.resize(slots.size());
    b.r.resize(n);
    b.done.resize(n);
    for (Eigen::Index j = 0; j < n; ++j) {
      const std::size_t slot = slots[static_cast<std::size_t>(j)];
      for (int i = 0; i < obs_dim_; ++i) {
        b.s(i, j) = states_[slot * static_cast<std::size_t>(obs_dim_) + static_cast<std::size_t>(i)];
        b.s_next(i, j) = next_states_[slot * static_cast<std::size_t>(obs_dim_) + static_cast<std::size_t>(i)];
      }
      b.a[static_cast<std::size_t>(j)] = actions_[slot];
      b.r[j] = rewards_[slot];
      b.done[j] = dones_[slot];
    }
    return b;
  }

  Batch sample(std::size_t n, Rng& rng) const { return gather(sample_slots(n, rng)); }

 private:
  std::size_t capacity_;
  int obs_dim_;
  std::size_t size_ = 0;
  std::size_t head_ = 0;
  std::uint64_t total_pushed_ = 0;
  std::vector<double> states_;
  std::vector<double> next_states_;
  std::vector<int> actions_;
  std::vector<double> rewards_;
  std::vector<double> dones_;
};

struct SacConfig {
  int obs_dim = 8;
  int n_actions = 18;
  std::vector<int> hidden{400, 300, 200, 100};
  double gamma = 0.9;
  double soft_update_rate = 0.005;
  double learning_rate = 1e-4;
  std::size_t batch_size = 1024;
  std::size_t replay_capacity = 1000000;
  double init_lambda = 0.2;
  double target_entropy_scale = 0.6;

  double target_entropy() const { return target_entropy_scale * std::log(static_cast<double>(n_actions)); }

  std::vector<int> widths() const {
    std::vector<int> w{obs_dim};
    w.insert(w.end(), hidden.begin(), hidden.end());
    w.push_back(n_actions);
    return w;
  }
};

struct LossReport {
  double critic1 = 0.0;
  double critic2 = 0.0;
  double actor = 0.0;
  double lambda = 0.0;
  double entropy = 0.0;
};

enum class ActionMode { sample, greedy };

namespace detail {
inline double safe_log(double p) { return std::log(std::max(p, 1e-300)); }
}  // namespace detail

/// Expected soft value sum_a pi(a) * (q(a) - lambda * log pi(a)); zero-probability
/// actions contribute nothing (pi log pi -> 0).
inline double soft_state_value(const Vector& probs, const Vector& q_min, double lambda) {
  if (probs.size() != q_min.size()) throw ContractViolation("soft_state_value: shape mismatch");
  double v = 0.0;
  for (Eigen::Index a = 0; a < probs.size(); ++a) {
    const double p = probs[a];
    if (p <= 0.0) continue;
    v += p * (q_min[a] - lambda * std::log(p));
  }
  return v;
}

inline double entropy(const Vector& probs) {
  double h = 0.0;
  for (Eigen::Index a = 0; a < probs.size(); ++a)
    if (probs[a] > 0.0) h -= probs[a] * std::log(probs[a]);
  return h;
}

/// Ties resolve to the lowest index.
inline int argmax_lowest(const Vector& v) {
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return static_cast<int>(best);
}

inline int sample_categorical(const Vector& probs, Rng& rng) {
  const double u = uniform01(rng);
  double acc = 0.0;
  for (Eigen::Index i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (u < acc) return static_cast<int>(i);
  }
  return static_cast<int>(probs.size() - 1);
}

/// Discrete-action soft actor-critic with twin critics, Polyak-averaged target
/// critics and a log-parameterised, auto-tuned entropy coefficient.
class SacAgent {
 public:
  SacAgent(SacConfig cfg, std::uint64_t seed)
      : cfg_(std::move(cfg)),
        init_rng_(seed),
        sample_rng_(splitmix64(seed ^ 0x5a5a5a5a5a5a5a5aULL)),
        actor_(cfg_.widths(), nn::Head::softmax),
        critic1_(cfg_.widths(), nn::Head::linear),
        critic2_(cfg_.widths(), nn::Head::linear),
        target1_(cfg_.widths(), nn::Head::linear),
        target2_(cfg_.widths(), nn::Head::linear),
        replay_(cfg_.replay_capacity, cfg_.obs_dim),
        log_lambda_(std::log(cfg_.init_lambda)) {
    if (!(cfg_.gamma >= 0.0 && cfg_.gamma < 1.0)) throw ContractViolation("SacAgent: gamma must be in [0, 1)");
    if (!(cfg_.init_lambda > 0.0)) throw ContractViolation("SacAgent: init_lambda must be > 0");
    actor_.initialize(init_rng_);
    critic1_.initialize(init_rng_);
    critic2_.initialize(init_rng_);
    target1_.copy_parameters_from(critic1_);
    target2_.copy_parameters_from(critic2_);
    actor_opt_ = nn::AdamState::for_network(actor_);
    critic1_opt_ = nn::AdamState::for_network(critic1_);
    critic2_opt_ = nn::AdamState::for_network(critic2_);
  }

  const SacConfig& config() const { return cfg_; }
  double lambda() const { return std::exp(log_lambda_); }
  double log_lambda() const { return log_lambda_; }
  void set_lambda(double lambda) { log_lambda_ = std::log(lambda); }

  nn::Mlp& actor() { return actor_; }
  nn::Mlp& critic1() { return critic1_; }
  nn::Mlp& critic2() { return critic2_; }
  nn::Mlp& target1() { return target1_; }
  nn::Mlp& target2() { return target2_; }
  const nn::Mlp& actor() const { return actor_; }
  ReplayBuffer& replay() { return replay_; }
  const ReplayBuffer& replay() const { return replay_; }
  std::int64_t updates() const { return updates_; }

  Vector policy(std::span<const double> obs) const {
    Vector x = Eigen::Map<const Vector>(obs.data(), static_cast<Eigen::Index>(obs.size()));
    return actor_.forward_one(x);
  }

  int select_action(std::span<const double> obs, ActionMode mode) {
    const Vector p = policy(obs);
    return mode == ActionMode::greedy ? argmax_lowest(p) : sample_categorical(p, sample_rng_);
  }

  void store(std::span<const double> s, int a, double r, std::span<const double> s_next, bool done) {
    if (a < 0 || a >= cfg_.n_actions) throw ContractViolation("SacAgent::store: action out of range");
    replay_.push(s, a, r, s_next, done);
  }

  /// y = r + gamma * (1 - done) * V_soft(s'), V_soft from the target critics' minimum.
  Vector critic_target(const Batch& b) const {
    const Matrix probs = actor_.forward(b.s_next);
    const Matrix q1 = target1_.forward(b.s_next);
    const Matrix q2 = target2_.forward(b.s_next);
    const Matrix q_min = q1.cwiseMin(q2);
    const double lam = lambda();
    Vector y(b.size());
    for (Eigen::Index j = 0; j < b.size(); ++j) {
      const double v = soft_state_value(probs.col(j), q_min.col(j), lam);
      y[j] = b.r[j] + cfg_.gamma * (1.0 - b.done[j]) * v;
    }
    return y;
  }

  LossReport update() {
    if (replay_.size() < cfg_.batch_size) {
      throw ContractViolation("SacAgent::update: replay holds " + std::to_string(replay_.size()) +
                              " transitions, batch needs " + std::to_string(cfg_.batch_size));
    }
    return update_on_batch(replay_.sample(cfg_.batch_size, sample_rng_));
  }

  LossReport update_on_batch(const Batch& b) {
    LossReport rep;
    const Vector y = critic_target(b);
    rep.critic1 = regress_critic(critic1_, critic1_opt_, b, y);
    rep.critic2 = regress_critic(critic2_, critic2_opt_, b, y);

    // Actor: minimise E_s sum_a pi(a|s) (lambda log pi(a|s) - min_i Q_i(s, a)).
    const double lam = lambda();
    const auto n = static_cast<double>(b.size());
    nn::ForwardCache cache;
    const Matrix probs = actor_.forward(b.s, &cache);
    const Matrix q_min = critic1_.forward(b.s).cwiseMin(critic2_.forward(b.s));
    Matrix upstream(probs.rows(), probs.cols());
    double actor_loss = 0.0;
    double mean_entropy = 0.0;
    for (Eigen::Index j = 0; j < probs.cols(); ++j) {
      for (Eigen::Index a = 0; a < probs.rows(); ++a) {
        const double p = probs(a, j);
        const double lp = detail::safe_log(p);
        actor_loss += p * (lam * lp - q_min(a, j));
        mean_entropy -= p > 0.0 ? p * lp : 0.0;
        upstream(a, j) = (lam * (lp + 1.0) - q_min(a, j)) / n;
      }
    }
    actor_loss /= n;
    mean_entropy /= n;
    nn::adam_step(actor_, actor_.backward(cache, upstream), actor_opt_, cfg_.learning_rate);

    // Entropy coefficient: d/d(log lambda) of log_lambda * (H - H_target).
    lambda_opt_.apply(log_lambda_, mean_entropy - cfg_.target_entropy(), cfg_.learning_rate);

    target1_.soft_update_from(critic1_, cfg_.soft_update_rate);
    target2_.soft_update_from(critic2_, cfg_.soft_update_rate);
    ++updates_;

    rep.actor = actor_loss;
    rep.entropy = mean_entropy;
    rep.lambda = lambda();
    return rep;
  }

  /// Policy checkpoint: entropy coefficient plus the actor network.
  void save_policy(std::ostream& os) const {
    os << "ibs-sac-policy 1\n";
    os << "log_lambda " << nn::hexfloat(log_lambda_) << "\n";
    actor_.save(os);
  }

  void save_policy(const std::string& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw CheckpointError("cannot open '" + path + "' for writing");
    save_policy(os);
    if (!os) throw CheckpointError("write to '" + path + "' failed");
  }

  void load_policy(std::istream& is) {
    std::string tag, key, value;
    int version = 0;
    if (!(is >> tag >> version) || tag != "ibs-sac-policy" || version != 1) {
      throw CheckpointError("load_policy: bad header");
    }
    if (!(is >> key >> value) || key != "log_lambda") throw CheckpointError("load_policy: missing log_lambda");
    char* end = nullptr;
    const double ll = std::strtod(value.c_str(), &end);
    if (*end != '\0' || !std::isfinite(ll)) throw CheckpointError("load_policy: bad log_lambda");
    nn::Mlp loaded = nn::Mlp::load(is);
    if (loaded.widths() != actor_.widths() || loaded.head() != actor_.head()) {
      throw CheckpointError("load_policy: checkpoint architecture does not match the configured actor");
    }
    actor_.copy_parameters_from(loaded);
    log_lambda_ = ll;
  }

  void load_policy(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw CheckpointError("cannot open checkpoint '" + path + "'");
    load_policy(is);
  }

 private:
  double regress_critic(nn::Mlp& critic, nn::AdamState& opt, const Batch& b, const Vector& y) {
    nn::ForwardCache cache;
    const Matrix q = critic.forward(b.s, &cache);
    Matrix upstream = Matrix::Zero(q.rows(), q.cols());
    const auto n = static_cast<double>(b.size());
    double loss = 0.0;
    for (Eigen::Index j = 0; j < q.cols(); ++j) {
      const int a = b.a[static_cast<std::size_t>(j)];
      const double err = q(a, j) - y[j];
      loss += err * err;
      upstream(a, j) = 2.0 * err / n;
    }
    nn::adam_step(critic, critic.backward(cache, upstream), opt, cfg_.learning_rate);
    return loss / n;
  }

  SacConfig cfg_;
  Rng init_rng_;
  Rng sample_rng_;
  nn::Mlp actor_;
  nn::Mlp critic1_;
  nn::Mlp critic2_;
  nn::Mlp target1_;
  nn::Mlp target2_;
  nn::AdamState actor_opt_;
  nn::AdamState critic1_opt_;
  nn::AdamState critic2_opt_;
  nn::ScalarAdam lambda_opt_;
  ReplayBuffer replay_;
  double log_lambda_;
  std::int64_t updates_ = 0;
};

}  // namespace ibs::sac

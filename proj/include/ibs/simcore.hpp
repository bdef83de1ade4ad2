#pragma once

#include <array>
#include <cmath>
#include <algorithm>
#include <concepts>
#include <cstdint>
#include <deque>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "ibs/channel.hpp"
#include "ibs/deployment.hpp"
#include "ibs/errors.hpp"
#include "ibs/metrics.hpp"
#include "ibs/random.hpp"
#include "ibs/reward.hpp"
#include "ibs/slicing.hpp"
#include "ibs/traffic.hpp"

namespace ibs {

struct TrafficConfig {
  double video_fps = 90.0;
  double haptic_hz = 1000.0;
  std::int64_t video_frame_bits = 0;  // 0: r0_xr / video_fps
  std::int64_t haptic_packet_bits = 512;
  bool jitter_enabled = false;
  double jitter_rel_std = 0.1;
  std::int64_t embb_refill_bits = 0;  // 0: one full-carrier TTI at peak efficiency
};

struct SimConfig {
  int n_ibs = 10;
  int n_embb = 5;
  int total_rbs = 272;
  int rbg_size_rbs = 16;
  double scs_hz = 30e3;
  double tti = 0.5e-3;
  int episode_steps = 10000;
  int warmup_steps = 200;
  double macro_power_dbm = 31.0;
  double ap_power_dbm = 10.0;
  int loss_window_tti = 200;
  double occupancy_cap_frames = 5.0;
  double reward_floor = -10.0;
  DeploymentConfig deployment;
  ChannelParams channel;
  TrafficConfig traffic;
  QosTargets targets;
  SatisfactionRules satisfaction;

  int n_rbg() const { return total_rbs / rbg_size_rbs; }
  int n_actions() const { return n_rbg() + 1; }
  double rbg_bandwidth_hz() const { return rbg_size_rbs * 12 * scs_hz; }

  std::int64_t video_frame_bits() const {
    return traffic.video_frame_bits > 0 ? traffic.video_frame_bits : std::llround(targets.r0_xr / traffic.video_fps);
  }

  std::int64_t embb_refill_bits() const {
    if (traffic.embb_refill_bits > 0) return traffic.embb_refill_bits;
    return static_cast<std::int64_t>(std::ceil(n_rbg() * rbg_bandwidth_hz() * channel.se_max * tti));
  }

  void validate() const {
    if (n_ibs < 1) throw ConfigError("n_ibs must be >= 1");
    if (n_embb < 0) throw ConfigError("n_embb must be >= 0");
    if (rbg_size_rbs < 1 || total_rbs < rbg_size_rbs) throw ConfigError("need 1 <= rbg_size_rbs <= total_rbs");
    if (!(tti > 0.0)) throw ConfigError("tti must be > 0");
    if (episode_steps <= warmup_steps || warmup_steps < 0) throw ConfigError("need 0 <= warmup_steps < episode_steps");
    if (loss_window_tti < 1) throw ConfigError("loss_window_tti must be >= 1");
    if (!(occupancy_cap_frames > 0.0)) throw ConfigError("occupancy_cap_frames must be > 0");
    if (!(traffic.video_fps > 0.0 && traffic.haptic_hz > 0.0)) throw ConfigError("traffic rates must be > 0");
    if (traffic.haptic_packet_bits <= 0) throw ConfigError("haptic_packet_bits must be > 0");
    channel.validate();
    try {
      targets.validate();
    } catch (const std::domain_error& e) {
      throw ConfigError(e.what());
    }
  }
};

inline constexpr std::size_t kObservationSize = 8;
using Observation = std::array<double, kObservationSize>;

namespace obs_index {
inline constexpr std::size_t xr_occupancy = 0;
inline constexpr std::size_t tau_v = 1;
inline constexpr std::size_t tau_h = 2;
inline constexpr std::size_t sync_gap = 3;
inline constexpr std::size_t xr_loss = 4;
inline constexpr std::size_t xr_rate = 5;
inline constexpr std::size_t embb_rate = 6;
inline constexpr std::size_t embb_below_target = 7;
}  // namespace obs_index

/// Per-step bookkeeping exposed for invariant checks and logging.
struct StepDiagnostics {
  SliceSplit split;
  std::vector<int> xr_counts;
  std::vector<int> embb_counts;
  std::vector<std::vector<int>> xr_rbgs;
  std::vector<std::vector<int>> embb_rbgs;
  std::vector<std::int64_t> xr_capacity_bits;
  std::vector<std::int64_t> embb_capacity_bits;
  std::vector<std::int64_t> xr_served_bits;
  std::vector<std::int64_t> embb_served_bits;
  double min_latency = std::numeric_limits<double>::infinity();
  double max_latency = -std::numeric_limits<double>::infinity();
  int xr_dropped = 0;
  int xr_delivered = 0;
};

struct StepOutcome {
  Observation observation{};
  double reward = 0.0;       // clamped full reward
  double base_reward = 0.0;  // clamped sync-blind stand-in
  RewardBreakdown breakdown;
  SliceMetricsWindow window;
  bool done = false;
  StepDiagnostics diag;
};

/// Information an agent may use to pick the XR slice RBG count.
struct DecisionContext {
  const Observation& observation;
  std::int64_t xr_buffer_bits = 0;
  std::int64_t embb_target_load_bits = 0;
  int n_rbg = 0;
};

/// Sync-blind stand-in for the comparison baseline's reward: both slice
/// rate terms plus the XR loss term, no latency or synchronization terms.
inline double base_reward(const SliceMetricsWindow& w, const QosTargets& t) {
  return rate_reward(w.r_bar_xr, t.r0_xr) + rate_reward(w.r_bar_embb, t.r0_embb) + loss_reward(w.rho_bar, t.rho0);
}

/// TTI-stepped downlink environment with one macro cell, eMBB users and IBS
/// (XR) users sharing R RBGs through a two-slice split.
class Environment {
 public:
  struct XrUser {
    PeriodicSource video;
    PeriodicSource haptic;
    FlowBuffer video_buf;
    FlowBuffer haptic_buf;
    double rbg_bits = 0.0;        // per RBG per TTI, orthogonal allocation
    double reuse_rbg_bits = 0.0;  // per RBG per TTI, all XR APs co-channel
  };
  struct EmbbUser {
    FlowBuffer buf;
    EmbbSource source;
    std::uint64_t next_id = 0;
    double rbg_bits = 0.0;
  };
  struct UserAccumulator {
    std::int64_t served_bits = 0;
    std::int64_t delivered = 0;
    std::int64_t dropped = 0;
    double sum_tau_v = 0.0;
    std::int64_t n_tau_v = 0;
    double sum_tau_h = 0.0;
    std::int64_t n_tau_h = 0;
    double sum_tau_hat = 0.0;
  };

  explicit Environment(SimConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.channel.rbg_bandwidth_hz = cfg_.rbg_bandwidth_hz();
    cfg_.validate();
  }

  const SimConfig& config() const { return cfg_; }
  const DeploymentLayout& layout() const { return layout_; }
  const std::vector<XrUser>& xr_users() const { return xr_; }
  const std::vector<EmbbUser>& embb_users() const { return embb_; }
  int step_index() const { return step_; }
  bool is_reset() const { return reset_done_; }

  Observation reset(std::uint64_t seed) {
    rng_.seed(seed);
    layout_ = generate_layout(rng_, cfg_.deployment, cfg_.n_ibs, cfg_.n_embb);
    const ChannelParams& ch = cfg_.channel;
    const int n_rbg = cfg_.n_rbg();
    const double macro_rbg_dbm = power_per_rbg_dbm(cfg_.macro_power_dbm, n_rbg);
    const double ap_rbg_dbm = power_per_rbg_dbm(cfg_.ap_power_dbm, n_rbg);
    auto bits_per_tti = [&](double sinr) { return rbg_rate_bps(spectral_efficiency(sinr, ch), ch) * cfg_.tti; };

    embb_.assign(static_cast<std::size_t>(cfg_.n_embb), EmbbUser{});
    for (std::size_t u = 0; u < embb_.size(); ++u) {
      const LinkState link = make_link(rng_, layout_.macro_bs, layout_.embb_users[u], ch);
      embb_[u].rbg_bits = bits_per_tti(sinr_db(link, macro_rbg_dbm, {}, ch));
      embb_[u].source = EmbbSource{true, cfg_.embb_refill_bits()};
    }

    const std::size_t n = static_cast<std::size_t>(cfg_.n_ibs);
    xr_.assign(n, XrUser{});
    std::vector<LinkState> own(n);
    for (std::size_t u = 0; u < n; ++u) {
      own[u] = make_link(rng_, layout_.ibs_list[u].ap_pos, layout_.ibs_list[u].device_pos, ch);
      xr_[u].rbg_bits = bits_per_tti(sinr_db(own[u], ap_rbg_dbm, {}, ch));
    }
    if (ch.reuse_mode == ReuseMode::xr_full_reuse) {
      for (std::size_t u = 0; u < n; ++u) {
        std::vector<Interferer> intf;
        for (std::size_t j = 0; j < n; ++j) {
          if (j == u) continue;
          intf.push_back({make_link(rng_, layout_.ibs_list[j].ap_pos, layout_.ibs_list[u].device_pos, ch), ap_rbg_dbm});
        }
        xr_[u].reuse_rbg_bits = bits_per_tti(sinr_db(own[u], ap_rbg_dbm, intf, ch));
      }
    }

    std::uniform_real_distribution<double> video_phase(0.0, 1.0 / cfg_.traffic.video_fps);
    std::uniform_real_distribution<double> haptic_phase(0.0, 1.0 / cfg_.traffic.haptic_hz);
    for (std::size_t u = 0; u < n; ++u) {
      auto& x = xr_[u];
      x.video = PeriodicSource{FlowKind::video, cfg_.traffic.video_fps, cfg_.video_frame_bits(), video_phase(rng_),
                               static_cast<int>(u), cfg_.traffic.jitter_enabled, cfg_.traffic.jitter_rel_std};
      x.haptic = PeriodicSource{FlowKind::haptic, cfg_.traffic.haptic_hz, cfg_.traffic.haptic_packet_bits,
                                haptic_phase(rng_), static_cast<int>(u), false, 0.0};
    }

    step_ = 0;
    tau_v_bar_ = 0.0;
    tau_h_bar_ = 0.0;
    loss_window_.clear();
    loss_dropped_ = 0;
    loss_delivered_ = 0;
    window_ = SliceMetricsWindow{};
    embb_below_fraction_ = 0.0;
    xr_acc_.assign(n, UserAccumulator{});
    embb_acc_.assign(embb_.size(), UserAccumulator{});
    reset_done_ = true;
    return observe();
  }

  std::int64_t xr_buffer_bits() const {
    std::int64_t s = 0;
    for (const auto& x : xr_) s += x.video_buf.occupancy_bits() + x.haptic_buf.occupancy_bits();
    return s;
  }

  std::int64_t embb_target_load_bits() const {
    return std::llround(cfg_.n_embb * cfg_.targets.r0_embb * cfg_.tti);
  }

  StepOutcome step(int action) {
    if (!reset_done_) throw ContractViolation("Environment::step: call reset() first");
    if (step_ >= cfg_.episode_steps) throw ContractViolation("Environment::step: episode already finished");
    const int n_rbg = cfg_.n_rbg();
    StepOutcome out;
    StepDiagnostics& d = out.diag;
    d.split = apply_inter_slice(action, n_rbg);

    const double t0 = step_ * cfg_.tti;
    const double t1 = (step_ + 1) * cfg_.tti;
    const double tau_max = cfg_.targets.tau_max;

    // (1) arrivals
    for (auto& x : xr_) {
      for (const auto& p : generate_arrivals(x.video, t0, t1, &rng_)) x.video_buf.push(p);
      for (const auto& p : generate_arrivals(x.haptic, t0, t1)) x.haptic_buf.push(p);
    }
    for (std::size_t u = 0; u < embb_.size(); ++u) {
      auto& e = embb_[u];
      if (auto p = full_buffer_refill(e.buf, e.source, e.next_id, t0, static_cast<int>(u))) {
        e.buf.push(*p);
        ++e.next_id;
      }
    }

    // Packets that cannot complete by t1 within tau_max are discarded before
    // service, so every delivery latency stays within [0, tau_max].
    for (std::size_t u = 0; u < xr_.size(); ++u) {
      const int dv = xr_[u].video_buf.drop_expired(t1, tau_max);
      const int dh = xr_[u].haptic_buf.drop_expired(t1, tau_max);
      d.xr_dropped += dv + dh;
      if (counting()) xr_acc_[u].dropped += dv + dh;
    }

    // (2)-(4) slicing and per-user capacity
    std::vector<std::int64_t> xr_occ(xr_.size()), embb_occ(embb_.size());
    for (std::size_t u = 0; u < xr_.size(); ++u)
      xr_occ[u] = xr_[u].video_buf.occupancy_bits() + xr_[u].haptic_buf.occupancy_bits();
    for (std::size_t u = 0; u < embb_.size(); ++u) embb_occ[u] = embb_[u].buf.occupancy_bits();

    const bool reuse = cfg_.channel.reuse_mode == ReuseMode::xr_full_reuse;
    if (reuse) {
      d.xr_counts.assign(xr_.size(), d.split.n_rbg_xr);
      const RbgRange r = xr_range(d.split);
      std::vector<int> all;
      for (int i = r.begin; i < r.end; ++i) all.push_back(i);
      d.xr_rbgs.assign(xr_.size(), all);
    } else {
      d.xr_counts = intra_slice_allocate(xr_occ, d.split.n_rbg_xr);
      d.xr_rbgs = assign_rbg_indices(d.xr_counts, xr_range(d.split));
    }
    d.embb_counts = intra_slice_allocate(embb_occ, d.split.n_rbg_embb);
    d.embb_rbgs = assign_rbg_indices(d.embb_counts, embb_range(d.split));

    d.xr_capacity_bits.resize(xr_.size());
    d.xr_served_bits.resize(xr_.size());
    for (std::size_t u = 0; u < xr_.size(); ++u) {
      const double per_rbg = reuse ? xr_[u].reuse_rbg_bits : xr_[u].rbg_bits;
      d.xr_capacity_bits[u] = static_cast<std::int64_t>(std::floor(per_rbg * static_cast<double>(d.xr_rbgs[u].size())));
    }
    d.embb_capacity_bits.resize(embb_.size());
    d.embb_served_bits.resize(embb_.size());
    for (std::size_t u = 0; u < embb_.size(); ++u) {
      d.embb_capacity_bits[u] = static_cast<std::int64_t>(std::floor(embb_[u].rbg_bits * static_cast<double>(d.embb_rbgs[u].size())));
    }

    // (5) drain: haptic before video within each XR user's budget
    double sum_v = 0.0, sum_h = 0.0;
    int n_v = 0, n_h = 0;
    for (std::size_t u = 0; u < xr_.size(); ++u) {
      auto& x = xr_[u];
      std::int64_t budget = d.xr_capacity_bits[u];
      const DrainResult hr = x.haptic_buf.drain(budget, t1);
      budget -= hr.bits_used;
      const DrainResult vr = x.video_buf.drain(budget, t1);
      d.xr_served_bits[u] = hr.bits_used + vr.bits_used;
      for (const auto& del : hr.served) {
        sum_h += del.latency;
        ++n_h;
        note_latency(d, del.latency);
      }
      for (const auto& del : vr.served) {
        sum_v += del.latency;
        ++n_v;
        note_latency(d, del.latency);
      }
      const int delivered = static_cast<int>(hr.served.size() + vr.served.size());
      d.xr_delivered += delivered;
      if (counting()) {
        auto& acc = xr_acc_[u];
        acc.served_bits += d.xr_served_bits[u];
        acc.delivered += delivered;
        for (const auto& del : vr.served) acc.sum_tau_v += del.latency;
        for (const auto& del : hr.served) acc.sum_tau_h += del.latency;
        acc.n_tau_v += static_cast<std::int64_t>(vr.served.size());
        acc.n_tau_h += static_cast<std::int64_t>(hr.served.size());
      }
    }
    for (std::size_t u = 0; u < embb_.size(); ++u) {
      const DrainResult r = embb_[u].buf.drain(d.embb_capacity_bits[u], t1);
      d.embb_served_bits[u] = r.bits_used;
      if (counting()) {
        embb_acc_[u].served_bits += r.bits_used;
        embb_acc_[u].delivered += static_cast<std::int64_t>(r.served.size());
      }
    }

    // (6) post-service expiry; a no-op given the pre-service pass, kept for the
    // documented step contract.
    for (std::size_t u = 0; u < xr_.size(); ++u) {
      const int dv = xr_[u].video_buf.drop_expired(t1, tau_max);
      const int dh = xr_[u].haptic_buf.drop_expired(t1, tau_max);
      d.xr_dropped += dv + dh;
      if (counting()) xr_acc_[u].dropped += dv + dh;
    }

    // (7) metric window
    SliceMetricsWindow w;
    double rate_sum = 0.0;
    for (auto b : d.xr_served_bits) rate_sum += static_cast<double>(b) / cfg_.tti;
    w.r_bar_xr = xr_.empty() ? 0.0 : rate_sum / static_cast<double>(xr_.size());
    rate_sum = 0.0;
    int below = 0;
    for (auto b : d.embb_served_bits) {
      const double r = static_cast<double>(b) / cfg_.tti;
      rate_sum += r;
      if (r < cfg_.targets.r0_embb) ++below;
    }
    w.r_bar_embb = embb_.empty() ? 0.0 : rate_sum / static_cast<double>(embb_.size());
    embb_below_fraction_ = embb_.empty() ? 0.0 : static_cast<double>(below) / static_cast<double>(embb_.size());

    if (n_v > 0) tau_v_bar_ = sum_v / n_v;
    if (n_h > 0) tau_h_bar_ = sum_h / n_h;
    w.tau_v_bar = tau_v_bar_;
    w.tau_h_bar = tau_h_bar_;

    double age_sum = 0.0;
    std::int64_t queued_h = 0;
    for (std::size_t u = 0; u < xr_.size(); ++u) {
      const auto& hb = xr_[u].haptic_buf;
      const double user_age = hb.mean_queued_age(t1);
      age_sum += user_age * static_cast<double>(hb.queued());
      queued_h += hb.queued();
      if (counting()) xr_acc_[u].sum_tau_hat += user_age;
    }
    w.tau_hat = queued_h > 0 ? age_sum / static_cast<double>(queued_h) : 0.0;

    loss_window_.emplace_back(d.xr_dropped, d.xr_delivered);
    loss_dropped_ += d.xr_dropped;
    loss_delivered_ += d.xr_delivered;
    while (static_cast<int>(loss_window_.size()) > cfg_.loss_window_tti) {
      loss_dropped_ -= loss_window_.front().first;
      loss_delivered_ -= loss_window_.front().second;
      loss_window_.pop_front();
    }
    w.rho_bar = plr(loss_dropped_, loss_delivered_);
    window_ = w;

    // (8) reward, (9) observation
    out.window = w;
    out.breakdown = total_reward(w, cfg_.targets);
    out.reward = learner_reward(out.breakdown.total, cfg_.reward_floor);
    out.base_reward = learner_reward(base_reward(w, cfg_.targets), cfg_.reward_floor);
    ++step_;
    out.done = step_ >= cfg_.episode_steps;
    out.observation = observe();
    return out;
  }

  Observation observe() const {
    const auto& t = cfg_.targets;
    auto unit = [](double v) { return std::clamp(v, 0.0, 1.0); };
    Observation o{};
    const double cap = cfg_.occupancy_cap_frames * static_cast<double>(cfg_.video_frame_bits());
    const double mean_occ = xr_.empty() ? 0.0 : static_cast<double>(xr_buffer_bits()) / static_cast<double>(xr_.size());
    o[obs_index::xr_occupancy] = unit(mean_occ / cap);
    o[obs_index::tau_v] = unit(window_.tau_v_bar / t.tau_max);
    o[obs_index::tau_h] = unit(window_.tau_h_bar / t.tau_max);
    o[obs_index::sync_gap] = unit(std::abs(window_.tau_v_bar - window_.tau_h_bar) / t.tau_max);
    o[obs_index::xr_loss] = unit(window_.rho_bar);
    o[obs_index::xr_rate] = unit(window_.r_bar_xr / t.r0_xr);
    o[obs_index::embb_rate] = unit(window_.r_bar_embb / t.r0_embb);
    o[obs_index::embb_below_target] = unit(embb_below_fraction_);
    return o;
  }

  /// Per-user records over the post-warm-up steps taken so far.
  std::vector<UserEpisodeRecord> user_records(int episode) const {
    const int counted = step_ - cfg_.warmup_steps;
    const double duration = counted > 0 ? counted * cfg_.tti : std::numeric_limits<double>::quiet_NaN();
    const double nan = std::numeric_limits<double>::quiet_NaN();
    std::vector<UserEpisodeRecord> out;
    for (std::size_t u = 0; u < xr_.size(); ++u) {
      const auto& a = xr_acc_[u];
      UserEpisodeRecord r;
      r.episode = episode;
      r.user_id = static_cast<int>(u);
      r.slice = Slice::xr;
      r.mean_rate_bps = counted > 0 ? static_cast<double>(a.served_bits) / duration : 0.0;
      r.plr = plr(a.dropped, a.delivered);
      r.mean_tau_v = a.n_tau_v > 0 ? a.sum_tau_v / static_cast<double>(a.n_tau_v) : nan;
      r.mean_tau_h = a.n_tau_h > 0 ? a.sum_tau_h / static_cast<double>(a.n_tau_h) : nan;
      r.mean_tau_hat = counted > 0 ? a.sum_tau_hat / counted : 0.0;
      r.sync_gap = (a.n_tau_v > 0 && a.n_tau_h > 0) ? std::abs(r.mean_tau_v - r.mean_tau_h)
                                                    : std::numeric_limits<double>::infinity();
      r.satisfied = user_satisfied(r, cfg_.targets, cfg_.satisfaction);
      out.push_back(r);
    }
    for (std::size_t u = 0; u < embb_.size(); ++u) {
      UserEpisodeRecord r;
      r.episode = episode;
      r.user_id = static_cast<int>(xr_.size() + u);
      r.slice = Slice::embb;
      r.mean_rate_bps = counted > 0 ? static_cast<double>(embb_acc_[u].served_bits) / duration : 0.0;
      r.plr = 0.0;
      r.mean_tau_v = nan;
      r.mean_tau_h = nan;
      r.mean_tau_hat = 0.0;
      r.sync_gap = nan;
      r.satisfied = user_satisfied(r, cfg_.targets, cfg_.satisfaction);
      out.push_back(r);
    }
    return out;
  }

 private:
  bool counting() const { return step_ >= cfg_.warmup_steps; }

  static void note_latency(StepDiagnostics& d, double latency) {
    d.min_latency = std::min(d.min_latency, latency);
    d.max_latency = std::max(d.max_latency, latency);
  }

  SimConfig cfg_;
  Rng rng_;
  DeploymentLayout layout_;
  std::vector<XrUser> xr_;
  std::vector<EmbbUser> embb_;
  int step_ = 0;
  bool reset_done_ = false;
  double tau_v_bar_ = 0.0;
  double tau_h_bar_ = 0.0;
  std::deque<std::pair<int, int>> loss_window_;
  std::int64_t loss_dropped_ = 0;
  std::int64_t loss_delivered_ = 0;
  SliceMetricsWindow window_;
  double embb_below_fraction_ = 0.0;
  std::vector<UserAccumulator> xr_acc_;
  std::vector<UserAccumulator> embb_acc_;
};

// ---- episode driver ----

enum class RunMode { train, eval };
enum class RewardKind { full, base_standin };

template <class A>
concept SlicingAgent = requires(A& agent, const DecisionContext& ctx, RunMode mode) {
  { agent.act(ctx, mode) } -> std::convertible_to<int>;
};

struct TrainStats {
  std::int64_t step = 0;
  double reward_mean = 0.0;
  // NaN until the first gradient update.
  double critic1_loss = std::numeric_limits<double>::quiet_NaN();
  double critic2_loss = std::numeric_limits<double>::quiet_NaN();
  double actor_loss = std::numeric_limits<double>::quiet_NaN();
  double lambda = std::numeric_limits<double>::quiet_NaN();
  double entropy = std::numeric_limits<double>::quiet_NaN();
};

/// Agents that learn expose their reward choice and a per-transition hook that
/// may run a gradient update and report its losses.
template <class A>
concept LearningAgent = SlicingAgent<A> && requires(A& agent, const Observation& o, int a, double r, bool done) {
  { agent.reward_kind() } -> std::same_as<RewardKind>;
  { agent.learn(o, a, r, o, done) } -> std::same_as<std::optional<TrainStats>>;
};

struct EpisodeRecord {
  int episode = 0;
  std::vector<UserEpisodeRecord> users;
  double mean_raw_reward = 0.0;  // full reward, post-warm-up, unclamped
  std::vector<TrainStats> train_log;
};

struct EpisodeOptions {
  int log_every = 100;
  /// Called after every step with the outcome (used by invariant checks).
  std::function<void(const Environment&, const StepOutcome&)> on_step;
};

/// Runs one episode. Train mode feeds transitions to learning agents; eval
/// mode never touches agent parameters. Reported metrics skip the warm-up.
template <SlicingAgent A>
EpisodeRecord run_episode(Environment& env, A& agent, RunMode mode, std::uint64_t seed, int episode_index,
                          const EpisodeOptions& opts = {}) {
  EpisodeRecord rec;
  rec.episode = episode_index;
  Observation obs = env.reset(seed);
  const int steps = env.config().episode_steps;
  double raw_sum = 0.0;
  int raw_n = 0;
  double log_reward_sum = 0.0;
  int log_reward_n = 0;
  std::optional<TrainStats> last;
  for (int t = 0; t < steps; ++t) {
    const DecisionContext ctx{obs, env.xr_buffer_bits(), env.embb_target_load_bits(), env.config().n_rbg()};
    const int action = agent.act(ctx, mode);
    const StepOutcome out = env.step(action);
    if (opts.on_step) opts.on_step(env, out);
    if (t >= env.config().warmup_steps) {
      raw_sum += out.breakdown.total;
      ++raw_n;
    }
    if constexpr (LearningAgent<A>) {
      if (mode == RunMode::train) {
        const double r = agent.reward_kind() == RewardKind::full ? out.reward : out.base_reward;
        // Episodes end on a step budget only, so transitions always bootstrap.
        if (auto stats = agent.learn(obs, action, r, out.observation, false)) last = stats;
        log_reward_sum += r;
        ++log_reward_n;
        if (opts.log_every > 0 && (t + 1) % opts.log_every == 0) {
          TrainStats row = last.value_or(TrainStats{});
          row.step = static_cast<std::int64_t>(episode_index) * steps + t + 1;
          row.reward_mean = log_reward_sum / log_reward_n;
          rec.train_log.push_back(row);
          log_reward_sum = 0.0;
          log_reward_n = 0;
        }
      }
    }
    obs = out.observation;
  }
  rec.mean_raw_reward = raw_n > 0 ? raw_sum / raw_n : 0.0;
  rec.users = env.user_records(episode_index);
  return rec;
}

}  // namespace ibs

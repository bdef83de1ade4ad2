#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ibs {

/// Slice QoS targets. Rates in bit/s, latencies in seconds.
struct QosTargets {
  double r0_xr = 60e6;
  double r0_embb = 45e6;
  double rho0 = 1e-5;
  double tau_sync = 0.050;
  double tau0_h = 0.010;
  double tau_max = 0.060;

  void validate() const {
    if (!(r0_xr > 0.0 && r0_embb > 0.0)) throw std::domain_error("rate targets must be > 0");
    if (!(rho0 >= 0.0 && rho0 < 1.0)) throw std::domain_error("rho0 must be in [0, 1)");
    if (!(tau_sync > 0.0)) throw std::domain_error("tau_sync must be > 0");
    if (!(tau0_h > 0.0 && tau0_h < tau_max)) throw std::domain_error("need 0 < tau0_h < tau_max");
  }
};

struct SliceMetricsWindow {
  double r_bar_xr = 0.0;
  double r_bar_embb = 0.0;
  double rho_bar = 0.0;
  double tau_v_bar = 0.0;
  double tau_h_bar = 0.0;
  double tau_hat = 0.0;
};

inline double rate_reward(double r_bar, double r0) {
  if (!(r0 > 0.0)) throw std::domain_error("rate_reward: r0 must be > 0");
  return r_bar < r0 ? -(r0 - r_bar) / r0 : 0.0;
}

inline double loss_reward(double rho_bar, double rho0) {
  if (!(rho0 < 1.0)) throw std::domain_error("loss_reward: rho0 must be < 1");
  return rho_bar > rho0 ? -(rho_bar - rho0) / (1.0 - rho0) : 0.0;
}

// Unbounded below: grows linearly with the video/haptic gap.
inline double sync_reward(double tau_v, double tau_h, double tau_sync) {
  const double gap = std::abs(tau_v - tau_h);
  return gap > tau_sync ? -(gap - tau_sync) / tau_sync : 0.0;
}

inline double haptic_latency_reward(double tau_hat, double tau0_h, double tau_max) {
  if (!(tau0_h < tau_max)) throw std::domain_error("haptic_latency_reward: tau0_h must be < tau_max");
  return tau_hat > tau0_h ? -(tau_hat - tau0_h) / (tau_max - tau0_h) : 0.0;
}

struct RewardBreakdown {
  double rate_xr = 0.0;
  double rate_embb = 0.0;
  double loss = 0.0;
  double sync = 0.0;
  double haptic = 0.0;
  double total = 0.0;
};

inline RewardBreakdown total_reward(const SliceMetricsWindow& w, const QosTargets& t) {
  RewardBreakdown r;
  r.rate_xr = rate_reward(w.r_bar_xr, t.r0_xr);
  r.rate_embb = rate_reward(w.r_bar_embb, t.r0_embb);
  r.loss = loss_reward(w.rho_bar, t.rho0);
  r.sync = sync_reward(w.tau_v_bar, w.tau_h_bar, t.tau_sync);
  r.haptic = haptic_latency_reward(w.tau_hat, t.tau0_h, t.tau_max);
  r.total = r.loss + (r.sync + r.haptic) + (r.rate_xr + r.rate_embb);
  return r;
}

/// What the learner sees: the raw total clamped to [floor, 0].
inline double learner_reward(double raw_total, double floor = -10.0) { return std::clamp(raw_total, floor, 0.0); }

}  // namespace ibs

#pragma once

#include <numeric>
#include <string>
#include <vector>

#include "ibs/simcore.hpp"

/// Per-step simulator invariants. Returns an empty string when all hold,
/// otherwise a description of the first violation.
inline std::string check_step_invariants(const ibs::Environment& env, const ibs::StepOutcome& o) {
  using namespace ibs;
  const SimConfig& c = env.config();
  const auto& d = o.diag;
  const std::string at = " at step " + std::to_string(env.step_index());
  const int R = c.n_rbg();

  if (d.split.n_rbg_xr + d.split.n_rbg_embb != R) return "slice split does not sum to R" + at;
  const int xr_sum = std::accumulate(d.xr_counts.begin(), d.xr_counts.end(), 0);
  const int embb_sum = std::accumulate(d.embb_counts.begin(), d.embb_counts.end(), 0);
  const bool reuse = c.channel.reuse_mode == ReuseMode::xr_full_reuse;
  if (!env.embb_users().empty() && embb_sum != d.split.n_rbg_embb) return "eMBB counts do not conserve the slice" + at;
  if (!env.xr_users().empty() && !reuse && xr_sum != d.split.n_rbg_xr) return "XR counts do not conserve the slice" + at;

  std::vector<int> owner(static_cast<std::size_t>(R), 0);
  for (std::size_t u = 0; u < d.xr_rbgs.size(); ++u) {
    if (d.xr_rbgs[u].size() != static_cast<std::size_t>(d.xr_counts[u])) return "XR index set size mismatch" + at;
    if (reuse && d.xr_counts[u] != d.split.n_rbg_xr) return "reuse-mode XR set is not the full XR range" + at;
    for (int r : d.xr_rbgs[u]) {
      if (r < 0 || r >= d.split.n_rbg_xr) return "XR RBG outside the XR range" + at;
      if (!reuse) ++owner[static_cast<std::size_t>(r)];
    }
  }
  for (std::size_t u = 0; u < d.embb_rbgs.size(); ++u) {
    if (d.embb_rbgs[u].size() != static_cast<std::size_t>(d.embb_counts[u])) return "eMBB index set size mismatch" + at;
    for (int r : d.embb_rbgs[u]) {
      if (r < d.split.n_rbg_xr || r >= R) return "eMBB RBG outside the eMBB range" + at;
      ++owner[static_cast<std::size_t>(r)];
    }
  }
  for (int n : owner)
    if (n > 1) return "RBG assigned to two users" + at;

  auto conserved = [](const FlowBuffer& b) {
    std::int64_t queued_bits = 0;
    for (const auto& p : b.queue()) queued_bits += p.remaining_bits;
    return b.arrivals() == b.delivered() + b.dropped() + b.queued() &&
           b.arrived_bits() == b.served_bits() + b.dropped_bits() + b.occupancy_bits() &&
           queued_bits == b.occupancy_bits() && b.occupancy_bits() >= 0;
  };
  for (std::size_t u = 0; u < env.xr_users().size(); ++u) {
    const auto& x = env.xr_users()[u];
    if (!conserved(x.video_buf) || !conserved(x.haptic_buf)) return "XR bit conservation violated" + at;
    if (d.xr_served_bits[u] > d.xr_capacity_bits[u]) return "XR served bits exceed capacity" + at;
  }
  for (std::size_t u = 0; u < env.embb_users().size(); ++u) {
    if (!conserved(env.embb_users()[u].buf)) return "eMBB bit conservation violated" + at;
    if (d.embb_served_bits[u] > d.embb_capacity_bits[u]) return "eMBB served bits exceed capacity" + at;
  }

  if (d.xr_delivered > 0 && (d.min_latency < 0.0 || d.max_latency > c.targets.tau_max))
    return "delivery latency outside [0, tau_max]" + at;

  for (double v : o.observation)
    if (!(v >= 0.0 && v <= 1.0)) return "observation element outside [0, 1]" + at;
  return {};
}

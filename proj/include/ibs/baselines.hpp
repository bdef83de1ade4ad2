#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>

#include "ibs/errors.hpp"
#include "ibs/random.hpp"
#include "ibs/sac.hpp"
#include "ibs/simcore.hpp"

namespace ibs {

enum class AgentKind { sac, sac_base, equal, demand };

inline const char* to_string(AgentKind k) {
  switch (k) {
    case AgentKind::sac: return "sac";
    case AgentKind::sac_base: return "sac-base";
    case AgentKind::equal: return "equal";
    case AgentKind::demand: return "demand";
  }
  return "?";
}

inline AgentKind parse_agent_kind(const std::string& s) {
  if (s == "sac") return AgentKind::sac;
  if (s == "sac-base") return AgentKind::sac_base;
  if (s == "equal") return AgentKind::equal;
  if (s == "demand") return AgentKind::demand;
  throw ConfigError("agent: expected sac|sac-base|equal|demand, got '" + s + "'");
}

inline bool is_learning(AgentKind k) { return k == AgentKind::sac || k == AgentKind::sac_base; }

inline int equal_split_action(int n_rbg) {
  if (n_rbg < 0) throw ContractViolation("equal_split_action: negative RBG count");
  return n_rbg / 2;
}

/// XR share of total demand, rounded half up to an RBG count.
inline int demand_proportional_action(std::int64_t xr_buffer_bits, std::int64_t embb_target_load_bits, int n_rbg) {
  if (xr_buffer_bits < 0 || embb_target_load_bits < 0) throw ContractViolation("demand_proportional_action: negative demand");
  const std::int64_t total = xr_buffer_bits + embb_target_load_bits;
  if (total == 0) return equal_split_action(n_rbg);
  const double share = static_cast<double>(xr_buffer_bits) / static_cast<double>(total);
  const auto action = static_cast<int>(std::floor(n_rbg * share + 0.5));
  return std::clamp(action, 0, n_rbg);
}

struct EqualSplitAgent {
  int act(const DecisionContext& ctx, RunMode) const { return equal_split_action(ctx.n_rbg); }
};

struct DemandProportionalAgent {
  int act(const DecisionContext& ctx, RunMode) const {
    return demand_proportional_action(ctx.xr_buffer_bits, ctx.embb_target_load_bits, ctx.n_rbg);
  }
};

/// Uniform random split; used to exercise the simulator.
class RandomAgent {
 public:
  explicit RandomAgent(std::uint64_t seed) : rng_(seed) {}
  int act(const DecisionContext& ctx, RunMode) { return std::uniform_int_distribution<int>(0, ctx.n_rbg)(rng_); }

 private:
  Rng rng_;
};

struct SacTrainSchedule {
  int warmup_batches = 10;  // updates start once replay holds this many batches
  int updates_every = 1;    // environment steps per gradient update
};

/// SAC slicing agent. Samples from the policy while training and acts greedily
/// in evaluation. RewardKind::base_standin trains on the sync-blind stand-in.
class SacSlicingAgent {
 public:
  SacSlicingAgent(sac::SacConfig cfg, std::uint64_t seed, RewardKind kind, SacTrainSchedule schedule = {})
      : sac_(std::move(cfg), seed), kind_(kind), schedule_(schedule) {}

  int act(const DecisionContext& ctx, RunMode mode) {
    return sac_.select_action(ctx.observation, mode == RunMode::train ? sac::ActionMode::sample : sac::ActionMode::greedy);
  }

  RewardKind reward_kind() const { return kind_; }

  std::optional<TrainStats> learn(const Observation& s, int a, double r, const Observation& s_next, bool done) {
    sac_.store(s, a, r, s_next, done);
    ++steps_;
    const std::size_t warm = static_cast<std::size_t>(schedule_.warmup_batches) * sac_.config().batch_size;
    if (sac_.replay().size() < std::max(warm, sac_.config().batch_size)) return std::nullopt;
    if (steps_ % schedule_.updates_every != 0) return std::nullopt;
    const sac::LossReport rep = sac_.update();
    TrainStats st;
    st.critic1_loss = rep.critic1;
    st.critic2_loss = rep.critic2;
    st.actor_loss = rep.actor;
    st.lambda = rep.lambda;
    st.entropy = rep.entropy;
    return st;
  }

  sac::SacAgent& sac() { return sac_; }
  const sac::SacAgent& sac() const { return sac_; }

 private:
  sac::SacAgent sac_;
  RewardKind kind_;
  SacTrainSchedule schedule_;
  std::int64_t steps_ = 0;
};

}  // namespace ibs

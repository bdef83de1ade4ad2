#pragma once

#include <cstdint>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ibs/baselines.hpp"
#include "ibs/errors.hpp"
#include "ibs/sac.hpp"
#include "ibs/simcore.hpp"

namespace ibs {

using Json = nlohmann::json;

struct ExperimentConfig {
  std::string preset = "full";
  SimConfig sim;
  sac::SacConfig sac;
  SacTrainSchedule schedule;
  std::vector<AgentKind> agents{AgentKind::sac};
  std::vector<int> densities{10, 15, 20, 25};
  int train_episodes = 10;
  int eval_episodes = 100;
  std::uint64_t master_seed = 1;
  int log_every = 100;
  bool reward_log = false;  // per-step reward components for the first eval episode
  int workers = 1;          // concurrent sweep cells

  /// Actor/critic input and output widths follow the simulator.
  sac::SacConfig resolved_sac() const {
    sac::SacConfig c = sac;
    c.obs_dim = static_cast<int>(kObservationSize);
    c.n_actions = sim.n_actions();
    return c;
  }

  void validate() const {
    sim.validate();
    if (densities.empty()) throw ConfigError("densities: at least one density required");
    for (int d : densities)
      if (d < 1) throw ConfigError("densities: every density must be >= 1");
    if (agents.empty()) throw ConfigError("agents: at least one agent required");
    if (train_episodes < 0 || eval_episodes < 1) throw ConfigError("need train_episodes >= 0 and eval_episodes >= 1");
    if (!(sac.gamma >= 0.0 && sac.gamma < 1.0)) throw ConfigError("gamma must be in [0, 1)");
    if (sac.batch_size == 0 || sac.replay_capacity < sac.batch_size) throw ConfigError("need 0 < batch_size <= replay_capacity");
    if (!(sac.learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
    if (!(sac.soft_update_rate > 0.0 && sac.soft_update_rate <= 1.0)) throw ConfigError("soft_update_rate must be in (0, 1]");
    if (!(sac.init_lambda > 0.0)) throw ConfigError("init_lambda must be > 0");
    if (schedule.warmup_batches < 1 || schedule.updates_every < 1) throw ConfigError("need warmup_batches >= 1 and updates_every >= 1");
    if (workers < 1) throw ConfigError("workers must be >= 1");
    for (int h : sac.hidden)
      if (h < 1) throw ConfigError("hidden_layers: widths must be >= 1");
  }
};

/// Full settings ("full") or the CI-sized "desk" variant.
inline ExperimentConfig preset_config(const std::string& name) {
  ExperimentConfig c;
  c.preset = name;
  if (name == "full") return c;
  if (name == "desk") {
    c.sim.episode_steps = 2000;
    c.sac.batch_size = 256;
    c.eval_episodes = 10;
    c.train_episodes = 5;
    return c;
  }
  throw ConfigError("unknown preset '" + name + "' (expected full|desk)");
}

namespace detail {

struct ConfigKey {
  const char* name;
  std::function<Json(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const Json&)> set;
};

template <class T>
T as(const Json& j, const char* key) {
  try {
    return j.get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(std::string("config key '") + key + "': wrong type (" + j.type_name() + ")");
  }
}

#define IBS_KEY(NAME, EXPR, T, SCALE)                                                    \
  ConfigKey {                                                                            \
    NAME, [](const ExperimentConfig& c) { return Json(c.EXPR / (SCALE)); },              \
        [](ExperimentConfig& c, const Json& j) { c.EXPR = as<T>(j, NAME) * (SCALE); }    \
  }
#define IBS_RAW(NAME, EXPR, T)                                                           \
  ConfigKey {                                                                            \
    NAME, [](const ExperimentConfig& c) { return Json(c.EXPR); },                        \
        [](ExperimentConfig& c, const Json& j) { c.EXPR = as<T>(j, NAME); }              \
  }

inline const std::vector<ConfigKey>& schema() {
  static const std::vector<ConfigKey> keys = {
      ConfigKey{"agents",
                [](const ExperimentConfig& c) {
                  Json a = Json::array();
                  for (auto k : c.agents) a.push_back(to_string(k));
                  return a;
                },
                [](ExperimentConfig& c, const Json& j) {
                  if (!j.is_array()) throw ConfigError("config key 'agents': expected a list");
                  c.agents.clear();
                  for (const auto& v : j) c.agents.push_back(parse_agent_kind(as<std::string>(v, "agents")));
                }},
      IBS_RAW("densities", densities, std::vector<int>),
      IBS_RAW("train_episodes", train_episodes, int),
      IBS_RAW("eval_episodes", eval_episodes, int),
      IBS_RAW("master_seed", master_seed, std::uint64_t),
      IBS_RAW("log_every", log_every, int),
      IBS_RAW("reward_log", reward_log, bool),
      IBS_RAW("workers", workers, int),
      IBS_RAW("n_embb", sim.n_embb, int),
      IBS_RAW("episode_steps", sim.episode_steps, int),
      IBS_RAW("warmup_steps", sim.warmup_steps, int),
      IBS_KEY("tti_ms", sim.tti, double, 1e-3),
      IBS_RAW("total_rbs", sim.total_rbs, int),
      IBS_RAW("rbg_size_rbs", sim.rbg_size_rbs, int),
      IBS_KEY("scs_khz", sim.scs_hz, double, 1e3),
      IBS_RAW("macro_power_dbm", sim.macro_power_dbm, double),
      IBS_RAW("ap_power_dbm", sim.ap_power_dbm, double),
      IBS_RAW("loss_window_tti", sim.loss_window_tti, int),
      IBS_RAW("occupancy_cap_frames", sim.occupancy_cap_frames, double),
      IBS_RAW("reward_floor", sim.reward_floor, double),
      IBS_RAW("satisfaction_includes_haptic", sim.satisfaction.include_haptic_latency, bool),
      IBS_RAW("n_clusters", sim.deployment.n_clusters, int),
      IBS_RAW("cluster_min_sep_m", sim.deployment.cluster_min_sep_m, double),
      IBS_RAW("offspring_sigma_m", sim.deployment.offspring_sigma_m, double),
      IBS_RAW("ibs_min_sep_m", sim.deployment.ibs_min_sep_m, double),
      IBS_RAW("headset_height_m", sim.deployment.headset_height_m, double),
      IBS_RAW("embb_height_m", sim.deployment.embb_height_m, double),
      IBS_RAW("attempt_cap", sim.deployment.attempt_cap, int),
      IBS_RAW("carrier_freq_ghz", sim.channel.carrier_freq_ghz, double),
      IBS_RAW("noise_figure_db", sim.channel.noise_figure_db, double),
      IBS_RAW("se_att", sim.channel.se_att, double),
      IBS_RAW("se_max", sim.channel.se_max, double),
      IBS_RAW("sinr_min_db", sim.channel.sinr_min_db, double),
      ConfigKey{"reuse_mode", [](const ExperimentConfig& c) { return Json(to_string(c.sim.channel.reuse_mode)); },
                [](ExperimentConfig& c, const Json& j) {
                  c.sim.channel.reuse_mode = parse_reuse_mode(as<std::string>(j, "reuse_mode"));
                }},
      IBS_RAW("video_fps", sim.traffic.video_fps, double),
      IBS_RAW("haptic_hz", sim.traffic.haptic_hz, double),
      IBS_RAW("video_frame_bits", sim.traffic.video_frame_bits, std::int64_t),
      IBS_RAW("haptic_packet_bits", sim.traffic.haptic_packet_bits, std::int64_t),
      IBS_RAW("jitter_enabled", sim.traffic.jitter_enabled, bool),
      IBS_KEY("tau_max_ms", sim.targets.tau_max, double, 1e-3),
      IBS_KEY("tau0_h_ms", sim.targets.tau0_h, double, 1e-3),
      IBS_KEY("tau_sync_ms", sim.targets.tau_sync, double, 1e-3),
      IBS_KEY("r0_xr_mbps", sim.targets.r0_xr, double, 1e6),
      IBS_KEY("r0_embb_mbps", sim.targets.r0_embb, double, 1e6),
      IBS_RAW("rho0", sim.targets.rho0, double),
      IBS_RAW("hidden_layers", sac.hidden, std::vector<int>),
      IBS_RAW("gamma", sac.gamma, double),
      IBS_RAW("learning_rate", sac.learning_rate, double),
      IBS_RAW("soft_update_rate", sac.soft_update_rate, double),
      IBS_RAW("batch_size", sac.batch_size, std::size_t),
      IBS_RAW("replay_capacity", sac.replay_capacity, std::size_t),
      IBS_RAW("init_lambda", sac.init_lambda, double),
      IBS_RAW("target_entropy_scale", sac.target_entropy_scale, double),
      IBS_RAW("warmup_batches", schedule.warmup_batches, int),
      IBS_RAW("updates_every", schedule.updates_every, int),
  };
  return keys;
}

#undef IBS_KEY
#undef IBS_RAW

}  // namespace detail

/// Overlays a flat JSON object onto `cfg`. Unknown keys are rejected.
inline void apply_config_json(ExperimentConfig& cfg, const Json& j) {
  if (!j.is_object()) throw ConfigError("config: top level must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const auto& key : detail::schema()) {
      if (it.key() == key.name) {
        key.set(cfg, it.value());
        known = true;
        break;
      }
    }
    if (!known) throw ConfigError("config: unknown key '" + it.key() + "'");
  }
}

inline Json config_to_json(const ExperimentConfig& cfg) {
  Json j = Json::object();
  for (const auto& key : detail::schema()) j[key.name] = key.get(cfg);
  return j;
}

inline Json parse_config_text(const std::string& text, const std::string& origin) {
  try {
    return Json::parse(text, nullptr, true, /*ignore_comments=*/true);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(origin + ": " + e.what());
  }
}

inline Json read_config_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config '" + path + "'");
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_config_text(ss.str(), path);
}

}  // namespace ibs

#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ibs/deployment.hpp"
#include "ibs/errors.hpp"
#include "ibs/random.hpp"

namespace ibs {

enum class ReuseMode { off, xr_full_reuse };

inline const char* to_string(ReuseMode m) { return m == ReuseMode::off ? "off" : "xr_full_reuse"; }

inline ReuseMode parse_reuse_mode(const std::string& s) {
  if (s == "off") return ReuseMode::off;
  if (s == "xr_full_reuse") return ReuseMode::xr_full_reuse;
  throw ConfigError("reuse_mode: expected off|xr_full_reuse, got '" + s + "'");
}

struct ChannelParams {
  double carrier_freq_ghz = 4.0;
  double noise_density_dbm_hz = -174.0;
  double noise_figure_db = 9.0;
  double sigma_shadow_los_db = 3.0;
  double sigma_shadow_nlos_db = 8.03;
  double rbg_bandwidth_hz = 16 * 12 * 30e3;
  double se_max = 7.8;
  double se_att = 0.6;
  double sinr_min_db = -10.0;
  double min_distance_m = 0.5;
  ReuseMode reuse_mode = ReuseMode::off;

  void validate() const {
    if (!(rbg_bandwidth_hz > 0.0)) throw ConfigError("rbg_bandwidth must be > 0");
    if (!(se_att > 0.0 && se_att <= 1.0)) throw ConfigError("se_att must be in (0, 1]");
    if (!(se_max > 0.0)) throw ConfigError("se_max must be > 0");
    if (!(carrier_freq_ghz > 0.0)) throw ConfigError("carrier_freq_ghz must be > 0");
  }
};

struct LinkState {
  Point3 tx;
  Point3 rx;
  bool is_los = true;
  double shadow_db = 0.0;
  double pathloss_db = 0.0;

  double total_loss_db() const { return pathloss_db + shadow_db; }
};

inline double dbm_to_mw(double dbm) { return std::pow(10.0, dbm / 10.0); }
inline double mw_to_dbm(double mw) { return 10.0 * std::log10(mw); }

// InH open office LOS probability.
inline double los_probability(double d2d) {
  if (d2d < 0.0) throw std::domain_error("los_probability: negative distance");
  if (d2d <= 5.0) return 1.0;
  if (d2d <= 49.0) return std::exp(-(d2d - 5.0) / 70.8);
  return 0.54 * std::exp(-(d2d - 49.0) / 211.7);
}

inline double pathloss_db(double d3d, double fc_ghz, bool los, double min_distance = 0.5) {
  const double d = std::max(d3d, min_distance);
  const double pl_los = 32.4 + 17.3 * std::log10(d) + 20.0 * std::log10(fc_ghz);
  if (los) return pl_los;
  const double pl_nlos = 17.30 + 38.3 * std::log10(d) + 24.9 * std::log10(fc_ghz);
  return std::max(pl_los, pl_nlos);
}

inline double noise_power_dbm(const ChannelParams& p) {
  return p.noise_density_dbm_hz + 10.0 * std::log10(p.rbg_bandwidth_hz) + p.noise_figure_db;
}

/// LOS state and shadowing are drawn once; the link is then fixed for the episode.
inline LinkState make_link(Rng& rng, const Point3& tx, const Point3& rx, const ChannelParams& p) {
  LinkState link;
  link.tx = tx;
  link.rx = rx;
  link.is_los = uniform01(rng) < los_probability(distance_2d(tx, rx));
  std::normal_distribution<double> shadow(0.0, link.is_los ? p.sigma_shadow_los_db : p.sigma_shadow_nlos_db);
  link.shadow_db = shadow(rng);
  link.pathloss_db = pathloss_db(distance_3d(tx, rx), p.carrier_freq_ghz, link.is_los, p.min_distance_m);
  return link;
}

inline double received_power_dbm(const LinkState& link, double tx_power_dbm) {
  return tx_power_dbm - link.total_loss_db();
}

struct Interferer {
  LinkState link;
  double tx_power_dbm = 0.0;
};

inline double sinr_db(const LinkState& link, double tx_power_per_rbg_dbm, std::span<const Interferer> interferers,
                      const ChannelParams& p) {
  double denom_mw = dbm_to_mw(noise_power_dbm(p));
  for (const auto& i : interferers) denom_mw += dbm_to_mw(received_power_dbm(i.link, i.tx_power_dbm));
  return received_power_dbm(link, tx_power_per_rbg_dbm) - mw_to_dbm(denom_mw);
}

// Truncated Shannon link abstraction.
inline double spectral_efficiency(double sinr_db_value, const ChannelParams& p) {
  if (sinr_db_value < p.sinr_min_db) return 0.0;
  const double shannon = p.se_att * std::log2(1.0 + std::pow(10.0, sinr_db_value / 10.0));
  return std::min(shannon, p.se_max);
}

inline double rbg_rate_bps(double se, const ChannelParams& p) {
  if (se < 0.0) throw ContractViolation("rbg_rate_bps: negative spectral efficiency");
  return se * p.rbg_bandwidth_hz;
}

/// Constant PSD: the total transmit power is split evenly over all RBGs of the carrier.
inline double power_per_rbg_dbm(double total_dbm, int n_rbg) {
  return total_dbm - 10.0 * std::log10(static_cast<double>(std::max(n_rbg, 1)));
}

}  // namespace ibs

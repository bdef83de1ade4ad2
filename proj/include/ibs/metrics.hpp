#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <istream>
#include <map>
#include <ostream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ibs/errors.hpp"
#include "ibs/reward.hpp"

namespace ibs {

enum class Slice { xr, embb };

inline const char* to_string(Slice s) { return s == Slice::xr ? "xr" : "embb"; }

/// Per-user outcome of one episode, measured after the warm-up steps.
/// Latencies are seconds; a latency with no delivered packet is NaN and the
/// corresponding sync gap is +inf.
struct UserEpisodeRecord {
  int episode = 0;
  int user_id = 0;
  Slice slice = Slice::xr;
  double mean_rate_bps = 0.0;
  double plr = 0.0;
  double mean_tau_v = 0.0;
  double mean_tau_h = 0.0;
  double mean_tau_hat = 0.0;
  double sync_gap = 0.0;
  bool satisfied = false;
};

struct SatisfactionRules {
  bool include_haptic_latency = true;
};

inline bool user_satisfied(const UserEpisodeRecord& r, const QosTargets& t, const SatisfactionRules& rules = {}) {
  if (r.slice == Slice::embb) return r.mean_rate_bps >= t.r0_embb;
  if (!(r.mean_rate_bps >= t.r0_xr)) return false;
  if (!(r.plr <= t.rho0)) return false;
  if (!(r.sync_gap <= t.tau_sync)) return false;
  if (rules.include_haptic_latency && !(r.mean_tau_hat <= t.tau0_h)) return false;
  return true;
}

inline double satisfaction_ratio(const std::vector<UserEpisodeRecord>& records) {
  if (records.empty()) throw std::domain_error("satisfaction_ratio: no records");
  const auto ok = std::count_if(records.begin(), records.end(), [](const auto& r) { return r.satisfied; });
  return static_cast<double>(ok) / static_cast<double>(records.size());
}

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

/// Wilson score interval for a binomial proportion, clamped to [0, 1].
inline Interval wilson_interval(std::int64_t successes, std::int64_t n, double z = 1.96) {
  if (n < 1 || successes < 0 || successes > n || !(z > 0.0)) {
    throw ContractViolation("wilson_interval: need 0 <= successes <= n, n >= 1, z > 0");
  }
  const double nn = static_cast<double>(n);
  const double p = static_cast<double>(successes) / nn;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / nn;
  const double center = (p + z2 / (2.0 * nn)) / denom;
  const double half = z / denom * std::sqrt(p * (1.0 - p) / nn + z2 / (4.0 * nn * nn));
  Interval iv{std::clamp(center - half, 0.0, 1.0), std::clamp(center + half, 0.0, 1.0)};
  // Guard rounding at the boundaries so the interval always holds p.
  iv.lo = std::min(iv.lo, p);
  iv.hi = std::max(iv.hi, p);
  return iv;
}

/// P(X <= x) evaluated at each distinct value, ascending.
inline std::vector<std::pair<double, double>> empirical_cdf(std::vector<double> values) {
  if (values.empty()) throw std::domain_error("empirical_cdf: no values");
  std::sort(values.begin(), values.end());
  std::vector<std::pair<double, double>> cdf;
  const double n = static_cast<double>(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i + 1 < values.size() && values[i + 1] == values[i]) continue;
    cdf.emplace_back(values[i], static_cast<double>(i + 1) / n);
  }
  return cdf;
}

/// Fraction of values <= threshold (non-finite values count as above it).
inline double fraction_at_most(const std::vector<double>& values, double threshold) {
  if (values.empty()) return 0.0;
  const auto k = std::count_if(values.begin(), values.end(), [&](double v) { return v <= threshold; });
  return static_cast<double>(k) / static_cast<double>(values.size());
}

/// Mean eMBB per-user episode rate, keyed by IBS density.
inline std::map<int, double> throughput_report(const std::map<int, std::vector<UserEpisodeRecord>>& by_density) {
  std::map<int, double> out;
  for (const auto& [density, records] : by_density) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& r : records) {
      if (r.slice != Slice::embb) continue;
      sum += r.mean_rate_bps;
      ++n;
    }
    if (n > 0) out[density] = sum / static_cast<double>(n);
  }
  return out;
}

struct SatisfactionReport {
  double ratio = 0.0;
  Interval wilson;
  std::int64_t n = 0;
};

inline SatisfactionReport satisfaction_report(const std::vector<UserEpisodeRecord>& records, double z = 1.96) {
  SatisfactionReport rep;
  rep.n = static_cast<std::int64_t>(records.size());
  const auto k = static_cast<std::int64_t>(
      std::count_if(records.begin(), records.end(), [](const auto& r) { return r.satisfied; }));
  rep.ratio = satisfaction_ratio(records);
  rep.wilson = wilson_interval(k, rep.n, z);
  return rep;
}

inline std::vector<double> xr_sync_gaps(const std::vector<UserEpisodeRecord>& records) {
  std::vector<double> gaps;
  for (const auto& r : records)
    if (r.slice == Slice::xr) gaps.push_back(r.sync_gap);
  return gaps;
}

// ---- CSV formatting ----

/// Fixed formatting so that identical runs produce byte-identical files.
inline std::string fmt(double v, int precision = 10) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", precision, v);
  return buf;
}

inline void write_episode_header(std::ostream& os) {
  os << "episode,user_id,slice,mean_rate_bps,plr,mean_tau_v_ms,mean_tau_h_ms,mean_tau_hat_ms,sync_gap_ms,satisfied\n";
}

inline void write_episode_row(std::ostream& os, const UserEpisodeRecord& r) {
  os << r.episode << ',' << r.user_id << ',' << to_string(r.slice) << ',' << fmt(r.mean_rate_bps, 17) << ','
     << fmt(r.plr, 17) << ',' << fmt(r.mean_tau_v * 1e3, 17) << ',' << fmt(r.mean_tau_h * 1e3, 17) << ','
     << fmt(r.mean_tau_hat * 1e3, 17) << ',' << fmt(r.sync_gap * 1e3, 17) << ',' << (r.satisfied ? 1 : 0) << '\n';
}

/// Parses rows written by write_episode_row. Throws std::runtime_error on malformed input.
inline std::vector<UserEpisodeRecord> read_episode_rows(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line.rfind("episode,", 0) != 0) throw std::runtime_error("episode csv: missing header");
  std::vector<UserEpisodeRecord> out;
  int lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::size_t start = 0;
    for (;;) {
      const auto comma = line.find(',', start);
      f.push_back(line.substr(start, comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (f.size() != 10) throw std::runtime_error("episode csv: line " + std::to_string(lineno) + " has " + std::to_string(f.size()) + " fields");
    auto num = [&](const std::string& s) {
      char* end = nullptr;
      const double v = std::strtod(s.c_str(), &end);
      if (s.empty() || *end != '\0') throw std::runtime_error("episode csv: bad number '" + s + "' on line " + std::to_string(lineno));
      return v;
    };
    UserEpisodeRecord r;
    r.episode = static_cast<int>(num(f[0]));
    r.user_id = static_cast<int>(num(f[1]));
    if (f[2] == "xr") r.slice = Slice::xr;
    else if (f[2] == "embb") r.slice = Slice::embb;
    else throw std::runtime_error("episode csv: bad slice '" + f[2] + "'");
    r.mean_rate_bps = num(f[3]);
    r.plr = num(f[4]);
    r.mean_tau_v = num(f[5]) / 1e3;
    r.mean_tau_h = num(f[6]) / 1e3;
    r.mean_tau_hat = num(f[7]) / 1e3;
    r.sync_gap = num(f[8]) / 1e3;
    r.satisfied = f[9] == "1";
    out.push_back(r);
  }
  return out;
}

}  // namespace ibs

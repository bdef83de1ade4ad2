#pragma once

#include <cmath>
#include <cstdio>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "ibs/errors.hpp"
#include "ibs/random.hpp"

namespace ibs {

struct Point3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  friend bool operator==(const Point3&, const Point3&) = default;
};

inline double distance_3d(const Point3& a, const Point3& b) {
  const double dx = a.x - b.x;
  const double dy = a.y - b.y;
  const double dz = a.z - b.z;
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

inline double distance_2d(const Point3& a, const Point3& b) {
  return std::hypot(a.x - b.x, a.y - b.y);
}

struct RoomBounds {
  double width = 50.0;
  double depth = 50.0;
  double height = 3.0;

  bool contains(const Point3& p) const {
    return p.x >= 0.0 && p.x <= width && p.y >= 0.0 && p.y <= depth && p.z >= 0.0 && p.z <= height;
  }
};

struct IbsBody {
  Point3 center;
  double radius = 0.25;
  double height = 1.9;
  Point3 ap_pos;
  Point3 device_pos;
  int cluster_id = 0;
};

struct DeploymentLayout {
  Point3 macro_bs;
  std::vector<Point3> embb_users;
  std::vector<IbsBody> ibs_list;
  std::vector<Point3> cluster_centers;
};

struct DeploymentConfig {
  RoomBounds room;
  int n_clusters = 5;
  double cluster_min_sep_m = 4.0;
  double offspring_sigma_m = 2.0;
  double ibs_min_sep_m = 0.5;
  double body_radius_m = 0.25;
  double body_height_m = 1.9;
  double headset_height_m = 1.6;
  double embb_height_m = 1.5;
  double macro_height_m = 3.0;
  int attempt_cap = 100000;
};

/// Uniform points in the horizontal plane (z = 0) with pairwise separation of
/// at least `min_sep`. Each center gets at most `attempt_cap` draws.
inline std::vector<Point3> sample_cluster_centers(Rng& rng, int n, double min_sep, const RoomBounds& bounds,
                                                  int attempt_cap = 100000) {
  if (n < 1) throw ContractViolation("sample_cluster_centers: n must be >= 1");
  if (min_sep < 0.0) throw ContractViolation("sample_cluster_centers: min_sep must be >= 0");
  std::uniform_real_distribution<double> ux(0.0, bounds.width);
  std::uniform_real_distribution<double> uy(0.0, bounds.depth);
  std::vector<Point3> centers;
  centers.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    bool placed = false;
    for (int attempt = 0; attempt < attempt_cap && !placed; ++attempt) {
      const Point3 cand{ux(rng), uy(rng), 0.0};
      placed = true;
      for (const auto& c : centers) {
        if (distance_2d(cand, c) < min_sep) {
          placed = false;
          break;
        }
      }
      if (placed) centers.push_back(cand);
    }
    if (!placed) {
      throw InfeasibleLayout("cluster center " + std::to_string(i) + " of " + std::to_string(n) +
                             " violates cluster_min_sep (" + std::to_string(min_sep) + " m) after " +
                             std::to_string(attempt_cap) + " attempts");
    }
  }
  return centers;
}

inline IbsBody make_body(const Point3& ground, int cluster_id, const DeploymentConfig& cfg) {
  IbsBody body;
  body.center = {ground.x, ground.y, cfg.body_height_m / 2.0};
  body.radius = cfg.body_radius_m;
  body.height = cfg.body_height_m;
  body.ap_pos = {ground.x, ground.y, cfg.body_height_m};
  body.device_pos = {ground.x, ground.y, cfg.headset_height_m};
  body.cluster_id = cluster_id;
  return body;
}

/// Thomas-cluster offspring: parent chosen uniformly, isotropic Gaussian
/// horizontal offset with per-axis std `sigma`, redrawn until in-bounds and
/// at least `min_sep` from every accepted body.
inline std::vector<IbsBody> sample_ibs_positions(Rng& rng, std::span<const Point3> centers, double sigma, int n_ibs,
                                                 double min_sep, const DeploymentConfig& cfg = {}) {
  if (centers.empty()) throw ContractViolation("sample_ibs_positions: no cluster centers");
  if (!(sigma > 0.0)) throw ContractViolation("sample_ibs_positions: sigma must be > 0");
  if (n_ibs < 0) throw ContractViolation("sample_ibs_positions: n_ibs must be >= 0");
  std::uniform_int_distribution<int> pick(0, static_cast<int>(centers.size()) - 1);
  std::normal_distribution<double> offset(0.0, sigma);
  std::vector<IbsBody> bodies;
  bodies.reserve(static_cast<std::size_t>(n_ibs));
  for (int i = 0; i < n_ibs; ++i) {
    const int cluster = pick(rng);
    const Point3& parent = centers[static_cast<std::size_t>(cluster)];
    bool placed = false;
    for (int attempt = 0; attempt < cfg.attempt_cap && !placed; ++attempt) {
      const Point3 cand{parent.x + offset(rng), parent.y + offset(rng), 0.0};
      if (cand.x < 0.0 || cand.x > cfg.room.width || cand.y < 0.0 || cand.y > cfg.room.depth) continue;
      placed = true;
      for (const auto& b : bodies) {
        if (distance_2d(cand, b.center) < min_sep) {
          placed = false;
          break;
        }
      }
      if (placed) bodies.push_back(make_body(cand, cluster, cfg));
    }
    if (!placed) {
      throw InfeasibleLayout("IBS " + std::to_string(i) + " violates ibs_min_sep (" + std::to_string(min_sep) +
                             " m) or room bounds after " + std::to_string(cfg.attempt_cap) + " attempts");
    }
  }
  return bodies;
}

inline std::vector<Point3> sample_embb_positions(Rng& rng, int m, const RoomBounds& bounds, double height) {
  if (m < 0) throw ContractViolation("sample_embb_positions: m must be >= 0");
  std::uniform_real_distribution<double> ux(0.0, bounds.width);
  std::uniform_real_distribution<double> uy(0.0, bounds.depth);
  std::vector<Point3> users;
  users.reserve(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) {
    const double x = ux(rng);
    const double y = uy(rng);
    users.push_back({x, y, height});
  }
  return users;
}

inline DeploymentLayout generate_layout(Rng& rng, const DeploymentConfig& cfg, int n_ibs, int m_embb) {
  DeploymentLayout layout;
  layout.macro_bs = {cfg.room.width / 2.0, cfg.room.depth / 2.0, cfg.macro_height_m};
  layout.cluster_centers = sample_cluster_centers(rng, cfg.n_clusters, cfg.cluster_min_sep_m, cfg.room, cfg.attempt_cap);
  layout.ibs_list = sample_ibs_positions(rng, layout.cluster_centers, cfg.offspring_sigma_m, n_ibs, cfg.ibs_min_sep_m, cfg);
  layout.embb_users = sample_embb_positions(rng, m_embb, cfg.room, cfg.embb_height_m);
  return layout;
}

/// Columns: entity_type,id,cluster_id,x,y,z. Bodies are exported by their AP position.
inline void write_layout_csv(std::ostream& os, const DeploymentLayout& layout) {
  auto row = [&os](const char* type, std::size_t id, int cluster, const Point3& p) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%s,%zu,%d,%.6f,%.6f,%.6f\n", type, id, cluster, p.x, p.y, p.z);
    os << buf;
  };
  os << "entity_type,id,cluster_id,x,y,z\n";
  row("macro_bs", 0, -1, layout.macro_bs);
  for (std::size_t i = 0; i < layout.cluster_centers.size(); ++i) row("cluster_center", i, static_cast<int>(i), layout.cluster_centers[i]);
  for (std::size_t i = 0; i < layout.ibs_list.size(); ++i) row("ibs", i, layout.ibs_list[i].cluster_id, layout.ibs_list[i].ap_pos);
  for (std::size_t i = 0; i < layout.embb_users.size(); ++i) row("embb", i, -1, layout.embb_users[i]);
}

}  // namespace ibs

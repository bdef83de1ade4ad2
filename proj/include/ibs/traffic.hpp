#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <optional>
#include <vector>

#include "ibs/errors.hpp"
#include "ibs/random.hpp"

namespace ibs {

enum class FlowKind { video, haptic, embb };

struct Packet {
  std::uint64_t id = 0;
  FlowKind flow = FlowKind::video;
  std::int64_t size_bits = 0;
  std::int64_t remaining_bits = 0;
  double arrival = 0.0;
  int owner = 0;
};

struct Delivery {
  std::uint64_t id = 0;
  double latency = 0.0;
};

struct DrainResult {
  std::vector<Delivery> served;
  std::int64_t bits_used = 0;
};

/// FIFO queue with exact bit accounting. Counters are cumulative since reset.
class FlowBuffer {
 public:
  void push(const Packet& p) {
    if (p.size_bits <= 0) throw ContractViolation("FlowBuffer::push: packet size must be > 0");
    Packet q = p;
    q.remaining_bits = p.size_bits;
    queue_.push_back(q);
    occupancy_bits_ += q.size_bits;
    arrived_bits_ += q.size_bits;
    ++arrivals_;
  }

  /// Serves up to `budget` bits in FIFO order; a packet counts as delivered
  /// (with latency now - arrival) only once its last bit is served.
  DrainResult drain(std::int64_t budget, double now) {
    if (budget < 0) throw ContractViolation("FlowBuffer::drain: negative budget");
    DrainResult out;
    while (budget > 0 && !queue_.empty()) {
      Packet& head = queue_.front();
      const std::int64_t take = std::min(budget, head.remaining_bits);
      head.remaining_bits -= take;
      budget -= take;
      out.bits_used += take;
      if (head.remaining_bits == 0) {
        const double latency = now - head.arrival;
        out.served.push_back({head.id, latency});
        sum_latency_ += latency;
        ++delivered_;
        queue_.pop_front();
      }
    }
    occupancy_bits_ -= out.bits_used;
    served_bits_ += out.bits_used;
    return out;
  }

  /// Removes every queued packet with now - arrival > tau_max (strict).
  int drop_expired(double now, double tau_max) {
    if (!(tau_max > 0.0)) throw ContractViolation("drop_expired: tau_max must be > 0");
    int dropped = 0;
    // Arrival order is FIFO order, so expired packets form a prefix.
    while (!queue_.empty() && now - queue_.front().arrival > tau_max) {
      occupancy_bits_ -= queue_.front().remaining_bits;
      dropped_bits_ += queue_.front().remaining_bits;
      queue_.pop_front();
      ++dropped;
    }
    dropped_ += dropped;
    return dropped;
  }

  /// Mean waiting time of queued packets at `now`; 0 when empty.
  double mean_queued_age(double now) const {
    if (queue_.empty()) return 0.0;
    double s = 0.0;
    for (const auto& p : queue_) s += now - p.arrival;
    return s / static_cast<double>(queue_.size());
  }

  std::int64_t occupancy_bits() const { return occupancy_bits_; }
  std::int64_t arrivals() const { return arrivals_; }
  std::int64_t delivered() const { return delivered_; }
  std::int64_t dropped() const { return dropped_; }
  std::int64_t queued() const { return static_cast<std::int64_t>(queue_.size()); }
  std::int64_t arrived_bits() const { return arrived_bits_; }
  std::int64_t served_bits() const { return served_bits_; }
  std::int64_t dropped_bits() const { return dropped_bits_; }
  double sum_latency() const { return sum_latency_; }
  const std::deque<Packet>& queue() const { return queue_; }
  bool empty() const { return queue_.empty(); }

 private:
  std::deque<Packet> queue_;
  std::int64_t occupancy_bits_ = 0;
  std::int64_t arrivals_ = 0;
  std::int64_t delivered_ = 0;
  std::int64_t dropped_ = 0;
  std::int64_t arrived_bits_ = 0;
  std::int64_t served_bits_ = 0;
  std::int64_t dropped_bits_ = 0;
  double sum_latency_ = 0.0;
};

/// Deterministic periodic source: packet k arrives at phase + k / rate.
struct PeriodicSource {
  FlowKind flow = FlowKind::video;
  double rate_hz = 90.0;
  std::int64_t packet_bits = 666667;
  double phase_s = 0.0;
  int owner = 0;
  bool jitter_enabled = false;
  double jitter_rel_std = 0.1;

  double arrival_time(std::int64_t k) const { return phase_s + static_cast<double>(k) / rate_hz; }
};

struct XrSource {
  double video_rate_hz = 90.0;
  double haptic_rate_hz = 1000.0;
  std::int64_t video_frame_bits = 666667;
  std::int64_t haptic_packet_bits = 512;
};

struct EmbbSource {
  bool full_buffer = true;
  std::int64_t refill_level_bits = 0;
};

/// Packets of `src` whose arrival time lies in [t_start, t_end). Adjacent
/// windows partition the arrival sequence exactly. `rng` is consulted only
/// when size jitter is enabled.
inline std::vector<Packet> generate_arrivals(const PeriodicSource& src, double t_start, double t_end,
                                             Rng* rng = nullptr) {
  std::vector<Packet> out;
  if (!(t_end > t_start)) return out;
  if (!(src.rate_hz > 0.0)) throw ContractViolation("generate_arrivals: rate must be > 0");
  auto k = static_cast<std::int64_t>(std::ceil((t_start - src.phase_s) * src.rate_hz));
  k = std::max<std::int64_t>(k, 0);
  while (k > 0 && src.arrival_time(k - 1) >= t_start) --k;
  while (src.arrival_time(k) < t_start) ++k;
  std::normal_distribution<double> jitter(1.0, src.jitter_rel_std);
  for (; src.arrival_time(k) < t_end; ++k) {
    Packet p;
    p.id = static_cast<std::uint64_t>(k);
    p.flow = src.flow;
    p.size_bits = src.packet_bits;
    if (src.jitter_enabled && rng != nullptr) {
      const double scale = std::clamp(jitter(*rng), 0.5, 1.5);
      p.size_bits = std::max<std::int64_t>(1, std::llround(static_cast<double>(src.packet_bits) * scale));
    }
    p.remaining_bits = p.size_bits;
    p.arrival = src.arrival_time(k);
    p.owner = src.owner;
    out.push_back(p);
  }
  return out;
}

/// Full-buffer top-up: returns the refill packet that restores the occupancy
/// to the refill level, or nothing when the buffer already holds enough.
inline std::optional<Packet> full_buffer_refill(const FlowBuffer& buf, const EmbbSource& src, std::uint64_t id,
                                                double now, int owner) {
  if (!src.full_buffer) return std::nullopt;
  const std::int64_t deficit = src.refill_level_bits - buf.occupancy_bits();
  if (deficit <= 0) return std::nullopt;
  Packet p;
  p.id = id;
  p.flow = FlowKind::embb;
  p.size_bits = deficit;
  p.remaining_bits = deficit;
  p.arrival = now;
  p.owner = owner;
  return p;
}

inline double plr(std::int64_t dropped, std::int64_t delivered) {
  const std::int64_t terminated = dropped + delivered;
  if (terminated == 0) return 0.0;
  return static_cast<double>(dropped) / static_cast<double>(terminated);
}

inline double plr(const FlowBuffer& b) { return plr(b.dropped(), b.delivered()); }

}  // namespace ibs

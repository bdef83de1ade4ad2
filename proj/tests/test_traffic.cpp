#include <gtest/gtest.h>

#include <cmath>

#include "ibs/traffic.hpp"

using namespace ibs;

namespace {

Packet pkt(std::int64_t bits, double arrival, std::uint64_t id = 0) {
  Packet p;
  p.id = id;
  p.size_bits = bits;
  p.arrival = arrival;
  return p;
}

void expect_conserved(const FlowBuffer& b) {
  EXPECT_EQ(b.arrivals(), b.delivered() + b.dropped() + b.queued());
  EXPECT_EQ(b.arrived_bits(), b.served_bits() + b.dropped_bits() + b.occupancy_bits());
  std::int64_t in_queue = 0;
  for (const auto& p : b.queue()) in_queue += p.remaining_bits;
  EXPECT_EQ(in_queue, b.occupancy_bits());
  EXPECT_GE(b.occupancy_bits(), 0);
}

}  // namespace

TEST(Arrivals, VideoOverOneSecond) {
  PeriodicSource v{FlowKind::video, 90.0, 666667, 0.0037};
  EXPECT_EQ(generate_arrivals(v, 0.0, 1.0).size(), 90u);
}

TEST(Arrivals, HapticPerTtiIsZeroOrOne) {
  PeriodicSource h{FlowKind::haptic, 1000.0, 512, 0.00031};
  int total = 0;
  for (int t = 0; t < 2000; ++t) {
    const auto a = generate_arrivals(h, t * 0.0005, (t + 1) * 0.0005);
    EXPECT_LE(a.size(), 1u);
    total += static_cast<int>(a.size());
  }
  EXPECT_EQ(total, 1000);
}

TEST(Arrivals, EmptyWindow) {
  PeriodicSource v;
  EXPECT_TRUE(generate_arrivals(v, 0.3, 0.3).empty());
}

TEST(Arrivals, AdjacentWindowsPartitionTheSequence) {
  PeriodicSource v{FlowKind::video, 90.0, 666667, 0.0051};
  std::vector<Packet> all;
  for (int t = 0; t < 4000; ++t) {
    auto a = generate_arrivals(v, t * 0.0005, (t + 1) * 0.0005);
    all.insert(all.end(), a.begin(), a.end());
  }
  ASSERT_EQ(all.size(), 180u);
  for (std::size_t i = 0; i < all.size(); ++i) {
    EXPECT_EQ(all[i].id, i);
    if (i > 0) {
      EXPECT_NEAR(all[i].arrival - all[i - 1].arrival, 1.0 / 90.0, 1e-12);
    }
  }
}

TEST(Arrivals, JitterOnlyWhenEnabled) {
  Rng rng(4);
  PeriodicSource v{FlowKind::video, 90.0, 666667, 0.0, 0, true, 0.1};
  bool varied = false;
  for (const auto& p : generate_arrivals(v, 0.0, 1.0, &rng)) varied |= p.size_bits != 666667;
  EXPECT_TRUE(varied);
  v.jitter_enabled = false;
  for (const auto& p : generate_arrivals(v, 0.0, 1.0, &rng)) EXPECT_EQ(p.size_bits, 666667);
}

TEST(Drain, Examples) {
  FlowBuffer b;
  b.push(pkt(1000, 0.001));
  EXPECT_TRUE(b.drain(0, 0.002).served.empty());
  EXPECT_EQ(b.occupancy_bits(), 1000);

  FlowBuffer full;
  full.push(pkt(1000, 0.001));
  const auto r = full.drain(1000, 0.004);
  ASSERT_EQ(r.served.size(), 1u);
  EXPECT_DOUBLE_EQ(r.served[0].latency, 0.003);

  FlowBuffer partial;
  partial.push(pkt(1000, 0.0));
  EXPECT_TRUE(partial.drain(600, 0.001).served.empty());
  EXPECT_EQ(partial.occupancy_bits(), 400);
  expect_conserved(partial);
}

TEST(Drain, RejectsNonPositivePackets) {
  FlowBuffer b;
  EXPECT_THROW(b.push(pkt(0, 0.0)), ContractViolation);
  EXPECT_THROW(b.drain(-1, 0.0), ContractViolation);
}

TEST(DropExpired, Examples) {
  FlowBuffer empty;
  EXPECT_EQ(empty.drop_expired(1.0, 0.06), 0);

  FlowBuffer boundary;
  boundary.push(pkt(10, 0.0));
  EXPECT_EQ(boundary.drop_expired(0.06, 0.06), 0);

  FlowBuffer late;
  late.push(pkt(10, 0.0));
  EXPECT_EQ(late.drop_expired(0.061, 0.06), 1);
  expect_conserved(late);
}

TEST(Plr, Examples) {
  EXPECT_EQ(plr(0, 100), 0.0);
  EXPECT_DOUBLE_EQ(plr(1, 99), 0.01);
  EXPECT_EQ(plr(0, 0), 0.0);
}

TEST(FlowBuffer, ConservationUnderRandomTraffic) {
  Rng rng(21);
  std::uniform_int_distribution<std::int64_t> size(1, 5000), budget(0, 8000);
  FlowBuffer b;
  double now = 0.0;
  for (int t = 0; t < 20000; ++t) {
    now += 0.0005;
    if (uniform01(rng) < 0.6) b.push(pkt(size(rng), now, static_cast<std::uint64_t>(t)));
    b.drop_expired(now, 0.01);
    for (const auto& d : b.drain(budget(rng), now).served) {
      EXPECT_GE(d.latency, 0.0);
      EXPECT_LE(d.latency, 0.01 + 1e-12);
    }
    expect_conserved(b);
  }
}

TEST(FullBuffer, RefillRestoresLevel) {
  EmbbSource src{true, 100000};
  FlowBuffer b;
  Rng rng(8);
  std::uniform_int_distribution<std::int64_t> budget(0, 150000);
  for (int t = 0; t < 1000; ++t) {
    if (auto p = full_buffer_refill(b, src, static_cast<std::uint64_t>(t), t * 0.0005, 0)) b.push(*p);
    EXPECT_GE(b.occupancy_bits(), src.refill_level_bits);
    b.drain(budget(rng), t * 0.0005);
  }
  EXPECT_FALSE(full_buffer_refill(b, EmbbSource{false, 100000}, 0, 0.0, 0).has_value());
}

TEST(FlowBuffer, MeanQueuedAge) {
  FlowBuffer b;
  EXPECT_EQ(b.mean_queued_age(1.0), 0.0);
  b.push(pkt(1, 0.0));
  b.push(pkt(1, 0.002));
  EXPECT_DOUBLE_EQ(b.mean_queued_age(0.004), 0.003);
}

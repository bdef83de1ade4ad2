#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "ibs/channel.hpp"

using namespace ibs;

namespace {

// Parameters whose per-RBG noise floor is exactly -90 dBm.
ChannelParams noise_at_minus_90() {
  ChannelParams p;
  p.noise_figure_db = -90.0 - p.noise_density_dbm_hz - 10.0 * std::log10(p.rbg_bandwidth_hz);
  return p;
}

LinkState fixed_link(double loss_db) {
  LinkState l;
  l.pathloss_db = loss_db;
  l.shadow_db = 0.0;
  return l;
}

}  // namespace

TEST(LosProbability, Examples) {
  EXPECT_EQ(los_probability(0.0), 1.0);
  EXPECT_EQ(los_probability(5.0), 1.0);
  EXPECT_NEAR(los_probability(49.0), 0.5371548168153397, 1e-12);
  EXPECT_THROW(los_probability(-1.0), std::domain_error);
}

TEST(LosProbability, EmpiricalFractionAt20m) {
  Rng rng(17);
  ChannelParams p;
  int los = 0;
  for (int i = 0; i < 10000; ++i) los += make_link(rng, {0, 0, 1.5}, {20, 0, 1.5}, p).is_los ? 1 : 0;
  EXPECT_NEAR(los / 10000.0, los_probability(20.0), 0.02);
}

TEST(Pathloss, Examples) {
  EXPECT_NEAR(pathloss_db(5.0, 4.0, true), 56.53338090157237, 1e-9);
  EXPECT_NEAR(pathloss_db(1.0, 1.0, true), 32.4, 1e-12);
  EXPECT_GE(pathloss_db(20.0, 4.0, false), pathloss_db(20.0, 4.0, true));
}

TEST(Pathloss, MonotoneInDistance) {
  for (bool los : {true, false}) {
    double prev = -1e9;
    for (double d = 0.1; d < 80.0; d += 0.05) {
      const double pl = pathloss_db(d, 4.0, los);
      EXPECT_GE(pl, prev);
      prev = pl;
    }
  }
}

TEST(Sinr, NoInterferersIsSnr) {
  const ChannelParams p = noise_at_minus_90();
  EXPECT_NEAR(noise_power_dbm(p), -90.0, 1e-12);
  EXPECT_NEAR(sinr_db(fixed_link(0.0), 0.0, {}, p), 90.0, 1e-9);
}

TEST(Sinr, InterfererAtNoiseLevelCostsThreeDb) {
  const ChannelParams p = noise_at_minus_90();
  const std::vector<Interferer> one{{fixed_link(90.0), 0.0}};
  const double snr = sinr_db(fixed_link(10.0), 0.0, {}, p);
  EXPECT_NEAR(sinr_db(fixed_link(10.0), 0.0, one, p), snr - 10.0 * std::log10(2.0), 1e-9);
}

TEST(Sinr, HandExample) {
  const ChannelParams p = noise_at_minus_90();
  const std::vector<Interferer> one{{fixed_link(90.0), 0.0}};
  EXPECT_NEAR(sinr_db(fixed_link(80.0), 0.0, one, p), 6.9897000433601875, 1e-9);
}

TEST(Sinr, AnyInterfererStrictlyDecreases) {
  const ChannelParams p;
  Rng rng(3);
  std::uniform_real_distribution<double> loss(40, 140);
  for (int i = 0; i < 1000; ++i) {
    const LinkState s = fixed_link(loss(rng));
    const std::vector<Interferer> intf{{fixed_link(loss(rng)), 10.0}};
    EXPECT_LT(sinr_db(s, 10.0, intf, p), sinr_db(s, 10.0, {}, p));
  }
}

TEST(SpectralEfficiency, Examples) {
  const ChannelParams p;
  EXPECT_EQ(spectral_efficiency(p.sinr_min_db - 1.0, p), 0.0);
  EXPECT_NEAR(spectral_efficiency(20.0, p), 3.994926889651077, 1e-12);
  EXPECT_EQ(spectral_efficiency(60.0, p), 7.8);
}

TEST(SpectralEfficiency, MonotoneAndBounded) {
  const ChannelParams p;
  double prev = 0.0;
  for (double s = -30.0; s < 80.0; s += 0.01) {
    const double se = spectral_efficiency(s, p);
    EXPECT_GE(se, prev);
    EXPECT_LE(se, p.se_max);
    prev = se;
  }
}

TEST(RbgRate, Examples) {
  const ChannelParams p;
  EXPECT_DOUBLE_EQ(p.rbg_bandwidth_hz, 5.76e6);
  EXPECT_EQ(rbg_rate_bps(0.0, p), 0.0);
  EXPECT_NEAR(rbg_rate_bps(4.0, p), 23.04e6, 1e-6);
  EXPECT_NEAR(rbg_rate_bps(7.8, p), 44.928e6, 1e-6);
  EXPECT_THROW(rbg_rate_bps(-0.1, p), std::logic_error);
}

TEST(Power, ConstantSpectralDensitySplit) {
  EXPECT_NEAR(power_per_rbg_dbm(31.0, 17), 31.0 - 10.0 * std::log10(17.0), 1e-12);
  EXPECT_NEAR(mw_to_dbm(dbm_to_mw(-37.5)), -37.5, 1e-12);
}

TEST(ReuseMode, ParseRoundTrip) {
  for (auto m : {ReuseMode::off, ReuseMode::xr_full_reuse}) EXPECT_EQ(parse_reuse_mode(to_string(m)), m);
  EXPECT_ANY_THROW(parse_reuse_mode("sometimes"));
}

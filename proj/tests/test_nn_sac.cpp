#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "ibs/nn.hpp"
#include "ibs/sac.hpp"

using namespace ibs;
using namespace ibs::nn;

namespace {

Matrix random_input(Rng& rng, int rows, int cols) {
  std::normal_distribution<double> g(0.0, 1.0);
  Matrix x(rows, cols);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = g(rng);
  return x;
}

sac::SacConfig bandit_config() {
  sac::SacConfig c;
  c.obs_dim = 1;
  c.n_actions = 2;
  c.hidden = {32, 32};
  c.batch_size = 64;
  c.replay_capacity = 4096;
  c.learning_rate = 1e-3;
  return c;
}

void fill_bandit(sac::SacAgent& agent, Rng& rng, int n) {
  const std::vector<double> s{1.0};
  for (int i = 0; i < n; ++i) {
    const int a = static_cast<int>(rng() % 2);
    agent.store(s, a, a == 0 ? 1.0 : 0.0, s, true);
  }
}

}  // namespace

TEST(Softmax, Examples) {
  Matrix z(2, 2);
  z << 0, 1, 0, 0;
  const Matrix p = softmax_columns(z);
  EXPECT_DOUBLE_EQ(p(0, 0), 0.5);
  EXPECT_NEAR(p(0, 1), std::exp(1.0) / (std::exp(1.0) + 1.0), 1e-15);
  EXPECT_NEAR(p(1, 1), 0.2689414213699951, 1e-15);
}

TEST(Softmax, SimplexAndShiftInvariance) {
  Rng rng(4);
  for (int i = 0; i < 200; ++i) {
    const Matrix z = random_input(rng, 18, 3) * 5.0;
    const Matrix p = softmax_columns(z);
    const Matrix q = softmax_columns((z.array() + 123.0).matrix());
    for (Eigen::Index c = 0; c < p.cols(); ++c) {
      EXPECT_NEAR(p.col(c).sum(), 1.0, 1e-12);
      EXPECT_GT(p.col(c).minCoeff(), 0.0);
      EXPECT_LT(p.col(c).maxCoeff(), 1.0);
    }
    EXPECT_LT((p - q).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Mlp, IdentityLinearLayer) {
  Mlp net({3, 3}, Head::linear);
  net.weights()[0] = Matrix::Identity(3, 3);
  Vector x(3);
  x << 1.5, -2, 7;
  EXPECT_EQ(net.forward_one(x), x);
}

TEST(Mlp, ZeroUpstreamGivesZeroGradients) {
  Rng rng(1);
  Mlp net({4, 8, 3}, Head::softmax);
  net.initialize(rng);
  ForwardCache cache;
  const Matrix y = net.forward(random_input(rng, 4, 5), &cache);
  const Gradients g = net.backward(cache, Matrix::Zero(y.rows(), y.cols()));
  for (const auto& w : g.weights) EXPECT_EQ(w.cwiseAbs().maxCoeff(), 0.0);
  for (const auto& b : g.biases) EXPECT_EQ(b.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Mlp, LinearLayerWeightGradientIsInput) {
  Mlp net({3, 1}, Head::linear);
  Matrix x(3, 1);
  x << 0.5, -1.0, 2.0;
  ForwardCache cache;
  net.forward(x, &cache);
  const Gradients g = net.backward(cache, Matrix::Ones(1, 1));
  EXPECT_EQ(Matrix(g.weights[0].transpose()), x);
}

TEST(Mlp, StaleCacheRejected) {
  Rng rng(2);
  Mlp net({2, 4, 2}, Head::linear);
  net.initialize(rng);
  ForwardCache cache;
  net.forward(random_input(rng, 2, 1), &cache);
  net.touch();
  EXPECT_THROW(net.backward(cache, Matrix::Ones(2, 1)), ContractViolation);
  Mlp other({2, 4, 2}, Head::linear);
  EXPECT_THROW(other.backward(cache, Matrix::Ones(2, 1)), ContractViolation);
}

TEST(FiniteDiff, SquareLoss) {
  Mlp net({1, 1}, Head::linear);
  net.weights()[0](0, 0) = 3.0;
  const OutputLoss sq{[](const Matrix& y) { return y(0, 0) * y(0, 0); }, [](const Matrix& y) { return Matrix(2.0 * y); }};
  const Matrix x = Matrix::Ones(1, 1);
  ForwardCache cache;
  const Matrix y = net.forward(x, &cache);
  const Gradients g = net.backward(cache, sq.grad(y));
  EXPECT_NEAR(g.weights[0](0, 0), 6.0, 1e-12);
  const double h = 1e-5;
  net.weights()[0](0, 0) = 3.0 + h;
  const double up = sq.value(net.forward(x));
  net.weights()[0](0, 0) = 3.0 - h;
  const double down = sq.value(net.forward(x));
  EXPECT_NEAR((up - down) / (2 * h), 6.0, 1e-7);
}

TEST(FiniteDiff, RandomNetsBothHeads) {
  Rng rng(8);
  for (Head head : {Head::softmax, Head::linear}) {
    for (int i = 0; i < 100; ++i) {
      Mlp net({5, 12, 9, 4}, head);
      net.initialize(rng);
      const Matrix x = random_input(rng, 5, 3);
      const auto rep = finite_diff_check(net, x, linear_output_loss(random_input(rng, 4, 3)), 1e-4, 20, rng);
      EXPECT_TRUE(rep.pass) << to_string(head) << " net " << i << " err " << rep.max_rel_error;
    }
  }
}

TEST(FiniteDiff, CorruptedGradientFails) {
  Rng rng(9);
  Mlp net({5, 12, 4}, Head::softmax);
  net.initialize(rng);
  const Matrix x = random_input(rng, 5, 3);
  const OutputLoss loss = linear_output_loss(random_input(rng, 4, 3));
  ForwardCache cache;
  const Matrix y = net.forward(x, &cache);
  Gradients g = net.backward(cache, loss.grad(y));
  for (auto& w : g.weights) w *= 1.5;
  for (auto& b : g.biases) b *= 1.5;
  EXPECT_FALSE(finite_diff_check(net, x, loss, 1e-4, 50, rng, &g).pass);
}

TEST(Adam, ZeroGradientIsNoOp) {
  Rng rng(3);
  Mlp net({3, 4, 2}, Head::linear);
  net.initialize(rng);
  const Mlp before = net;
  AdamState st = AdamState::for_network(net);
  adam_step(net, net.zeros_like(), st, 1e-3);
  EXPECT_EQ(st.step, 1);
  for (std::size_t l = 0; l < net.n_layers(); ++l) EXPECT_EQ(net.weights()[l], before.weights()[l]);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  Mlp net({1, 1}, Head::linear);
  AdamState st = AdamState::for_network(net);
  Gradients g = net.zeros_like();
  g.weights[0](0, 0) = 2.0;
  adam_step(net, g, st, 1e-3);
  EXPECT_NEAR(net.weights()[0](0, 0), -1e-3, 1e-10);
  double prev = net.weights()[0](0, 0);
  for (int i = 0; i < 100; ++i) {
    adam_step(net, g, st, 1e-3);
    EXPECT_LT(net.weights()[0](0, 0), prev);
    prev = net.weights()[0](0, 0);
  }
}

TEST(Adam, NonFiniteGradientRejected) {
  Mlp net({1, 1}, Head::linear);
  AdamState st = AdamState::for_network(net);
  Gradients g = net.zeros_like();
  g.weights[0](0, 0) = std::nan("");
  EXPECT_THROW(adam_step(net, g, st, 1e-3), NumericalError);
  EXPECT_EQ(st.step, 0);
}

TEST(Checkpoint, MlpRoundTripIsByteIdentical) {
  Rng rng(5);
  Mlp net({8, 40, 30, 18}, Head::softmax);
  net.initialize(rng);
  std::stringstream a;
  net.save(a);
  const Mlp back = Mlp::load(a);
  std::stringstream b;
  back.save(b);
  EXPECT_EQ(a.str(), b.str());
  std::stringstream bad("ibs-mlp 2\n");
  EXPECT_THROW(Mlp::load(bad), CheckpointError);
}

TEST(FiniteDiff, KinkStraddlingProbesAreRedrawn) {
  // One hidden unit whose pre-activation is 1e-7: every +-1e-5 probe of its
  // incoming weight or bias flips the ReLU, the output-layer probes do not.
  Mlp net({1, 1, 1}, Head::linear);
  net.weights()[0](0, 0) = 1e-7;
  net.biases()[0](0) = 0.0;
  net.weights()[1](0, 0) = 2.0;
  const Matrix x = Matrix::Ones(1, 1);
  Rng rng(4);
  const auto rep = finite_diff_check(net, x, linear_output_loss(Matrix::Ones(1, 1)), 1e-4, 50, rng);
  EXPECT_TRUE(rep.pass) << rep.max_rel_error;
  EXPECT_EQ(rep.probes, 50);
  EXPECT_GT(rep.kinks_skipped, 0);
}

// ---- SAC ----

TEST(SoftValue, Examples) {
  Vector p(2), q(2);
  p << 1, 0;
  q << 3.5, -2;
  EXPECT_DOUBLE_EQ(sac::soft_state_value(p, q, 0.0), 3.5);
  p << 0.5, 0.5;
  q << 1, 0;
  EXPECT_NEAR(sac::soft_state_value(p, q, 0.1), 0.5693147180559945, 1e-12);
  Vector u = Vector::Constant(18, 1.0 / 18), c = Vector::Constant(18, 2.0);
  EXPECT_NEAR(sac::soft_state_value(u, c, 0.3), 2.0 + 0.3 * std::log(18.0), 1e-12);
}

TEST(ActionSelection, GreedyTieBreakAndSampling) {
  EXPECT_EQ(sac::argmax_lowest(Vector::Constant(5, 0.2)), 0);
  Rng rng(6);
  Vector dom(3);
  dom << 1.0 - 2e-12, 1e-12, 1e-12;
  int hits = 0;
  for (int i = 0; i < 10000; ++i) hits += sac::sample_categorical(dom, rng) == 0;
  EXPECT_EQ(hits, 10000);

  Vector p(4);
  p << 0.1, 0.2, 0.3, 0.4;
  std::vector<int> n(4, 0);
  for (int i = 0; i < 100000; ++i) ++n[static_cast<std::size_t>(sac::sample_categorical(p, rng))];
  for (int a = 0; a < 4; ++a) EXPECT_NEAR(n[static_cast<std::size_t>(a)] / 1e5, p[a], 0.01);
}

TEST(CriticTarget, Examples) {
  sac::SacConfig c = bandit_config();
  c.gamma = 0.9;
  sac::SacAgent agent(c, 1);
  sac::Batch b;
  b.s = Matrix::Ones(1, 2);
  b.s_next = Matrix::Ones(1, 2);
  b.a = {0, 1};
  b.r = Vector(2);
  b.r << 0.25, -1.0;
  b.done = Vector::Ones(2);
  const Vector y = agent.critic_target(b);
  EXPECT_EQ(y[0], 0.25);
  EXPECT_EQ(y[1], -1.0);

  c.gamma = 0.0;
  sac::SacAgent myopic(c, 1);
  b.done = Vector::Zero(2);
  EXPECT_EQ(myopic.critic_target(b), b.r);
}

TEST(CriticTarget, HandExampleThroughCraftedNetworks) {
  // One-state, two-action agent with zero weights: pi = (0.5, 0.5); target
  // critics output biases (1, 0) and (1.5, 0.2), so min Q = (1, 0).
  sac::SacConfig c = bandit_config();
  c.hidden = {2};
  c.init_lambda = 0.1;
  sac::SacAgent agent(c, 3);
  for (Mlp* net : {&agent.actor(), &agent.target1(), &agent.target2()}) {
    for (auto& w : net->weights()) w.setZero();
    for (auto& b : net->biases()) b.setZero();
    net->touch();
  }
  agent.target1().biases()[1] << 1.0, 0.0;
  agent.target2().biases()[1] << 1.5, 0.2;
  sac::Batch b;
  b.s = Matrix::Ones(1, 1);
  b.s_next = Matrix::Ones(1, 1);
  b.a = {0};
  b.r = Vector::Zero(1);
  b.done = Vector::Zero(1);
  EXPECT_NEAR(agent.critic_target(b)[0], 0.5123832462503951, 1e-12);
}

TEST(SacUpdate, SoftUpdateRule) {
  sac::SacConfig c = bandit_config();
  sac::SacAgent agent(c, 4);
  Rng rng(4);
  fill_bandit(agent, rng, 200);
  const Mlp old_target = agent.target1();
  agent.update();
  const Mlp& critic = agent.critic1();
  for (std::size_t l = 0; l < critic.n_layers(); ++l) {
    const Matrix expect = (1.0 - 0.005) * old_target.weights()[l] + 0.005 * critic.weights()[l];
    EXPECT_LT((agent.target1().weights()[l] - expect).cwiseAbs().maxCoeff(), 1e-12);
  }

  Mlp t = agent.target2();
  t.soft_update_from(agent.critic2(), 1.0);
  for (std::size_t l = 0; l < t.n_layers(); ++l) EXPECT_EQ(t.weights()[l], agent.critic2().weights()[l]);
}

TEST(SacUpdate, LambdaRisesWhenEntropyBelowTarget) {
  sac::SacConfig c = bandit_config();
  c.target_entropy_scale = 0.99;
  sac::SacAgent agent(c, 5);
  // Push the actor towards a near-deterministic policy.
  agent.actor().biases().back() << 8.0, -8.0;
  agent.actor().touch();
  Rng rng(5);
  fill_bandit(agent, rng, 200);
  const double before = agent.lambda();
  const auto rep = agent.update();
  EXPECT_LT(rep.entropy, c.target_entropy());
  EXPECT_GT(agent.lambda(), before);
}

TEST(SacUpdate, MinOfTwinCriticsUsedInTarget) {
  sac::SacConfig c = bandit_config();
  c.hidden = {2};
  sac::SacAgent agent(c, 6);
  for (Mlp* net : {&agent.target1(), &agent.target2()}) {
    for (auto& w : net->weights()) w.setZero();
    for (auto& b : net->biases()) b.setZero();
    net->touch();
  }
  agent.target1().biases()[1] << 5.0, 5.0;
  agent.target2().biases()[1] << -1.0, -1.0;
  agent.set_lambda(1e-12);
  sac::Batch b;
  b.s = Matrix::Ones(1, 1);
  b.s_next = Matrix::Ones(1, 1);
  b.a = {0};
  b.r = Vector::Zero(1);
  b.done = Vector::Zero(1);
  EXPECT_NEAR(agent.critic_target(b)[0], c.gamma * -1.0, 1e-9);
}

TEST(SacUpdate, UpdateNeedsAFullBatch) {
  sac::SacAgent agent(bandit_config(), 7);
  Rng rng(7);
  fill_bandit(agent, rng, 10);
  EXPECT_THROW(agent.update(), ContractViolation);
}

TEST(SacUpdate, BanditConvergesAsLambdaShrinks) {
  sac::SacConfig c = bandit_config();
  c.target_entropy_scale = 0.05;
  sac::SacAgent agent(c, 11);
  Rng rng(11);
  fill_bandit(agent, rng, 2000);
  for (int i = 0; i < 3000; ++i) agent.update();
  const std::vector<double> s{1.0};
  EXPECT_GT(agent.policy(s)[0], 0.9);
  EXPECT_EQ(agent.select_action(s, sac::ActionMode::greedy), 0);
  EXPECT_LT(agent.lambda(), c.init_lambda);
  EXPECT_GT(agent.lambda(), 0.0);
}

TEST(Replay, RingEvictsOldest) {
  sac::ReplayBuffer rb(5, 1);
  for (int i = 0; i < 8; ++i) {
    const std::vector<double> s{static_cast<double>(i)};
    rb.push(s, 0, i, s, false);
  }
  EXPECT_EQ(rb.size(), 5u);
  EXPECT_EQ(rb.total_pushed(), 8u);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(rb.oldest(i).r, static_cast<double>(i + 3));
}

TEST(Replay, UniformSamplerCoversEverySlot) {
  sac::ReplayBuffer rb(100, 1);
  const std::vector<double> s{0.0};
  for (int i = 0; i < 100; ++i) rb.push(s, 0, 0.0, s, false);
  Rng rng(13);
  std::vector<int> hits(100, 0);
  for (int draw = 0; draw < 1000; ++draw)
    for (auto slot : rb.sample_slots(100, rng)) ++hits[slot];
  double chi2 = 0;
  for (int h : hits) {
    EXPECT_GT(h, 0);
    chi2 += (h - 1000.0) * (h - 1000.0) / 1000.0;
  }
  // 99 degrees of freedom; 0.999 quantile is about 148.
  EXPECT_LT(chi2, 148.0);
}

TEST(PolicyCheckpoint, RoundTripAndMismatch) {
  sac::SacConfig c;
  sac::SacAgent agent(c, 21);
  std::stringstream a;
  agent.save_policy(a);
  sac::SacAgent other(c, 99);
  other.load_policy(a);
  std::stringstream b;
  other.save_policy(b);
  EXPECT_EQ(a.str(), b.str());

  Rng rng(21);
  std::uniform_real_distribution<double> u(0, 1);
  for (int i = 0; i < 100; ++i) {
    std::vector<double> o(8);
    for (auto& v : o) v = u(rng);
    EXPECT_EQ(agent.select_action(o, sac::ActionMode::greedy), other.select_action(o, sac::ActionMode::greedy));
  }

  sac::SacConfig small = c;
  small.hidden = {64};
  sac::SacAgent wrong(small, 1);
  std::stringstream again(a.str());
  EXPECT_THROW(wrong.load_policy(again), CheckpointError);
}

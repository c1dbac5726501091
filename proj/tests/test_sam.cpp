#include <gtest/gtest.h>

#include <cmath>

#include "fedrec/sam.hpp"
#include "oracles.hpp"

using namespace fedrec;

namespace {

struct Instance {
  GlobalParams g;
  ClientState c;
  std::vector<Sample> batch;
};

Instance random_instance(Rng& rng, ScoreKind kind, std::size_t n, std::size_t d) {
  std::normal_distribution<double> normal(0.0, 0.6);
  Instance in{GlobalParams(n, ScoreFn{kind, d, 3}), {}, {}};
  for (auto& x : in.g.flat()) x = normal(rng);
  in.c.embedding.resize(d);
  for (auto& x : in.c.embedding) x = normal(rng);
  std::uniform_int_distribution<ItemId> item(0, static_cast<ItemId>(n - 1));
  std::bernoulli_distribution label(0.5);
  for (int i = 0; i < 5; ++i) in.batch.push_back({item(rng), label(rng) ? 1.0 : 0.0});
  return in;
}

}  // namespace

TEST(WorstCase, Examples) {
  auto e = worst_case_perturbation(std::vector<double>{3.0, 4.0}, 0.1);
  EXPECT_NEAR(e[0], 0.06, 1e-15);
  EXPECT_NEAR(e[1], 0.08, 1e-15);
  auto z = worst_case_perturbation(std::vector<double>{0.0, 0.0}, 0.5);
  EXPECT_EQ(z, (std::vector<double>{0.0, 0.0}));
  auto r0 = worst_case_perturbation(std::vector<double>{1.0, 2.0}, 0.0);
  EXPECT_EQ(r0, (std::vector<double>{0.0, 0.0}));
  auto tiny = worst_case_perturbation(std::vector<double>{1e-13, 0.0}, 1.0);
  EXPECT_EQ(tiny, (std::vector<double>{0.0, 0.0}));
}

TEST(WorstCase, NormEqualsRadius) {
  Rng rng(3);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> dim(1, 64);
  std::uniform_real_distribution<double> radius(1e-4, 5.0);
  std::uniform_real_distribution<double> log_scale(-8.0, 8.0);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> g(dim(rng));
    const double s = std::pow(10.0, log_scale(rng));
    for (auto& x : g) x = s * normal(rng);
    const double rho = radius(rng);
    EXPECT_NEAR(l2_norm(worst_case_perturbation(g, rho)), rho, 1e-9);
  }
}

TEST(WorstCase, SparseKeepsSupport) {
  Rng rng(4);
  auto in = random_instance(rng, ScoreKind::mlp1, 12, 3);
  auto grads = batch_gradients(in.g, in.c.embedding, in.batch);
  auto e = worst_case_perturbation(grads.shared, 0.3);
  EXPECT_EQ(e.items, grads.shared.items);
  EXPECT_NEAR(e.norm(), 0.3, 1e-12);
  auto dense = worst_case_perturbation(grads.shared.to_dense(12), 0.3);
  auto sparse_dense = e.to_dense(12);
  for (std::size_t i = 0; i < dense.size(); ++i) EXPECT_NEAR(sparse_dense[i], dense[i], 1e-15);
}

TEST(SamNonshared, ZeroRadiusIsPlainGradientBitwise) {
  Rng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    auto in = random_instance(rng, trial % 2 ? ScoreKind::mlp1 : ScoreKind::dot, 6, 3);
    auto plain = batch_gradients(in.g, in.c, in.batch).user;
    SamConfig cfg{0.0, 0.0, true, true};
    EXPECT_EQ(sam_grad_nonshared(in.g, in.c, in.batch, cfg), plain);
    SamConfig off{0.5, 0.5, true, false};
    EXPECT_EQ(sam_grad_nonshared(in.g, in.c, in.batch, off), plain);
  }
}

TEST(SamNonshared, MatchesTwoPassOracle) {
  GlobalParams g(2, ScoreFn{ScoreKind::dot, 2, 0});
  g.item(0)[0] = 0.3;
  g.item(0)[1] = -0.7;
  g.item(1)[0] = 1.1;
  g.item(1)[1] = 0.4;
  ClientState c;
  c.embedding = {0.2, -0.5};
  std::vector<Sample> batch{{0, 1.0}, {1, 0.0}, {1, 1.0}};
  const auto sh = oracle::shape_of(g);
  const auto theta = oracle::dense_theta(g);
  for (double rho : {0.01, 0.1, 0.7}) {
    const auto eps = oracle::ascent(oracle::gradient(sh, theta, c.embedding, batch).u, rho);
    const auto expect = oracle::gradient(sh, theta, oracle::plus(c.embedding, eps), batch).u;
    auto got = sam_grad_nonshared(g, c, batch, SamConfig{0.0, rho, true, true});
    for (std::size_t j = 0; j < 2; ++j) EXPECT_NEAR(got[j], expect[j], 1e-12);
  }
}

TEST(SamNonshared, PerturbationIsAnAscentDirection) {
  Rng rng(6);
  for (int trial = 0; trial < 30; ++trial) {
    auto in = random_instance(rng, trial % 2 ? ScoreKind::mlp1 : ScoreKind::dot, 6, 3);
    const auto g = batch_gradients(in.g, in.c.embedding, in.batch).user;
    const auto eps = worst_case_perturbation(g, 0.1);
    const double t = 1e-6;
    auto up = in.c.embedding;
    axpy(t, eps, up);
    auto down = in.c.embedding;
    axpy(-t, eps, down);
    const double deriv = (batch_loss(in.g, up, in.batch) - batch_loss(in.g, down, in.batch)) / (2 * t);
    EXPECT_GE(deriv, 0.0);
  }
}

TEST(SamNonshared, FirstOrderInnerMaximum) {
  Rng rng(7);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double rho = 1e-3;
  for (int trial = 0; trial < 10; ++trial) {
    auto in = random_instance(rng, trial % 2 ? ScoreKind::mlp1 : ScoreKind::dot, 6, 4);
    const auto g = batch_gradients(in.g, in.c.embedding, in.batch).user;
    const double best = batch_loss(in.g, add(in.c.embedding, worst_case_perturbation(g, rho)), in.batch);
    for (int k = 0; k < 100; ++k) {
      std::vector<double> e(4);
      for (auto& x : e) x = normal(rng);
      scale(rho / l2_norm(e), e);
      const double other = batch_loss(in.g, add(in.c.embedding, e), in.batch);
      EXPECT_GE(best, other - 10.0 * rho * rho);
    }
  }
}

TEST(SamShared, ZeroRadiusIsPlainGradientBitwise) {
  Rng rng(8);
  for (int trial = 0; trial < 10; ++trial) {
    auto in = random_instance(rng, trial % 2 ? ScoreKind::mlp1 : ScoreKind::dot, 6, 3);
    auto plain = batch_gradients(in.g, in.c, in.batch).shared;
    auto got = sam_grad_shared(in.g, in.c, in.batch, SamConfig{0.0, 0.3, true, true});
    EXPECT_EQ(got.items, plain.items);
    EXPECT_EQ(got.rows, plain.rows);
    EXPECT_EQ(got.score, plain.score);
    auto off = sam_grad_shared(in.g, in.c, in.batch, SamConfig{0.3, 0.3, false, true});
    EXPECT_EQ(off.rows, plain.rows);
  }
}

TEST(SamShared, MatchesTwoPassOracle) {
  Rng rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    const auto kind = trial % 2 ? ScoreKind::mlp1 : ScoreKind::dot;
    auto in = random_instance(rng, kind, 2 + trial % 5, 2);
    const auto sh = oracle::shape_of(in.g);
    const auto theta = oracle::dense_theta(in.g);
    const double rho = 0.05 * (1 + trial % 4);
    const auto eps = oracle::ascent(oracle::gradient(sh, theta, in.c.embedding, in.batch).co, rho);
    const auto expect = oracle::gradient(sh, oracle::plus(theta, eps), in.c.embedding, in.batch).co;
    auto got = sam_grad_shared(in.g, in.c, in.batch, SamConfig{rho, 0.0, true, true}).to_dense(in.g.num_items());
    for (std::size_t i = 0; i < expect.size(); ++i) EXPECT_NEAR(got[i], expect[i], 1e-12);
  }
}

TEST(SamShared, SupportIsBatchItemsPlusScoreWeights) {
  GlobalParams g(10, ScoreFn{ScoreKind::mlp1, 3, 2});
  Rng rng(10);
  std::normal_distribution<double> normal(0.0, 0.5);
  for (auto& x : g.flat()) x = normal(rng);
  ClientState c;
  c.embedding = {0.1, 0.2, -0.3};
  std::vector<Sample> batch{{2, 1.0}, {7, 0.0}, {2, 0.0}};
  auto got = sam_grad_shared(g, c, batch, SamConfig{0.2, 0.2, true, true});
  EXPECT_EQ(got.items, (std::vector<ItemId>{2, 7}));
  EXPECT_EQ(got.score.size(), g.score_fn().param_count());
}

TEST(NormReg, HandExample) {
  NormRegConfig cfg{true, 1.0, 100.0, SigmaPolicy::fixed};
  auto g = norm_reg_gradient(std::vector<double>{1.0, 1.0}, cfg, 2);
  EXPECT_NEAR(g[0], 0.05, 1e-15);
  EXPECT_NEAR(g[1], 0.05, 1e-15);
  auto z = norm_reg_gradient(std::vector<double>{0.0, 0.0, 0.0}, cfg, 3);
  EXPECT_EQ(z, (std::vector<double>{0.0, 0.0, 0.0}));
  NormRegConfig off = cfg;
  off.enabled = false;
  EXPECT_EQ(norm_reg_gradient(std::vector<double>{1.0, 1.0}, off, 2), (std::vector<double>{0.0, 0.0}));
}

TEST(NormReg, MatchesFiniteDifferencesOfLogTerm) {
  Rng rng(11);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> sig(0.05, 2.0), bign(10.0, 1e4);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> theta(1 + trial % 9);
    for (auto& x : theta) x = normal(rng);
    NormRegConfig cfg{true, sig(rng), bign(rng), SigmaPolicy::fixed};
    const double t = static_cast<double>(theta.size());
    auto got = norm_reg_gradient(theta, cfg, theta.size());
    auto f = [&](const oracle::Vec& x) { return oracle::reg_log_term(x, cfg.sigma, cfg.big_n, t); };
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const double fd = oracle::central_diff(f, theta, i, 1e-5);
      const double scale = std::max(std::abs(fd), std::abs(got[i]));
      if (scale == 0.0) continue;
      EXPECT_LT(std::abs(fd - got[i]) / scale, 1e-6) << "trial " << trial;
    }
  }
}

TEST(NormReg, ConfigValidation) {
  NormRegConfig bad{true, 0.0, 10.0, SigmaPolicy::fixed};
  EXPECT_THROW(bad.validate(), ConfigError);
  NormRegConfig negative{true, -1.0, 10.0, SigmaPolicy::fixed};
  EXPECT_THROW(negative.validate(), ConfigError);
  NormRegConfig ok{true, 0.2, 10.0, SigmaPolicy::fixed};
  EXPECT_NO_THROW(ok.validate());
  SamConfig neg{-0.1, 0.0, true, true};
  EXPECT_THROW(neg.validate(), ConfigError);
}

TEST(NormReg, SigmaFromRho) {
  const double n = 100.0;
  const std::size_t t_co = 50, t_ur = 4;
  const double l = std::log(std::sqrt(n));
  auto bound = [l](double rho, double t) { return rho / std::sqrt(2 * l + t + 2 * std::sqrt(t * l)); };
  EXPECT_NEAR(sigma_from_rho(SamConfig{0.3, 0.1, true, true}, n, t_co, t_ur),
              std::min(bound(0.3, 50.0), bound(0.1, 4.0)), 1e-15);
  EXPECT_NEAR(sigma_from_rho(SamConfig{0.3, 0.5, true, true}, n, t_co, t_ur),
              std::min(bound(0.3, 50.0), bound(0.5, 4.0)), 1e-15);
  EXPECT_NEAR(sigma_from_rho(SamConfig{0.0, 0.1, true, true}, n, t_co, t_ur), bound(0.1, 4.0), 1e-15);
  EXPECT_THROW(sigma_from_rho(SamConfig{0.0, 0.0, true, true}, n, t_co, t_ur), ConfigError);
  NormRegConfig fixed{true, 0.7, n, SigmaPolicy::fixed};
  EXPECT_EQ(resolve_sigma(fixed, SamConfig{}, n, t_co, t_ur), 0.7);
}

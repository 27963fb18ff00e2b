#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "limi/critic.hpp"
#include "limi/error.hpp"
#include "limi/estimators.hpp"
#include "limi/local_mi.hpp"
#include "limi/synthetic_world.hpp"
#include "test_util.hpp"

namespace limi {
namespace {

ScoreBatch batch(std::vector<double> joint, std::size_t k, std::vector<double> neg) {
  ScoreBatch s;
  s.joint = std::move(joint);
  s.negative = Matrix(s.joint.size(), k);
  s.negative.data = std::move(neg);
  return s;
}

Matrix random_joint(std::size_t r, std::size_t c, Rng& rng) {
  Matrix m(r, c);
  double total = 0.0;
  for (auto& x : m.data) {
    x = -std::log(1.0 - rng.uniform()) + 1e-3;
    total += x;
  }
  for (auto& x : m.data) x /= total;
  return m;
}

Matrix log_ratio_critic(const Matrix& joint) {
  std::vector<double> pa(joint.rows, 0.0), pb(joint.cols, 0.0);
  for (std::size_t a = 0; a < joint.rows; ++a)
    for (std::size_t b = 0; b < joint.cols; ++b) {
      pa[a] += joint(a, b);
      pb[b] += joint(a, b);
    }
  Matrix f(joint.rows, joint.cols);
  for (std::size_t a = 0; a < joint.rows; ++a)
    for (std::size_t b = 0; b < joint.cols; ++b)
      f(a, b) = std::log(joint(a, b) / (pa[a] * pb[b]));
  return f;
}

TEST(CriticScore, ZeroCriticScoresZero) {
  const auto spec = critic_spec(3, 2, std::vector<std::size_t>{4});
  const auto p = make_critic_params(spec);
  EXPECT_EQ(critic_score(std::vector<double>{1, 2, 3}, std::vector<double>{4, 5}, spec, p), 0.0);
}

TEST(CriticScore, OrderOfConcatenationMatters) {
  Rng rng(3);
  const auto spec = critic_spec(2, 2, std::vector<std::size_t>{8});
  auto p = make_critic_params(spec);
  init_critic(p, spec, rng);
  const std::vector<double> a{0.3, -1.0}, b{2.0, 0.5};
  EXPECT_NE(critic_score(a, b, spec, p), critic_score(b, a, spec, p));
}

TEST(CriticScore, HandSetSingleHiddenUnit) {
  const auto spec = critic_spec(1, 1, std::vector<std::size_t>{1});
  auto p = make_critic_params(spec);
  p.segment("w0")[0] = 2.0;   // image
  p.segment("w0")[1] = -1.0;  // text
  p.segment("b0")[0] = 0.5;
  p.segment("w1")[0] = 3.0;
  p.segment("b1")[0] = -0.25;
  // relu(2*1.5 - 1*0.5 + 0.5) = 3, then 3*3 - 0.25.
  EXPECT_DOUBLE_EQ(critic_score(std::vector<double>{1.5}, std::vector<double>{0.5}, spec, p),
                   8.75);
}

TEST(CriticScore, WidthMismatch) {
  const auto spec = critic_spec(2, 2, std::vector<std::size_t>{4});
  const auto p = make_critic_params(spec);
  EXPECT_THROW(critic_score(std::vector<double>{1, 2, 3}, std::vector<double>{1, 2}, spec, p),
               DimensionError);
}

TEST(PairScorer, MatchesStandaloneScore) {
  Rng rng(8);
  const auto spec = critic_spec(3, 2, std::vector<std::size_t>{6, 4});
  auto p = make_critic_params(spec);
  init_critic(p, spec, rng);
  const Matrix img = test::random_matrix(4, 3, rng), txt = test::random_matrix(5, 2, rng);
  PairScorer scorer(spec, p, 3);
  scorer.set_features(img, txt);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t t = 0; t < 5; ++t)
      EXPECT_NEAR(scorer.score(i, t), critic_score(img.row(i), txt.row(t), spec, p), 1e-12);
}

TEST(DvBound, ConstantCriticIsZero) {
  const auto e = dv_bound(batch({2.5, 2.5}, 3, std::vector<double>(6, 2.5)));
  EXPECT_NEAR(e.value_nats, 0.0, 1e-12);
  EXPECT_EQ(e.bound_type, BoundType::kMineDv);
  EXPECT_EQ(e.n_joint, 2u);
}

TEST(DvBound, HandExample) {
  const auto e = dv_bound(batch({std::log(4.0)}, 2, {0.0, 0.0}));
  EXPECT_NEAR(e.value_nats, std::log(4.0), 1e-12);
}

TEST(DvBound, StableForLargeScores) {
  const auto e = dv_bound(batch({1000.0}, 2, {1000.0, 1000.0}));
  EXPECT_NEAR(e.value_nats, 0.0, 1e-12);
}

TEST(DvBound, ExactExpectationOptimalCriticEqualsTrueMi) {
  Matrix j(2, 2);
  j.data = {0.4, 0.1, 0.1, 0.4};
  EXPECT_NEAR(dv_bound_exact(j, log_ratio_critic(j)), true_mi_discrete(j), 1e-12);
}

TEST(DvBound, ExactExpectationNeverExceedsTrueMi) {
  Rng rng(21);
  for (int trial = 0; trial < 100; ++trial) {
    const Matrix j = random_joint(3, 4, rng);
    const double mi = true_mi_discrete(j);
    const Matrix f = test::random_matrix(3, 4, rng, 2.0);
    EXPECT_LE(dv_bound_exact(j, f), mi + 1e-12) << "trial " << trial;
    EXPECT_NEAR(dv_bound_exact(j, log_ratio_critic(j)), mi, 1e-9);
  }
}

TEST(InfoNce, ConstantCritic) {
  const std::size_t k = 5;
  const auto s = batch({1.0, 1.0, 1.0}, k, std::vector<double>(3 * k, 1.0));
  EXPECT_NEAR(infonce_bound(s.joint, s.negative, false).value_nats, -std::log(6.0), 1e-12);
  EXPECT_NEAR(infonce_bound(s.joint, s.negative, true).value_nats, 0.0, 1e-12);
}

TEST(InfoNce, HandExample) {
  const auto s = batch({std::log(9.0)}, 2, {0.0, 0.0});
  const double raw = std::log(9.0) - std::log(11.0);
  EXPECT_NEAR(infonce_bound(s.joint, s.negative, false).value_nats, raw, 1e-12);
  EXPECT_NEAR(infonce_bound(s.joint, s.negative, true).value_nats, raw + std::log(3.0), 1e-12);
}

TEST(InfoNce, SeparatingCriticApproachesCapFromBelow) {
  const std::size_t k = 7;
  const auto s = batch({50.0, 50.0}, k, std::vector<double>(2 * k, -50.0));
  const double v = infonce_bound(s.joint, s.negative, true).value_nats;
  EXPECT_LE(v, std::log(8.0));
  EXPECT_NEAR(v, std::log(8.0), 1e-12);
}

TEST(InfoNce, NormalizedNeverExceedsCap) {
  Rng rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t b = 1 + rng.index(6), k = 1 + rng.index(10);
    ScoreBatch s;
    s.joint.resize(b);
    test::fill_normal(s.joint, rng, 20.0);
    s.negative = test::random_matrix(b, k, rng, 20.0);
    const auto e = infonce_bound(s.joint, s.negative, true);
    EXPECT_LE(e.value_nats, std::log(static_cast<double>(k + 1)) + 1e-12);
    EXPECT_TRUE(e.normalized);
    EXPECT_EQ(e.n_negatives, k);
  }
}

TEST(Bounds, InvariantToNegativePermutationWithinRow) {
  Rng rng(6);
  ScoreBatch s;
  s.joint = {0.3, -0.2, 1.1};
  s.negative = test::random_matrix(3, 4, rng);
  ScoreBatch p = s;
  for (std::size_t r = 0; r < 3; ++r) {
    auto row = p.negative.row(r);
    std::reverse(row.begin(), row.end());
    std::rotate(row.begin(), row.begin() + 1, row.end());
  }
  EXPECT_NEAR(dv_bound(s).value_nats, dv_bound(p).value_nats, 1e-12);
  EXPECT_NEAR(infonce_bound(s.joint, s.negative, false).value_nats,
              infonce_bound(p.joint, p.negative, false).value_nats, 1e-12);
}

double bound_value(BoundType b, const ScoreBatch& s) {
  return b == BoundType::kMineDv ? dv_bound(s).value_nats
                                 : infonce_bound(s.joint, s.negative, false).value_nats;
}

TEST(Bounds, ScoreGradientsMatchFiniteDifferences) {
  Rng rng(10);
  for (BoundType b : {BoundType::kMineDv, BoundType::kCpc}) {
    ScoreBatch s;
    s.joint.resize(4);
    test::fill_normal(s.joint, rng);
    s.negative = test::random_matrix(4, 3, rng);
    const auto g = bound_gradient(b, s);
    EXPECT_NEAR(g.value, bound_value(b, s), 1e-12);
    for (std::size_t i = 0; i < 4; ++i) {
      auto f = [&](const std::vector<double>& x) {
        ScoreBatch t = s;
        t.joint = x;
        return bound_value(b, t);
      };
      EXPECT_LT(test::rel_error(g.d_joint[i], test::central_difference(f, s.joint, i)), 1e-7);
    }
    for (std::size_t i = 0; i < s.negative.data.size(); ++i) {
      auto f = [&](const std::vector<double>& x) {
        ScoreBatch t = s;
        t.negative.data = x;
        return bound_value(b, t);
      };
      EXPECT_LT(test::rel_error(g.d_negative.data[i],
                                test::central_difference(f, s.negative.data, i)),
                1e-7);
    }
  }
}

TEST(Bounds, CriticGradientsMatchFiniteDifferences) {
  Rng rng(13);
  const auto spec = critic_spec(3, 3, std::vector<std::size_t>{8, 4});
  for (BoundType b : {BoundType::kMineDv, BoundType::kCpc}) {
    auto critic = make_critic_params(spec);
    init_critic(critic, spec, rng);
    const Matrix img = test::random_matrix(6, 3, rng), txt = test::random_matrix(6, 3, rng);
    ObjectiveOptions o;
    o.bound = b;
    o.k_negatives = 3;
    auto objective = [&](const ParamVector& c) {
      Rng neg(99);
      return pair_feature_objective(img, txt, spec, c, o, neg);
    };
    const auto r = objective(critic);
    std::vector<double> x(critic.values().begin(), critic.values().end());
    double worst = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      auto f = [&](const std::vector<double>& v) {
        ParamVector c = critic;
        std::copy(v.begin(), v.end(), c.values().begin());
        return objective(c).objective;
      };
      worst = std::max(worst, test::rel_error(r.critic_grad.values()[i],
                                              test::central_difference(f, x, i)));
    }
    EXPECT_LT(worst, 1e-4) << to_string(b);
  }
}

TEST(ShuffleNegatives, ForcedDerangementForTwo) {
  Rng rng(1);
  const auto m = shuffle_negatives(2, 1, rng);
  EXPECT_EQ(m(0, 0), 1u);
  EXPECT_EQ(m(1, 0), 0u);
}

TEST(ShuffleNegatives, NeverSelfAndRejectsSmallBatch) {
  Rng rng(2);
  const auto m = shuffle_negatives(7, 20, rng);
  for (std::size_t b = 0; b < 7; ++b)
    for (std::size_t k = 0; k < 20; ++k) {
      EXPECT_NE(m(b, k), b);
      EXPECT_LT(m(b, k), 7u);
    }
  EXPECT_THROW(shuffle_negatives(1, 1, rng), InvalidArgument);
}

TEST(ShuffleNegatives, PartnersUniformChiSquare) {
  // 5 categories (batch 6 minus self): chi-square with 4 dof, p = 0.01
  // critical value 13.277.
  Rng rng(17);
  const std::size_t batch = 6, draws = 100000;
  std::vector<std::size_t> counts(batch, 0);
  const auto m = shuffle_negatives(batch, draws, rng);
  for (std::size_t k = 0; k < draws; ++k) ++counts[m(2, k)];
  EXPECT_EQ(counts[2], 0u);
  const double expected = static_cast<double>(draws) / 5.0;
  double chi2 = 0.0;
  for (std::size_t c = 0; c < batch; ++c) {
    if (c == 2) continue;
    const double d = static_cast<double>(counts[c]) - expected;
    chi2 += d * d / expected;
  }
  EXPECT_LT(chi2, 13.277);
}

TEST(LogSumExp, Basics) {
  EXPECT_TRUE(std::isinf(log_sum_exp(std::vector<double>{})));
  EXPECT_NEAR(log_sum_exp(std::vector<double>{0.0, 0.0}), std::log(2.0), 1e-15);
  EXPECT_NEAR(log_sum_exp(std::vector<double>{1000.0, 1000.0}), 1000.0 + std::log(2.0), 1e-12);
}

TEST(ScoreBatch, Validation) {
  EXPECT_THROW(dv_bound(batch({}, 1, {})), InvalidArgument);
  EXPECT_THROW(dv_bound(batch({std::nan("")}, 1, {0.0})), NumericError);
}

}  // namespace
}  // namespace limi

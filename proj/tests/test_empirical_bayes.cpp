#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "pnmtrem/empirical_bayes.hpp"
#include "pnmtrem/fitter.hpp"
#include "pnmtrem/numeric.hpp"
#include "pnmtrem/simulator.hpp"

using namespace pnmtrem;

namespace {

struct Fixture {
  TruthConfig truth;
  PanelData data;
  FitResult fit;
  SubjectEffects effects;
};

const Fixture& fixture() {
  static const Fixture f = [] {
    Fixture x;
    x.data = simulate_panel(x.truth, 11);
    x.fit = fit(x.data);
    x.effects = estimate_effects(x.fit, x.data);
    return x;
  }();
  return f;
}

double grid_mode(const std::vector<PosteriorTerm>& terms) {
  const int n = 100000;
  double best = -std::numeric_limits<double>::infinity();
  double arg = 0.0;
  for (int g = 0; g <= n; ++g) {
    const double z = -8.0 + 16.0 * g / n;
    const double v = log_posterior(terms, z);
    if (v > best) {
      best = v;
      arg = z;
    }
  }
  return arg;
}

}  // namespace

TEST(PosteriorMode, ZeroLoadingGivesZero) {
  std::vector<PosteriorTerm> terms = {{0.4, 0.0, 1}, {-1.0, 0.0, 0}, {2.0, 0.0, 1}};
  const ModeResult m = posterior_mode(terms);
  EXPECT_TRUE(m.converged);
  EXPECT_EQ(m.z, 0.0);
}

TEST(PosteriorMode, SignFollowsResponses) {
  std::vector<PosteriorTerm> ones, zeros;
  for (int t = 0; t < 6; ++t) {
    ones.push_back({0.2 * t - 0.5, 0.8, 1});
    zeros.push_back({0.2 * t - 0.5, 0.8, 0});
  }
  EXPECT_GT(posterior_mode(ones).z, 0.0);
  EXPECT_LT(posterior_mode(zeros).z, 0.0);
}

TEST(PosteriorMode, ScoreMatchesDerivative) {
  std::vector<PosteriorTerm> terms = {{0.3, 0.7, 1}, {-0.8, 1.1, 0}, {1.5, 0.4, 1}};
  const double h = 1e-6;
  for (double z : {-2.0, -0.3, 0.0, 1.7}) {
    const double fd = (log_posterior(terms, z + h) - log_posterior(terms, z - h)) / (2.0 * h);
    EXPECT_NEAR(posterior_score(terms, z), fd, 1e-7);
  }
}

TEST(PosteriorMode, MonotoneInResponses) {
  std::mt19937_64 eng(5);
  std::uniform_real_distribution<double> u(-1.5, 1.5);
  for (int r = 0; r < 30; ++r) {
    std::vector<PosteriorTerm> terms;
    for (int c = 0; c < 8; ++c) terms.push_back({u(eng), 0.3 + std::abs(u(eng)), u(eng) > 0.0 ? 1 : 0});
    const double before = posterior_mode(terms).z;
    for (auto& term : terms) {
      if (term.y == 0) {
        term.y = 1;
        break;
      }
    }
    EXPECT_GE(posterior_mode(terms).z, before - 1e-12);
  }
}

TEST(EstimateZ, MatchesGridSearch) {
  const Fixture& f = fixture();
  for (int i = 0; i < 50; ++i) {
    const auto terms = posterior_terms(f.fit, f.data, i);
    ASSERT_EQ(static_cast<int>(terms.size()), f.data.n_times() * f.data.n_responses());
    const double z = estimate_z(i, f.fit, f.data);
    EXPECT_NEAR(z, grid_mode(terms), 1e-4) << "subject " << i;
    EXPECT_LE(std::abs(posterior_score(terms, z)), 1e-8);
    EXPECT_EQ(z, f.effects.z_hat[i]);
  }
}

TEST(EstimateZ, EffectsScaleWithSigma) {
  const Fixture& f = fixture();
  ASSERT_EQ(f.effects.b_hat.cols(), 4);
  for (int i = 0; i < f.data.n_subjects(); ++i) {
    EXPECT_TRUE(f.effects.converged[i]);
    EXPECT_DOUBLE_EQ(f.effects.b_hat(i, 0), f.fit.theta1.sigma1() * f.effects.z_hat[i]);
    for (int t = 1; t < 4; ++t) EXPECT_DOUBLE_EQ(f.effects.b_hat(i, t), f.fit.theta2.sigma(t) * f.effects.z_hat[i]);
  }
}

TEST(Surfaces, ConsistentWithFit) {
  const Fixture& f = fixture();
  const auto rows = probability_surfaces(f.fit, f.data, f.effects);
  ASSERT_EQ(rows.size(), 2000u);
  for (const auto& r : rows) {
    EXPECT_NEAR(r.marginal, probit_cdf(r.marginal_predictor), 1e-15);
    EXPECT_NEAR(r.conditional, probit_cdf(r.conditional_predictor), 1e-15);
    const int i = r.subject;
    if (std::abs(f.effects.z_hat[i]) < 1e-300) EXPECT_EQ(r.conditional, r.conditional_average);
  }
  SubjectEffects zero = f.effects;
  zero.b_hat.setZero();
  for (const auto& r : probability_surfaces(f.fit, f.data, zero)) EXPECT_EQ(r.conditional, r.conditional_average);
}

TEST(Surfaces, NegativeEffectLowersConditional) {
  TruthConfig truth;
  truth.shared_effect = true;
  truth.main.c.setConstant(std::log(1.5));
  truth.baseline.c1 = std::log(1.5);
  const PanelData d = simulate_panel(truth, 12);
  const FitResult fr = fit(d);
  const auto rows = probability_surfaces(fr, d, estimate_effects(fr, d));
  const Eigen::MatrixXd z = simulated_effects(truth, 12);
  std::vector<double> cond(static_cast<std::size_t>(d.n_subjects()), 0.0);
  std::vector<double> marg(cond.size(), 0.0);
  for (const auto& r : rows) {
    cond[r.subject] += r.conditional;
    marg[r.subject] += r.marginal;
  }
  // Per subject the posterior mode can disagree with the drawn effect, so compare group means.
  double low = 0.0, high = 0.0;
  int n_low = 0, n_high = 0;
  for (int i = 0; i < d.n_subjects(); ++i) {
    if (z(i, 0) < -1.5) {
      low += cond[i] - marg[i];
      ++n_low;
    } else if (z(i, 0) > 1.5) {
      high += cond[i] - marg[i];
      ++n_high;
    }
  }
  ASSERT_GT(n_low, 0);
  ASSERT_GT(n_high, 0);
  EXPECT_LT(low / n_low, 0.0);
  EXPECT_GT(high / n_high, 0.0);
}

TEST(ProbitR2, OracleAndDegenerate) {
  const std::vector<double> x = {1.0, 2.0, 3.0, 4.0, 5.0};
  EXPECT_NEAR(simple_r2(x, x), 1.0, 1e-15);
  const std::vector<double> y = {2.0, 1.0, 4.0, 3.0, 6.0};
  // Hand oracle: r = cov / (sd_x sd_y) with cov = 2.0, var_x = 2.0, var_y = 2.96.
  EXPECT_NEAR(simple_r2(x, y), 4.0 / (2.0 * 2.96), 1e-12);
  const std::vector<double> flat = {1.0, 1.0, 1.0, 1.0, 1.0};
  EXPECT_TRUE(std::isnan(simple_r2(flat, y)));

  std::mt19937_64 eng(3);
  std::normal_distribution<double> nd;
  std::vector<double> a(20000), b(20000);
  for (std::size_t s = 0; s < a.size(); ++s) {
    a[s] = nd(eng);
    b[s] = nd(eng);
  }
  EXPECT_LT(simple_r2(a, b), 1e-3);

  const Fixture& f = fixture();
  const auto r2 = probit_r2(probability_surfaces(f.fit, f.data, f.effects), 2);
  ASSERT_EQ(r2.size(), 2u);
  for (const auto& r : r2) {
    EXPECT_GE(r.r2_baseline, 0.0);
    EXPECT_LE(r.r2_main, 1.0);
  }
}

TEST(Accuracy, Examples) {
  std::vector<std::uint8_t> y = {1, 0, 1, 0};
  const std::vector<double> perfect = {1.0, 0.0, 1.0, 0.0};
  auto m = accuracy_metrics(y, perfect);
  EXPECT_EQ(m.epcp, 1.0);
  EXPECT_EQ(m.auroc, 1.0);
  const std::vector<double> half(4, 0.5);
  m = accuracy_metrics(y, half);
  EXPECT_EQ(m.epcp, 0.5);
  EXPECT_EQ(m.auroc, 0.5);
  std::vector<std::uint8_t> y3 = {1, 0, 1};
  const std::vector<double> p3 = {0.9, 0.2, 0.6};
  m = accuracy_metrics(y3, p3);
  EXPECT_EQ(m.auroc, 1.0);
  EXPECT_NEAR(m.epcp, 2.3 / 3.0, 1e-12);
  std::vector<std::uint8_t> ones = {1, 1};
  m = accuracy_metrics(ones, std::vector<double>{0.3, 0.8});
  EXPECT_FALSE(m.auroc_defined);
  EXPECT_TRUE(std::isnan(m.auroc));
}

TEST(Accuracy, RankInvariantAndPairOracle) {
  std::mt19937_64 eng(9);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<std::uint8_t> y(300);
  std::vector<double> p(300), q(300);
  for (std::size_t s = 0; s < y.size(); ++s) {
    p[s] = std::round(u(eng) * 20.0) / 20.0;  // ties on purpose
    y[s] = u(eng) < p[s] ? 1 : 0;
    q[s] = std::pow(p[s], 3.0);  // monotone, stays in [0, 1]
  }
  double wins = 0.0;
  double pairs = 0.0;
  for (std::size_t a = 0; a < y.size(); ++a) {
    for (std::size_t b = 0; b < y.size(); ++b) {
      if (y[a] == 1 && y[b] == 0) {
        pairs += 1.0;
        wins += p[a] > p[b] ? 1.0 : (p[a] == p[b] ? 0.5 : 0.0);
      }
    }
  }
  EXPECT_NEAR(accuracy_metrics(y, p).auroc, wins / pairs, 1e-12);
  EXPECT_NEAR(accuracy_metrics(y, q).auroc, wins / pairs, 1e-12);
}

TEST(Accuracy, ConditionalBeatsMarginalOnHeterogeneousPanel) {
  TruthConfig truth;
  truth.shared_effect = true;
  truth.baseline.c1 = std::log(1.5);
  truth.main.c.setConstant(std::log(1.5));
  const PanelData d = simulate_panel(truth, 13);
  const FitResult fr = fit(d);
  const auto rows = probability_surfaces(fr, d, estimate_effects(fr, d));
  std::vector<std::uint8_t> y;
  std::vector<double> marg, cond;
  for (const auto& r : rows) {
    y.push_back(static_cast<std::uint8_t>(r.observed));
    marg.push_back(r.marginal);
    cond.push_back(r.conditional);
  }
  EXPECT_GT(accuracy_metrics(y, cond).auroc, accuracy_metrics(y, marg).auroc);
}

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "pnmtrem/error.hpp"
#include "pnmtrem/glm.hpp"
#include "pnmtrem/numeric.hpp"
#include "support.hpp"

using namespace pnmtrem;

namespace {

struct Sample {
  std::vector<std::uint8_t> y;
  Eigen::MatrixXd X;
};

Sample probit_sample(int n, const Eigen::VectorXd& beta, std::uint64_t seed) {
  std::mt19937_64 eng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Sample s;
  s.X.resize(n, beta.size());
  s.y.resize(n);
  for (int r = 0; r < n; ++r) {
    s.X(r, 0) = 1.0;
    for (Eigen::Index c = 1; c < beta.size(); ++c) s.X(r, c) = u(eng);
    s.y[r] = u(eng) < probit_cdf(s.X.row(r).dot(beta)) ? 1 : 0;
  }
  return s;
}

}  // namespace

TEST(Glm, InterceptOnlyIsProbitOfMean) {
  std::vector<std::uint8_t> y = {1, 1, 1, 0, 1, 1, 0, 1};
  const Eigen::MatrixXd X = Eigen::MatrixXd::Ones(8, 1);
  const GlmFit f = fit_glm_probit(y, X);
  ASSERT_TRUE(f.converged);
  EXPECT_NEAR(f.coefficients[0], probit_inverse(0.75), 1e-8);
  EXPECT_GT(f.se[0], 0.0);
}

TEST(Glm, SlopeZeroWhenGroupsMatch) {
  std::vector<std::uint8_t> y = {1, 0, 0, 1, 0, 0};
  Eigen::MatrixXd X(6, 2);
  X << 1, 0, 1, 0, 1, 0, 1, 1, 1, 1, 1, 1;
  const GlmFit f = fit_glm_probit(y, X);
  ASSERT_TRUE(f.converged);
  EXPECT_NEAR(f.coefficients[1], 0.0, 1e-8);
}

TEST(Glm, RecoversTruth) {
  Eigen::VectorXd beta(2);
  beta << -1.0, 2.0;
  const Sample s = probit_sample(5000, beta, 99);
  const GlmFit f = fit_glm_probit(s.y, s.X);
  ASSERT_TRUE(f.converged);
  for (int a = 0; a < 2; ++a) EXPECT_LE(std::abs(f.coefficients[a] - beta[a]), 3.0 * f.se[a]);
  EXPECT_LE(glm_probit_score(s.y, s.X, f.coefficients).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Glm, ScoreIsGradient) {
  Eigen::VectorXd beta(3);
  beta << 0.3, -0.7, 1.1;
  const Sample s = probit_sample(200, beta, 5);
  Eigen::VectorXd at(3);
  at << 0.1, 0.2, -0.4;
  const auto f = [&](const Eigen::VectorXd& b) { return glm_probit_loglik(s.y, s.X, b); };
  const Eigen::VectorXd fd = support::numeric_gradient(f, at);
  const Eigen::VectorXd an = glm_probit_score(s.y, s.X, at);
  for (int a = 0; a < 3; ++a) EXPECT_LE(support::rel_err(an[a], fd[a]), 1e-6);
}

TEST(Glm, RescalingCovariateScalesCoefficient) {
  Eigen::VectorXd beta(2);
  beta << 0.2, 0.8;
  Sample s = probit_sample(800, beta, 21);
  const GlmFit f = fit_glm_probit(s.y, s.X);
  s.X.col(1) *= 4.0;
  const GlmFit g = fit_glm_probit(s.y, s.X);
  EXPECT_NEAR(g.coefficients[1], f.coefficients[1] / 4.0, 1e-6);
  EXPECT_NEAR(g.coefficients[0], f.coefficients[0], 1e-6);
}

TEST(Glm, NestedModelNotBetter) {
  Eigen::VectorXd beta(3);
  beta << -0.5, 1.0, 0.5;
  const Sample s = probit_sample(600, beta, 8);
  const GlmFit full = fit_glm_probit(s.y, s.X);
  const GlmFit reduced = fit_glm_probit(s.y, s.X.leftCols(2));
  EXPECT_GE(full.loglik, reduced.loglik);
}

TEST(Glm, SeparationFlagged) {
  std::vector<std::uint8_t> y = {0, 0, 0, 1, 1, 1};
  Eigen::MatrixXd X(6, 2);
  X << 1, -3, 1, -2, 1, -1, 1, 1, 1, 2, 1, 3;
  const GlmFit f = fit_glm_probit(y, X);
  EXPECT_FALSE(f.converged);
  EXPECT_FALSE(f.diagnostic.empty());
}

TEST(Glm, RankDeficientThrows) {
  std::vector<std::uint8_t> y = {0, 1, 0, 1};
  Eigen::MatrixXd X(4, 3);
  X << 1, 1, 2, 1, 2, 4, 1, 3, 6, 1, 4, 8;
  EXPECT_THROW(fit_glm_probit(y, X), NumericError);
}

TEST(Vif, OrthogonalAndDuplicated) {
  Eigen::MatrixXd X(4, 3);
  X << 1, 1, 1, 1, 1, -1, 1, -1, 1, 1, -1, -1;
  for (double v : vif(X)) EXPECT_NEAR(v, 1.0, 1e-12);
  Eigen::MatrixXd D(4, 3);
  D << 1, 1, 1, 1, 2, 2, 1, 3, 3, 1, 5, 5;
  for (double v : vif(D)) EXPECT_EQ(v, std::numeric_limits<double>::infinity());
}

TEST(Vif, MatchesLeastSquaresOracle) {
  std::mt19937_64 eng(3);
  std::normal_distribution<double> nd;
  const int n = 300;
  Eigen::MatrixXd X(n, 4);
  for (int r = 0; r < n; ++r) {
    const double a = nd(eng);
    X.row(r) << 1.0, a, 0.4 * a + nd(eng), nd(eng) - 0.2 * a;
  }
  const auto got = vif(X);
  ASSERT_EQ(got.size(), 3u);
  for (int c = 1; c < 4; ++c) {
    Eigen::MatrixXd others(n, 3);
    int k = 0;
    for (int o = 0; o < 4; ++o) {
      if (o != c) others.col(k++) = X.col(o);
    }
    const Eigen::VectorXd coef = others.colPivHouseholderQr().solve(X.col(c));
    const Eigen::VectorXd resid = X.col(c) - others * coef;
    const double centered = (X.col(c).array() - X.col(c).mean()).square().sum();
    const double r2 = 1.0 - resid.squaredNorm() / centered;
    EXPECT_NEAR(got[c - 1], 1.0 / (1.0 - r2), 1e-9);
  }
}

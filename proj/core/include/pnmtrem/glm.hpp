#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace pnmtrem {

struct GlmControls {
  int max_iter = 100;
  double tol_loglik = 1e-10;
  int max_halvings = 30;
};

struct GlmFit {
  Eigen::VectorXd coefficients;
  Eigen::VectorXd se;
  double loglik = 0.0;
  bool converged = false;
  int iterations = 0;
  /// Non-empty when the fit did not converge (e.g. perfect separation).
  std::string diagnostic;
};

/// Independence probit regression by Fisher scoring with step halving.
/// Starts from zero slopes and intercept probit_inverse(mean(y)) (clamped).
/// Throws NumericError when X is rank deficient.
GlmFit fit_glm_probit(std::span<const std::uint8_t> y, const Eigen::MatrixXd& X, const GlmControls& controls = {});

/// Bernoulli probit log-likelihood of y given linear predictor X * beta.
double glm_probit_loglik(std::span<const std::uint8_t> y, const Eigen::MatrixXd& X, const Eigen::VectorXd& beta);

/// Gradient of glm_probit_loglik.
Eigen::VectorXd glm_probit_score(std::span<const std::uint8_t> y, const Eigen::MatrixXd& X, const Eigen::VectorXd& beta);

/// Variance inflation factors for the non-intercept columns of X (column 0
/// is taken as the intercept when it is constant). Each column is
/// regressed on an intercept plus the remaining columns; exact collinearity
/// yields +infinity.
std::vector<double> vif(const Eigen::MatrixXd& X);

}  // namespace pnmtrem

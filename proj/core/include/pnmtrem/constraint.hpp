#pragma once

#include <vector>

#include <Eigen/Dense>

namespace pnmtrem {

class PanelData;

/// Expansion point (beta0, alpha0) for the first-order linearization of the
/// marginal constraint. alpha0 has one row per time t >= 2.
struct AnchorPoint {
  Eigen::VectorXd beta0;
  Eigen::MatrixXd alpha0;

  /// All-zero anchor sized for the panel's designs.
  static AnchorPoint zero(const PanelData& data);
};

/// Marginal constraint residual in terms of linear predictors:
///   F = Phi(eta_t) - Phi(delta) (1 - Phi(eta_lag)) - Phi(delta + gamma) Phi(eta_lag)
/// where eta_t = X_itj beta, eta_lag = X_{i,t-1,j} beta (beta_star at t = 2)
/// and gamma = alpha_t Z_itj.
double constraint_residual(double delta, double eta_t, double eta_lag, double gamma);

/// Same residual from the raw designs and parameters.
double constraint_residual(double delta, const Eigen::RowVectorXd& x_t, const Eigen::VectorXd& beta,
                           const Eigen::RowVectorXd& x_lag, const Eigen::VectorXd& beta_lag,
                           const Eigen::RowVectorXd& z, const Eigen::RowVectorXd& alpha_t);

/// dF/d(delta); strictly negative for finite inputs.
double constraint_slope(double delta, double eta_lag, double gamma);

struct RootResult {
  double root = 0.0;
  int iterations = 0;
  bool used_bisection = false;
  std::vector<double> residual_trace;
};

/// Solves F(delta) = 0 by Newton-Raphson from `start`, falling back to
/// bisection whenever a Newton step leaves the current bracket. The
/// bracket starts at [-10, 10] and is widened if it does not contain the
/// root. Throws ConvergenceError (with the residual trace) on failure.
RootResult solve_delta(double eta_t, double eta_lag, double gamma, double start, double tol = 1e-12,
                       int max_newton = 50);

/// Lag linear predictor for cell (i, t >= 1, j): X_{i,1,j} beta_star at the
/// first transition, X_{i,t-1,j} beta afterwards.
double lag_predictor(const PanelData& data, int i, int t, int j, const Eigen::VectorXd& beta,
                     const Eigen::VectorXd& beta_star);

/// Anchor intercept Delta_itj0 solving F = 0 at (beta0, alpha0). With zero
/// anchors the root is exactly 0 for every t.
double solve_anchor_delta0(const PanelData& data, int i, int t, int j, const AnchorPoint& anchor,
                           const Eigen::VectorXd& beta_star_hat);

struct IftCoefficients {
  Eigen::VectorXd a;  ///< -(dF/dbeta) / (dF/ddelta)
  Eigen::VectorXd b;  ///< -(dF/dalpha) / (dF/ddelta)
  double slope = 0.0; ///< dF/ddelta at the anchor
};

/// Implicit-differentiation coefficients at the anchor for cell (i, t, j).
/// At the first transition the lag predictor uses the frozen beta_star_hat,
/// so dF/dbeta carries only the current-time term.
IftCoefficients ift_coefficients(const PanelData& data, int i, int t, int j, const AnchorPoint& anchor,
                                 const Eigen::VectorXd& beta_star_hat, double delta0);

/// Precomputed linearization of the marginal constraint for every cell.
///
/// Delta_itj = delta0 + A_itj (beta - beta0) + B_itj (alpha_t - alpha0_t).
/// Coefficients depend only on data, anchor and the frozen beta_star_hat, so
/// they are computed once per fit.
class ConstraintSolution {
 public:
  static ConstraintSolution solve(const PanelData& data, const Eigen::VectorXd& beta_star_hat,
                                  const AnchorPoint& anchor);

  /// Linearized Delta for one cell; `t` is the internal time index (>= 1).
  double delta(int cell, int t, const Eigen::VectorXd& beta, const Eigen::MatrixXd& alpha) const;
  /// Linearized Delta for every cell.
  Eigen::VectorXd deltas(const Eigen::VectorXd& beta, const Eigen::MatrixXd& alpha) const;

  const Eigen::VectorXd& delta0() const { return delta0_; }
  const Eigen::MatrixXd& a() const { return a_; }
  const Eigen::MatrixXd& b() const { return b_; }
  const AnchorPoint& anchor() const { return anchor_; }
  const Eigen::VectorXd& beta_star_hat() const { return beta_star_hat_; }

 private:
  int n_times_ = 0;
  int n_responses_ = 0;
  Eigen::VectorXd delta0_;
  Eigen::MatrixXd a_;
  Eigen::MatrixXd b_;
  AnchorPoint anchor_;
  Eigen::VectorXd beta_star_hat_;
};

/// Random-effects intercept for t >= 2:
///   sqrt(1 + lambda^2 sigma^2) * (delta + alpha_t Z y_lag).
double delta_star_main(double delta, double gamma_y, double lambda, double sigma);

/// Random-effects intercept at baseline: sqrt(1 + lambda*^2 sigma1^2) * X beta*.
double delta_star_baseline(double eta, double lambda_star, double sigma1);
double delta_star_baseline(const Eigen::RowVectorXd& x_row, const Eigen::VectorXd& beta_star, double lambda_star,
                           double sigma1);

/// Delta solving the exact constraint at (beta, alpha) for cell (i, t, j).
double exact_delta(const PanelData& data, int i, int t, int j, const Eigen::VectorXd& beta,
                   const Eigen::MatrixXd& alpha, const Eigen::VectorXd& beta_star);

}  // namespace pnmtrem

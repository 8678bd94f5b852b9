#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pnmtrem/constraint.hpp"
#include "pnmtrem/glm.hpp"
#include "pnmtrem/likelihood.hpp"
#include "pnmtrem/numeric.hpp"
#include "pnmtrem/params.hpp"

namespace pnmtrem {

class PanelData;

struct FitControls {
  int max_iter = 200;
  double tol_score = 1e-6;
  double tol_loglik = 1e-10;
  int max_halvings = 30;
  double condition_limit = 1e12;
  double step_rcond = 1e-6;
  /// Largest absolute change of any parameter in one step (before halving).
  double max_step = 5.0;
};

struct IterationRecord {
  int iteration = 0;
  double loglik = 0.0;
  double step_norm = 0.0;
  double max_score = 0.0;
  int halvings = 0;
  bool regularized = false;  ///< near-null directions were dropped from the step
};

struct StageFit {
  Eigen::VectorXd theta;
  Eigen::VectorXd se;
  Eigen::MatrixXd information;
  double loglik = 0.0;
  double max_score = 0.0;
  /// max |score| left in directions dropped from the step; nonzero only on a ridge
  double ridge_score = 0.0;
  /// max |score| in the identified directions the step acts on
  double identified_score = 0.0;
  bool converged = false;
  /// Converged because no ascent was resolvable in floating point while
  /// max |score| was still above tol_score.
  bool precision_limited = false;
  /// Information matrix at the solution exceeded the condition limit; se was
  /// computed from a pseudo-inverse.
  bool singular_information = false;
  double condition_number = 0.0;
  int iterations = 0;
  std::vector<IterationRecord> trace;
};

/// Evaluates a stage's log-likelihood (and per-subject scores when asked)
/// at a packed parameter vector.
using StageObjective = std::function<StageEvaluation(const Eigen::VectorXd& theta, bool with_scores)>;

/// Fisher scoring with the empirical (outer-product) information:
///   theta <- theta + I(theta)^-1 U(theta),
/// halving the step until the log-likelihood does not decrease.
///
/// Converges when the relative log-likelihood change is <= tol_loglik and
/// max|U| <= tol_score, where on a ridge U may be taken as the score projected
/// off the dropped directions. Eigen-directions of the diagonally scaled
/// information below step_rcond * max are left out of the step; NumericError is thrown only
/// when the information is non-finite or zero. ConvergenceError is thrown when no
/// ascent is found after max_halvings halvings unless the point is stationary
/// or the step's predicted gain is below 1e-3 * tol_loglik * |loglik|.
StageFit fisher_scoring(const StageObjective& objective, Eigen::VectorXd init, const FitControls& controls = {});

StageFit fit_baseline(const PanelData& data, const QuadratureRule& rule, const BaselineParams& init,
                      const FitControls& controls = {});
StageFit fit_main(const PanelData& data, const QuadratureRule& rule, const ConstraintSolution& constraints,
                  const MainParams& init, const FitControls& controls = {});

/// Empirical information matrices at the given parameters.
Eigen::MatrixXd information_baseline(const BaselineParams& params, const PanelData& data, const QuadratureRule& rule);
Eigen::MatrixXd information_main(const MainParams& params, const PanelData& data, const QuadratureRule& rule,
                                 const ConstraintSolution& constraints);

/// Standard errors sqrt(diag(I^-1)); falls back to a pseudo-inverse when
/// the condition number exceeds `condition_limit`.
struct StandardErrors {
  Eigen::VectorXd se;
  double condition_number = 0.0;
  bool singular = false;
};
StandardErrors standard_errors(const Eigen::MatrixXd& information, double condition_limit = 1e12);

struct FitOptions {
  int quadrature_order = 20;
  FitControls controls;
  /// Defaults to the all-zero anchor.
  std::optional<AnchorPoint> anchor;
  /// Overrides the GLM-based starting values when set.
  std::optional<BaselineParams> init_baseline;
  std::optional<MainParams> init_main;
};

struct FitResult {
  BaselineParams theta1;
  MainParams theta2;
  StageFit stage1;
  StageFit stage2;
  GlmFit glm_baseline;
  GlmFit glm_main;
  ConstraintSolution constraints;
  std::vector<ParamInfo> params1;
  std::vector<ParamInfo> params2;
  int quadrature_order = 20;
  double loglik1 = 0.0;
  double loglik2 = 0.0;
  double loglik_total = 0.0;

  bool converged() const { return stage1.converged && stage2.converged; }
};

/// Starting values: GLM coefficients, alpha = 0, lambda = 1, c = log(0.5).
BaselineParams default_baseline_start(const GlmFit& glm, int n_responses);
MainParams default_main_start(const GlmFit& glm, int n_transition, int n_times, int n_responses);

/// Two-stage maximum likelihood: baseline first, then the t >= 2 model with
/// beta_star frozen at its stage-1 estimate.
FitResult fit(const PanelData& data, const FitOptions& options = {});

struct WaldRow {
  std::string stage;
  std::string name;
  ParamKind kind = ParamKind::Coefficient;
  double estimate = 0.0;
  double se = 0.0;
  double null_value = 0.0;
  double z = 0.0;
  double p = 1.0;
};

/// Z = (estimate - null) / se with two-sided normal p-value.
WaldRow wald_test(std::string name, double estimate, double se, double null_value);

/// Wald table for both stages. Loadings are tested against 1, everything
/// else against 0; log-sigma rows carry NaN z/p (use
/// boundary_variance_test instead).
std::vector<WaldRow> wald_tests(const FitResult& fit);

struct LrtResult {
  double statistic = 0.0;
  double p = 1.0;
  int df = 0;
};

/// Likelihood ratio test for nested fits. Throws NumericError when the
/// reduced model fits better than the full one by more than 1e-6.
LrtResult lrt(double loglik_full, double loglik_reduced, int df);
LrtResult lrt(const FitResult& full, const FitResult& reduced, int df);

/// Test of H0: sigma = 0 on the boundary: half the two-sided Wald p-value of
/// sigma_hat / se(sigma_hat), with both obtained from (c_hat, se_c) by the
/// delta method.
double boundary_variance_test(double c_hat, double se_c);

/// Probit-to-logit rescaling constant (15/16) * pi / sqrt(3).
inline const double kJkbConstant = (15.0 / 16.0) * std::numbers::pi / std::sqrt(3.0);

/// Elementwise kJkbConstant * beta; approximate logit-scale coefficients.
Eigen::VectorXd jkb_transform(const Eigen::VectorXd& beta_probit);

}  // namespace pnmtrem

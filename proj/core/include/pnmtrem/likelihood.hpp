#pragma once

#include <Eigen/Dense>

#include "pnmtrem/params.hpp"

namespace pnmtrem {

class PanelData;
class ConstraintSolution;
struct QuadratureRule;

/// Probabilities are clamped to [kProbabilityClamp, 1 - kProbabilityClamp]
/// inside logarithms and score ratios.
inline constexpr double kProbabilityClamp = 1e-12;

/// Log-likelihood and per-subject score contributions of one stage.
///
/// Integrals over the standardized random effect include the 1/sqrt(pi)
/// normalization, so each h term is a proper probability and log h <= 0.
struct StageEvaluation {
  double loglik = 0.0;
  /// Gradient of loglik in the stage's packed parameter order.
  Eigen::VectorXd score;
  /// Row i: subject i's score contribution (summed over t >= 2 for the main
  /// stage). Empty when scores were not requested.
  Eigen::MatrixXd subject_scores;

  /// Empirical information: sum over subjects of the outer products of their
  /// score contributions.
  Eigen::MatrixXd information() const;
};

/// Baseline (t = 1) stage. Score order: (beta_star, lambda_star[2..k], c1).
StageEvaluation evaluate_baseline(const BaselineParams& params, const PanelData& data, const QuadratureRule& rule,
                                  bool with_scores = true);
double loglik_baseline(const BaselineParams& params, const PanelData& data, const QuadratureRule& rule);
Eigen::VectorXd score_baseline(const BaselineParams& params, const PanelData& data, const QuadratureRule& rule);
/// log h(Y_i1 | theta_1) per subject.
Eigen::VectorXd baseline_log_h(const BaselineParams& params, const PanelData& data, const QuadratureRule& rule);

/// t >= 2 stage with Delta from the linearized constraint. Score order:
/// (beta, alpha_2, ..., alpha_T, lambda[2..k], c_2..c_T).
StageEvaluation evaluate_main(const MainParams& params, const PanelData& data, const QuadratureRule& rule,
                              const ConstraintSolution& constraints, bool with_scores = true);
double loglik_main(const MainParams& params, const PanelData& data, const QuadratureRule& rule,
                   const ConstraintSolution& constraints);
Eigen::VectorXd score_main(const MainParams& params, const PanelData& data, const QuadratureRule& rule,
                           const ConstraintSolution& constraints);
/// log h(Y_it | theta_2), one row per subject, one column per t >= 2.
Eigen::MatrixXd main_log_h(const MainParams& params, const PanelData& data, const QuadratureRule& rule,
                           const ConstraintSolution& constraints);

}  // namespace pnmtrem

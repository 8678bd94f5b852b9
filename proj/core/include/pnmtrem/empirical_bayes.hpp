#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace pnmtrem {

class PanelData;
struct FitResult;

/// One term of a subject's posterior: P(y = 1 | z) = Phi(delta_star + loading * z).
struct PosteriorTerm {
  double delta_star = 0.0;
  double loading = 0.0;  ///< lambda_j * sigma_t (lambda*_j * sigma_1 at baseline)
  int y = 0;
};

/// Terms for every (t, j) of subject i at the fitted parameters, time-major.
std::vector<PosteriorTerm> posterior_terms(const FitResult& fit, const PanelData& data, int i);

/// Log posterior of z (up to a constant): sum of Bernoulli log-probabilities
/// minus z^2 / 2.
double log_posterior(std::span<const PosteriorTerm> terms, double z);

/// Derivative of log_posterior with respect to z.
double posterior_score(std::span<const PosteriorTerm> terms, double z);

struct EbControls {
  int max_iter = 100;
  double tol = 1e-10;
  double bracket = 8.0;
};

struct ModeResult {
  double z = 0.0;
  bool converged = false;
  int iterations = 0;
};

/// Posterior mode by Newton-Raphson from 0 (steps longer than 2 are halved),
/// with bisection on [-bracket, bracket] as fallback.
ModeResult posterior_mode(std::span<const PosteriorTerm> terms, const EbControls& controls = {});

/// Mode for subject i of a fitted panel.
double estimate_z(int i, const FitResult& fit, const PanelData& data, const EbControls& controls = {});

struct SubjectEffects {
  Eigen::VectorXd z_hat;
  /// b_hat(i, t) = sigma_t * z_hat(i), including t = 1.
  Eigen::MatrixXd b_hat;
  std::vector<bool> converged;
};

SubjectEffects estimate_effects(const FitResult& fit, const PanelData& data, const EbControls& controls = {});

struct ProbabilityRow {
  int subject = 0;
  int time = 0;
  int response = 0;
  int observed = 0;
  double marginal = 0.0;             ///< Phi(X beta) (beta_star at t = 1)
  double conditional = 0.0;          ///< Phi(delta_star + lambda * b_hat)
  double conditional_average = 0.0;  ///< Phi(delta_star)
  double marginal_predictor = 0.0;
  double conditional_predictor = 0.0;
};

/// Marginal, subject-specific and average-subject probabilities for every
/// (i, t, j), ordered by subject, time, response.
std::vector<ProbabilityRow> probability_surfaces(const FitResult& fit, const PanelData& data,
                                                 const SubjectEffects& effects);

struct R2Row {
  int response = 0;
  double r2_baseline = 0.0;  ///< NaN when undefined
  double r2_main = 0.0;      ///< pooled over t >= 2; NaN when undefined
};

/// Least-squares R^2 of the conditional linear predictor on the marginal
/// one, per response, at baseline and pooled over t >= 2.
std::vector<R2Row> probit_r2(const std::vector<ProbabilityRow>& surfaces, int n_responses);

/// R^2 of a simple linear regression of y on x; NaN when x or y is constant.
double simple_r2(std::span<const double> x, std::span<const double> y);

struct AccuracyMetrics {
  double epcp = 0.0;
  double auroc = 0.0;  ///< NaN when y has only one class
  bool auroc_defined = true;
};

/// Expected proportion of correct prediction and Mann-Whitney AUROC (ties
/// count one half).
AccuracyMetrics accuracy_metrics(std::span<const std::uint8_t> y, std::span<const double> probabilities);

}  // namespace pnmtrem

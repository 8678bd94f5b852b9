#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

namespace pnmtrem {

class PanelData;

/// Baseline (t = 1) parameters: marginal coefficients, response loadings
/// with lambda_star[0] fixed at 1, and c1 = log(sigma_1).
struct BaselineParams {
  Eigen::VectorXd beta_star;
  Eigen::VectorXd lambda_star;
  double c1 = 0.0;

  /// Packed as (beta_star, lambda_star[1..k-1], c1).
  Eigen::VectorXd pack() const;
  static BaselineParams unpack(const Eigen::VectorXd& theta, int n_coef, int n_responses);
  static int packed_size(int n_coef, int n_responses) { return n_coef + n_responses; }

  double sigma1() const;
  void check(int n_coef, int n_responses) const;
};

/// Parameters of the t >= 2 model. alpha has one row per time t = 2..T and
/// one column per transition covariate; c holds log(sigma_t) for t = 2..T.
struct MainParams {
  Eigen::VectorXd beta;
  Eigen::MatrixXd alpha;
  Eigen::VectorXd lambda;
  Eigen::VectorXd c;

  /// Packed as (beta, alpha row t=2, ..., alpha row t=T, lambda[1..k-1], c).
  Eigen::VectorXd pack() const;
  static MainParams unpack(const Eigen::VectorXd& theta, int n_coef, int n_transition, int n_times, int n_responses);
  static int packed_size(int n_coef, int n_transition, int n_times, int n_responses) {
    return n_coef + (n_times - 1) * n_transition + (n_responses - 1) + (n_times - 1);
  }

  /// sigma_t for internal time index t >= 1.
  double sigma(int t) const;
  void check(int n_coef, int n_transition, int n_times, int n_responses) const;
};

enum class ParamKind { Coefficient, Transition, Loading, LogSigma };

struct ParamInfo {
  std::string name;
  ParamKind kind;
};

/// Labels for the packed baseline vector.
std::vector<ParamInfo> baseline_param_info(const PanelData& data);
/// Labels for the packed main vector.
std::vector<ParamInfo> main_param_info(const PanelData& data);

}  // namespace pnmtrem

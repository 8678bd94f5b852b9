#include "pnmtrem/params.hpp"

#include <cmath>

#include "pnmtrem/error.hpp"
#include "pnmtrem/panel.hpp"

namespace pnmtrem {

Eigen::VectorXd BaselineParams::pack() const {
  const auto p = beta_star.size();
  const auto k = lambda_star.size();
  Eigen::VectorXd theta(p + k);
  theta.head(p) = beta_star;
  theta.segment(p, k - 1) = lambda_star.tail(k - 1);
  theta[p + k - 1] = c1;
  return theta;
}

BaselineParams BaselineParams::unpack(const Eigen::VectorXd& theta, int n_coef, int n_responses) {
  if (theta.size() != packed_size(n_coef, n_responses)) throw NumericError("baseline parameter vector has wrong size");
  BaselineParams out;
  out.beta_star = theta.head(n_coef);
  out.lambda_star.resize(n_responses);
  out.lambda_star[0] = 1.0;
  out.lambda_star.tail(n_responses - 1) = theta.segment(n_coef, n_responses - 1);
  out.c1 = theta[n_coef + n_responses - 1];
  return out;
}

double BaselineParams::sigma1() const { return std::exp(c1); }

void BaselineParams::check(int n_coef, int n_responses) const {
  if (beta_star.size() != n_coef) throw NumericError("beta_star has wrong length");
  if (lambda_star.size() != n_responses) throw NumericError("lambda_star has wrong length");
  if (lambda_star[0] != 1.0) throw NumericError("lambda_star[1] must equal 1");
  if (!std::isfinite(c1)) throw NumericError("c1 must be finite");
}

Eigen::VectorXd MainParams::pack() const {
  const auto p = beta.size();
  const auto rows = alpha.rows();
  const auto l = alpha.cols();
  const auto k = lambda.size();
  Eigen::VectorXd theta(p + rows * l + (k - 1) + c.size());
  theta.head(p) = beta;
  for (Eigen::Index r = 0; r < rows; ++r) theta.segment(p + r * l, l) = alpha.row(r).transpose();
  theta.segment(p + rows * l, k - 1) = lambda.tail(k - 1);
  theta.tail(c.size()) = c;
  return theta;
}

MainParams MainParams::unpack(const Eigen::VectorXd& theta, int n_coef, int n_transition, int n_times,
                              int n_responses) {
  if (theta.size() != packed_size(n_coef, n_transition, n_times, n_responses)) {
    throw NumericError("main parameter vector has wrong size");
  }
  const int rows = n_times - 1;
  MainParams out;
  out.beta = theta.head(n_coef);
  out.alpha.resize(rows, n_transition);
  for (int r = 0; r < rows; ++r) out.alpha.row(r) = theta.segment(n_coef + r * n_transition, n_transition).transpose();
  out.lambda.resize(n_responses);
  out.lambda[0] = 1.0;
  out.lambda.tail(n_responses - 1) = theta.segment(n_coef + rows * n_transition, n_responses - 1);
  out.c = theta.tail(rows);
  return out;
}

double MainParams::sigma(int t) const { return std::exp(c[t - 1]); }

void MainParams::check(int n_coef, int n_transition, int n_times, int n_responses) const {
  if (beta.size() != n_coef) throw NumericError("beta has wrong length");
  if (alpha.rows() != n_times - 1 || alpha.cols() != n_transition) throw NumericError("alpha has wrong shape");
  if (lambda.size() != n_responses) throw NumericError("lambda has wrong length");
  if (lambda[0] != 1.0) throw NumericError("lambda[1] must equal 1");
  if (c.size() != n_times - 1 || !c.allFinite()) throw NumericError("c must hold T-1 finite values");
}

std::vector<ParamInfo> baseline_param_info(const PanelData& data) {
  std::vector<ParamInfo> out;
  for (const auto& n : data.baseline_names) out.push_back({"beta_star[" + n + "]", ParamKind::Coefficient});
  for (int j = 1; j < data.n_responses(); ++j) {
    out.push_back({"lambda_star[" + std::to_string(j + 1) + "]", ParamKind::Loading});
  }
  out.push_back({"log_sigma[" + std::to_string(data.time_labels.front()) + "]", ParamKind::LogSigma});
  return out;
}

std::vector<ParamInfo> main_param_info(const PanelData& data) {
  std::vector<ParamInfo> out;
  for (const auto& n : data.main_names) out.push_back({"beta[" + n + "]", ParamKind::Coefficient});
  for (int t = 1; t < data.n_times(); ++t) {
    for (const auto& n : data.transition_names) {
      out.push_back({"alpha[" + std::to_string(data.time_labels[t]) + "," + n + "]", ParamKind::Transition});
    }
  }
  for (int j = 1; j < data.n_responses(); ++j) {
    out.push_back({"lambda[" + std::to_string(j + 1) + "]", ParamKind::Loading});
  }
  for (int t = 1; t < data.n_times(); ++t) {
    out.push_back({"log_sigma[" + std::to_string(data.time_labels[t]) + "]", ParamKind::LogSigma});
  }
  return out;
}

}  // namespace pnmtrem

#include "pnmtrem/constraint.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "pnmtrem/error.hpp"
#include "pnmtrem/numeric.hpp"
#include "pnmtrem/panel.hpp"
#include "pnmtrem/parallel.hpp"

namespace pnmtrem {

AnchorPoint AnchorPoint::zero(const PanelData& data) {
  return {Eigen::VectorXd::Zero(data.x_main().cols()),
          Eigen::MatrixXd::Zero(data.n_times() - 1, data.z_transition().cols())};
}

double constraint_residual(double delta, double eta_t, double eta_lag, double gamma) {
  const double p_lag = probit_cdf(eta_lag);
  return probit_cdf(eta_t) - probit_cdf(delta) * (1.0 - p_lag) - probit_cdf(delta + gamma) * p_lag;
}

double constraint_residual(double delta, const Eigen::RowVectorXd& x_t, const Eigen::VectorXd& beta,
                           const Eigen::RowVectorXd& x_lag, const Eigen::VectorXd& beta_lag,
                           const Eigen::RowVectorXd& z, const Eigen::RowVectorXd& alpha_t) {
  return constraint_residual(delta, x_t.dot(beta), x_lag.dot(beta_lag), z.dot(alpha_t));
}

double constraint_slope(double delta, double eta_lag, double gamma) {
  const double p_lag = probit_cdf(eta_lag);
  return -probit_pdf(delta) * (1.0 - p_lag) - probit_pdf(delta + gamma) * p_lag;
}

RootResult solve_delta(double eta_t, double eta_lag, double gamma, double start, double tol, int max_newton) {
  auto f = [&](double d) { return constraint_residual(d, eta_t, eta_lag, gamma); };
  RootResult res;
  double lo = -10.0;
  double hi = 10.0;
  for (int e = 0; e < 40 && f(lo) < 0.0; ++e) lo *= 2.0;
  for (int e = 0; e < 40 && f(hi) > 0.0; ++e) hi *= 2.0;

  double x = std::clamp(start, lo, hi);
  const int max_total = max_newton + 200;
  for (res.iterations = 0; res.iterations < max_total; ++res.iterations) {
    const double fx = f(x);
    res.residual_trace.push_back(fx);
    if (std::abs(fx) <= tol) {
      res.root = x;
      return res;
    }
    // F is decreasing in delta.
    if (fx > 0.0) lo = x;
    else hi = x;
    if (hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(x))) {
      if (std::abs(fx) <= 1e-10) {
        res.root = x;
        return res;
      }
      break;
    }
    double next = 0.5 * (lo + hi);
    if (res.iterations < max_newton) {
      const double slope = constraint_slope(x, eta_lag, gamma);
      const double newton = x - fx / slope;
      if (slope < 0.0 && newton > lo && newton < hi) next = newton;
      else res.used_bisection = true;
    } else {
      res.used_bisection = true;
    }
    x = next;
  }
  std::ostringstream msg;
  msg << "constraint solver did not converge (eta_t=" << eta_t << ", eta_lag=" << eta_lag << ", gamma=" << gamma
      << "); residual trace:";
  const std::size_t shown = std::min<std::size_t>(res.residual_trace.size(), 10);
  for (std::size_t s = res.residual_trace.size() - shown; s < res.residual_trace.size(); ++s) {
    msg << ' ' << res.residual_trace[s];
  }
  throw ConvergenceError(msg.str());
}

double lag_predictor(const PanelData& data, int i, int t, int j, const Eigen::VectorXd& beta,
                     const Eigen::VectorXd& beta_star) {
  if (t == 1) return data.baseline_row(i, j).dot(beta_star);
  return data.main_row(i, t - 1, j).dot(beta);
}

double solve_anchor_delta0(const PanelData& data, int i, int t, int j, const AnchorPoint& anchor,
                           const Eigen::VectorXd& beta_star_hat) {
  const double eta_t = data.main_row(i, t, j).dot(anchor.beta0);
  const double eta_lag = lag_predictor(data, i, t, j, anchor.beta0, beta_star_hat);
  const double gamma = data.transition_row(i, t, j).dot(anchor.alpha0.row(t - 1));
  return solve_delta(eta_t, eta_lag, gamma, eta_t).root;
}

IftCoefficients ift_coefficients(const PanelData& data, int i, int t, int j, const AnchorPoint& anchor,
                                 const Eigen::VectorXd& beta_star_hat, double delta0) {
  const Eigen::RowVectorXd x_t = data.main_row(i, t, j);
  const Eigen::RowVectorXd z = data.transition_row(i, t, j);
  const double eta_t = x_t.dot(anchor.beta0);
  const double eta_lag = lag_predictor(data, i, t, j, anchor.beta0, beta_star_hat);
  const double gamma = z.dot(anchor.alpha0.row(t - 1));
  const double p_lag = probit_cdf(eta_lag);

  Eigen::VectorXd dF_dbeta = probit_pdf(eta_t) * x_t.transpose();
  if (t >= 2) {
    const Eigen::RowVectorXd x_lag = data.main_row(i, t - 1, j);
    dF_dbeta += (probit_cdf(delta0) - probit_cdf(delta0 + gamma)) * probit_pdf(eta_lag) * x_lag.transpose();
  }
  const double slope = constraint_slope(delta0, eta_lag, gamma);
  if (std::abs(slope) < 1e-14) throw NumericError("singular linearization: dF/ddelta vanishes at the anchor");
  const Eigen::VectorXd dF_dalpha = -probit_pdf(delta0 + gamma) * p_lag * z.transpose();
  return {-dF_dbeta / slope, -dF_dalpha / slope, slope};
}

ConstraintSolution ConstraintSolution::solve(const PanelData& data, const Eigen::VectorXd& beta_star_hat,
                                             const AnchorPoint& anchor) {
  if (beta_star_hat.size() != data.x_baseline().cols()) throw NumericError("beta_star_hat has wrong length");
  if (anchor.beta0.size() != data.x_main().cols() || anchor.alpha0.rows() != data.n_times() - 1 ||
      anchor.alpha0.cols() != data.z_transition().cols()) {
    throw NumericError("anchor point has wrong shape");
  }
  ConstraintSolution sol;
  sol.n_times_ = data.n_times();
  sol.n_responses_ = data.n_responses();
  sol.anchor_ = anchor;
  sol.beta_star_hat_ = beta_star_hat;
  sol.delta0_.resize(data.n_cells());
  sol.a_.resize(data.n_cells(), data.x_main().cols());
  sol.b_.resize(data.n_cells(), data.z_transition().cols());
  parallel_for(static_cast<std::size_t>(data.n_subjects()), [&](std::size_t is) {
    const int i = static_cast<int>(is);
    for (int t = 1; t < data.n_times(); ++t) {
      for (int j = 0; j < data.n_responses(); ++j) {
        const int c = data.cell(i, t, j);
        const double d0 = solve_anchor_delta0(data, i, t, j, anchor, beta_star_hat);
        const auto coef = ift_coefficients(data, i, t, j, anchor, beta_star_hat, d0);
        sol.delta0_[c] = d0;
        sol.a_.row(c) = coef.a.transpose();
        sol.b_.row(c) = coef.b.transpose();
      }
    }
  });
  return sol;
}

double ConstraintSolution::delta(int cell, int t, const Eigen::VectorXd& beta, const Eigen::MatrixXd& alpha) const {
  return delta0_[cell] + a_.row(cell).dot(beta - anchor_.beta0) +
         b_.row(cell).dot(alpha.row(t - 1) - anchor_.alpha0.row(t - 1));
}

Eigen::VectorXd ConstraintSolution::deltas(const Eigen::VectorXd& beta, const Eigen::MatrixXd& alpha) const {
  Eigen::VectorXd out = delta0_ + a_ * (beta - anchor_.beta0);
  const Eigen::MatrixXd dalpha = alpha - anchor_.alpha0;
  const int per_subject = (n_times_ - 1) * n_responses_;
  for (Eigen::Index c = 0; c < out.size(); ++c) {
    const int t = static_cast<int>((c % per_subject) / n_responses_) + 1;
    out[c] += b_.row(c).dot(dalpha.row(t - 1));
  }
  return out;
}

double delta_star_main(double delta, double gamma_y, double lambda, double sigma) {
  return std::sqrt(1.0 + lambda * lambda * sigma * sigma) * (delta + gamma_y);
}

double delta_star_baseline(double eta, double lambda_star, double sigma1) {
  return std::sqrt(1.0 + lambda_star * lambda_star * sigma1 * sigma1) * eta;
}

double delta_star_baseline(const Eigen::RowVectorXd& x_row, const Eigen::VectorXd& beta_star, double lambda_star,
                           double sigma1) {
  return delta_star_baseline(x_row.dot(beta_star), lambda_star, sigma1);
}

double exact_delta(const PanelData& data, int i, int t, int j, const Eigen::VectorXd& beta,
                   const Eigen::MatrixXd& alpha, const Eigen::VectorXd& beta_star) {
  const double eta_t = data.main_row(i, t, j).dot(beta);
  const double eta_lag = lag_predictor(data, i, t, j, beta, beta_star);
  const double gamma = data.transition_row(i, t, j).dot(alpha.row(t - 1));
  return solve_delta(eta_t, eta_lag, gamma, eta_t).root;
}

}  // namespace pnmtrem

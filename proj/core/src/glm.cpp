#include "pnmtrem/glm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "pnmtrem/error.hpp"
#include "pnmtrem/numeric.hpp"

namespace pnmtrem {

namespace {

constexpr double kProbClamp = 1e-12;

double clamp_prob(double p) { return std::clamp(p, kProbClamp, 1.0 - kProbClamp); }

void check_inputs(std::span<const std::uint8_t> y, const Eigen::MatrixXd& X) {
  if (static_cast<Eigen::Index>(y.size()) != X.rows()) throw NumericError("glm: y and X have different lengths");
  if (X.rows() == 0 || X.cols() == 0) throw NumericError("glm: empty design");
}

}  // namespace

double glm_probit_loglik(std::span<const std::uint8_t> y, const Eigen::MatrixXd& X, const Eigen::VectorXd& beta) {
  check_inputs(y, X);
  const Eigen::VectorXd eta = X * beta;
  double ll = 0.0;
  for (Eigen::Index r = 0; r < eta.size(); ++r) {
    const double p = clamp_prob(probit_cdf(eta[r]));
    ll += y[r] ? std::log(p) : std::log1p(-p);
  }
  return ll;
}

Eigen::VectorXd glm_probit_score(std::span<const std::uint8_t> y, const Eigen::MatrixXd& X,
                                 const Eigen::VectorXd& beta) {
  check_inputs(y, X);
  const Eigen::VectorXd eta = X * beta;
  Eigen::VectorXd u = Eigen::VectorXd::Zero(X.cols());
  for (Eigen::Index r = 0; r < eta.size(); ++r) {
    const double p = clamp_prob(probit_cdf(eta[r]));
    const double m = probit_pdf(eta[r]) * (y[r] - p) / (p * (1.0 - p));
    u += m * X.row(r).transpose();
  }
  return u;
}

GlmFit fit_glm_probit(std::span<const std::uint8_t> y, const Eigen::MatrixXd& X, const GlmControls& controls) {
  check_inputs(y, X);
  for (auto v : y) {
    if (v > 1) throw NumericError("glm: responses must be 0 or 1");
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
  if (qr.rank() < X.cols()) throw NumericError("glm: design matrix is rank deficient");

  const auto n = X.rows();
  const auto p = X.cols();
  double ybar = 0.0;
  for (auto v : y) ybar += v;
  ybar /= static_cast<double>(n);

  GlmFit fit;
  fit.coefficients = Eigen::VectorXd::Zero(p);
  const bool has_intercept = (X.col(0).array() == X(0, 0)).all() && X(0, 0) != 0.0;
  if (has_intercept) fit.coefficients[0] = probit_inverse(std::clamp(ybar, 1e-4, 1.0 - 1e-4)) / X(0, 0);

  auto information = [&](const Eigen::VectorXd& beta) {
    const Eigen::VectorXd eta = X * beta;
    Eigen::VectorXd w(n);
    for (Eigen::Index r = 0; r < n; ++r) {
      const double pr = clamp_prob(probit_cdf(eta[r]));
      const double d = probit_pdf(eta[r]);
      w[r] = d * d / (pr * (1.0 - pr));
    }
    return Eigen::MatrixXd(X.transpose() * w.asDiagonal() * X);
  };

  double ll = glm_probit_loglik(y, X, fit.coefficients);
  double change = std::numeric_limits<double>::infinity();
  for (fit.iterations = 0; fit.iterations < controls.max_iter; ++fit.iterations) {
    const Eigen::VectorXd u = glm_probit_score(y, X, fit.coefficients);
    if (change <= controls.tol_loglik && u.cwiseAbs().maxCoeff() <= 1e-9) {
      fit.converged = true;
      break;
    }
    const Eigen::VectorXd step = information(fit.coefficients).ldlt().solve(u);
    if (!step.allFinite()) break;

    // Below the log-likelihood's resolution a tie is settled by the slope along the step.
    const double slope0 = u.dot(step);
    const double resolution = 1e-13 * std::max(1.0, std::abs(ll));
    auto accept = [&](const Eigen::VectorXd& beta, double value) {
      if (value > ll) return true;
      if (!(std::abs(value - ll) <= resolution) || !(slope0 > 0.0)) return false;
      return std::abs(glm_probit_score(y, X, beta).dot(step)) < slope0;
    };
    double scale = 1.0;
    Eigen::VectorXd candidate = fit.coefficients + step;
    double ll_new = glm_probit_loglik(y, X, candidate);
    bool ok = accept(candidate, ll_new);
    for (int h = 0; h < controls.max_halvings && !ok; ++h) {
      scale *= 0.5;
      candidate = fit.coefficients + scale * step;
      ll_new = glm_probit_loglik(y, X, candidate);
      ok = accept(candidate, ll_new);
    }
    if (!ok) {
      // No ascent possible from here: stationary up to rounding.
      fit.converged = u.cwiseAbs().maxCoeff() <= 1e-6;
      break;
    }
    fit.coefficients = candidate;
    change = std::abs(ll_new - ll) / (std::abs(ll) + 1e-300);
    ll = ll_new;
  }
  fit.loglik = ll;

  // Separation drives |eta| to the probability clamp.
  const Eigen::VectorXd eta = X * fit.coefficients;
  if (eta.cwiseAbs().maxCoeff() > 7.0 || !fit.coefficients.allFinite()) {
    fit.converged = false;
    fit.diagnostic = "possible perfect separation: fitted linear predictor reaches |eta| = " +
                     std::to_string(eta.cwiseAbs().maxCoeff());
  } else if (!fit.converged) {
    fit.diagnostic = "Fisher scoring did not converge in " + std::to_string(controls.max_iter) + " iterations";
  }

  const Eigen::MatrixXd info = information(fit.coefficients);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(info);
  const Eigen::VectorXd ev = eig.eigenvalues();
  Eigen::VectorXd inv_diag = Eigen::VectorXd::Zero(p);
  for (Eigen::Index a = 0; a < p; ++a) {
    if (ev[a] > ev.maxCoeff() * 1e-14) inv_diag += eig.eigenvectors().col(a).cwiseAbs2() / ev[a];
    else inv_diag.setConstant(std::numeric_limits<double>::infinity());
  }
  fit.se = inv_diag.cwiseSqrt();
  return fit;
}

std::vector<double> vif(const Eigen::MatrixXd& X) {
  const auto n = X.rows();
  const Eigen::Index first = (X.col(0).array() == X(0, 0)).all() ? 1 : 0;
  if (X.cols() - first < 2) throw NumericError("vif: need at least two non-intercept columns");
  std::vector<double> out;
  for (Eigen::Index c = first; c < X.cols(); ++c) {
    Eigen::MatrixXd others(n, X.cols() - first);
    others.col(0).setOnes();
    Eigen::Index pos = 1;
    for (Eigen::Index o = first; o < X.cols(); ++o) {
      if (o != c) others.col(pos++) = X.col(o);
    }
    const Eigen::VectorXd target = X.col(c);
    const Eigen::VectorXd centered = target.array() - target.mean();
    const double sst = centered.squaredNorm();
    if (sst == 0.0) {
      out.push_back(std::numeric_limits<double>::infinity());
      continue;
    }
    const Eigen::VectorXd coef = others.colPivHouseholderQr().solve(target);
    const double ssr = (target - others * coef).squaredNorm();
    const double r2 = 1.0 - ssr / sst;
    out.push_back(r2 >= 1.0 - 1e-12 ? std::numeric_limits<double>::infinity() : 1.0 / (1.0 - r2));
  }
  return out;
}

}  // namespace pnmtrem

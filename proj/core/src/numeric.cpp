#include "pnmtrem/numeric.hpp"

#include <algorithm>
#include <limits>
#include <string>

#include <Eigen/Eigenvalues>
#include <boost/math/special_functions/erf.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "pnmtrem/error.hpp"

namespace pnmtrem {

namespace {

constexpr double kInvSqrt2Pi = 0.39894228040143267794;

// Orthonormal Hermite recurrence: returns p_n(x) and p_{n-1}(x) where
// p_k are orthonormal with respect to exp(-x^2).
std::pair<double, double> hermite_orthonormal(int n, double x) {
  double p_prev = 0.0;
  double p = 1.0 / std::pow(std::numbers::pi, 0.25);
  for (int k = 0; k < n; ++k) {
    const double next = x * std::sqrt(2.0 / (k + 1)) * p - std::sqrt(static_cast<double>(k) / (k + 1)) * p_prev;
    p_prev = p;
    p = next;
  }
  return {p, p_prev};
}

}  // namespace

double probit_cdf(double x) {
  if (std::isnan(x)) throw NumericError("probit_cdf: NaN argument");
  return 0.5 * std::erfc(-x / std::numbers::sqrt2);
}

double probit_pdf(double x) {
  if (std::isnan(x)) throw NumericError("probit_pdf: NaN argument");
  return kInvSqrt2Pi * std::exp(-0.5 * x * x);
}

double probit_inverse(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    throw NumericError("probit_inverse: probability " + std::to_string(p) + " outside (0, 1)");
  }
  return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * p);
}

QuadratureRule gauss_hermite(int order) {
  if (order < 1 || order > 100) {
    throw NumericError("gauss_hermite: order must be in [1, 100], got " + std::to_string(order));
  }
  QuadratureRule rule;
  rule.order = order;
  rule.nodes.resize(order);
  rule.weights.resize(order);
  if (order == 1) {
    rule.nodes[0] = 0.0;
    rule.weights[0] = std::sqrt(std::numbers::pi);
    return rule;
  }

  // Golub-Welsch: eigenvalues of the symmetric tridiagonal Jacobi matrix.
  Eigen::VectorXd diag = Eigen::VectorXd::Zero(order);
  Eigen::VectorXd sub(order - 1);
  for (int i = 0; i < order - 1; ++i) sub[i] = std::sqrt((i + 1) / 2.0);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver;
  solver.computeFromTridiagonal(diag, sub, Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) {
    throw NumericError("gauss_hermite: Jacobi eigenproblem failed");
  }
  const Eigen::VectorXd& eig = solver.eigenvalues();

  // Newton polish on the positive half, mirrored for exact symmetry.
  const int half = order / 2;
  for (int i = 0; i < half; ++i) {
    double x = eig[order - 1 - i];
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      auto [p, p_prev] = hermite_orthonormal(order, x);
      dp = std::sqrt(2.0 * order) * p_prev;
      const double step = p / dp;
      x -= step;
      if (std::abs(step) <= 1e-15 * std::max(1.0, std::abs(x))) break;
    }
    auto [p, p_prev] = hermite_orthonormal(order, x);
    (void)p;
    dp = std::sqrt(2.0 * order) * p_prev;
    const double w = 2.0 / (dp * dp);
    rule.nodes[order - 1 - i] = x;
    rule.nodes[i] = -x;
    rule.weights[order - 1 - i] = w;
    rule.weights[i] = w;
  }
  if (order % 2 == 1) {
    auto [p, p_prev] = hermite_orthonormal(order, 0.0);
    (void)p;
    const double dp = std::sqrt(2.0 * order) * p_prev;
    rule.nodes[half] = 0.0;
    rule.weights[half] = 2.0 / (dp * dp);
  }
  return rule;
}

SdEstimate delta_method_sd(double c_hat, double se_c) {
  if (se_c < 0.0) throw NumericError("delta_method_sd: negative standard error");
  const double sigma = std::exp(c_hat);
  return {sigma, sigma * se_c};
}

double normal_upper_tail(double z) {
  if (std::isnan(z)) throw NumericError("normal_upper_tail: NaN argument");
  return 0.5 * std::erfc(z / std::numbers::sqrt2);
}

double two_sided_normal_p(double z) {
  return std::min(1.0, 2.0 * normal_upper_tail(std::abs(z)));
}

double chi_square_upper_tail(double x, int df) {
  if (df < 1) throw NumericError("chi_square_upper_tail: df must be positive");
  if (x <= 0.0) return 1.0;
  return boost::math::gamma_q(0.5 * df, 0.5 * x);
}

}  // namespace pnmtrem

#pragma once

#include <cmath>
#include <numbers>
#include <vector>

namespace pnmtrem {

/// Standard normal CDF. Throws NumericError on NaN.
double probit_cdf(double x);

/// Standard normal density. Throws NumericError on NaN.
double probit_pdf(double x);

/// Standard normal quantile; requires p in (0, 1).
double probit_inverse(double p);

/// Gauss-Hermite rule for integrals against exp(-x^2).
///
/// Nodes are sorted ascending and symmetric about zero. Expectations under a
/// standard normal are obtained with the change of variables x = sqrt(2) z:
///   E[f(Z)] ~= (1/sqrt(pi)) * sum_q w_q f(sqrt(2) z_q).
struct QuadratureRule {
  int order = 0;
  std::vector<double> nodes;
  std::vector<double> weights;

  /// Standard-normal expectation of f using this rule.
  template <typename F>
  double expect(F&& f) const {
    double acc = 0.0;
    for (int q = 0; q < order; ++q) {
      acc += weights[q] * f(std::numbers::sqrt2 * nodes[q]);
    }
    return acc / std::sqrt(std::numbers::pi);
  }
};

/// Builds the rule of the given order (1..100) from the eigenvalues of the
/// Hermite Jacobi matrix, polished by Newton iterations on the orthonormal
/// Hermite recurrence.
QuadratureRule gauss_hermite(int order);

struct SdEstimate {
  double sigma;
  double se;
};

/// Maps (log sigma, se(log sigma)) to (sigma, se(sigma)) by the delta method.
SdEstimate delta_method_sd(double c_hat, double se_c);

/// P(Z > z) for a standard normal Z.
double normal_upper_tail(double z);

/// Two-sided p-value 2 * P(Z > |z|).
double two_sided_normal_p(double z);

/// P(X > x) for X ~ chi-square with df degrees of freedom.
double chi_square_upper_tail(double x, int df);

}  // namespace pnmtrem

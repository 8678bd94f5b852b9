#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "pnmtrem/constraint.hpp"
#include "pnmtrem/numeric.hpp"
#include "pnmtrem/panel.hpp"
#include "pnmtrem/params.hpp"

namespace pnmtrem::support {

// Central differences of f at x, one coordinate at a time.
inline Eigen::VectorXd numeric_gradient(const std::function<double(const Eigen::VectorXd&)>& f,
                                        const Eigen::VectorXd& x, double h = 1e-5) {
  Eigen::VectorXd g(x.size());
  for (Eigen::Index a = 0; a < x.size(); ++a) {
    Eigen::VectorXd hi = x;
    Eigen::VectorXd lo = x;
    hi[a] += h;
    lo[a] -= h;
    g[a] = (f(hi) - f(lo)) / (2.0 * h);
  }
  return g;
}

// Relative error with an absolute floor.
inline double rel_err(double a, double b, double floor = 1e-8) {
  return std::abs(a - b) / std::max(std::max(std::abs(a), std::abs(b)), floor);
}

// Random balanced panel with one non-constant covariate in each design.
inline PanelData random_panel(int n, int T, int k, std::uint64_t seed, double p_one = 0.5) {
  std::mt19937_64 eng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<std::uint8_t> y(static_cast<std::size_t>(n) * T * k);
  for (auto& v : y) v = u(eng) < p_one ? 1 : 0;
  Eigen::MatrixXd xb(n * k, 2);
  Eigen::MatrixXd xm(n * (T - 1) * k, 2);
  Eigen::MatrixXd zt(n * (T - 1) * k, 2);
  for (Eigen::Index r = 0; r < xb.rows(); ++r) xb.row(r) << 1.0, u(eng) - 0.5;
  for (Eigen::Index r = 0; r < xm.rows(); ++r) {
    xm.row(r) << 1.0, u(eng) - 0.5;
    zt.row(r) << 1.0, u(eng) < 0.5 ? -1.0 : 1.0;
  }
  return PanelData(n, T, k, std::move(y), std::move(xb), std::move(xm), std::move(zt));
}

// Random baseline parameters: coefficients in [-1, 1], loadings in [0.5, 1.5],
// sigma_1 in [0.3, 1.2].
inline BaselineParams random_baseline(std::mt19937_64& eng, int n_coef, int k) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  BaselineParams p;
  p.beta_star.resize(n_coef);
  for (auto& b : p.beta_star) b = 2.0 * u(eng) - 1.0;
  p.lambda_star.resize(k);
  p.lambda_star[0] = 1.0;
  for (int j = 1; j < k; ++j) p.lambda_star[j] = 0.5 + u(eng);
  p.c1 = std::log(0.3 + 0.9 * u(eng));
  return p;
}

inline MainParams random_main(std::mt19937_64& eng, int n_coef, int n_transition, int T, int k) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  MainParams p;
  p.beta.resize(n_coef);
  for (auto& b : p.beta) b = 2.0 * u(eng) - 1.0;
  p.alpha.resize(T - 1, n_transition);
  for (auto& a : p.alpha.reshaped()) a = 2.0 * u(eng) - 1.0;
  p.lambda.resize(k);
  p.lambda[0] = 1.0;
  for (int j = 1; j < k; ++j) p.lambda[j] = 0.5 + u(eng);
  p.c.resize(T - 1);
  for (auto& c : p.c) c = std::log(0.3 + 0.9 * u(eng));
  return p;
}

/// Truth-scale parameters: sigma in [0.5, 0.8] and loadings in [0.8, 1.2],
/// the range of the reference simulation design.
inline void shrink_to_design_scale(std::mt19937_64& eng, BaselineParams& b, MainParams& m) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (Eigen::Index j = 1; j < b.lambda_star.size(); ++j) b.lambda_star[j] = 0.8 + 0.4 * u(eng);
  for (Eigen::Index j = 1; j < m.lambda.size(); ++j) m.lambda[j] = 0.8 + 0.4 * u(eng);
  b.c1 = std::log(0.5 + 0.3 * u(eng));
  for (auto& c : m.c) c = std::log(0.5 + 0.3 * u(eng));
}

/// Direct evaluation of the two-stage log-likelihood: one integral per subject
/// and time over the product of Bernoulli terms, written without the engine's
/// likelihood code.
inline double brute_force_loglik(const BaselineParams& b, const MainParams& m, const PanelData& d,
                                 const ConstraintSolution& sol, const QuadratureRule& rule) {
  const Eigen::VectorXd delta = sol.deltas(m.beta, m.alpha);
  const double s1 = std::exp(b.c1);
  double ll = 0.0;
  for (int i = 0; i < d.n_subjects(); ++i) {
    double lik = 0.0;
    for (int q = 0; q < rule.order; ++q) {
      const double z = std::sqrt(2.0) * rule.nodes[q];
      double prod = rule.weights[q] / std::sqrt(std::numbers::pi);
      for (int j = 0; j < d.n_responses(); ++j) {
        const double lam = b.lambda_star[j];
        const double eta = std::sqrt(1.0 + lam * lam * s1 * s1) * d.baseline_row(i, j).dot(b.beta_star) + lam * s1 * z;
        const double pr = probit_cdf(eta);
        prod *= d.y(i, 0, j) == 1 ? pr : 1.0 - pr;
      }
      lik += prod;
    }
    ll += std::log(lik);
    for (int t = 1; t < d.n_times(); ++t) {
      const double st = std::exp(m.c[t - 1]);
      lik = 0.0;
      for (int q = 0; q < rule.order; ++q) {
        const double z = std::sqrt(2.0) * rule.nodes[q];
        double prod = rule.weights[q] / std::sqrt(std::numbers::pi);
        for (int j = 0; j < d.n_responses(); ++j) {
          const double lam = m.lambda[j];
          const double gamma = d.transition_row(i, t, j).dot(m.alpha.row(t - 1).transpose());
          const double eta = std::sqrt(1.0 + lam * lam * st * st) * (delta[d.cell(i, t, j)] + gamma * d.y(i, t - 1, j)) +
                             lam * st * z;
          const double pr = probit_cdf(eta);
          prod *= d.y(i, t, j) == 1 ? pr : 1.0 - pr;
        }
        lik += prod;
      }
      ll += std::log(lik);
    }
  }
  return ll;
}

}  // namespace pnmtrem::support

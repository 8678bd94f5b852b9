#include "pnmtrem/empirical_bayes.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "pnmtrem/constraint.hpp"
#include "pnmtrem/error.hpp"
#include "pnmtrem/fitter.hpp"
#include "pnmtrem/likelihood.hpp"
#include "pnmtrem/numeric.hpp"
#include "pnmtrem/panel.hpp"
#include "pnmtrem/parallel.hpp"

namespace pnmtrem {

namespace {

double clamp_prob(double p) { return std::clamp(p, kProbabilityClamp, 1.0 - kProbabilityClamp); }

// d log P(y | d) / dd and its derivative.
std::pair<double, double> bernoulli_derivatives(int y, double d) {
  const double dens = probit_pdf(d);
  if (y) {
    const double r = dens / clamp_prob(probit_cdf(d));
    return {r, -r * (d + r)};
  }
  const double r = dens / clamp_prob(probit_cdf(-d));
  return {-r, -r * (r - d)};
}

}  // namespace

std::vector<PosteriorTerm> posterior_terms(const FitResult& fit, const PanelData& data, int i) {
  const int k = data.n_responses();
  std::vector<PosteriorTerm> terms;
  terms.reserve(static_cast<std::size_t>(data.n_times()) * k);
  const double sigma1 = fit.theta1.sigma1();
  for (int j = 0; j < k; ++j) {
    const double lam = fit.theta1.lambda_star[j];
    terms.push_back({delta_star_baseline(data.baseline_row(i, j), fit.theta1.beta_star, lam, sigma1), lam * sigma1,
                     data.y(i, 0, j)});
  }
  for (int t = 1; t < data.n_times(); ++t) {
    const double sigma = fit.theta2.sigma(t);
    for (int j = 0; j < k; ++j) {
      const double delta = fit.constraints.delta(data.cell(i, t, j), t, fit.theta2.beta, fit.theta2.alpha);
      const double gamma_y =
          data.y_lag(i, t, j) ? data.transition_row(i, t, j).dot(fit.theta2.alpha.row(t - 1)) : 0.0;
      const double lam = fit.theta2.lambda[j];
      terms.push_back({delta_star_main(delta, gamma_y, lam, sigma), lam * sigma, data.y(i, t, j)});
    }
  }
  return terms;
}

double log_posterior(std::span<const PosteriorTerm> terms, double z) {
  double acc = -0.5 * z * z;
  for (const auto& term : terms) {
    const double d = term.delta_star + term.loading * z;
    acc += term.y ? std::log(clamp_prob(probit_cdf(d))) : std::log(clamp_prob(probit_cdf(-d)));
  }
  return acc;
}

double posterior_score(std::span<const PosteriorTerm> terms, double z) {
  double acc = -z;
  for (const auto& term : terms) acc += term.loading * bernoulli_derivatives(term.y, term.delta_star + term.loading * z).first;
  return acc;
}

ModeResult posterior_mode(std::span<const PosteriorTerm> terms, const EbControls& controls) {
  auto curvature = [&](double z) {
    double acc = -1.0;
    for (const auto& term : terms) {
      acc += term.loading * term.loading * bernoulli_derivatives(term.y, term.delta_star + term.loading * z).second;
    }
    return acc;
  };

  ModeResult res;
  double z = 0.0;
  for (res.iterations = 0; res.iterations < controls.max_iter; ++res.iterations) {
    const double g = posterior_score(terms, z);
    if (std::abs(g) <= controls.tol) {
      res.z = z;
      res.converged = true;
      return res;
    }
    const double h = curvature(z);
    if (!(h < 0.0)) break;
    double step = -g / h;
    if (std::abs(step) > 2.0) step *= 0.5;
    z += step;
    if (!std::isfinite(z)) break;
  }

  // Score is decreasing in z (log-concave posterior): bisection fallback.
  double lo = -controls.bracket;
  double hi = controls.bracket;
  if (posterior_score(terms, lo) < 0.0 || posterior_score(terms, hi) > 0.0) {
    res.converged = false;
    res.z = posterior_score(terms, lo) < 0.0 ? lo : hi;
    return res;
  }
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double g = posterior_score(terms, mid);
    if (std::abs(g) <= controls.tol || hi - lo < 1e-15) {
      res.z = mid;
      res.converged = std::abs(g) <= 1e-8;
      return res;
    }
    if (g > 0.0) lo = mid;
    else hi = mid;
  }
  res.z = 0.5 * (lo + hi);
  res.converged = std::abs(posterior_score(terms, res.z)) <= 1e-8;
  return res;
}

double estimate_z(int i, const FitResult& fit, const PanelData& data, const EbControls& controls) {
  const auto terms = posterior_terms(fit, data, i);
  return posterior_mode(terms, controls).z;
}

SubjectEffects estimate_effects(const FitResult& fit, const PanelData& data, const EbControls& controls) {
  const int n = data.n_subjects();
  const int T = data.n_times();
  SubjectEffects eff;
  eff.z_hat = Eigen::VectorXd::Zero(n);
  eff.b_hat = Eigen::MatrixXd::Zero(n, T);
  std::vector<char> ok(n, 0);
  parallel_for(static_cast<std::size_t>(n), [&](std::size_t is) {
    const int i = static_cast<int>(is);
    const auto terms = posterior_terms(fit, data, i);
    const auto mode = posterior_mode(terms, controls);
    eff.z_hat[i] = mode.z;
    ok[i] = mode.converged ? 1 : 0;
  });
  eff.converged.assign(ok.begin(), ok.end());
  for (int i = 0; i < n; ++i) {
    eff.b_hat(i, 0) = fit.theta1.sigma1() * eff.z_hat[i];
    for (int t = 1; t < T; ++t) eff.b_hat(i, t) = fit.theta2.sigma(t) * eff.z_hat[i];
  }
  return eff;
}

std::vector<ProbabilityRow> probability_surfaces(const FitResult& fit, const PanelData& data,
                                                 const SubjectEffects& effects) {
  const int k = data.n_responses();
  std::vector<ProbabilityRow> rows;
  rows.reserve(static_cast<std::size_t>(data.n_subjects()) * data.n_times() * k);
  for (int i = 0; i < data.n_subjects(); ++i) {
    const auto terms = posterior_terms(fit, data, i);
    for (int t = 0; t < data.n_times(); ++t) {
      for (int j = 0; j < k; ++j) {
        const auto& term = terms[static_cast<std::size_t>(t) * k + j];
        ProbabilityRow row;
        row.subject = i;
        row.time = t;
        row.response = j;
        row.observed = data.y(i, t, j);
        row.marginal_predictor = t == 0 ? data.baseline_row(i, j).dot(fit.theta1.beta_star)
                                        : data.main_row(i, t, j).dot(fit.theta2.beta);
        const double lambda = t == 0 ? fit.theta1.lambda_star[j] : fit.theta2.lambda[j];
        row.conditional_predictor = term.delta_star + lambda * effects.b_hat(i, t);
        row.marginal = probit_cdf(row.marginal_predictor);
        row.conditional = probit_cdf(row.conditional_predictor);
        row.conditional_average = probit_cdf(term.delta_star);
        rows.push_back(row);
      }
    }
  }
  return rows;
}

double simple_r2(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) return std::numeric_limits<double>::quiet_NaN();
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxx = 0.0;
  double syy = 0.0;
  double sxy = 0.0;
  for (std::size_t a = 0; a < x.size(); ++a) {
    sxx += (x[a] - mx) * (x[a] - mx);
    syy += (y[a] - my) * (y[a] - my);
    sxy += (x[a] - mx) * (y[a] - my);
  }
  if (sxx <= 1e-300 * n || syy <= 1e-300 * n) return std::numeric_limits<double>::quiet_NaN();
  return std::min(1.0, sxy * sxy / (sxx * syy));
}

std::vector<R2Row> probit_r2(const std::vector<ProbabilityRow>& surfaces, int n_responses) {
  std::vector<R2Row> out;
  for (int j = 0; j < n_responses; ++j) {
    std::vector<double> xb, yb, xm, ym;
    for (const auto& r : surfaces) {
      if (r.response != j) continue;
      if (r.time == 0) {
        xb.push_back(r.marginal_predictor);
        yb.push_back(r.conditional_predictor);
      } else {
        xm.push_back(r.marginal_predictor);
        ym.push_back(r.conditional_predictor);
      }
    }
    out.push_back({j, simple_r2(xb, yb), simple_r2(xm, ym)});
  }
  return out;
}

AccuracyMetrics accuracy_metrics(std::span<const std::uint8_t> y, std::span<const double> probabilities) {
  if (y.size() != probabilities.size() || y.empty()) {
    throw NumericError("accuracy_metrics: y and probabilities must be non-empty and equally long");
  }
  AccuracyMetrics m;
  double correct = 0.0;
  for (std::size_t a = 0; a < y.size(); ++a) {
    const double p = probabilities[a];
    if (!(p >= 0.0 && p <= 1.0)) throw NumericError("accuracy_metrics: probability outside [0, 1]");
    if (y[a] > 1) throw NumericError("accuracy_metrics: y must be binary");
    correct += y[a] ? p : 1.0 - p;
  }
  m.epcp = correct / static_cast<double>(y.size());

  // Mann-Whitney via midranks.
  std::vector<std::size_t> order(y.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return probabilities[a] < probabilities[b]; });
  double rank_sum_pos = 0.0;
  double n_pos = 0.0;
  for (std::size_t s = 0; s < order.size();) {
    std::size_t e = s;
    while (e + 1 < order.size() && probabilities[order[e + 1]] == probabilities[order[s]]) ++e;
    const double midrank = 0.5 * (static_cast<double>(s) + static_cast<double>(e)) + 1.0;
    for (std::size_t u = s; u <= e; ++u) {
      if (y[order[u]]) {
        rank_sum_pos += midrank;
        n_pos += 1.0;
      }
    }
    s = e + 1;
  }
  const double n_neg = static_cast<double>(y.size()) - n_pos;
  if (n_pos == 0.0 || n_neg == 0.0) {
    m.auroc = std::numeric_limits<double>::quiet_NaN();
    m.auroc_defined = false;
  } else {
    m.auroc = (rank_sum_pos - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg);
  }
  return m;
}

}  // namespace pnmtrem

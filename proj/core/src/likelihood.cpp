#include "pnmtrem/likelihood.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <vector>

#include "pnmtrem/constraint.hpp"
#include "pnmtrem/error.hpp"
#include "pnmtrem/numeric.hpp"
#include "pnmtrem/panel.hpp"
#include "pnmtrem/parallel.hpp"

namespace pnmtrem {

namespace {

const double kHalfLogPi = 0.5 * std::log(std::numbers::pi);

// One subject-time block: k responses sharing the standardized effect z_i.
struct Block {
  const double* mu;      // intercept before convolution scaling: X beta* or Delta + gamma * y_lag
  const double* lambda;  // loadings
  double sigma;
  const std::uint8_t* y;
  int k;
};

struct BlockResult {
  double log_h = 0.0;
  // Posterior-weighted averages of the Bernoulli score ratio m = dlog p / dd,
  // without and with the node factor sqrt(2) z_q.
  Eigen::VectorXd g_mu;
  Eigen::VectorXd g_z;
};

[[noreturn]] void non_finite(const char* what, int i, int t, int j, int q) {
  std::ostringstream msg;
  msg << "non-finite " << what << " at subject " << i + 1 << ", time " << t + 1 << ", response " << j + 1
      << ", node " << q + 1;
  throw NumericError(msg.str());
}

BlockResult integrate_block(const Block& b, const QuadratureRule& rule, bool want_grad, int subject, int time) {
  const int Q = rule.order;
  const int k = b.k;
  std::vector<double> log_terms(Q);
  std::vector<double> ratio(want_grad ? static_cast<std::size_t>(Q) * k : 0);
  std::vector<double> scale(k);
  for (int j = 0; j < k; ++j) scale[j] = std::sqrt(1.0 + b.lambda[j] * b.lambda[j] * b.sigma * b.sigma);

  for (int q = 0; q < Q; ++q) {
    const double node = std::numbers::sqrt2 * rule.nodes[q];
    double acc = std::log(rule.weights[q]);
    for (int j = 0; j < k; ++j) {
      const double d = scale[j] * b.mu[j] + b.lambda[j] * b.sigma * node;
      if (!std::isfinite(d)) non_finite("linear predictor", subject, time, j, q);
      const double p1 = std::clamp(probit_cdf(d), kProbabilityClamp, 1.0 - kProbabilityClamp);
      const double p0 = std::clamp(probit_cdf(-d), kProbabilityClamp, 1.0 - kProbabilityClamp);
      acc += b.y[j] ? std::log(p1) : std::log(p0);
      if (want_grad) {
        const double dens = probit_pdf(d);
        ratio[static_cast<std::size_t>(q) * k + j] = b.y[j] ? dens / p1 : -dens / p0;
      }
    }
    log_terms[q] = acc;
  }

  const double top = *std::max_element(log_terms.begin(), log_terms.end());
  double sum = 0.0;
  for (int q = 0; q < Q; ++q) sum += std::exp(log_terms[q] - top);
  const double log_sum = top + std::log(sum);

  BlockResult out;
  out.log_h = log_sum - kHalfLogPi;
  if (!std::isfinite(out.log_h)) non_finite("integral", subject, time, 0, 0);
  if (want_grad) {
    out.g_mu = Eigen::VectorXd::Zero(k);
    out.g_z = Eigen::VectorXd::Zero(k);
    for (int q = 0; q < Q; ++q) {
      const double omega = std::exp(log_terms[q] - log_sum);
      const double node = std::numbers::sqrt2 * rule.nodes[q];
      for (int j = 0; j < k; ++j) {
        const double m = ratio[static_cast<std::size_t>(q) * k + j];
        out.g_mu[j] += omega * m;
        out.g_z[j] += omega * m * node;
      }
    }
  }
  return out;
}

// Per-subject results written into slots, reduced in subject order.
struct SubjectSlots {
  std::vector<double> loglik;
  Eigen::MatrixXd scores;
};

StageEvaluation reduce(const SubjectSlots& slots, bool with_scores) {
  StageEvaluation ev;
  for (double v : slots.loglik) ev.loglik += v;
  if (with_scores) {
    ev.subject_scores = slots.scores;
    ev.score = Eigen::VectorXd::Zero(slots.scores.cols());
    for (Eigen::Index i = 0; i < slots.scores.rows(); ++i) ev.score += slots.scores.row(i).transpose();
  }
  return ev;
}

}  // namespace

Eigen::MatrixXd StageEvaluation::information() const {
  const auto P = subject_scores.cols();
  Eigen::MatrixXd info = Eigen::MatrixXd::Zero(P, P);
  for (Eigen::Index i = 0; i < subject_scores.rows(); ++i) {
    const Eigen::VectorXd s = subject_scores.row(i).transpose();
    info.noalias() += s * s.transpose();
  }
  return 0.5 * (info + info.transpose());
}

// ---------------------------------------------------------------------------
// Baseline

StageEvaluation evaluate_baseline(const BaselineParams& params, const PanelData& data, const QuadratureRule& rule,
                                  bool with_scores) {
  const int n = data.n_subjects();
  const int k = data.n_responses();
  const int p = static_cast<int>(data.x_baseline().cols());
  params.check(p, k);
  const double sigma = params.sigma1();
  const Eigen::VectorXd eta = data.x_baseline() * params.beta_star;
  const int P = BaselineParams::packed_size(p, k);

  SubjectSlots slots;
  slots.loglik.assign(n, 0.0);
  if (with_scores) slots.scores = Eigen::MatrixXd::Zero(n, P);

  parallel_for(static_cast<std::size_t>(n), [&](std::size_t is) {
    const int i = static_cast<int>(is);
    std::vector<std::uint8_t> y(k);
    for (int j = 0; j < k; ++j) y[j] = static_cast<std::uint8_t>(data.y(i, 0, j));
    const Block block{eta.data() + static_cast<std::ptrdiff_t>(i) * k, params.lambda_star.data(), sigma, y.data(), k};
    const auto r = integrate_block(block, rule, with_scores, i, 0);
    slots.loglik[i] = r.log_h;
    if (!with_scores) return;
    auto row = slots.scores.row(i);
    const double s2 = sigma * sigma;
    for (int j = 0; j < k; ++j) {
      const double lam = params.lambda_star[j];
      const double scale = std::sqrt(1.0 + lam * lam * s2);
      const double mu = eta[i * k + j];
      row.head(p) += r.g_mu[j] * scale * data.baseline_row(i, j);
      if (j > 0) row[p + j - 1] += r.g_mu[j] * lam * s2 * mu / scale + r.g_z[j] * sigma;
      row[P - 1] += r.g_mu[j] * lam * lam * s2 * mu / scale + r.g_z[j] * lam * sigma;
    }
  });
  return reduce(slots, with_scores);
}

double loglik_baseline(const BaselineParams& params, const PanelData& data, const QuadratureRule& rule) {
  return evaluate_baseline(params, data, rule, false).loglik;
}

Eigen::VectorXd score_baseline(const BaselineParams& params, const PanelData& data, const QuadratureRule& rule) {
  return evaluate_baseline(params, data, rule, true).score;
}

Eigen::VectorXd baseline_log_h(const BaselineParams& params, const PanelData& data, const QuadratureRule& rule) {
  const int k = data.n_responses();
  params.check(static_cast<int>(data.x_baseline().cols()), k);
  const Eigen::VectorXd eta = data.x_baseline() * params.beta_star;
  Eigen::VectorXd out(data.n_subjects());
  for (int i = 0; i < data.n_subjects(); ++i) {
    std::vector<std::uint8_t> y(k);
    for (int j = 0; j < k; ++j) y[j] = static_cast<std::uint8_t>(data.y(i, 0, j));
    const Block block{eta.data() + static_cast<std::ptrdiff_t>(i) * k, params.lambda_star.data(), params.sigma1(),
                      y.data(), k};
    out[i] = integrate_block(block, rule, false, i, 0).log_h;
  }
  return out;
}

// ---------------------------------------------------------------------------
// t >= 2

namespace {

// mu_itj = Delta_itj + gamma_itj * y_{i,t-1,j} for every cell.
Eigen::VectorXd main_intercepts(const MainParams& params, const PanelData& data,
                                const ConstraintSolution& constraints) {
  Eigen::VectorXd mu = constraints.deltas(params.beta, params.alpha);
  for (int i = 0; i < data.n_subjects(); ++i) {
    for (int t = 1; t < data.n_times(); ++t) {
      for (int j = 0; j < data.n_responses(); ++j) {
        if (data.y_lag(i, t, j)) {
          const int c = data.cell(i, t, j);
          mu[c] += data.transition_row(i, t, j).dot(params.alpha.row(t - 1));
        }
      }
    }
  }
  return mu;
}

void check_main(const MainParams& params, const PanelData& data, const ConstraintSolution& constraints) {
  params.check(static_cast<int>(data.x_main().cols()), static_cast<int>(data.z_transition().cols()), data.n_times(),
               data.n_responses());
  if (constraints.delta0().size() != data.n_cells()) throw NumericError("constraint solution does not match panel");
}

}  // namespace

StageEvaluation evaluate_main(const MainParams& params, const PanelData& data, const QuadratureRule& rule,
                              const ConstraintSolution& constraints, bool with_scores) {
  check_main(params, data, constraints);
  const int n = data.n_subjects();
  const int T = data.n_times();
  const int k = data.n_responses();
  const int p = static_cast<int>(data.x_main().cols());
  const int l = static_cast<int>(data.z_transition().cols());
  const int P = MainParams::packed_size(p, l, T, k);
  const int off_alpha = p;
  const int off_lambda = p + (T - 1) * l;
  const int off_c = off_lambda + (k - 1);
  const Eigen::VectorXd mu = main_intercepts(params, data, constraints);

  SubjectSlots slots;
  slots.loglik.assign(n, 0.0);
  if (with_scores) slots.scores = Eigen::MatrixXd::Zero(n, P);

  parallel_for(static_cast<std::size_t>(n), [&](std::size_t is) {
    const int i = static_cast<int>(is);
    std::vector<std::uint8_t> y(k);
    double total = 0.0;
    for (int t = 1; t < T; ++t) {
      for (int j = 0; j < k; ++j) y[j] = static_cast<std::uint8_t>(data.y(i, t, j));
      const double sigma = params.sigma(t);
      const int c0 = data.cell(i, t, 0);
      const Block block{mu.data() + c0, params.lambda.data(), sigma, y.data(), k};
      const auto r = integrate_block(block, rule, with_scores, i, t);
      total += r.log_h;
      if (!with_scores) continue;
      auto row = slots.scores.row(i);
      const double s2 = sigma * sigma;
      for (int j = 0; j < k; ++j) {
        const int c = c0 + j;
        const double lam = params.lambda[j];
        const double scale = std::sqrt(1.0 + lam * lam * s2);
        const double w = r.g_mu[j] * scale;
        row.head(p) += w * constraints.a().row(c);
        auto alpha_block = row.segment(off_alpha + (t - 1) * l, l);
        alpha_block += w * constraints.b().row(c);
        if (data.y_lag(i, t, j)) alpha_block += w * data.transition_row(i, t, j);
        if (j > 0) row[off_lambda + j - 1] += r.g_mu[j] * lam * s2 * mu[c] / scale + r.g_z[j] * sigma;
        row[off_c + t - 1] += r.g_mu[j] * lam * lam * s2 * mu[c] / scale + r.g_z[j] * lam * sigma;
      }
    }
    slots.loglik[i] = total;
  });
  return reduce(slots, with_scores);
}

double loglik_main(const MainParams& params, const PanelData& data, const QuadratureRule& rule,
                   const ConstraintSolution& constraints) {
  return evaluate_main(params, data, rule, constraints, false).loglik;
}

Eigen::VectorXd score_main(const MainParams& params, const PanelData& data, const QuadratureRule& rule,
                           const ConstraintSolution& constraints) {
  return evaluate_main(params, data, rule, constraints, true).score;
}

Eigen::MatrixXd main_log_h(const MainParams& params, const PanelData& data, const QuadratureRule& rule,
                           const ConstraintSolution& constraints) {
  check_main(params, data, constraints);
  const int k = data.n_responses();
  const Eigen::VectorXd mu = main_intercepts(params, data, constraints);
  Eigen::MatrixXd out(data.n_subjects(), data.n_times() - 1);
  std::vector<std::uint8_t> y(k);
  for (int i = 0; i < data.n_subjects(); ++i) {
    for (int t = 1; t < data.n_times(); ++t) {
      for (int j = 0; j < k; ++j) y[j] = static_cast<std::uint8_t>(data.y(i, t, j));
      const Block block{mu.data() + data.cell(i, t, 0), params.lambda.data(), params.sigma(t), y.data(), k};
      out(i, t - 1) = integrate_block(block, rule, false, i, t).log_h;
    }
  }
  return out;
}

}  // namespace pnmtrem

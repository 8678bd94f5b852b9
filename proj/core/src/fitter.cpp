#include "pnmtrem/fitter.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "pnmtrem/error.hpp"
#include "pnmtrem/panel.hpp"

namespace pnmtrem {

StandardErrors standard_errors(const Eigen::MatrixXd& information, double condition_limit) {
  StandardErrors out;
  const auto P = information.rows();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(information);
  const Eigen::VectorXd ev = eig.eigenvalues();
  const double top = ev.maxCoeff();
  const double bottom = ev.minCoeff();
  out.condition_number = bottom > 0.0 ? top / bottom : std::numeric_limits<double>::infinity();
  out.singular = !(out.condition_number <= condition_limit);
  Eigen::VectorXd var = Eigen::VectorXd::Zero(P);
  for (Eigen::Index a = 0; a < P; ++a) {
    if (ev[a] > top / condition_limit) var += eig.eigenvectors().col(a).cwiseAbs2() / ev[a];
  }
  out.se = var.cwiseSqrt();
  return out;
}

StageFit fisher_scoring(const StageObjective& objective, Eigen::VectorXd init, const FitControls& controls) {
  StageFit fit;
  fit.theta = std::move(init);
  StageEvaluation ev = objective(fit.theta, true);
  double change = std::numeric_limits<double>::infinity();

  auto try_loglik = [&](const Eigen::VectorXd& theta) {
    if (!theta.allFinite()) return -std::numeric_limits<double>::infinity();
    try {
      const double ll = objective(theta, false).loglik;
      return std::isfinite(ll) ? ll : -std::numeric_limits<double>::infinity();
    } catch (const NumericError&) {
      return -std::numeric_limits<double>::infinity();
    }
  };

  for (fit.iterations = 0; fit.iterations < controls.max_iter; ++fit.iterations) {
    const double max_score = ev.score.cwiseAbs().maxCoeff();
    const Eigen::MatrixXd info = ev.information();
    if (!info.allFinite() || !(info.diagonal().maxCoeff() > 0.0)) {
      std::ostringstream msg;
      msg << "information matrix numerically singular at iteration " << fit.iterations + 1
          << " (condition number inf)";
      throw NumericError(msg.str());
    }
    // The step solves the Jacobi-scaled system; scaled eigen-directions below
    // step_rcond * max are dropped (truncated pseudo-inverse). Loadings and
    // log-sigmas can lie on a likelihood ridge where the outer-product
    // information is singular.
    const Eigen::VectorXd d = info.diagonal().cwiseMax(0.0).cwiseSqrt().unaryExpr(
        [](double v) { return v > 0.0 ? v : 1.0; });
    const Eigen::MatrixXd scaled_info = d.cwiseInverse().asDiagonal() * info * d.cwiseInverse().asDiagonal();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(scaled_info);
    const Eigen::VectorXd evals = eig.eigenvalues();
    const double cutoff = evals.maxCoeff() * controls.step_rcond;
    const bool regularized = evals.minCoeff() < cutoff;
    const Eigen::VectorXd proj = eig.eigenvectors().transpose() * ev.score.cwiseQuotient(d);
    Eigen::VectorXd solved = Eigen::VectorXd::Zero(proj.size());
    Eigen::VectorXd kept = Eigen::VectorXd::Zero(proj.size());
    for (Eigen::Index a = 0; a < proj.size(); ++a) {
      if (evals[a] >= cutoff) {
        solved[a] = proj[a] / evals[a];
        kept[a] = proj[a];
      }
    }
    const Eigen::VectorXd identified = d.cwiseProduct(eig.eigenvectors() * kept);
    const double max_identified = identified.cwiseAbs().maxCoeff();
    fit.ridge_score = (ev.score - identified).cwiseAbs().maxCoeff();
    fit.identified_score = max_identified;
    const bool stationary = max_score <= controls.tol_score || max_identified <= controls.tol_score;
    // A stationary start needs no step.
    if (stationary && (change <= controls.tol_loglik || fit.iterations == 0)) {
      fit.converged = true;
      break;
    }
    Eigen::VectorXd step = (eig.eigenvectors() * solved).cwiseQuotient(d);
    const double largest = step.cwiseAbs().maxCoeff();
    if (largest > controls.max_step) step *= controls.max_step / largest;

    // Near the optimum the gain drops below what the log-likelihood resolves.
    // A tie is then settled by the slope along the step: on a locally
    // quadratic surface a smaller |slope| than at the start means ascent.
    const double slope0 = ev.score.dot(step);
    StageEvaluation ev_new;
    bool have_ev_new = false;
    auto accept = [&](const Eigen::VectorXd& theta, double ll) {
      have_ev_new = false;
      if (ll > ev.loglik) return true;
      const double resolution = 1e-13 * std::max(1.0, std::abs(ev.loglik));
      if (!(std::abs(ll - ev.loglik) <= resolution) || !(slope0 > 0.0)) return false;
      try {
        ev_new = objective(theta, true);
      } catch (const NumericError&) {
        return false;
      }
      have_ev_new = true;
      return std::abs(ev_new.score.dot(step)) < slope0;
    };

    double scale = 1.0;
    int halvings = 0;
    Eigen::VectorXd candidate = fit.theta + step;
    double ll_new = try_loglik(candidate);
    bool ok = accept(candidate, ll_new);
    while (!ok && halvings < controls.max_halvings) {
      scale *= 0.5;
      ++halvings;
      candidate = fit.theta + scale * step;
      ll_new = try_loglik(candidate);
      ok = accept(candidate, ll_new);
    }
    if (!ok) {
      // The full step's predicted gain is below what the log-likelihood can
      // resolve: stationary up to rounding.
      const double predicted_gain = ev.score.dot(step);
      const bool unresolvable = predicted_gain <= 1e-3 * controls.tol_loglik * std::abs(ev.loglik);
      if (stationary || unresolvable) {
        fit.converged = true;
        fit.precision_limited = !stationary;
        break;
      }
      std::ostringstream msg;
      msg << "line search failed after " << controls.max_halvings << " halvings at iteration "
          << fit.iterations + 1 << " (loglik " << ev.loglik << ", max |score| " << max_score << ")";
      throw ConvergenceError(msg.str());
    }
    change = std::abs(ll_new - ev.loglik) / std::max(std::abs(ev.loglik), 1e-300);
    fit.theta = candidate;
    ev = have_ev_new ? std::move(ev_new) : objective(fit.theta, true);
    fit.trace.push_back({fit.iterations + 1, ev.loglik, (scale * step).norm(), ev.score.cwiseAbs().maxCoeff(),
                         halvings, regularized});
  }

  fit.loglik = ev.loglik;
  fit.max_score = ev.score.cwiseAbs().maxCoeff();
  fit.information = ev.information();
  const auto se = standard_errors(fit.information, controls.condition_limit);
  fit.se = se.se;
  fit.condition_number = se.condition_number;
  fit.singular_information = se.singular;
  return fit;
}

StageFit fit_baseline(const PanelData& data, const QuadratureRule& rule, const BaselineParams& init,
                      const FitControls& controls) {
  const int p = static_cast<int>(data.x_baseline().cols());
  const int k = data.n_responses();
  init.check(p, k);
  auto objective = [&](const Eigen::VectorXd& theta, bool with_scores) {
    return evaluate_baseline(BaselineParams::unpack(theta, p, k), data, rule, with_scores);
  };
  return fisher_scoring(objective, init.pack(), controls);
}

StageFit fit_main(const PanelData& data, const QuadratureRule& rule, const ConstraintSolution& constraints,
                  const MainParams& init, const FitControls& controls) {
  const int p = static_cast<int>(data.x_main().cols());
  const int l = static_cast<int>(data.z_transition().cols());
  const int T = data.n_times();
  const int k = data.n_responses();
  init.check(p, l, T, k);
  auto objective = [&](const Eigen::VectorXd& theta, bool with_scores) {
    return evaluate_main(MainParams::unpack(theta, p, l, T, k), data, rule, constraints, with_scores);
  };
  return fisher_scoring(objective, init.pack(), controls);
}

Eigen::MatrixXd information_baseline(const BaselineParams& params, const PanelData& data, const QuadratureRule& rule) {
  return evaluate_baseline(params, data, rule, true).information();
}

Eigen::MatrixXd information_main(const MainParams& params, const PanelData& data, const QuadratureRule& rule,
                                 const ConstraintSolution& constraints) {
  return evaluate_main(params, data, rule, constraints, true).information();
}

BaselineParams default_baseline_start(const GlmFit& glm, int n_responses) {
  return {glm.coefficients, Eigen::VectorXd::Ones(n_responses), std::log(0.5)};
}

MainParams default_main_start(const GlmFit& glm, int n_transition, int n_times, int n_responses) {
  return {glm.coefficients, Eigen::MatrixXd::Zero(n_times - 1, n_transition), Eigen::VectorXd::Ones(n_responses),
          Eigen::VectorXd::Constant(n_times - 1, std::log(0.5))};
}

FitResult fit(const PanelData& data, const FitOptions& options) {
  const QuadratureRule rule = gauss_hermite(options.quadrature_order);
  const int k = data.n_responses();
  const int T = data.n_times();
  const int l = static_cast<int>(data.z_transition().cols());

  FitResult out;
  out.quadrature_order = options.quadrature_order;
  out.params1 = baseline_param_info(data);
  out.params2 = main_param_info(data);

  std::vector<std::uint8_t> y1(static_cast<std::size_t>(data.n_subjects()) * k);
  for (int i = 0; i < data.n_subjects(); ++i) {
    for (int j = 0; j < k; ++j) y1[static_cast<std::size_t>(i) * k + j] = static_cast<std::uint8_t>(data.y(i, 0, j));
  }
  std::vector<std::uint8_t> y2(static_cast<std::size_t>(data.n_cells()));
  for (int i = 0; i < data.n_subjects(); ++i) {
    for (int t = 1; t < T; ++t) {
      for (int j = 0; j < k; ++j) y2[data.cell(i, t, j)] = static_cast<std::uint8_t>(data.y(i, t, j));
    }
  }
  out.glm_baseline = fit_glm_probit(y1, data.x_baseline());
  out.glm_main = fit_glm_probit(y2, data.x_main());

  const BaselineParams init1 = options.init_baseline.value_or(default_baseline_start(out.glm_baseline, k));
  out.stage1 = fit_baseline(data, rule, init1, options.controls);
  out.theta1 = BaselineParams::unpack(out.stage1.theta, static_cast<int>(data.x_baseline().cols()), k);

  const AnchorPoint anchor = options.anchor.value_or(AnchorPoint::zero(data));
  out.constraints = ConstraintSolution::solve(data, out.theta1.beta_star, anchor);

  const MainParams init2 = options.init_main.value_or(default_main_start(out.glm_main, l, T, k));
  out.stage2 = fit_main(data, rule, out.constraints, init2, options.controls);
  out.theta2 = MainParams::unpack(out.stage2.theta, static_cast<int>(data.x_main().cols()), l, T, k);

  out.loglik1 = out.stage1.loglik;
  out.loglik2 = out.stage2.loglik;
  out.loglik_total = out.loglik1 + out.loglik2;
  return out;
}

WaldRow wald_test(std::string name, double estimate, double se, double null_value) {
  WaldRow row;
  row.name = std::move(name);
  row.estimate = estimate;
  row.se = se;
  row.null_value = null_value;
  if (estimate == null_value) {
    row.z = 0.0;
    row.p = 1.0;
  } else {
    row.z = (estimate - null_value) / se;
    row.p = two_sided_normal_p(row.z);
  }
  return row;
}

std::vector<WaldRow> wald_tests(const FitResult& fit) {
  std::vector<WaldRow> rows;
  auto add = [&](const char* stage, const StageFit& sf, const std::vector<ParamInfo>& info) {
    for (std::size_t a = 0; a < info.size(); ++a) {
      const double null = info[a].kind == ParamKind::Loading ? 1.0 : 0.0;
      WaldRow row = wald_test(info[a].name, sf.theta[static_cast<Eigen::Index>(a)],
                              sf.se[static_cast<Eigen::Index>(a)], null);
      row.stage = stage;
      row.kind = info[a].kind;
      if (row.kind == ParamKind::LogSigma) {
        row.z = std::numeric_limits<double>::quiet_NaN();
        row.p = std::numeric_limits<double>::quiet_NaN();
      }
      rows.push_back(std::move(row));
    }
  };
  add("baseline", fit.stage1, fit.params1);
  add("main", fit.stage2, fit.params2);
  return rows;
}

LrtResult lrt(double loglik_full, double loglik_reduced, int df) {
  if (df < 1) throw NumericError("lrt: df must be positive");
  const double stat = -2.0 * (loglik_reduced - loglik_full);
  if (stat < -1e-6) throw NumericError("lrt: nesting violation (reduced model fits better than full model)");
  LrtResult out;
  out.df = df;
  out.statistic = std::max(stat, 0.0);
  out.p = chi_square_upper_tail(out.statistic, df);
  return out;
}

LrtResult lrt(const FitResult& full, const FitResult& reduced, int df) {
  return lrt(full.loglik_total, reduced.loglik_total, df);
}

double boundary_variance_test(double c_hat, double se_c) {
  const auto sd = delta_method_sd(c_hat, se_c);
  if (sd.sigma == 0.0) return 0.5;
  if (sd.se == 0.0) return 0.0;
  return 0.5 * two_sided_normal_p(sd.sigma / sd.se);
}

Eigen::VectorXd jkb_transform(const Eigen::VectorXd& beta_probit) { return kJkbConstant * beta_probit; }

}  // namespace pnmtrem

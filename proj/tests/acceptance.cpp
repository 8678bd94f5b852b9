// Acceptance gate: prints one PASS/FAIL line per criterion and exits nonzero
// if any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <iomanip>
#include <iostream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "pnmtrem/pnmtrem.hpp"
#include "support.hpp"

using namespace pnmtrem;

namespace {

int failures = 0;

void report(int id, bool ok, const std::string& detail) {
  std::cout << (ok ? "PASS" : "FAIL") << " criterion " << id << ": " << detail << std::endl;
  if (!ok) ++failures;
}

std::string fmt(double v, int digits = 4) {
  std::ostringstream s;
  s << std::setprecision(digits) << v;
  return s.str();
}

bool symmetric_psd(const Eigen::MatrixXd& m) {
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-10 * std::max(1.0, m.cwiseAbs().maxCoeff())) return false;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m);
  return eig.eigenvalues().minCoeff() >= -1e-10 * eig.eigenvalues().cwiseAbs().maxCoeff();
}

void simulation_study() {
  const TruthConfig truth;
  const auto t0 = std::chrono::steady_clock::now();
  const McSummary s = run_monte_carlo(truth, 200, truth.seed);
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const double per_fit = std::accumulate(s.fit_seconds.begin(), s.fit_seconds.end(), 0.0) /
                         std::max<std::size_t>(1, s.fit_seconds.size());
  const std::vector<std::string> targets = {"beta_star[(Intercept)]", "beta_star[x1]", "beta[(Intercept)]", "beta[x1]",
                                            "beta[x2]"};
  bool ok = per_fit < 10.0;
  std::ostringstream detail;
  detail << "200 replications, " << s.n_failed << " failed, " << fmt(per_fit, 3) << " s per fit, " << fmt(wall, 4)
         << " s total;";
  for (const auto& name : targets) {
    const auto it = std::find_if(s.rows.begin(), s.rows.end(), [&](const McRow& r) { return r.parameter == name; });
    if (it == s.rows.end()) {
      ok = false;
      detail << " " << name << " missing;";
      continue;
    }
    const bool row_ok = std::abs(it->bias) <= 0.05 && std::abs(it->se - it->mese) <= 0.03 && it->cp >= 90.0 &&
                        it->cp <= 99.0;
    ok = ok && row_ok;
    detail << " " << name << " bias " << fmt(it->bias, 3) << " SE " << fmt(it->se, 3) << " meSE " << fmt(it->mese, 3)
           << " CP " << fmt(it->cp, 3) << (row_ok ? "" : " (out of range)") << ";";
  }
  report(1, ok, detail.str());
}

void convolution_identity() {
  const QuadratureRule rule = gauss_hermite(20);
  double worst = 0.0;
  for (int a = 0; a < 50; ++a) {
    const double ds = -3.0 + 6.0 * a / 49.0;
    for (int b = 0; b < 20; ++b) {
      const double lambda = 2.0 * b / 19.0;
      for (int c = 0; c < 20; ++c) {
        const double sigma = c / 19.0;
        const double ls = lambda * sigma;
        const double quad = rule.expect([&](double z) { return probit_cdf(ds + ls * z); });
        worst = std::max(worst, std::abs(quad - probit_cdf(ds / std::sqrt(1.0 + ls * ls))));
      }
    }
  }
  report(2, worst <= 1e-5, "convolution identity on 50x20x20 grid, max error " + fmt(worst, 3));
}

void gradients() {
  std::mt19937_64 eng(20240602);
  const QuadratureRule rule = gauss_hermite(20);
  double worst = 0.0;
  for (int r = 0; r < 20; ++r) {
    const PanelData d = support::random_panel(25, 4, 2, 500 + r);
    const BaselineParams b = support::random_baseline(eng, 2, 2);
    const MainParams m = support::random_main(eng, 2, 2, 4, 2);
    const ConstraintSolution sol = ConstraintSolution::solve(d, b.beta_star, AnchorPoint::zero(d));
    const auto f1 = [&](const Eigen::VectorXd& th) { return loglik_baseline(BaselineParams::unpack(th, 2, 2), d, rule); };
    const auto f2 = [&](const Eigen::VectorXd& th) {
      return loglik_main(MainParams::unpack(th, 2, 2, 4, 2), d, rule, sol);
    };
    const Eigen::VectorXd fd1 = support::numeric_gradient(f1, b.pack());
    const Eigen::VectorXd an1 = score_baseline(b, d, rule);
    const Eigen::VectorXd fd2 = support::numeric_gradient(f2, m.pack());
    const Eigen::VectorXd an2 = score_main(m, d, rule, sol);
    for (Eigen::Index a = 0; a < an1.size(); ++a) worst = std::max(worst, support::rel_err(an1[a], fd1[a]));
    for (Eigen::Index a = 0; a < an2.size(); ++a) worst = std::max(worst, support::rel_err(an2[a], fd2[a]));
  }
  report(3, worst <= 1e-5, "analytic vs central-difference scores at 20 random points, max rel error " + fmt(worst, 3));
}

void constraint_fidelity() {
  std::mt19937_64 eng(20240603);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const PanelData d = support::random_panel(20, 4, 2, 600);
  auto rv = [&](double scale) {
    Eigen::VectorXd v(2);
    v << scale * u(eng), scale * u(eng);
    return v;
  };

  double worst_anchor = 0.0;
  double worst_zero = 0.0;
  for (int r = 0; r < 10; ++r) {
    AnchorPoint anchor{rv(1.5), Eigen::MatrixXd(3, 2)};
    for (int t = 0; t < 3; ++t) anchor.alpha0.row(t) = rv(1.5).transpose();
    const Eigen::VectorXd bs = rv(1.5);
    const AnchorPoint zero = AnchorPoint::zero(d);
    for (int i = 0; i < d.n_subjects(); ++i) {
      for (int t = 1; t < 4; ++t) {
        for (int j = 0; j < 2; ++j) {
          const double d0 = solve_anchor_delta0(d, i, t, j, anchor, bs);
          worst_anchor = std::max(
              worst_anchor, std::abs(constraint_residual(d0, d.main_row(i, t, j).dot(anchor.beta0),
                                                         lag_predictor(d, i, t, j, anchor.beta0, bs),
                                                         d.transition_row(i, t, j).dot(anchor.alpha0.row(t - 1)))));
          if (t >= 2) worst_zero = std::max(worst_zero, std::abs(solve_anchor_delta0(d, i, t, j, zero, bs)));
        }
      }
    }
  }

  double worst_ratio = 0.0;
  for (int r = 0; r < 20; ++r) {
    AnchorPoint anchor = AnchorPoint::zero(d);
    if (r % 2 == 1) {
      anchor.beta0 = rv(0.5);
      for (int t = 0; t < 3; ++t) anchor.alpha0.row(t) = rv(0.5).transpose();
    }
    const Eigen::VectorXd bs = rv(1.0);
    const ConstraintSolution sol = ConstraintSolution::solve(d, bs, anchor);
    const Eigen::VectorXd db = rv(2.0);
    Eigen::MatrixXd da(3, 2);
    for (int t = 0; t < 3; ++t) da.row(t) = rv(2.0).transpose();
    const auto residual = [&](double eps) {
      const Eigen::VectorXd beta = anchor.beta0 + eps * db;
      const Eigen::MatrixXd alpha = anchor.alpha0 + eps * da;
      double worst = 0.0;
      for (int i = 0; i < d.n_subjects(); ++i) {
        for (int t = 1; t < 4; ++t) {
          for (int j = 0; j < 2; ++j) {
            const double delta = sol.delta(d.cell(i, t, j), t, beta, alpha);
            worst = std::max(worst, std::abs(constraint_residual(delta, d.main_row(i, t, j).dot(beta),
                                                                  lag_predictor(d, i, t, j, beta, bs),
                                                                  d.transition_row(i, t, j).dot(alpha.row(t - 1)))));
          }
        }
      }
      return worst;
    };
    const double r02 = residual(0.2), r01 = residual(0.1), r005 = residual(0.05);
    worst_ratio = std::max({worst_ratio, r01 / r02, r005 / r01});
  }
  const bool ok = worst_anchor <= 1e-10 && worst_zero == 0.0 && worst_ratio <= 0.35;
  report(4, ok,
         "anchor |F| max " + fmt(worst_anchor, 3) + ", zero-anchor intercept max " + fmt(worst_zero, 3) +
             ", linearization residual ratio max " + fmt(worst_ratio, 3));
}

void oracles() {
  std::mt19937_64 eng(20240604);
  const QuadratureRule r20 = gauss_hermite(20);
  const QuadratureRule r60 = gauss_hermite(60);
  // Ground truth: direct order-60 evaluation. The engine runs at its default
  // order on design-scale effects; the wide range is checked at order 60 and
  // its order-20 gap is reported.
  double worst_ll = 0.0;
  double worst_exact = 0.0;
  double wide_gap = 0.0;
  for (int r = 0; r < 20; ++r) {
    const PanelData d = support::random_panel(2, 2, 2, 700 + r);
    BaselineParams b = support::random_baseline(eng, 2, 2);
    MainParams m = support::random_main(eng, 2, 2, 2, 2);
    const ConstraintSolution sol = ConstraintSolution::solve(d, b.beta_star, AnchorPoint::zero(d));
    const double wide_truth = support::brute_force_loglik(b, m, d, sol, r60);
    worst_exact = std::max(worst_exact, std::abs(loglik_baseline(b, d, r60) + loglik_main(m, d, r60, sol) - wide_truth));
    wide_gap = std::max(wide_gap, std::abs(loglik_baseline(b, d, r20) + loglik_main(m, d, r20, sol) - wide_truth));
    support::shrink_to_design_scale(eng, b, m);
    const double truth60 = support::brute_force_loglik(b, m, d, sol, r60);
    worst_ll = std::max(worst_ll, std::abs(loglik_baseline(b, d, r20) + loglik_main(m, d, r20, sol) - truth60));
  }

  const TruthConfig truth;
  const PanelData d = simulate_panel(truth, 20240605);
  const FitResult f = fit(d);
  double worst_z = 0.0;
  for (int i = 0; i < 50; ++i) {
    const auto terms = posterior_terms(f, d, i);
    const double z = estimate_z(i, f, d);
    double best = -std::numeric_limits<double>::infinity();
    double arg = 0.0;
    const int n = 100000;
    for (int g = 0; g <= n; ++g) {
      const double zz = -8.0 + 16.0 * g / n;
      const double v = log_posterior(terms, zz);
      if (v > best) {
        best = v;
        arg = zz;
      }
    }
    worst_z = std::max(worst_z, std::abs(z - arg));
  }
  report(5, worst_ll <= 1e-8 && worst_exact <= 1e-8 && worst_z <= 1e-4,
         "micro-instance loglik vs order-60 oracle max diff " + fmt(worst_ll, 3) + " (engine at order 60: " +
             fmt(worst_exact, 3) + "; order 20 with loadings up to 1.8: " + fmt(wide_gap, 3) +
             "); posterior mode vs grid max diff " + fmt(worst_z, 3) + " over 50 subjects");
}

void information_machinery() {
  std::mt19937_64 eng(20240606);
  const QuadratureRule rule = gauss_hermite(20);
  bool psd = true;
  int points = 0;
  for (int r = 0; r < 10; ++r) {
    const PanelData d = support::random_panel(40, 4, 2, 800 + r);
    const BaselineParams b = support::random_baseline(eng, 2, 2);
    const MainParams m = support::random_main(eng, 2, 2, 4, 2);
    const ConstraintSolution sol = ConstraintSolution::solve(d, b.beta_star, AnchorPoint::zero(d));
    psd = psd && symmetric_psd(information_baseline(b, d, rule)) && symmetric_psd(information_main(m, d, rule, sol));
    points += 2;
  }
  const auto sd = delta_method_sd(-0.41, 0.41);
  const bool delta_ok = std::abs(sd.sigma - 0.66) <= 5e-3 && std::abs(sd.se - 0.27) <= 5e-3;
  report(6, psd && delta_ok,
         "information symmetric PSD at " + std::to_string(points) + " points: " + (psd ? "yes" : "no") +
             "; delta method (-0.41, 0.41) -> (" + fmt(sd.sigma, 4) + ", " + fmt(sd.se, 4) + ")");
}

void post_fit_statistics() {
  const LrtResult l = lrt(-1023.71, -1026.00, 6);
  const bool lrt_ok = std::round(l.statistic * 100.0) == 458.0 && std::round(l.p * 100.0) == 60.0 && l.df == 6;
  Eigen::VectorXd beta(2);
  beta << 0.14, 0.38;
  const Eigen::VectorXd logit = jkb_transform(beta);
  const double many = std::exp((-logit[0] + logit[1]) - (logit[0] - logit[1]));
  const double some = std::exp((logit[0] - logit[1]) - (-logit[0] - logit[1]));
  const bool jkb_ok = std::abs(many - 2.26) <= 0.01 && std::abs(some - 1.60) <= 0.01;
  report(7, lrt_ok && jkb_ok,
         "LRT statistic " + fmt(l.statistic, 4) + " p " + fmt(l.p, 3) + " df " + std::to_string(l.df) +
             "; JKB contrasts " + fmt(many, 4) + " and " + fmt(some, 4));
}

std::string panel_csv(const PanelData& d) {
  std::ostringstream s;
  export_csv(d, s);
  return s.str();
}

std::string fit_csv(const FitResult& f, const PanelData& d) {
  std::ostringstream s;
  s << std::setprecision(17);
  for (const auto& r : wald_tests(f)) s << r.stage << ',' << r.name << ',' << r.estimate << ',' << r.se << '\n';
  const auto effects = estimate_effects(f, d);
  for (const auto& r : probability_surfaces(f, d, effects)) {
    s << r.subject << ',' << r.time << ',' << r.response << ',' << r.marginal << ',' << r.conditional << ','
      << r.conditional_average << '\n';
  }
  return s.str();
}

std::string mc_csv(const McSummary& m) {
  std::ostringstream s;
  s << std::setprecision(17);
  for (const auto& r : m.rows) {
    s << r.parameter << ',' << r.truth << ',' << r.mean << ',' << r.bias << ',' << r.se << ',' << r.mese << ',' << r.cp
      << '\n';
  }
  return s.str();
}

void determinism() {
  const TruthConfig truth;
  std::vector<std::string> outputs;
  const int saved = thread_count();
  for (int threads : {1, 1, 4}) {
    set_thread_count(threads);
    const PanelData d = simulate_panel(truth, 99);
    std::string out = panel_csv(d);
    out += fit_csv(fit(d), d);
    out += mc_csv(run_monte_carlo(truth, 4, 99));
    outputs.push_back(std::move(out));
  }
  set_thread_count(saved);
  const bool same_run = outputs[0] == outputs[1];
  const bool same_threads = outputs[0] == outputs[2];
  report(8, same_run && same_threads,
         std::string("repeat run identical: ") + (same_run ? "yes" : "no") +
             ", 1 vs 4 threads identical: " + (same_threads ? "yes" : "no"));
}

}  // namespace

int main() {
  const std::vector<void (*)()> checks = {simulation_study, convolution_identity, gradients, constraint_fidelity,
                                          oracles, information_machinery, post_fit_statistics, determinism};
  for (std::size_t c = 0; c < checks.size(); ++c) {
    try {
      checks[c]();
    } catch (const std::exception& e) {
      report(static_cast<int>(c + 1), false, std::string("exception: ") + e.what());
    }
  }
  std::cout << (failures == 0 ? "all criteria passed" : "failed criteria: " + std::to_string(failures)) << std::endl;
  return failures == 0 ? 0 : 1;
}

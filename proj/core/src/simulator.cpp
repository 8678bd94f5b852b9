#include "pnmtrem/simulator.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "pnmtrem/constraint.hpp"
#include "pnmtrem/error.hpp"
#include "pnmtrem/numeric.hpp"
#include "pnmtrem/parallel.hpp"

namespace pnmtrem {

namespace {

using json = nlohmann::json;

std::mt19937_64 make_engine(std::uint64_t seed, std::uint64_t stream, std::uint64_t purpose) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32),
                    static_cast<std::uint32_t>(purpose)};
  return std::mt19937_64(seq);
}

double uniform01(std::mt19937_64& eng) { return std::generate_canonical<double, 64>(eng); }

// Box-Muller keeps the stream independent of the library's normal_distribution.
double standard_normal(std::mt19937_64& eng) {
  double u1 = 0.0;
  do u1 = uniform01(eng);
  while (u1 <= 0.0);
  const double u2 = uniform01(eng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

Eigen::VectorXd vec(const json& j, const char* key) {
  const auto v = j.at(key).get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

std::vector<double> to_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace

TruthConfig::TruthConfig() {
  baseline.beta_star = Eigen::Vector2d(-1.0, 1.9);
  baseline.lambda_star = Eigen::Vector2d(1.0, 1.07);
  baseline.c1 = std::log(0.7);
  main.beta = Eigen::Vector3d(-1.0, 2.0, 0.2);
  main.alpha = Eigen::MatrixXd(3, 1);
  main.alpha << 0.5, 0.7, 0.9;
  main.lambda = Eigen::Vector2d(1.0, 1.05);
  main.c = Eigen::Vector3d(std::log(0.66), std::log(0.63), std::log(0.60));
}

void TruthConfig::check() const {
  if (n_subjects < 1) throw DataError("truth: n_subjects must be positive");
  if (n_times < 2) throw DataError("truth: n_times must be at least 2");
  if (n_responses < 1) throw DataError("truth: n_responses must be positive");
  if (baseline.beta_star.size() != 2) throw DataError("truth: beta_star must have 2 entries (intercept, X1)");
  if (main.beta.size() != 3) throw DataError("truth: beta must have 3 entries (intercept, X1, X2)");
  if (main.alpha.rows() != n_times - 1 || main.alpha.cols() != 1) {
    throw DataError("truth: alpha must have one entry per time point after the first");
  }
  if (baseline.lambda_star.size() != n_responses || main.lambda.size() != n_responses) {
    throw DataError("truth: loadings must have one entry per response");
  }
  if (baseline.lambda_star[0] != 1.0 || main.lambda[0] != 1.0) throw DataError("truth: first loading must equal 1");
  if (main.c.size() != n_times - 1) throw DataError("truth: sigma must have one entry per time point after the first");
  if (n_reps < 1) throw DataError("truth: n_reps must be positive");
}

TruthConfig TruthConfig::from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw DataError(std::string("truth: malformed JSON: ") + e.what());
  }
  TruthConfig out;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "n_subjects") out.n_subjects = value.get<int>();
      else if (key == "n_times") out.n_times = value.get<int>();
      else if (key == "n_responses") out.n_responses = value.get<int>();
      else if (key == "beta_star") out.baseline.beta_star = vec(j, "beta_star");
      else if (key == "lambda_star") out.baseline.lambda_star = vec(j, "lambda_star");
      else if (key == "sigma1") out.baseline.c1 = std::log(value.get<double>());
      else if (key == "beta") out.main.beta = vec(j, "beta");
      else if (key == "alpha") out.main.alpha = vec(j, "alpha");
      else if (key == "lambda") out.main.lambda = vec(j, "lambda");
      else if (key == "sigma") out.main.c = vec(j, "sigma").array().log().matrix();
      else if (key == "exact_delta") out.exact_delta = value.get<bool>();
      else if (key == "shared_effect") out.shared_effect = value.get<bool>();
      else if (key == "n_reps") out.n_reps = value.get<int>();
      else if (key == "seed") out.seed = value.get<std::uint64_t>();
      else throw DataError("truth: unknown key '" + key + "'");
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("truth: ") + e.what());
  }
  if (!(out.baseline.c1 > -std::numeric_limits<double>::infinity()) || !out.main.c.allFinite()) {
    throw DataError("truth: sigma values must be positive");
  }
  out.check();
  return out;
}

TruthConfig TruthConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("truth: cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json_text(ss.str());
}

std::string TruthConfig::to_json_text() const {
  json j;
  j["n_subjects"] = n_subjects;
  j["n_times"] = n_times;
  j["n_responses"] = n_responses;
  j["beta_star"] = to_std(baseline.beta_star);
  j["lambda_star"] = to_std(baseline.lambda_star);
  j["sigma1"] = baseline.sigma1();
  j["beta"] = to_std(main.beta);
  j["alpha"] = to_std(main.alpha.col(0));
  j["lambda"] = to_std(main.lambda);
  j["sigma"] = to_std(main.c.array().exp().matrix());
  j["exact_delta"] = exact_delta;
  j["shared_effect"] = shared_effect;
  j["n_reps"] = n_reps;
  j["seed"] = seed;
  return j.dump(2);
}

PanelData simulate_design(const TruthConfig& truth, std::uint64_t seed, std::uint64_t stream) {
  truth.check();
  const int n = truth.n_subjects;
  const int T = truth.n_times;
  const int k = truth.n_responses;
  auto eng = make_engine(seed, stream, 1);
  Eigen::VectorXd x1(n);
  for (int i = 0; i < n; ++i) x1[i] = uniform01(eng);

  Eigen::MatrixXd xb(n * k, 2);
  Eigen::MatrixXd xm(n * (T - 1) * k, 3);
  Eigen::MatrixXd zt = Eigen::MatrixXd::Ones(n * (T - 1) * k, 1);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < k; ++j) {
      xb.row(i * k + j) << 1.0, x1[i];
      for (int t = 1; t < T; ++t) xm.row((i * (T - 1) + (t - 1)) * k + j) << 1.0, x1[i], j == 0 ? 1.0 : 0.0;
    }
  }
  std::vector<std::uint8_t> y(static_cast<std::size_t>(n) * T * k, 0);
  PanelData data(n, T, k, std::move(y), std::move(xb), std::move(xm), std::move(zt));
  data.baseline_names = {"(Intercept)", "x1"};
  data.main_names = {"(Intercept)", "x1", "x2"};
  data.transition_names = {"(Intercept)"};
  return data;
}

Eigen::MatrixXd simulated_effects(const TruthConfig& truth, std::uint64_t seed, std::uint64_t stream) {
  auto eng = make_engine(seed, stream, 2);
  Eigen::MatrixXd z(truth.n_subjects, truth.n_times);
  for (int i = 0; i < truth.n_subjects; ++i) {
    if (truth.shared_effect) {
      z.row(i).setConstant(standard_normal(eng));
    } else {
      for (int t = 0; t < truth.n_times; ++t) z(i, t) = standard_normal(eng);
    }
  }
  return z;
}

PanelData simulate_panel(const TruthConfig& truth, std::uint64_t seed, std::uint64_t stream) {
  const PanelData design = simulate_design(truth, seed, stream);
  const Eigen::MatrixXd z = simulated_effects(truth, seed, stream);
  const int n = truth.n_subjects;
  const int T = truth.n_times;
  const int k = truth.n_responses;
  const auto& bp = truth.baseline;
  const auto& mp = truth.main;

  ConstraintSolution constraints;
  if (!truth.exact_delta) constraints = ConstraintSolution::solve(design, bp.beta_star, AnchorPoint::zero(design));

  auto eng = make_engine(seed, stream, 3);
  std::vector<std::uint8_t> y(static_cast<std::size_t>(n) * T * k, 0);
  auto at = [&](int i, int t, int j) -> std::uint8_t& { return y[(static_cast<std::size_t>(i) * T + t) * k + j]; };
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < k; ++j) {
      const double lam = bp.lambda_star[j];
      const double d = delta_star_baseline(design.baseline_row(i, j), bp.beta_star, lam, bp.sigma1()) +
                       lam * bp.sigma1() * z(i, 0);
      at(i, 0, j) = uniform01(eng) < probit_cdf(d) ? 1 : 0;
    }
    for (int t = 1; t < T; ++t) {
      for (int j = 0; j < k; ++j) {
        const double delta = truth.exact_delta
                                 ? exact_delta(design, i, t, j, mp.beta, mp.alpha, bp.beta_star)
                                 : constraints.delta(design.cell(i, t, j), t, mp.beta, mp.alpha);
        const double gamma_y = at(i, t - 1, j) ? design.transition_row(i, t, j).dot(mp.alpha.row(t - 1)) : 0.0;
        const double lam = mp.lambda[j];
        const double d = delta_star_main(delta, gamma_y, lam, mp.sigma(t)) + lam * mp.sigma(t) * z(i, t);
        at(i, t, j) = uniform01(eng) < probit_cdf(d) ? 1 : 0;
      }
    }
  }
  PanelData out(n, T, k, std::move(y), design.x_baseline(), design.x_main(), design.z_transition());
  out.baseline_names = design.baseline_names;
  out.main_names = design.main_names;
  out.transition_names = design.transition_names;
  out.subject_ids.clear();
  for (int i = 0; i < n; ++i) out.subject_ids.push_back(std::to_string(i + 1));
  out.time_labels.clear();
  for (int t = 0; t < T; ++t) out.time_labels.push_back(t + 1);
  return out;
}

McRow summarize_parameter(std::string name, double truth, const std::vector<double>& estimates,
                          const std::vector<double>& ses) {
  McRow row;
  row.parameter = std::move(name);
  row.truth = truth;
  row.n_used = static_cast<int>(estimates.size());
  const double nan = std::numeric_limits<double>::quiet_NaN();
  if (estimates.empty()) {
    row.mean = row.bias = row.se = row.mese = row.cp = nan;
    return row;
  }
  const double m = static_cast<double>(estimates.size());
  double sum = 0.0;
  for (double e : estimates) sum += e;
  row.mean = sum / m;
  row.bias = row.mean - truth;
  if (estimates.size() > 1) {
    double ss = 0.0;
    for (double e : estimates) ss += (e - row.mean) * (e - row.mean);
    row.se = std::sqrt(ss / (m - 1.0));
  } else {
    row.se = nan;
  }
  const double zq = probit_inverse(0.975);
  double se_sum = 0.0;
  int covered = 0;
  for (std::size_t r = 0; r < estimates.size(); ++r) {
    se_sum += ses[r];
    if (std::abs(estimates[r] - truth) <= zq * ses[r]) ++covered;
  }
  row.mese = se_sum / m;
  row.cp = 100.0 * covered / m;
  return row;
}

McSummary run_monte_carlo(const TruthConfig& truth, int n_reps, std::uint64_t seed, const McOptions& options) {
  if (n_reps < 1) throw DataError("run_monte_carlo: n_reps must be at least 1");
  truth.check();

  struct Outcome {
    bool ok = false;
    std::string message;
    Eigen::VectorXd est;
    Eigen::VectorXd se;
    double seconds = 0.0;
  };
  std::vector<Outcome> outcomes(static_cast<std::size_t>(n_reps));
  std::vector<ParamInfo> info1;
  std::vector<ParamInfo> info2;
  {
    const PanelData design = simulate_design(truth, seed, 0);
    info1 = baseline_param_info(design);
    info2 = main_param_info(design);
  }

  parallel_for(static_cast<std::size_t>(n_reps), [&](std::size_t r) {
    auto& out = outcomes[r];
    const auto start = std::chrono::steady_clock::now();
    try {
      const PanelData data = simulate_panel(truth, seed, r);
      const FitResult f = fit(data, options.fit);
      if (!f.converged()) throw ConvergenceError("fit did not converge");
      out.est.resize(f.stage1.theta.size() + f.stage2.theta.size());
      out.est << f.stage1.theta, f.stage2.theta;
      out.se.resize(out.est.size());
      out.se << f.stage1.se, f.stage2.se;
      if (!out.se.allFinite()) throw NumericError("non-finite standard error");
      out.ok = true;
    } catch (const std::exception& e) {
      out.message = e.what();
    }
    out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  });

  McSummary summary;
  summary.n_reps = n_reps;
  for (int r = 0; r < n_reps; ++r) {
    summary.fit_seconds.push_back(outcomes[r].seconds);
    if (!outcomes[r].ok) {
      ++summary.n_failed;
      summary.failed_reps.push_back(r);
      summary.failure_messages.push_back(outcomes[r].message);
    }
  }
  if (summary.n_failed > options.max_failure_rate * n_reps) {
    std::string first = summary.failure_messages.empty() ? "" : summary.failure_messages.front();
    throw ConvergenceError("run_monte_carlo: " + std::to_string(summary.n_failed) + " of " + std::to_string(n_reps) +
                           " replications failed (first: " + first + ")");
  }

  Eigen::VectorXd truth_vec(static_cast<Eigen::Index>(info1.size() + info2.size()));
  truth_vec << truth.baseline.pack(), truth.main.pack();
  std::vector<ParamInfo> names = info1;
  names.insert(names.end(), info2.begin(), info2.end());

  for (std::size_t p = 0; p < names.size(); ++p) {
    std::vector<double> est;
    std::vector<double> se;
    for (const auto& o : outcomes) {
      if (!o.ok) continue;
      est.push_back(o.est[static_cast<Eigen::Index>(p)]);
      se.push_back(o.se[static_cast<Eigen::Index>(p)]);
    }
    summary.rows.push_back(summarize_parameter(names[p].name, truth_vec[static_cast<Eigen::Index>(p)], est, se));
    if (names[p].kind == ParamKind::LogSigma) {
      std::vector<double> s_est;
      std::vector<double> s_se;
      for (std::size_t r = 0; r < est.size(); ++r) {
        const auto sd = delta_method_sd(est[r], se[r]);
        s_est.push_back(sd.sigma);
        s_se.push_back(sd.se);
      }
      std::string sigma_name = names[p].name.substr(4);  // drop "log_"
      summary.rows.push_back(
          summarize_parameter(sigma_name, std::exp(truth_vec[static_cast<Eigen::Index>(p)]), s_est, s_se));
    }
  }
  return summary;
}

}  // namespace pnmtrem

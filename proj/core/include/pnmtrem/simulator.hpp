#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pnmtrem/fitter.hpp"
#include "pnmtrem/panel.hpp"
#include "pnmtrem/params.hpp"

namespace pnmtrem {

/// True parameters and design for generating panels. Defaults reproduce the
/// reference study: N = 250, T = 4, k = 2, X1 ~ U(0, 1) fixed per subject,
/// X2 = indicator of response 1 in the main design, Z = intercept only.
struct TruthConfig {
  int n_subjects = 250;
  int n_times = 4;
  int n_responses = 2;
  BaselineParams baseline;
  MainParams main;
  /// Generate with exact root-found intercepts instead of the linearized ones.
  bool exact_delta = false;
  /// When true, one standard-normal draw per subject is shared by all time
  /// points. The default draws independently at each time point, which is
  /// the dependence structure the time-factorized likelihood assumes.
  bool shared_effect = false;
  int n_reps = 200;
  std::uint64_t seed = 20240601;

  TruthConfig();

  static TruthConfig load(const std::filesystem::path& path);
  static TruthConfig from_json_text(const std::string& text);
  std::string to_json_text() const;
  void check() const;
};

/// Covariate design only (outcomes all zero) for a truth configuration.
PanelData simulate_design(const TruthConfig& truth, std::uint64_t seed, std::uint64_t stream = 0);

/// Full panel; deterministic in (truth, seed, stream).
PanelData simulate_panel(const TruthConfig& truth, std::uint64_t seed, std::uint64_t stream = 0);

/// Random effects z_i used by simulate_panel for the same arguments (N x T;
/// columns identical when effects are shared).
Eigen::MatrixXd simulated_effects(const TruthConfig& truth, std::uint64_t seed, std::uint64_t stream = 0);

struct McRow {
  std::string parameter;
  double truth = 0.0;
  double mean = 0.0;
  double bias = 0.0;
  double se = 0.0;    ///< SD of the estimates; NaN with fewer than two fits
  double mese = 0.0;  ///< mean estimated SE
  double cp = 0.0;    ///< coverage of the 95% Wald interval, in percent
  int n_used = 0;
};

struct McSummary {
  std::vector<McRow> rows;
  int n_reps = 0;
  int n_failed = 0;
  std::vector<int> failed_reps;
  std::vector<std::string> failure_messages;
  std::vector<double> fit_seconds;
};

struct McOptions {
  FitOptions fit;
  /// Largest tolerated share of failed replications.
  double max_failure_rate = 0.10;
};

McSummary run_monte_carlo(const TruthConfig& truth, int n_reps, std::uint64_t seed, const McOptions& options = {});

/// Summary statistics of one parameter over replications.
McRow summarize_parameter(std::string name, double truth, const std::vector<double>& estimates,
                          const std::vector<double>& ses);

}  // namespace pnmtrem

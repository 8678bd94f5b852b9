#pragma once

#include <cstdint>
#include <filesystem>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace pnmtrem {

/// Binds columns of a long-format CSV to the three model designs.
///
/// Every design gets a leading intercept column added by the engine, so the
/// covariate lists name only the non-constant columns. Covariates are used
/// exactly as given; -1/+1 coding of binary covariates is recommended for
/// convergence but is left to the caller.
struct ModelSpec {
  std::string subject_column = "subject";
  std::string time_column = "time";
  std::string response_column = "response";
  std::string outcome_column = "y";
  std::vector<std::string> baseline_covariates;
  std::vector<std::string> main_covariates;
  std::vector<std::string> transition_covariates;
  int quadrature_order = 20;

  static ModelSpec load(const std::filesystem::path& path);
  static ModelSpec from_json_text(const std::string& text);
  std::string to_json_text() const;
  void save(const std::filesystem::path& path) const;
};

/// Balanced multivariate longitudinal binary panel.
///
/// Times are 0-based internally (t = 0 is baseline). Design rows:
///   x_baseline   row i*k + j                    (baseline, t = 0)
///   x_main       row cell(i, t, j), t >= 1      (t >= 2 in 1-based time)
///   z_transition row cell(i, t, j), t >= 1
class PanelData {
 public:
  PanelData() = default;
  PanelData(int n_subjects, int n_times, int n_responses, std::vector<std::uint8_t> y,
            Eigen::MatrixXd x_baseline, Eigen::MatrixXd x_main, Eigen::MatrixXd z_transition);

  int n_subjects() const { return n_subjects_; }
  int n_times() const { return n_times_; }
  int n_responses() const { return n_responses_; }

  int y(int i, int t, int j) const { return y_[(static_cast<std::size_t>(i) * n_times_ + t) * n_responses_ + j]; }
  /// Lagged response y_{i,t-1,j}; requires t >= 1.
  int y_lag(int i, int t, int j) const { return y(i, t - 1, j); }
  const std::vector<std::uint8_t>& y_values() const { return y_; }

  /// Row of the main/transition designs for (i, t >= 1, j).
  int cell(int i, int t, int j) const { return (i * (n_times_ - 1) + (t - 1)) * n_responses_ + j; }
  int n_cells() const { return n_subjects_ * (n_times_ - 1) * n_responses_; }

  const Eigen::MatrixXd& x_baseline() const { return x_baseline_; }
  const Eigen::MatrixXd& x_main() const { return x_main_; }
  const Eigen::MatrixXd& z_transition() const { return z_transition_; }
  auto baseline_row(int i, int j) const { return x_baseline_.row(i * n_responses_ + j); }
  auto main_row(int i, int t, int j) const { return x_main_.row(cell(i, t, j)); }
  auto transition_row(int i, int t, int j) const { return z_transition_.row(cell(i, t, j)); }

  // Labels carried for reporting and export.
  std::vector<std::string> subject_ids;
  std::vector<long long> time_labels;
  std::vector<std::string> baseline_names;
  std::vector<std::string> main_names;
  std::vector<std::string> transition_names;

  /// Subset of subjects, in the given order.
  PanelData select_subjects(const std::vector<int>& subjects) const;

  friend bool operator==(const PanelData& a, const PanelData& b);

 private:
  int n_subjects_ = 0;
  int n_times_ = 0;
  int n_responses_ = 0;
  std::vector<std::uint8_t> y_;
  Eigen::MatrixXd x_baseline_;
  Eigen::MatrixXd x_main_;
  Eigen::MatrixXd z_transition_;
};

/// Parses a long-format CSV (one row per subject/time/response) into a
/// validated panel, sorted by (subject, time, response).
///
/// Throws DataError with messages starting "unbalanced panel",
/// "invalid response", "duplicate row", "spec mismatch" or "malformed value".
PanelData ingest(std::istream& csv, const ModelSpec& spec);
PanelData ingest_file(const std::filesystem::path& path, const ModelSpec& spec);

/// Writes the panel as long-format CSV readable by ingest() with
/// spec_for(data). Values round-trip bit-exactly.
void export_csv(const PanelData& data, std::ostream& out);

/// ModelSpec whose covariate lists match the panel's design names.
ModelSpec spec_for(const PanelData& data);

struct ValidationReport {
  /// proportion[j][t] of successes for response j at time t.
  std::vector<std::vector<double>> success_proportion;
  /// Subjects constant at 0 / 1 over all times, per response.
  std::vector<int> stayers_zero;
  std::vector<int> stayers_one;
  /// Subjects constant at 0 / 1 over all responses and times.
  int stayers_all_zero = 0;
  int stayers_all_one = 0;
  std::vector<std::string> flags;
};

/// Descriptive checks: success proportions, degenerate responses, constant
/// covariate columns and stayer counts. Never modifies the data.
ValidationReport validate(const PanelData& data);

}  // namespace pnmtrem

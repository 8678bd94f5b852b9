#include "pnmtrem/panel.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "pnmtrem/error.hpp"

namespace pnmtrem {

namespace {

constexpr const char* kIntercept = "(Intercept)";

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  for (std::size_t pos = 0; pos < line.size(); ++pos) {
    const char c = line[pos];
    if (quoted) {
      if (c == '"' && pos + 1 < line.size() && line[pos + 1] == '"') {
        field += '"';
        ++pos;
      } else if (c == '"') {
        quoted = false;
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else if (c != '\r') {
      field += c;
    }
  }
  fields.push_back(std::move(field));
  for (auto& f : fields) {
    const auto first = f.find_first_not_of(" \t");
    const auto last = f.find_last_not_of(" \t");
    f = first == std::string::npos ? std::string() : f.substr(first, last - first + 1);
  }
  return fields;
}

std::string location(long line, const std::string& column) {
  return "line " + std::to_string(line) + ", column '" + column + "'";
}

long long parse_integer(const std::string& s, long line, const std::string& column) {
  long long v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw DataError("malformed value: expected integer, got '" + s + "' at " + location(line, column));
  }
  return v;
}

double parse_real(const std::string& s, long line, const std::string& column) {
  double v = 0.0;
  const char* begin = s.data();
  if (!s.empty() && s.front() == '+') ++begin;
  const auto [ptr, ec] = std::from_chars(begin, s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) {
    throw DataError("malformed value: expected number, got '" + s + "' at " + location(line, column));
  }
  return v;
}

std::string format_real(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, ptr);
}

bool is_integer_text(const std::string& s) {
  if (s.empty()) return false;
  std::size_t start = (s[0] == '-' || s[0] == '+') ? 1 : 0;
  if (start == s.size()) return false;
  return std::all_of(s.begin() + static_cast<long>(start), s.end(), [](char c) { return c >= '0' && c <= '9'; });
}

std::vector<std::string> with_intercept(const std::vector<std::string>& names) {
  std::vector<std::string> out{kIntercept};
  out.insert(out.end(), names.begin(), names.end());
  return out;
}

std::vector<std::string> strip_intercept(const std::vector<std::string>& names) {
  std::vector<std::string> out;
  for (const auto& n : names) {
    if (n != kIntercept) out.push_back(n);
  }
  return out;
}

struct RawRow {
  std::string subject;
  long long time;
  long long response;
  long long y;
  std::vector<double> covariates;
  long line;
};

}  // namespace

// ---------------------------------------------------------------------------
// ModelSpec

ModelSpec ModelSpec::from_json_text(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("spec mismatch: cannot parse model spec: ") + e.what());
  }
  static const std::vector<std::string> known = {
      "subject", "time", "response", "outcome", "baseline_covariates", "main_covariates",
      "transition_covariates", "quadrature_order"};
  for (const auto& [key, value] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw DataError("spec mismatch: unknown model spec key '" + key + "'");
    }
  }
  ModelSpec spec;
  try {
    spec.subject_column = j.value("subject", spec.subject_column);
    spec.time_column = j.value("time", spec.time_column);
    spec.response_column = j.value("response", spec.response_column);
    spec.outcome_column = j.value("outcome", spec.outcome_column);
    spec.baseline_covariates = j.value("baseline_covariates", std::vector<std::string>{});
    spec.main_covariates = j.value("main_covariates", std::vector<std::string>{});
    spec.transition_covariates = j.value("transition_covariates", std::vector<std::string>{});
    spec.quadrature_order = j.value("quadrature_order", spec.quadrature_order);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("spec mismatch: ") + e.what());
  }
  if (spec.quadrature_order < 2 || spec.quadrature_order > 100) {
    throw DataError("spec mismatch: quadrature_order must be in [2, 100]");
  }
  return spec;
}

ModelSpec ModelSpec::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("spec mismatch: cannot open model spec '" + path.string() + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return from_json_text(buf.str());
}

std::string ModelSpec::to_json_text() const {
  nlohmann::ordered_json j;
  j["subject"] = subject_column;
  j["time"] = time_column;
  j["response"] = response_column;
  j["outcome"] = outcome_column;
  j["baseline_covariates"] = baseline_covariates;
  j["main_covariates"] = main_covariates;
  j["transition_covariates"] = transition_covariates;
  j["quadrature_order"] = quadrature_order;
  return j.dump(2) + "\n";
}

void ModelSpec::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw Error("cannot write model spec '" + path.string() + "'");
  out << to_json_text();
}

// ---------------------------------------------------------------------------
// PanelData

PanelData::PanelData(int n_subjects, int n_times, int n_responses, std::vector<std::uint8_t> y,
                     Eigen::MatrixXd x_baseline, Eigen::MatrixXd x_main, Eigen::MatrixXd z_transition)
    : n_subjects_(n_subjects),
      n_times_(n_times),
      n_responses_(n_responses),
      y_(std::move(y)),
      x_baseline_(std::move(x_baseline)),
      x_main_(std::move(x_main)),
      z_transition_(std::move(z_transition)) {
  if (n_subjects_ < 1) throw DataError("panel needs at least one subject");
  if (n_times_ < 2) throw DataError("panel needs at least two time points");
  if (n_responses_ < 1) throw DataError("panel needs at least one response");
  const auto n = static_cast<std::size_t>(n_subjects_) * n_times_ * n_responses_;
  if (y_.size() != n) throw DataError("unbalanced panel: response array has wrong size");
  for (auto v : y_) {
    if (v > 1) throw DataError("invalid response: values must be 0 or 1");
  }
  if (x_baseline_.rows() != n_subjects_ * n_responses_) throw DataError("baseline design has wrong row count");
  if (x_main_.rows() != n_cells() || z_transition_.rows() != n_cells()) {
    throw DataError("main/transition design has wrong row count");
  }
  auto check_intercept = [](const Eigen::MatrixXd& m, const char* what) {
    if (m.cols() < 1 || !(m.col(0).array() == 1.0).all()) {
      throw DataError(std::string(what) + " design must have a leading all-ones column");
    }
  };
  check_intercept(x_baseline_, "baseline");
  check_intercept(x_main_, "main");
  check_intercept(z_transition_, "transition");

  for (int i = 0; i < n_subjects_; ++i) subject_ids.push_back(std::to_string(i + 1));
  for (int t = 0; t < n_times_; ++t) time_labels.push_back(t + 1);
  auto default_names = [](Eigen::Index cols, const char* prefix) {
    std::vector<std::string> names{kIntercept};
    for (Eigen::Index c = 1; c < cols; ++c) names.push_back(prefix + std::to_string(c));
    return names;
  };
  baseline_names = default_names(x_baseline_.cols(), "xb");
  main_names = default_names(x_main_.cols(), "x");
  transition_names = default_names(z_transition_.cols(), "z");
}

PanelData PanelData::select_subjects(const std::vector<int>& subjects) const {
  const int n = static_cast<int>(subjects.size());
  const int k = n_responses_;
  std::vector<std::uint8_t> y(static_cast<std::size_t>(n) * n_times_ * k);
  Eigen::MatrixXd xb(n * k, x_baseline_.cols());
  const int cells_per_subject = (n_times_ - 1) * k;
  Eigen::MatrixXd xm(n * cells_per_subject, x_main_.cols());
  Eigen::MatrixXd zt(n * cells_per_subject, z_transition_.cols());
  for (int a = 0; a < n; ++a) {
    const int i = subjects[a];
    for (int t = 0; t < n_times_; ++t) {
      for (int j = 0; j < k; ++j) y[(static_cast<std::size_t>(a) * n_times_ + t) * k + j] = y_[(static_cast<std::size_t>(i) * n_times_ + t) * k + j];
    }
    xb.middleRows(a * k, k) = x_baseline_.middleRows(i * k, k);
    xm.middleRows(a * cells_per_subject, cells_per_subject) = x_main_.middleRows(i * cells_per_subject, cells_per_subject);
    zt.middleRows(a * cells_per_subject, cells_per_subject) = z_transition_.middleRows(i * cells_per_subject, cells_per_subject);
  }
  PanelData out(n, n_times_, k, std::move(y), std::move(xb), std::move(xm), std::move(zt));
  out.subject_ids.clear();
  for (int i : subjects) out.subject_ids.push_back(subject_ids[i]);
  out.time_labels = time_labels;
  out.baseline_names = baseline_names;
  out.main_names = main_names;
  out.transition_names = transition_names;
  return out;
}

bool operator==(const PanelData& a, const PanelData& b) {
  return a.n_subjects_ == b.n_subjects_ && a.n_times_ == b.n_times_ && a.n_responses_ == b.n_responses_ &&
         a.y_ == b.y_ && a.x_baseline_ == b.x_baseline_ && a.x_main_ == b.x_main_ &&
         a.z_transition_ == b.z_transition_ && a.subject_ids == b.subject_ids && a.time_labels == b.time_labels &&
         a.baseline_names == b.baseline_names && a.main_names == b.main_names &&
         a.transition_names == b.transition_names;
}

// ---------------------------------------------------------------------------
// ingest / export

PanelData ingest(std::istream& csv, const ModelSpec& spec) {
  std::string line;
  if (!std::getline(csv, line)) throw DataError("spec mismatch: empty CSV (no header)");
  const auto header = split_csv_line(line);
  std::unordered_map<std::string, int> index;
  for (int c = 0; c < static_cast<int>(header.size()); ++c) index.emplace(header[c], c);

  auto column = [&](const std::string& name) {
    auto it = index.find(name);
    if (it == index.end()) throw DataError("spec mismatch: column '" + name + "' not found in CSV header");
    return it->second;
  };
  const int c_subject = column(spec.subject_column);
  const int c_time = column(spec.time_column);
  const int c_response = column(spec.response_column);
  const int c_outcome = column(spec.outcome_column);

  // Union of covariate columns, read once per row.
  std::vector<std::string> cov_names;
  for (const auto* list : {&spec.baseline_covariates, &spec.main_covariates, &spec.transition_covariates}) {
    for (const auto& n : *list) {
      if (std::find(cov_names.begin(), cov_names.end(), n) == cov_names.end()) cov_names.push_back(n);
    }
  }
  std::vector<int> cov_cols;
  for (const auto& n : cov_names) cov_cols.push_back(column(n));
  auto cov_pos = [&](const std::string& n) {
    return static_cast<int>(std::find(cov_names.begin(), cov_names.end(), n) - cov_names.begin());
  };

  std::vector<RawRow> rows;
  long line_no = 1;
  while (std::getline(csv, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto f = split_csv_line(line);
    if (f.size() != header.size()) {
      throw DataError("malformed value: line " + std::to_string(line_no) + " has " + std::to_string(f.size()) +
                      " fields, header has " + std::to_string(header.size()));
    }
    RawRow r;
    r.line = line_no;
    r.subject = f[c_subject];
    if (r.subject.empty()) throw DataError("malformed value: empty subject id at line " + std::to_string(line_no));
    r.time = parse_integer(f[c_time], line_no, spec.time_column);
    r.response = parse_integer(f[c_response], line_no, spec.response_column);
    r.y = parse_integer(f[c_outcome], line_no, spec.outcome_column);
    if (r.y != 0 && r.y != 1) {
      throw DataError("invalid response: " + spec.outcome_column + " = " + f[c_outcome] + " at line " +
                      std::to_string(line_no) + " (must be 0 or 1)");
    }
    for (std::size_t c = 0; c < cov_cols.size(); ++c) {
      r.covariates.push_back(parse_real(f[cov_cols[c]], line_no, cov_names[c]));
    }
    rows.push_back(std::move(r));
  }
  if (rows.empty()) throw DataError("unbalanced panel: CSV has no data rows");

  // Subjects: numeric order when every id is an integer, lexicographic otherwise.
  std::vector<std::string> subjects;
  for (const auto& r : rows) subjects.push_back(r.subject);
  std::sort(subjects.begin(), subjects.end());
  subjects.erase(std::unique(subjects.begin(), subjects.end()), subjects.end());
  if (std::all_of(subjects.begin(), subjects.end(), is_integer_text)) {
    std::stable_sort(subjects.begin(), subjects.end(),
                     [](const std::string& a, const std::string& b) { return std::stoll(a) < std::stoll(b); });
  }
  std::map<long long, int> times;
  std::map<long long, int> responses;
  for (const auto& r : rows) {
    times.emplace(r.time, 0);
    responses.emplace(r.response, 0);
  }
  {
    int t = 0;
    long long prev = 0;
    for (auto& [label, idx] : times) {
      if (t > 0 && label != prev + 1) {
        throw DataError("spec mismatch: time points must be consecutive integers (gap after " + std::to_string(prev) + ")");
      }
      prev = label;
      idx = t++;
    }
  }
  {
    int j = 0;
    for (auto& [label, idx] : responses) {
      if (label != j + 1) throw DataError("spec mismatch: response indices must be 1..k, found " + std::to_string(label));
      idx = j++;
    }
  }
  const int n = static_cast<int>(subjects.size());
  const int T = static_cast<int>(times.size());
  const int k = static_cast<int>(responses.size());
  if (T < 2) throw DataError("spec mismatch: at least two time points are required");

  std::unordered_map<std::string, int> subject_index;
  for (int i = 0; i < n; ++i) subject_index.emplace(subjects[i], i);

  const auto nb = spec.baseline_covariates.size() + 1;
  const auto nm = spec.main_covariates.size() + 1;
  const auto nz = spec.transition_covariates.size() + 1;
  const std::size_t n_all = static_cast<std::size_t>(n) * T * k;
  std::vector<std::uint8_t> y(n_all, 0);
  std::vector<long> seen(n_all, 0);
  Eigen::MatrixXd xb = Eigen::MatrixXd::Ones(n * k, static_cast<Eigen::Index>(nb));
  Eigen::MatrixXd xm = Eigen::MatrixXd::Ones(n * (T - 1) * k, static_cast<Eigen::Index>(nm));
  Eigen::MatrixXd zt = Eigen::MatrixXd::Ones(n * (T - 1) * k, static_cast<Eigen::Index>(nz));

  for (const auto& r : rows) {
    const int i = subject_index.at(r.subject);
    const int t = times.at(r.time);
    const int j = responses.at(r.response);
    const std::size_t slot = (static_cast<std::size_t>(i) * T + t) * k + j;
    if (seen[slot] != 0) {
      throw DataError("duplicate row: subject " + r.subject + ", time " + std::to_string(r.time) + ", response " +
                      std::to_string(r.response) + " at lines " + std::to_string(seen[slot]) + " and " +
                      std::to_string(r.line));
    }
    seen[slot] = r.line;
    y[slot] = static_cast<std::uint8_t>(r.y);
    if (t == 0) {
      for (std::size_t c = 0; c + 1 < nb; ++c) xb(i * k + j, static_cast<Eigen::Index>(c + 1)) = r.covariates[cov_pos(spec.baseline_covariates[c])];
    } else {
      const int row = (i * (T - 1) + (t - 1)) * k + j;
      for (std::size_t c = 0; c + 1 < nm; ++c) xm(row, static_cast<Eigen::Index>(c + 1)) = r.covariates[cov_pos(spec.main_covariates[c])];
      for (std::size_t c = 0; c + 1 < nz; ++c) zt(row, static_cast<Eigen::Index>(c + 1)) = r.covariates[cov_pos(spec.transition_covariates[c])];
    }
  }
  for (std::size_t slot = 0; slot < n_all; ++slot) {
    if (seen[slot] == 0) {
      const auto i = slot / (static_cast<std::size_t>(T) * k);
      const auto t = (slot / k) % T;
      const auto j = slot % k;
      auto time_label = std::next(times.begin(), static_cast<long>(t))->first;
      throw DataError("unbalanced panel: missing row for subject " + subjects[i] + ", time " +
                      std::to_string(time_label) + ", response " + std::to_string(j + 1));
    }
  }

  PanelData data(n, T, k, std::move(y), std::move(xb), std::move(xm), std::move(zt));
  data.subject_ids = subjects;
  data.time_labels.clear();
  for (const auto& [label, idx] : times) data.time_labels.push_back(label);
  data.baseline_names = with_intercept(spec.baseline_covariates);
  data.main_names = with_intercept(spec.main_covariates);
  data.transition_names = with_intercept(spec.transition_covariates);
  return data;
}

PanelData ingest_file(const std::filesystem::path& path, const ModelSpec& spec) {
  std::ifstream in(path);
  if (!in) throw DataError("spec mismatch: cannot open input '" + path.string() + "'");
  return ingest(in, spec);
}

ModelSpec spec_for(const PanelData& data) {
  ModelSpec spec;
  spec.baseline_covariates = strip_intercept(data.baseline_names);
  spec.main_covariates = strip_intercept(data.main_names);
  spec.transition_covariates = strip_intercept(data.transition_names);
  return spec;
}

void export_csv(const PanelData& data, std::ostream& out) {
  const auto spec = spec_for(data);
  std::vector<std::string> cov_names;
  for (const auto* list : {&spec.baseline_covariates, &spec.main_covariates, &spec.transition_covariates}) {
    for (const auto& n : *list) {
      if (std::find(cov_names.begin(), cov_names.end(), n) == cov_names.end()) cov_names.push_back(n);
    }
  }
  out << spec.subject_column << ',' << spec.time_column << ',' << spec.response_column << ',' << spec.outcome_column;
  for (const auto& n : cov_names) out << ',' << n;
  out << '\n';

  auto lookup = [](const std::vector<std::string>& names, const std::string& n) {
    const auto it = std::find(names.begin(), names.end(), n);
    return it == names.end() ? -1 : static_cast<int>(it - names.begin());
  };
  const int k = data.n_responses();
  for (int i = 0; i < data.n_subjects(); ++i) {
    for (int t = 0; t < data.n_times(); ++t) {
      for (int j = 0; j < k; ++j) {
        out << data.subject_ids[i] << ',' << data.time_labels[t] << ',' << (j + 1) << ',' << data.y(i, t, j);
        for (const auto& n : cov_names) {
          double v = 0.0;
          if (t == 0) {
            if (const int c = lookup(data.baseline_names, n); c >= 0) v = data.baseline_row(i, j)[c];
          } else if (const int c = lookup(data.main_names, n); c >= 0) {
            v = data.main_row(i, t, j)[c];
          } else if (const int c2 = lookup(data.transition_names, n); c2 >= 0) {
            v = data.transition_row(i, t, j)[c2];
          }
          out << ',' << format_real(v);
        }
        out << '\n';
      }
    }
  }
}

// ---------------------------------------------------------------------------
// validate

ValidationReport validate(const PanelData& data) {
  ValidationReport rep;
  const int n = data.n_subjects();
  const int T = data.n_times();
  const int k = data.n_responses();
  rep.success_proportion.assign(k, std::vector<double>(T, 0.0));
  rep.stayers_zero.assign(k, 0);
  rep.stayers_one.assign(k, 0);

  for (int j = 0; j < k; ++j) {
    long total = 0;
    for (int t = 0; t < T; ++t) {
      long s = 0;
      for (int i = 0; i < n; ++i) s += data.y(i, t, j);
      total += s;
      rep.success_proportion[j][t] = static_cast<double>(s) / n;
    }
    if (total == 0) rep.flags.push_back("degenerate response " + std::to_string(j + 1) + ": all 0");
    if (total == static_cast<long>(n) * T) rep.flags.push_back("degenerate response " + std::to_string(j + 1) + ": all 1");
  }

  for (int i = 0; i < n; ++i) {
    bool all_zero = true;
    bool all_one = true;
    for (int j = 0; j < k; ++j) {
      int s = 0;
      for (int t = 0; t < T; ++t) s += data.y(i, t, j);
      if (s == 0) ++rep.stayers_zero[j];
      if (s == T) ++rep.stayers_one[j];
      all_zero = all_zero && s == 0;
      all_one = all_one && s == T;
    }
    if (all_zero) ++rep.stayers_all_zero;
    if (all_one) ++rep.stayers_all_one;
  }

  auto check_constant = [&](const Eigen::MatrixXd& m, const std::vector<std::string>& names, const char* design) {
    for (Eigen::Index c = 1; c < m.cols(); ++c) {
      if ((m.col(c).array() == m(0, c)).all()) {
        const std::string name = c < static_cast<Eigen::Index>(names.size()) ? names[c] : std::to_string(c);
        rep.flags.push_back(std::string("constant covariate '") + name + "' in " + design + " design");
      }
    }
  };
  check_constant(data.x_baseline(), data.baseline_names, "baseline");
  check_constant(data.x_main(), data.main_names, "main");
  check_constant(data.z_transition(), data.transition_names, "transition");
  return rep;
}

}  // namespace pnmtrem

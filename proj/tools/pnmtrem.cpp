#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "pnmtrem/pnmtrem.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace pnmtrem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitOther = 1;
constexpr int kExitData = 2;
constexpr int kExitConvergence = 3;

struct RunConfig {
  std::string input;
  std::string spec;
  std::string out = ".";
  std::string config;
  std::uint64_t seed = 20240601;
  int quad_order = 20;
  int max_iter = 200;
  double tol_score = 1e-6;
  double tol_loglik = 1e-10;
  int reps = 200;
  bool exact_delta = false;
  int threads = 0;
  std::optional<json> truth;
};

// Values from --config are applied first; flags given on the command line win.
void apply_config_file(RunConfig& cfg, const CLI::App& sub) {
  if (cfg.config.empty()) return;
  std::ifstream in(cfg.config);
  if (!in) throw DataError("cannot open config file " + cfg.config);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed config file: ") + e.what());
  }
  auto given = [&](const char* flag) { return sub.count(flag) > 0; };
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "input") { if (!given("--input")) cfg.input = value.get<std::string>(); }
      else if (key == "spec") { if (!given("--spec")) cfg.spec = value.get<std::string>(); }
      else if (key == "out") { if (!given("--out")) cfg.out = value.get<std::string>(); }
      else if (key == "seed") { if (!given("--seed")) cfg.seed = value.get<std::uint64_t>(); }
      else if (key == "quad_order") { if (!given("--quad-order")) cfg.quad_order = value.get<int>(); }
      else if (key == "max_iter") { if (!given("--max-iter")) cfg.max_iter = value.get<int>(); }
      else if (key == "tol_score") { if (!given("--tol-score")) cfg.tol_score = value.get<double>(); }
      else if (key == "tol_loglik") { if (!given("--tol-loglik")) cfg.tol_loglik = value.get<double>(); }
      else if (key == "reps") { if (!given("--reps")) cfg.reps = value.get<int>(); }
      else if (key == "exact_delta") { if (!given("--exact-delta")) cfg.exact_delta = value.get<bool>(); }
      else if (key == "threads") { if (!given("--threads")) cfg.threads = value.get<int>(); }
      else if (key == "truth") cfg.truth = value;
      else throw DataError("unknown config key '" + key + "'");
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("config file: ") + e.what());
  }
}

std::string num(double v) {
  if (std::isnan(v)) return "NA";
  if (std::isinf(v)) return v > 0 ? "Inf" : "-Inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return {buf, res.ptr};
}

json jnum(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

std::string fixed(double v, int prec = 4) {
  if (std::isnan(v)) return "NA";
  std::ostringstream ss;
  ss.setf(std::ios::fixed);
  ss.precision(prec);
  ss << v;
  return ss.str();
}

void print_table(std::ostream& os, const std::vector<std::string>& header,
                 const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width(header.size());
  for (std::size_t c = 0; c < header.size(); ++c) width[c] = header[c].size();
  for (const auto& r : rows) {
    for (std::size_t c = 0; c < r.size(); ++c) width[c] = std::max(width[c], r[c].size());
  }
  auto line = [&](const std::vector<std::string>& r) {
    for (std::size_t c = 0; c < r.size(); ++c) {
      if (c == 0) os << r[c] << std::string(width[c] - r[c].size(), ' ');
      else os << "  " << std::string(width[c] - r[c].size(), ' ') << r[c];
    }
    os << '\n';
  };
  line(header);
  for (const auto& r : rows) line(r);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

fs::path out_dir(const RunConfig& cfg) {
  fs::path dir(cfg.out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (!fs::is_directory(dir)) throw DataError("output directory " + cfg.out + " cannot be created");
  return dir;
}

void require_file(const std::string& path, const char* what) {
  if (path.empty()) throw DataError(std::string("missing --") + what);
  if (!fs::is_regular_file(path)) throw DataError(std::string(what) + " file not found: " + path);
}

void apply_threads(const RunConfig& cfg) {
  if (cfg.threads > 0) set_thread_count(cfg.threads);
}

FitOptions fit_options(const RunConfig& cfg) {
  FitOptions opt;
  opt.quadrature_order = cfg.quad_order;
  opt.controls.max_iter = cfg.max_iter;
  opt.controls.tol_score = cfg.tol_score;
  opt.controls.tol_loglik = cfg.tol_loglik;
  return opt;
}

TruthConfig truth_from(const RunConfig& cfg) {
  TruthConfig truth = cfg.truth ? TruthConfig::from_json_text(cfg.truth->dump()) : TruthConfig{};
  if (cfg.exact_delta) truth.exact_delta = true;
  return truth;
}

struct LoadedPanel {
  ModelSpec spec;
  PanelData data;
};

LoadedPanel load_panel(const RunConfig& cfg) {
  require_file(cfg.input, "input");
  require_file(cfg.spec, "spec");
  LoadedPanel lp;
  lp.spec = ModelSpec::load(cfg.spec);
  if (cfg.quad_order != 20) lp.spec.quadrature_order = cfg.quad_order;
  lp.data = ingest_file(cfg.input, lp.spec);
  return lp;
}

struct ReportRow {
  std::string stage;
  std::string parameter;
  double estimate;
  double se;
  double null_value;
  double z;
  double p;
};

std::vector<ReportRow> report_rows(const FitResult& f, const PanelData& data) {
  std::vector<ReportRow> rows;
  for (const auto& w : wald_tests(f)) {
    rows.push_back({w.stage, w.name, w.estimate, w.se, w.null_value, w.z, w.p});
    if (w.kind == ParamKind::LogSigma) {
      const auto sd = delta_method_sd(w.estimate, w.se);
      rows.push_back({w.stage, w.name.substr(4), sd.sigma, sd.se, 0.0, sd.sigma / sd.se,
                      boundary_variance_test(w.estimate, w.se)});
    }
  }
  auto glm_rows = [&](const char* stage, const GlmFit& g, const std::vector<std::string>& names) {
    for (Eigen::Index a = 0; a < g.coefficients.size(); ++a) {
      const auto w = wald_test(names[static_cast<std::size_t>(a)], g.coefficients[a], g.se[a], 0.0);
      rows.push_back({stage, "beta[" + w.name + "]", w.estimate, w.se, 0.0, w.z, w.p});
    }
  };
  glm_rows("glm_baseline", f.glm_baseline, data.baseline_names);
  glm_rows("glm_main", f.glm_main, data.main_names);
  return rows;
}

json trace_json(const StageFit& s) {
  json arr = json::array();
  for (const auto& r : s.trace) {
    arr.push_back({{"iteration", r.iteration}, {"loglik", jnum(r.loglik)}, {"step_norm", jnum(r.step_norm)},
                   {"max_score", jnum(r.max_score)}, {"halvings", r.halvings}, {"regularized", r.regularized}});
  }
  return arr;
}

json stage_json(const StageFit& s) {
  return {{"loglik", jnum(s.loglik)},
          {"converged", s.converged},
          {"iterations", s.iterations},
          {"max_score", jnum(s.max_score)},
          {"ridge_score", jnum(s.ridge_score)},
          {"identified_score", jnum(s.identified_score)},
          {"precision_limited", s.precision_limited},
          {"condition_number", jnum(s.condition_number)},
          {"singular_information", s.singular_information},
          {"trace", trace_json(s)}};
}

json fit_summary(const FitResult& f, const ValidationReport& v) {
  return {{"loglik_baseline", jnum(f.loglik1)},
          {"loglik_main", jnum(f.loglik2)},
          {"loglik_total", jnum(f.loglik_total)},
          {"glm_loglik_baseline", jnum(f.glm_baseline.loglik)},
          {"glm_loglik_main", jnum(f.glm_main.loglik)},
          {"quadrature_order", f.quadrature_order},
          {"converged", f.converged()},
          {"baseline", stage_json(f.stage1)},
          {"main", stage_json(f.stage2)},
          {"validation_flags", v.flags}};
}

int cmd_fit(const RunConfig& cfg) {
  const auto lp = load_panel(cfg);
  const fs::path dir = out_dir(cfg);
  apply_threads(cfg);
  const auto report = validate(lp.data);
  for (const auto& flag : report.flags) std::cerr << "warning: " << flag << '\n';

  FitOptions opt = fit_options(cfg);
  opt.quadrature_order = lp.spec.quadrature_order;
  const FitResult f = fit(lp.data, opt);
  const auto rows = report_rows(f, lp.data);

  std::ostringstream csv;
  csv << "stage,parameter,estimate,se,null,z,p\n";
  for (const auto& r : rows) {
    csv << r.stage << ',' << r.parameter << ',' << num(r.estimate) << ',' << num(r.se) << ','
        << num(r.null_value) << ',' << num(r.z) << ',' << num(r.p) << '\n';
  }
  write_text(dir / "fit_report.csv", csv.str());
  json summary = fit_summary(f, report);
  summary["command"] = "fit";
  write_text(dir / "run_summary.json", summary.dump(2) + "\n");

  std::vector<std::vector<std::string>> table;
  for (const auto& r : rows) {
    table.push_back({r.stage, r.parameter, fixed(r.estimate), fixed(r.se), fixed(r.z, 2), fixed(r.p, 4)});
  }
  print_table(std::cout, {"stage", "parameter", "estimate", "se", "z", "p"}, table);
  std::cout << "\nloglik baseline " << fixed(f.loglik1) << ", main " << fixed(f.loglik2) << ", total "
            << fixed(f.loglik_total) << '\n';
  if (f.stage1.singular_information || f.stage2.singular_information) {
    std::cerr << "warning: information matrix singular at convergence; pseudo-inverse standard errors reported\n";
  }
  if (!f.converged()) {
    std::cerr << "error: Fisher scoring did not converge (baseline max|score| " << f.stage1.max_score
              << ", main max|score| " << f.stage2.max_score << ")\n";
    return kExitConvergence;
  }
  return kExitOk;
}

int cmd_simulate(const RunConfig& cfg) {
  const TruthConfig truth = truth_from(cfg);
  const fs::path dir = out_dir(cfg);
  apply_threads(cfg);
  const PanelData data = simulate_panel(truth, cfg.seed);
  std::ostringstream csv;
  export_csv(data, csv);
  write_text(dir / "panel.csv", csv.str());
  ModelSpec spec = spec_for(data);
  spec.quadrature_order = cfg.quad_order;
  spec.save(dir / "spec.json");
  json summary = {{"command", "simulate"},
                  {"seed", cfg.seed},
                  {"n_subjects", data.n_subjects()},
                  {"n_times", data.n_times()},
                  {"n_responses", data.n_responses()},
                  {"truth", json::parse(truth.to_json_text())}};
  write_text(dir / "run_summary.json", summary.dump(2) + "\n");
  std::cout << "wrote " << (dir / "panel.csv").string() << " (" << data.n_subjects() * data.n_times() * data.n_responses()
            << " rows) and " << (dir / "spec.json").string() << '\n';
  return kExitOk;
}

int cmd_mc(const RunConfig& cfg) {
  const TruthConfig truth = truth_from(cfg);
  const fs::path dir = out_dir(cfg);
  apply_threads(cfg);
  McOptions opt;
  opt.fit = fit_options(cfg);
  const McSummary s = run_monte_carlo(truth, cfg.reps, cfg.seed, opt);

  std::ostringstream csv;
  csv << "Parameter,True,Mean,Bias,SE,meSE,CP\n";
  std::vector<std::vector<std::string>> table;
  for (const auto& r : s.rows) {
    csv << r.parameter << ',' << num(r.truth) << ',' << num(r.mean) << ',' << num(r.bias) << ',' << num(r.se) << ','
        << num(r.mese) << ',' << num(r.cp) << '\n';
    table.push_back({r.parameter, fixed(r.truth, 3), fixed(r.mean, 3), fixed(r.bias, 3), fixed(r.se, 3),
                     fixed(r.mese, 3), fixed(r.cp, 1)});
  }
  write_text(dir / "mc_summary.csv", csv.str());
  json summary = {{"command", "mc"},
                  {"seed", cfg.seed},
                  {"n_reps", s.n_reps},
                  {"n_failed", s.n_failed},
                  {"failed_reps", s.failed_reps},
                  {"failure_messages", s.failure_messages},
                  {"truth", json::parse(truth.to_json_text())}};
  write_text(dir / "run_summary.json", summary.dump(2) + "\n");
  print_table(std::cout, {"Parameter", "True", "Mean", "Bias", "SE", "meSE", "CP"}, table);
  std::cout << "\nreplications " << s.n_reps << ", failed " << s.n_failed << '\n';
  return kExitOk;
}

int cmd_predict(const RunConfig& cfg) {
  const auto lp = load_panel(cfg);
  const fs::path dir = out_dir(cfg);
  apply_threads(cfg);
  FitOptions opt = fit_options(cfg);
  opt.quadrature_order = lp.spec.quadrature_order;
  const FitResult f = fit(lp.data, opt);
  if (!f.converged()) {
    std::cerr << "error: Fisher scoring did not converge; no predictions written\n";
    return kExitConvergence;
  }
  const auto effects = estimate_effects(f, lp.data);
  const auto surfaces = probability_surfaces(f, lp.data, effects);
  const auto& d = lp.data;

  std::ostringstream csv;
  csv << "subject,time,response,y,z_hat,marginal,conditional,conditional_average\n";
  std::vector<std::uint8_t> y;
  std::vector<double> pm, pc, pa;
  for (const auto& r : surfaces) {
    csv << d.subject_ids[static_cast<std::size_t>(r.subject)] << ',' << d.time_labels[static_cast<std::size_t>(r.time)]
        << ',' << r.response + 1 << ',' << r.observed << ',' << num(effects.z_hat[r.subject]) << ','
        << num(r.marginal) << ',' << num(r.conditional) << ',' << num(r.conditional_average) << '\n';
    y.push_back(static_cast<std::uint8_t>(r.observed));
    pm.push_back(r.marginal);
    pc.push_back(r.conditional);
    pa.push_back(r.conditional_average);
  }
  write_text(dir / "predictions.csv", csv.str());

  const auto r2 = probit_r2(surfaces, d.n_responses());
  json metrics = json::object();
  std::vector<std::vector<std::string>> table;
  for (const auto& [label, probs] : {std::pair{"marginal", &pm}, {"conditional", &pc}, {"conditional_average", &pa}}) {
    const auto m = accuracy_metrics(y, *probs);
    metrics[label] = {{"epcp", jnum(m.epcp)}, {"auroc", jnum(m.auroc)}};
    table.push_back({label, fixed(m.epcp), fixed(m.auroc)});
  }
  json r2j = json::array();
  for (const auto& r : r2) {
    r2j.push_back({{"response", r.response + 1}, {"r2_baseline", jnum(r.r2_baseline)}, {"r2_main", jnum(r.r2_main)}});
  }
  int unconverged = 0;
  for (bool ok : effects.converged) unconverged += ok ? 0 : 1;
  json summary = {{"command", "predict"},
                  {"accuracy", metrics},
                  {"probit_r2", r2j},
                  {"eb_unconverged_subjects", unconverged},
                  {"loglik_total", jnum(f.loglik_total)}};
  write_text(dir / "run_summary.json", summary.dump(2) + "\n");
  print_table(std::cout, {"probability", "ePCP", "AUROC"}, table);
  std::cout << '\n';
  std::vector<std::vector<std::string>> r2table;
  for (const auto& r : r2) r2table.push_back({std::to_string(r.response + 1), fixed(r.r2_baseline), fixed(r.r2_main)});
  print_table(std::cout, {"response", "R2 t=1", "R2 t>=2"}, r2table);
  if (unconverged > 0) std::cerr << "warning: posterior mode not converged for " << unconverged << " subjects\n";
  return kExitOk;
}

int cmd_validate(const RunConfig& cfg) {
  const auto lp = load_panel(cfg);
  const auto report = validate(lp.data);
  const auto& d = lp.data;
  std::vector<std::vector<std::string>> table;
  for (int j = 0; j < d.n_responses(); ++j) {
    std::vector<std::string> row{std::to_string(j + 1)};
    for (int t = 0; t < d.n_times(); ++t) row.push_back(fixed(report.success_proportion[j][t], 3));
    row.push_back(std::to_string(report.stayers_zero[j]));
    row.push_back(std::to_string(report.stayers_one[j]));
    table.push_back(row);
  }
  std::vector<std::string> header{"response"};
  for (int t = 0; t < d.n_times(); ++t) header.push_back("t=" + std::to_string(d.time_labels[t]));
  header.push_back("stay0");
  header.push_back("stay1");
  print_table(std::cout, header, table);
  for (const auto& flag : report.flags) std::cout << "flag: " << flag << '\n';
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Maximum-likelihood fitting for probit-normal marginalized transition random-effects models"};
  app.require_subcommand(1);
  RunConfig cfg;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", cfg.config, "JSON file with default option values");
    sub->add_option("--out", cfg.out, "Output directory");
    sub->add_option("--threads", cfg.threads, "Worker threads (default: PNMTREM_THREADS or hardware)")
        ->check(CLI::PositiveNumber);
  };
  auto add_fit = [&](CLI::App* sub) {
    sub->add_option("--quad-order", cfg.quad_order, "Gauss-Hermite quadrature order")->check(CLI::Range(1, 100));
    sub->add_option("--max-iter", cfg.max_iter, "Maximum Fisher-scoring iterations")->check(CLI::PositiveNumber);
    sub->add_option("--tol-score", cfg.tol_score, "Convergence bound on max |score|")->check(CLI::PositiveNumber);
    sub->add_option("--tol-loglik", cfg.tol_loglik, "Convergence bound on relative log-likelihood change")
        ->check(CLI::PositiveNumber);
  };
  auto add_data = [&](CLI::App* sub) {
    sub->add_option("--input", cfg.input, "Long-format panel CSV");
    sub->add_option("--spec", cfg.spec, "Model specification JSON");
  };
  auto add_sim = [&](CLI::App* sub) {
    sub->add_option("--seed", cfg.seed, "Random seed");
    sub->add_flag("--exact-delta", cfg.exact_delta, "Simulate with exact root-found intercepts");
  };

  auto* fit_cmd = app.add_subcommand("fit", "Fit both model stages and write fit_report.csv");
  add_common(fit_cmd);
  add_data(fit_cmd);
  add_fit(fit_cmd);
  auto* sim_cmd = app.add_subcommand("simulate", "Simulate a panel and write panel.csv with spec.json");
  add_common(sim_cmd);
  add_sim(sim_cmd);
  sim_cmd->add_option("--quad-order", cfg.quad_order, "Quadrature order stored in spec.json")->check(CLI::Range(1, 100));
  auto* mc_cmd = app.add_subcommand("mc", "Monte Carlo study; writes mc_summary.csv");
  add_common(mc_cmd);
  add_sim(mc_cmd);
  add_fit(mc_cmd);
  mc_cmd->add_option("--reps", cfg.reps, "Replications")->check(CLI::PositiveNumber);
  auto* pred_cmd = app.add_subcommand("predict", "Fit, estimate random effects and write predictions.csv");
  add_common(pred_cmd);
  add_data(pred_cmd);
  add_fit(pred_cmd);
  auto* val_cmd = app.add_subcommand("validate", "Report descriptive checks on a panel");
  add_common(val_cmd);
  add_data(val_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitData;
  }

  try {
    CLI::App* sub = app.get_subcommands().front();
    apply_config_file(cfg, *sub);
    if (sub == fit_cmd) return cmd_fit(cfg);
    if (sub == sim_cmd) return cmd_simulate(cfg);
    if (sub == mc_cmd) return cmd_mc(cfg);
    if (sub == pred_cmd) return cmd_predict(cfg);
    return cmd_validate(cfg);
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const ConvergenceError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConvergence;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitOther;
  }
}

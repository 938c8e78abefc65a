// rmstcurve: restricted mean survival time difference curves, simultaneous
// bands, and treatment-equipoise times from two-arm survival data, plus a
// simulation harness and closed-form scenario truths.
//
// Subcommands: fit, band, tute, pseudo, simulate, truth. Outputs are JSON
// (structured results) and CSV (tabular / plot data) written to --out; every
// file embeds the resolved configuration so runs are self-describing, and
// rerunning with the same inputs and seed reproduces the bytes exactly.
//
// Exit codes: 0 success, 1 user or input error, 2 numerical failure.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "rmst/pipeline.hpp"
#include "rmst/simlab.hpp"
#include "rmst/tute.hpp"

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr const char* kVersion = "0.1.0";

std::string dtos(double v) {
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

// JSON has no infinity literal; open interval ends are the string "inf".
json jnum(double v) {
  if (std::isnan(v)) return nullptr;
  if (std::isinf(v)) return v > 0 ? json("inf") : json("-inf");
  return v;
}

void write_text(const fs::path& dir, const std::string& name, const std::string& content) {
  std::ofstream out(dir / name, std::ios::binary);
  if (!out) throw rmst::InvalidInput("cannot write output file '" + (dir / name).string() + "'");
  out << content;
}

void write_json(const fs::path& dir, const std::string& name, const json& j) {
  write_text(dir, name, j.dump(2) + "\n");
}

std::vector<double> parse_taus(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t pos = 0;
      out.push_back(std::stod(item, &pos));
      while (pos < item.size() && std::isspace(static_cast<unsigned char>(item[pos]))) ++pos;
      if (pos != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw rmst::InvalidInput("cannot parse restriction time '" + item + "'");
    }
  }
  if (out.empty()) throw rmst::InvalidInput("empty restriction time list");
  return out;
}

double to_d(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw rmst::InvalidInput("config key '" + key + "': cannot parse number '" + v + "'");
  }
}

long long to_ll(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const long long x = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw rmst::InvalidInput("config key '" + key + "': cannot parse integer '" + v + "'");
  }
}

bool to_b(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true" || v == "on" || v == "yes") return true;
  if (v == "0" || v == "false" || v == "off" || v == "no") return false;
  throw rmst::InvalidInput("config key '" + key + "': cannot parse boolean '" + v + "'");
}

// key=value per line; blank lines and '#' comments ignored. Values override
// whatever the command line said.
class OverrideTable {
 public:
  void on(const std::string& key, std::function<void(const std::string&)> fn) {
    handlers_[key] = std::move(fn);
  }

  void apply_file(const std::string& path) const {
    std::ifstream in(path);
    if (!in) throw rmst::InvalidInput("cannot open config file '" + path + "'");
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      std::string trimmed;
      for (char c : line)
        if (!std::isspace(static_cast<unsigned char>(c)) || !trimmed.empty()) trimmed += c;
      while (!trimmed.empty() && std::isspace(static_cast<unsigned char>(trimmed.back())))
        trimmed.pop_back();
      if (trimmed.empty() || trimmed[0] == '#') continue;
      const std::size_t eq = trimmed.find('=');
      if (eq == std::string::npos)
        throw rmst::InvalidInput("config line " + std::to_string(line_no) + ": expected key=value");
      const std::string key = trimmed.substr(0, eq);
      const std::string value = trimmed.substr(eq + 1);
      const auto it = handlers_.find(key);
      if (it == handlers_.end())
        throw rmst::InvalidInput("config key '" + key + "' is not recognized for this command");
      it->second(value);
    }
  }

 private:
  std::map<std::string, std::function<void(const std::string&)>> handlers_;
};

// Analysis settings shared by fit, band, and tute.
struct AnalysisFlags {
  std::string input;
  std::string out;
  std::string config_path;
  int grid_m = 16;
  std::string taus;  // comma-separated explicit restriction times
  std::string basis = "natural";
  int df = 0;  // fixed spline df; 0 selects by the information criterion
  int df_lo = 4;
  int df_hi = 12;
  std::string link = "identity";
  bool covariates = false;
  double alpha = 0.05;
  long long band_draws = 100000;
  int band_points = 30;
  long long seed = -1;

  void add(CLI::App* cmd) {
    cmd->add_option("--input", input, "input CSV with header time,status,arm[,covariate...]")
        ->required();
    cmd->add_option("--out", out, "output directory")->required();
    cmd->add_option("--config", config_path, "key=value file overriding the flags");
    cmd->add_option("--grid-m", grid_m, "number of restriction times")->capture_default_str();
    cmd->add_option("--taus", taus, "explicit comma-separated restriction times (overrides --grid-m)");
    cmd->add_option("--basis", basis, "time basis: natural or indicator")->capture_default_str();
    cmd->add_option("--df", df, "fixed spline df (0 = select by information criterion)")->capture_default_str();
    cmd->add_option("--df-lo", df_lo, "smallest df in the selection search")->capture_default_str();
    cmd->add_option("--df-hi", df_hi, "largest df in the selection search")->capture_default_str();
    cmd->add_option("--link", link, "mean link: identity or log")->capture_default_str();
    cmd->add_flag("--covariates", covariates, "adjust for the covariate columns of the CSV");
    cmd->add_option("--alpha", alpha, "simultaneous band level")->capture_default_str();
    cmd->add_option("--band-draws", band_draws, "Monte Carlo draws for the band critical value")->capture_default_str();
    cmd->add_option("--band-points", band_points, "evaluation grid size for the curve")->capture_default_str();
    cmd->add_option("--seed", seed, "seed for the band draws (required for stochastic steps)");
  }

  void overrides(OverrideTable& t) {
    t.on("input", [this](const std::string& v) { input = v; });
    t.on("out", [this](const std::string& v) { out = v; });
    t.on("grid-m", [this](const std::string& v) { grid_m = static_cast<int>(to_ll("grid-m", v)); });
    t.on("taus", [this](const std::string& v) { taus = v; });
    t.on("basis", [this](const std::string& v) { basis = v; });
    t.on("df", [this](const std::string& v) { df = static_cast<int>(to_ll("df", v)); });
    t.on("df-lo", [this](const std::string& v) { df_lo = static_cast<int>(to_ll("df-lo", v)); });
    t.on("df-hi", [this](const std::string& v) { df_hi = static_cast<int>(to_ll("df-hi", v)); });
    t.on("link", [this](const std::string& v) { link = v; });
    t.on("covariates", [this](const std::string& v) { covariates = to_b("covariates", v); });
    t.on("alpha", [this](const std::string& v) { alpha = to_d("alpha", v); });
    t.on("band-draws", [this](const std::string& v) { band_draws = to_ll("band-draws", v); });
    t.on("band-points",
         [this](const std::string& v) { band_points = static_cast<int>(to_ll("band-points", v)); });
    t.on("seed", [this](const std::string& v) { seed = to_ll("seed", v); });
  }

  rmst::AnalysisOptions options(bool with_band) const {
    rmst::AnalysisOptions opt;
    opt.grid_m = grid_m;
    if (!taus.empty()) opt.restriction_times = parse_taus(taus);
    if (basis == "natural")
      opt.basis = rmst::BasisKind::natural_cubic;
    else if (basis == "indicator")
      opt.basis = rmst::BasisKind::indicator;
    else
      throw rmst::InvalidInput("basis must be 'natural' or 'indicator'");
    opt.fixed_df = df;
    opt.df_lo = df_lo;
    opt.df_hi = df_hi;
    if (link == "identity")
      opt.link = rmst::LinkFunction::identity();
    else if (link == "log")
      opt.link = rmst::LinkFunction::log_link();
    else
      throw rmst::InvalidInput("link must be 'identity' or 'log'");
    opt.with_covariates = covariates;
    opt.alpha = alpha;
    opt.band_draws = band_draws;
    opt.band_points = band_points;
    opt.with_band = with_band;
    if (with_band) {
      if (seed < 0)
        throw rmst::InvalidInput("a seed is required: the simultaneous band uses Monte Carlo draws");
      opt.seed = static_cast<std::uint64_t>(seed);
    }
    return opt;
  }

  json config_json() const {
    json c;
    c["input"] = input;
    c["out"] = out;
    c["grid_m"] = grid_m;
    if (!taus.empty()) c["taus"] = parse_taus(taus);
    c["basis"] = basis;
    c["df"] = df;
    c["df_lo"] = df_lo;
    c["df_hi"] = df_hi;
    c["link"] = link;
    c["covariates"] = covariates;
    c["alpha"] = alpha;
    c["band_draws"] = band_draws;
    c["band_points"] = band_points;
    c["seed"] = seed >= 0 ? json(seed) : json(nullptr);
    return c;
  }
};

json manifest_json(const std::string& command, const json& config,
                   const std::vector<std::string>& outputs) {
  json m;
  m["version"] = kVersion;
  m["command"] = command;
  m["config"] = config;
  m["outputs"] = outputs;
  return m;
}

json curve_json(const rmst::AnalysisResult& res, const json& config) {
  const rmst::RmstDiffCurve& c = res.curve;
  json cj;
  cj["version"] = kVersion;
  cj["config"] = config;
  cj["grid"] = c.grid;
  cj["estimate"] = c.estimate;
  cj["se"] = c.se;
  json ci = json::array();
  for (std::size_t i = 0; i < c.grid.size(); ++i) ci.push_back({c.ci_lo[i], c.ci_hi[i]});
  cj["ci"] = ci;
  json band = json::array();
  for (std::size_t i = 0; i < c.band_lo.size(); ++i) band.push_back({c.band_lo[i], c.band_hi[i]});
  cj["band"] = band;
  cj["u95"] = jnum(c.critical_value);
  cj["seed"] = c.band_lo.empty() ? json(nullptr) : json(c.band_seed);
  cj["band_draws"] = c.band_lo.empty() ? json(nullptr) : json(c.band_draws);
  cj["baseline"] = res.baseline;
  cj["restriction_times"] = res.grid.taus;
  cj["warnings"] = res.warnings;
  return cj;
}

std::string plot_csv(const rmst::AnalysisResult& res) {
  const rmst::RmstDiffCurve& c = res.curve;
  std::ostringstream out;
  out << "t,estimate,se,ci_lo,ci_hi,band_lo,band_hi,baseline\n";
  for (std::size_t i = 0; i < c.grid.size(); ++i) {
    out << dtos(c.grid[i]) << ',' << dtos(c.estimate[i]) << ',' << dtos(c.se[i]) << ','
        << dtos(c.ci_lo[i]) << ',' << dtos(c.ci_hi[i]) << ',';
    if (!c.band_lo.empty()) out << dtos(c.band_lo[i]) << ',' << dtos(c.band_hi[i]);
    else out << ',';
    out << ',' << dtos(res.baseline[i]) << '\n';
  }
  return out.str();
}

json fit_json(const rmst::AnalysisResult& res, const json& config, const std::string& link) {
  const rmst::GeeFit& fit = res.fit;
  json fj;
  fj["version"] = kVersion;
  fj["config"] = config;
  fj["link"] = link;
  fj["selected_df"] = res.basis.df;
  json trace = json::array();
  for (const rmst::DfCandidate& c : res.df_selection.trace) {
    json t;
    t["df"] = c.df;
    t["qic"] = c.ok ? json(c.qic) : json(nullptr);
    t["ok"] = c.ok;
    if (!c.ok) t["message"] = c.message;
    trace.push_back(t);
  }
  fj["df_trace"] = trace;
  const Eigen::VectorXd se = rmst::robust_se(fit);
  json coef = json::array();
  for (std::size_t j = 0; j < fit.columns.size(); ++j) {
    json cj;
    cj["label"] = fit.columns[j].label;
    cj["estimate"] = fit.coefficients[static_cast<int>(j)];
    cj["robust_se"] = se[static_cast<int>(j)];
    coef.push_back(cj);
  }
  fj["coefficients"] = coef;
  fj["qic"] = fit.qic;
  fj["ssr"] = fit.ssr;
  fj["dispersion"] = fit.dispersion;
  fj["converged"] = fit.converged;
  fj["n_subjects"] = fit.n_clusters;
  fj["n_rows"] = fit.n_rows;
  fj["restriction_times"] = res.grid.taus;
  fj["warnings"] = res.warnings;
  return fj;
}

json tute_json(const rmst::TuteEstimate& est, const json& config) {
  json tj;
  tj["version"] = kVersion;
  tj["config"] = config;
  tj["method"] = est.method;
  tj["point"] = jnum(est.point);
  tj["ci"] = json::array({jnum(est.ci_lo), jnum(est.ci_hi)});
  tj["departed"] = est.departed;
  tj["sign"] = est.sign;
  tj["departure_tol"] = est.departure_tol;
  tj["frac_infinite"] = jnum(est.frac_infinite);
  tj["warnings"] = est.warnings;
  return tj;
}

int cmd_fit_or_band(const AnalysisFlags& flags, bool full_fit, bool with_band) {
  const rmst::LoadedSample loaded = rmst::read_sample_csv(flags.input);
  const rmst::AnalysisOptions opt = flags.options(with_band);
  const rmst::AnalysisResult res = rmst::run_analysis(loaded.sample, opt);
  const json config = flags.config_json();
  const fs::path dir(flags.out);
  fs::create_directories(dir);

  std::vector<std::string> outputs;
  if (full_fit) {
    write_json(dir, "fit.json", fit_json(res, config, flags.link));
    outputs.push_back("fit.json");
  }
  write_json(dir, "curve.json", curve_json(res, config));
  outputs.push_back("curve.json");
  write_text(dir, "plot_data.csv", plot_csv(res));
  outputs.push_back("plot_data.csv");
  outputs.push_back("manifest.json");
  write_json(dir, "manifest.json", manifest_json(full_fit ? "fit" : "band", config, outputs));
  for (const std::string& w : res.warnings) std::cerr << "warning: " << w << "\n";
  std::cout << (full_fit ? "fit" : "band") << ": wrote " << outputs.size() << " files to "
            << dir.string() << "\n";
  return 0;
}

int cmd_tute(const AnalysisFlags& flags, int n_boot, const std::string& estimator, int scan_points) {
  if (flags.seed < 0)
    throw rmst::InvalidInput("a seed is required: the bootstrap interval is stochastic");
  const rmst::LoadedSample loaded = rmst::read_sample_csv(flags.input);
  const rmst::AnalysisOptions opt = flags.options(false);
  const rmst::AnalysisResult res = rmst::run_analysis(loaded.sample, opt);
  rmst::TuteEstimate inversion = rmst::tute_ci_band(res.curve);

  rmst::BootstrapOptions bo;
  bo.n_boot = n_boot;
  bo.seed = static_cast<std::uint64_t>(flags.seed);
  if (estimator == "plugin")
    bo.estimator = rmst::BootstrapOptions::Estimator::plugin;
  else if (estimator == "model")
    bo.estimator = rmst::BootstrapOptions::Estimator::model;
  else
    throw rmst::InvalidInput("estimator must be 'plugin' or 'model'");
  bo.analysis = opt;
  bo.scan_points = scan_points;
  rmst::TuteEstimate boot = rmst::tute_ci_bootstrap(loaded.sample, bo);

  const rmst::SurvivalCrossing crossing = rmst::km_crossing(loaded.sample);
  if (crossing.found && crossing.surv0 < 0.30 && crossing.surv1 < 0.30) {
    const std::string guard =
        "both Kaplan-Meier curves are below 0.30 at the estimated crossing time " +
        dtos(crossing.time) + "; the equipoise time is not interesting from a clinical viewpoint";
    inversion.warnings.push_back(guard);
    boot.warnings.push_back(guard);
  }

  json config = flags.config_json();
  config["boot"] = n_boot;
  config["estimator"] = estimator;
  config["scan_points"] = scan_points;
  const fs::path dir(flags.out);
  fs::create_directories(dir);
  write_json(dir, "tute_band_inversion.json", tute_json(inversion, config));
  write_json(dir, "tute_bootstrap.json", tute_json(boot, config));
  const std::vector<std::string> outputs = {"tute_band_inversion.json", "tute_bootstrap.json",
                                            "manifest.json"};
  write_json(dir, "manifest.json", manifest_json("tute", config, outputs));
  for (const std::string& w : inversion.warnings) std::cerr << "warning: " << w << "\n";
  std::cout << "tute: wrote " << outputs.size() << " files to " << dir.string() << "\n";
  return 0;
}

int cmd_pseudo(const AnalysisFlags& flags, const std::string& method, bool pooled) {
  const rmst::LoadedSample loaded = rmst::read_sample_csv(flags.input);
  loaded.sample.validate();
  rmst::RestrictionGrid grid;
  std::vector<std::string> warnings;
  if (!flags.taus.empty()) {
    grid.taus = parse_taus(flags.taus);
    grid.validate();
  } else {
    rmst::GridSelection sel = rmst::select_grid(loaded.sample, flags.grid_m);
    grid = std::move(sel.grid);
    warnings = std::move(sel.warnings);
  }
  rmst::PseudoMethod pm;
  if (method == "optimized")
    pm = rmst::PseudoMethod::optimized;
  else if (method == "naive")
    pm = rmst::PseudoMethod::naive;
  else
    throw rmst::InvalidInput("method must be 'optimized' or 'naive'");
  const rmst::PseudoValueMatrix pv = pooled ? rmst::pseudo_values(loaded.sample, grid, pm)
                                            : rmst::pseudo_values_by_arm(loaded.sample, grid, pm);
  for (const std::string& w : pv.warnings) warnings.push_back(w);

  std::ostringstream out;
  out << "subject,tau,pseudo_value\n";
  for (int i = 0; i < pv.values.rows(); ++i)
    for (int j = 0; j < pv.values.cols(); ++j)
      out << (i + 1) << ',' << dtos(grid.taus[static_cast<std::size_t>(j)]) << ','
          << dtos(pv.values(i, j)) << '\n';

  json config = flags.config_json();
  config["method"] = method;
  config["pooled"] = pooled;
  const fs::path dir(flags.out);
  fs::create_directories(dir);
  write_text(dir, "pseudo_values.csv", out.str());
  const std::vector<std::string> outputs = {"pseudo_values.csv", "manifest.json"};
  json manifest = manifest_json("pseudo", config, outputs);
  manifest["restriction_times"] = grid.taus;
  manifest["warnings"] = warnings;
  write_json(dir, "manifest.json", manifest);
  for (const std::string& w : warnings) std::cerr << "warning: " << w << "\n";
  std::cout << "pseudo: wrote " << outputs.size() << " files to " << dir.string() << "\n";
  return 0;
}

struct SimulateFlags {
  std::string out;
  std::string config_path;
  int scenario = 0;
  bool cell = false;
  double delta = 1.0;
  double beta = 0.0;
  double percentile = 0.75;
  int n = 0;
  int reps = 500;
  long long seed = -1;
  int grid_m = 16;
  int df_lo = -1;  // resolved per mode: 4 for scenarios, 3 for cells
  int df_hi = 12;
  double alpha = 0.05;
  long long band_draws = 100000;
  int band_points = 30;
  unsigned threads = 0;
};

int cmd_simulate(const SimulateFlags& f) {
  if (f.cell && f.scenario != 0)
    throw rmst::InvalidInput("choose either --scenario or --cell, not both");
  if (!f.cell && f.scenario == 0)
    throw rmst::InvalidInput("choose a study: --scenario 1..5 or --cell");
  if (f.n <= 0) throw rmst::InvalidInput("--n is required and must be positive");
  if (f.seed < 0) throw rmst::InvalidInput("a seed is required: the study simulates data");

  rmst::StudyConfig cfg;
  cfg.mode = f.cell ? rmst::StudyConfig::Mode::cell : rmst::StudyConfig::Mode::scenario;
  cfg.scenario_id = f.scenario;
  cfg.delta = f.delta;
  cfg.log_rate_effect = f.beta;
  cfg.percentile = f.percentile;
  cfg.n = f.n;
  cfg.replicates = f.reps;
  cfg.seed = static_cast<std::uint64_t>(f.seed);
  cfg.grid_m = f.grid_m;
  cfg.df_lo = f.df_lo >= 0 ? f.df_lo : (f.cell ? 3 : 4);
  cfg.df_hi = f.df_hi;
  cfg.alpha = f.alpha;
  cfg.band_draws = f.band_draws;
  cfg.band_points = f.band_points;
  cfg.threads = f.threads;

  const rmst::StudyReport report = rmst::replicate_study(cfg);

  json config;
  config["mode"] = f.cell ? "cell" : "scenario";
  if (f.cell) {
    config["delta"] = f.delta;
    config["beta"] = f.beta;
    config["percentile"] = f.percentile;
  } else {
    config["scenario"] = f.scenario;
  }
  config["n"] = f.n;
  config["reps"] = f.reps;
  config["seed"] = f.seed;
  config["grid_m"] = f.grid_m;
  config["df_lo"] = cfg.df_lo;
  config["df_hi"] = cfg.df_hi;
  config["alpha"] = f.alpha;
  config["band_draws"] = f.band_draws;
  config["band_points"] = f.band_points;
  config["out"] = f.out;

  json sj;
  sj["version"] = kVersion;
  sj["config"] = config;
  sj["used"] = report.used;
  sj["failures"] = report.failures;
  sj["failure_messages"] = report.failure_messages;
  if (f.cell) {
    sj["tau"] = jnum(report.tau);
    sj["true_baseline"] = jnum(report.true_baseline);
    sj["true_diff"] = jnum(report.true_diff);
    sj["scalar_baseline_bias"] = jnum(report.scalar_baseline_bias);
    sj["scalar_diff_bias"] = jnum(report.scalar_diff_bias);
    sj["vector_baseline_bias"] = jnum(report.vector_baseline_bias);
    sj["vector_diff_bias"] = jnum(report.vector_diff_bias);
    sj["excluded_last_event"] = report.excluded_last_event;
    sj["vector_extrapolated"] = report.vector_extrapolated;
  } else {
    sj["tute_true"] = jnum(report.true_tute_value);
    sj["model_mae"] = jnum(report.model_mae);
    sj["band_coverage"] = jnum(report.band_coverage);
    sj["band_length"] = jnum(report.band_length);
    sj["mean_u95"] = jnum(report.mean_u95);
    sj["plugin_mae"] = jnum(report.plugin_mae);
    sj["tute_bias"] = jnum(report.tute_bias);
    sj["tute_rmse"] = jnum(report.tute_rmse);
    sj["tute_coverage"] = jnum(report.tute_coverage);
    sj["tute_finite"] = report.tute_finite;
    sj["tute_frac_infinite"] = jnum(report.tute_frac_infinite);
    sj["tute_frac_right_open"] = jnum(report.tute_frac_right_open);
    sj["plugin_tute_rmse"] = jnum(report.plugin_tute_rmse);
  }

  const fs::path dir(f.out);
  fs::create_directories(dir);
  write_text(dir, "study.csv", report.csv());
  write_json(dir, "study.json", sj);
  const std::vector<std::string> outputs = {"study.csv", "study.json", "manifest.json"};
  write_json(dir, "manifest.json", manifest_json("simulate", config, outputs));
  std::cout << "simulate: " << report.used << " replicates used, " << report.failures
            << " failures; wrote " << outputs.size() << " files to " << dir.string() << "\n";
  return 0;
}

int cmd_truth(int scenario, int points, const std::string& out) {
  const rmst::ScenarioSpec spec = rmst::ScenarioSpec::standard(scenario);
  const rmst::TuteRoot crossing = rmst::true_survival_crossing(spec);
  const rmst::TuteRoot tute = rmst::true_tute(spec);

  json config;
  config["scenario"] = scenario;
  config["points"] = points;
  config["out"] = out;

  json tj;
  tj["version"] = kVersion;
  tj["config"] = config;
  tj["scenario"] = scenario;
  tj["t_max"] = spec.t_max;
  json cr;
  cr["found"] = crossing.departed && std::isfinite(crossing.value);
  cr["time"] = jnum(crossing.value);
  if (std::isfinite(crossing.value)) {
    cr["surv0"] = spec.arm0.survival(crossing.value);
    cr["surv1"] = spec.arm1.survival(crossing.value);
  }
  tj["crossing"] = cr;
  json tu;
  tu["found"] = tute.departed && std::isfinite(tute.value);
  tu["time"] = jnum(tute.value);
  tu["sign"] = tute.sign;
  tj["tute"] = tu;

  std::ostringstream csv;
  csv << "t,surv0,surv1,rmst_diff\n";
  const std::vector<double> ts = rmst::linspace(spec.t_max / points, spec.t_max, points);
  for (double t : ts)
    csv << dtos(t) << ',' << dtos(spec.arm0.survival(t)) << ',' << dtos(spec.arm1.survival(t))
        << ',' << dtos(rmst::true_rmst_diff(spec, t)) << '\n';

  const fs::path dir(out);
  fs::create_directories(dir);
  write_json(dir, "truth.json", tj);
  write_text(dir, "truth_curve.csv", csv.str());
  const std::vector<std::string> outputs = {"truth.json", "truth_curve.csv", "manifest.json"};
  write_json(dir, "manifest.json", manifest_json("truth", config, outputs));
  std::cout << "truth: scenario " << scenario << ", crossing " << dtos(crossing.value) << ", tute "
            << dtos(tute.value) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"restricted mean survival time difference curves for two-arm studies"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  AnalysisFlags fit_flags, band_flags, tute_flags, pseudo_flags;
  int tute_boot = 1000;
  std::string tute_estimator = "plugin";
  int tute_scan = 2048;
  std::string pseudo_method = "optimized";
  bool pseudo_pooled = false;
  SimulateFlags sim;
  int truth_scenario = 0, truth_points = 200;
  std::string truth_out;

  CLI::App* fit_cmd = app.add_subcommand("fit", "estimate the difference curve with CIs and band");
  fit_flags.add(fit_cmd);

  CLI::App* band_cmd =
      app.add_subcommand("band", "curve and simultaneous band only (no fit summary)");
  band_flags.add(band_cmd);

  CLI::App* tute_cmd =
      app.add_subcommand("tute", "time until treatment equipoise with both interval methods");
  tute_flags.add(tute_cmd);
  tute_cmd->add_option("--boot", tute_boot, "bootstrap replicates")->capture_default_str();
  tute_cmd->add_option("--estimator", tute_estimator, "bootstrap estimator: plugin or model")->capture_default_str();
  tute_cmd->add_option("--scan-points", tute_scan, "root scan resolution")->capture_default_str();

  CLI::App* pseudo_cmd = app.add_subcommand("pseudo", "emit jackknife pseudo-values as CSV");
  pseudo_flags.add(pseudo_cmd);
  pseudo_cmd->add_option("--method", pseudo_method, "pseudo-value path: optimized or naive")->capture_default_str();
  pseudo_cmd->add_flag("--pooled", pseudo_pooled,
                       "jackknife against the pooled curve instead of within arm");

  CLI::App* sim_cmd = app.add_subcommand("simulate", "replicate study over a built-in scenario");
  sim_cmd->add_option("--out", sim.out, "output directory")->required();
  sim_cmd->add_option("--config", sim.config_path, "key=value file overriding the flags");
  sim_cmd->add_option("--scenario", sim.scenario, "built-in scenario id 1..5");
  sim_cmd->add_flag("--cell", sim.cell, "Weibull bias cell instead of a scenario");
  sim_cmd->add_option("--delta", sim.delta, "cell Weibull shape")->capture_default_str();
  sim_cmd->add_option("--beta", sim.beta, "cell log rate effect of treatment")->capture_default_str();
  sim_cmd->add_option("--percentile", sim.percentile, "cell baseline quantile defining tau")->capture_default_str();
  sim_cmd->add_option("--n", sim.n, "subjects per arm (scenario) or in total (cell)");
  sim_cmd->add_option("--reps", sim.reps, "replicates")->capture_default_str();
  sim_cmd->add_option("--seed", sim.seed, "study seed (required)");
  sim_cmd->add_option("--grid-m", sim.grid_m, "restriction times per replicate")->capture_default_str();
  sim_cmd->add_option("--df-lo", sim.df_lo, "smallest df searched (default 4, cells 3)");
  sim_cmd->add_option("--df-hi", sim.df_hi, "largest df searched")->capture_default_str();
  sim_cmd->add_option("--alpha", sim.alpha, "band level")->capture_default_str();
  sim_cmd->add_option("--band-draws", sim.band_draws, "band Monte Carlo draws")->capture_default_str();
  sim_cmd->add_option("--band-points", sim.band_points, "curve evaluation grid size")->capture_default_str();
  sim_cmd->add_option("--threads", sim.threads, "worker threads (0 = hardware)")->capture_default_str();

  CLI::App* truth_cmd =
      app.add_subcommand("truth", "closed-form curve, crossing, and equipoise time of a scenario");
  truth_cmd->add_option("--scenario", truth_scenario, "built-in scenario id 1..5")->required();
  truth_cmd->add_option("--points", truth_points, "curve sample points")->capture_default_str();
  truth_cmd->add_option("--out", truth_out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*fit_cmd) {
      OverrideTable t;
      fit_flags.overrides(t);
      if (!fit_flags.config_path.empty()) t.apply_file(fit_flags.config_path);
      return cmd_fit_or_band(fit_flags, true, true);
    }
    if (*band_cmd) {
      OverrideTable t;
      band_flags.overrides(t);
      if (!band_flags.config_path.empty()) t.apply_file(band_flags.config_path);
      return cmd_fit_or_band(band_flags, false, true);
    }
    if (*tute_cmd) {
      OverrideTable t;
      tute_flags.overrides(t);
      t.on("boot", [&](const std::string& v) { tute_boot = static_cast<int>(to_ll("boot", v)); });
      t.on("estimator", [&](const std::string& v) { tute_estimator = v; });
      t.on("scan-points",
           [&](const std::string& v) { tute_scan = static_cast<int>(to_ll("scan-points", v)); });
      if (!tute_flags.config_path.empty()) t.apply_file(tute_flags.config_path);
      return cmd_tute(tute_flags, tute_boot, tute_estimator, tute_scan);
    }
    if (*pseudo_cmd) {
      OverrideTable t;
      pseudo_flags.overrides(t);
      t.on("method", [&](const std::string& v) { pseudo_method = v; });
      t.on("pooled", [&](const std::string& v) { pseudo_pooled = to_b("pooled", v); });
      if (!pseudo_flags.config_path.empty()) t.apply_file(pseudo_flags.config_path);
      return cmd_pseudo(pseudo_flags, pseudo_method, pseudo_pooled);
    }
    if (*sim_cmd) {
      OverrideTable t;
      t.on("out", [&](const std::string& v) { sim.out = v; });
      t.on("scenario",
           [&](const std::string& v) { sim.scenario = static_cast<int>(to_ll("scenario", v)); });
      t.on("cell", [&](const std::string& v) { sim.cell = to_b("cell", v); });
      t.on("delta", [&](const std::string& v) { sim.delta = to_d("delta", v); });
      t.on("beta", [&](const std::string& v) { sim.beta = to_d("beta", v); });
      t.on("percentile", [&](const std::string& v) { sim.percentile = to_d("percentile", v); });
      t.on("n", [&](const std::string& v) { sim.n = static_cast<int>(to_ll("n", v)); });
      t.on("reps", [&](const std::string& v) { sim.reps = static_cast<int>(to_ll("reps", v)); });
      t.on("seed", [&](const std::string& v) { sim.seed = to_ll("seed", v); });
      t.on("grid-m", [&](const std::string& v) { sim.grid_m = static_cast<int>(to_ll("grid-m", v)); });
      t.on("df-lo", [&](const std::string& v) { sim.df_lo = static_cast<int>(to_ll("df-lo", v)); });
      t.on("df-hi", [&](const std::string& v) { sim.df_hi = static_cast<int>(to_ll("df-hi", v)); });
      t.on("alpha", [&](const std::string& v) { sim.alpha = to_d("alpha", v); });
      t.on("band-draws", [&](const std::string& v) { sim.band_draws = to_ll("band-draws", v); });
      t.on("band-points",
           [&](const std::string& v) { sim.band_points = static_cast<int>(to_ll("band-points", v)); });
      t.on("threads",
           [&](const std::string& v) { sim.threads = static_cast<unsigned>(to_ll("threads", v)); });
      if (!sim.config_path.empty()) t.apply_file(sim.config_path);
      return cmd_simulate(sim);
    }
    if (*truth_cmd) return cmd_truth(truth_scenario, truth_points, truth_out);
    throw rmst::InvalidInput("no subcommand given");
  } catch (const rmst::InvalidInput& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const rmst::NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}

// echosim command-line front end.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>

#include "echosim/csv.hpp"
#include "echosim/runner.hpp"

namespace fs = std::filesystem;
using namespace echosim;

namespace {

constexpr int kOk = 0;
constexpr int kRuntime = 1;
constexpr int kUsage = 2;
constexpr int kNumerical = 3;

int fail(int code, const std::string& tag, const std::string& msg) {
  std::cerr << tag << ' ' << msg << '\n';
  return code;
}

struct RunFlags {
  std::string config;
  std::string out_dir;
  int workers = 0;
  double dt_max = 0.0;
  double tol = 0.0;
  bool quiet = false;
};

void add_run_flags(CLI::App* app, RunFlags& f, bool need_config) {
  auto* c = app->add_option("--config", f.config, "experiment manifest");
  if (need_config) c->required();
  app->add_option("--out-dir", f.out_dir, "output directory (default out/<name>)");
  app->add_option("--workers", f.workers, "worker threads (fallback: ECHOSIM_WORKERS)")
      ->check(CLI::PositiveNumber);
  app->add_option("--dt-max", f.dt_max, "largest RK4 step (us)")->check(CLI::PositiveNumber);
  app->add_option("--tol", f.tol, "step-doubling tolerance")->check(CLI::PositiveNumber);
  app->add_flag("--quiet", f.quiet, "no progress output");
}

void apply_overrides(Manifest& m, const RunFlags& f) {
  if (f.workers > 0) m.set("output.workers", std::to_string(f.workers));
  if (f.dt_max > 0) m.set("integrator.dt_max_us", csv::format(f.dt_max));
  if (f.tol > 0) m.set("integrator.tol", csv::format(f.tol));
}

// Syntax errors come from reading the file; everything later is a bad value.
int report_config_error(const ConfigError& e, bool syntax = false) {
  if (syntax) return fail(kUsage, "E_CONFIG_PARSE", e.what());
  return fail(kUsage, "E_CONFIG_INVALID", e.key().empty() ? e.what() : e.key() + ": " + e.what());
}

int execute(Manifest m, const RunFlags& f) {
  try {
    apply_overrides(m, f);
    RunSettings s;
    s.out_dir = f.out_dir.empty() ? "out/" + m.get_string("experiment.name", m.get_string("experiment.type", "protocol"))
                                  : f.out_dir;
    s.log = f.quiet ? nullptr : &std::cerr;
    const RunReport r = run_experiment(m, s);
    std::cout << r.summary.dump(2) << '\n';
    return kOk;
  } catch (const ConfigError& e) {
    return report_config_error(e);
  } catch (const NumericalFailure& e) {
    return fail(kNumerical, "E_NUMERICAL", e.what());
  } catch (const std::invalid_argument& e) {
    return fail(kUsage, "E_CONFIG_INVALID", e.what());
  } catch (const std::exception& e) {
    return fail(kRuntime, "E_RUNTIME", e.what());
  }
}

int load_manifest(const std::string& path, Manifest& m) {
  if (!fs::is_regular_file(path)) return fail(kUsage, "E_CONFIG_NOT_FOUND", path);
  try {
    m = Manifest::load(path);
  } catch (const ConfigError& e) {
    return report_config_error(e, true);
  }
  return kOk;
}

std::string join(const std::vector<std::string>& v) {
  std::string s;
  for (const auto& x : v) s += (s.empty() ? "" : ", ") + x;
  return s;
}

struct FitFlags {
  std::string data;
  std::string model;
  std::vector<std::string> seeds;
  std::vector<std::string> fix;
  std::vector<std::string> free;
  int x_col = 0, y_col = 1, sigma_col = -1;
  int max_iter = 500;
  double tol = 1e-12;
};

int run_fit(const FitFlags& f) {
  ModelKind kind;
  try {
    kind = model_kind_from_string(f.model);
  } catch (const std::invalid_argument& e) {
    return fail(kUsage, "E_FIT_MODEL", e.what());
  }
  if (!fs::is_regular_file(f.data)) return fail(kUsage, "E_DATA_NOT_FOUND", f.data);
  std::ifstream in(f.data, std::ios::binary);
  csv::Table t;
  try {
    t = csv::read_numeric(in);
  } catch (const std::invalid_argument& e) {
    return fail(kUsage, "E_DATA_MALFORMED", e.what());
  }
  FitData d;
  const int need = std::max({f.x_col, f.y_col, f.sigma_col});
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    if (static_cast<int>(t.rows[r].size()) <= need)
      return fail(kUsage, "E_DATA_MALFORMED", "data row " + std::to_string(r + 1) + " has too few columns");
    d.x.push_back(t.rows[r][f.x_col]);
    d.y.push_back(t.rows[r][f.y_col]);
    if (f.sigma_col >= 0) d.sigma.push_back(t.rows[r][f.sigma_col]);
  }

  FitModel model = FitModel::make(kind);
  std::vector<double> guess;
  try {
    guess = initial_guess(model, d);
    for (const auto& s : f.seeds) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) return fail(kUsage, "E_FIT_SEED", "expected name=value, got '" + s + "'");
      guess[model.index_of(s.substr(0, eq))] = std::stod(s.substr(eq + 1));
    }
    for (const auto& n : f.fix) model.fixed[model.index_of(n)] = true;
    for (const auto& n : f.free) model.fixed[model.index_of(n)] = false;
  } catch (const std::exception& e) {
    return fail(kUsage, "E_FIT_SEED", e.what());
  }
  try {
    FitControl ctl;
    ctl.max_iter = f.max_iter;
    ctl.tol = f.tol;
    const FitResult r = nlls_solve(model, d, guess, ctl);
    Json j = fit_to_json(r);
    j["points"] = d.x.size();
    j["data"] = f.data;
    std::cout << j.dump(2) << '\n';
    return r.converged ? kOk : kNumerical;
  } catch (const std::invalid_argument& e) {
    return fail(kUsage, "E_DATA_INVALID", e.what());
  }
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"echosim: memory-assisted microwave-to-optical transduction simulator"};
  app.require_subcommand(1);
  app.set_version_flag("--version", code_version());

  RunFlags run_flags;
  std::string run_type;
  std::string axis;
  std::string values;
  auto* run = app.add_subcommand("run", "run an experiment manifest");
  run->add_option("type", run_type, "experiment type, overriding experiment.type");
  add_run_flags(run, run_flags, true);
  run->add_option("--axis", axis, "sweep axis, overriding sweep.axis");
  run->add_option("--values", values, "comma-separated sweep values");

  RunFlags sweep_flags;
  std::string sweep_axis, sweep_values;
  auto* sweep_cmd = app.add_subcommand("sweep", "alias of 'run sweep'");
  add_run_flags(sweep_cmd, sweep_flags, true);
  sweep_cmd->add_option("--axis", sweep_axis, "sweep axis");
  sweep_cmd->add_option("--values", sweep_values, "comma-separated sweep values");

  FitFlags fit_flags;
  auto* fit = app.add_subcommand("fit", "fit a model to a CSV of x,y[,sigma]");
  fit->add_option("--data", fit_flags.data, "CSV file")->required();
  fit->add_option("--model", fit_flags.model, join([] {
                    std::vector<std::string> v;
                    for (auto k : all_model_kinds()) v.emplace_back(to_string(k));
                    return v;
                  }()))
      ->required();
  fit->add_option("--seed", fit_flags.seeds, "starting value name=value (repeatable)");
  fit->add_option("--fix", fit_flags.fix, "hold a parameter at its seed (repeatable)");
  fit->add_option("--free", fit_flags.free, "release a parameter fixed by default (repeatable)");
  fit->add_option("--x-col", fit_flags.x_col, "x column index")->check(CLI::NonNegativeNumber);
  fit->add_option("--y-col", fit_flags.y_col, "y column index")->check(CLI::NonNegativeNumber);
  fit->add_option("--sigma-col", fit_flags.sigma_col, "sigma column index");
  fit->add_option("--max-iter", fit_flags.max_iter, "iteration limit")->check(CLI::PositiveNumber);
  fit->add_option("--tol", fit_flags.tol, "convergence tolerance")->check(CLI::PositiveNumber);

  RunFlags repro_flags;
  std::string figure;
  bool list = false;
  auto* repro = app.add_subcommand("reproduce", "run a built-in preset by figure id");
  repro->add_option("id", figure, "figure id");
  repro->add_flag("--list", list, "print the preset ids");
  add_run_flags(repro, repro_flags, false);
  repro->add_flag("--print-config", "print the preset manifest and exit");

  std::string check_path;
  auto* validate = app.add_subcommand("validate", "check a manifest without running it");
  validate->add_option("--config", check_path, "experiment manifest")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  if (run->parsed() || sweep_cmd->parsed()) {
    const bool is_sweep = sweep_cmd->parsed();
    const RunFlags& f = is_sweep ? sweep_flags : run_flags;
    Manifest m;
    if (int rc = load_manifest(f.config, m)) return rc;
    const std::string type = is_sweep ? "sweep" : run_type;
    if (!type.empty()) m.set("experiment.type", type);
    const std::string& ax = is_sweep ? sweep_axis : axis;
    const std::string& vals = is_sweep ? sweep_values : values;
    if (!ax.empty()) m.set("sweep.axis", ax);
    if (!vals.empty()) {
      m.set("sweep.values", vals);
      m.set("interference.values", vals);
    }
    return execute(m, f);
  }
  if (fit->parsed()) return run_fit(fit_flags);
  if (repro->parsed()) {
    const auto ids = preset_ids();
    if (list) {
      for (const auto& id : ids) std::cout << id << '\n';
      return kOk;
    }
    if (figure.empty()) return fail(kUsage, "E_UNKNOWN_FIGURE", "(none given); valid ids: " + join(ids));
    if (std::find(ids.begin(), ids.end(), figure) == ids.end())
      return fail(kUsage, "E_UNKNOWN_FIGURE", figure + "; valid ids: " + join(ids));
    const std::string text = preset_manifest(figure);
    if (repro->count("--print-config")) {
      std::cout << text;
      return kOk;
    }
    RunFlags f = repro_flags;
    if (f.out_dir.empty()) f.out_dir = "out/" + figure;
    return execute(Manifest::parse(text), f);
  }
  if (validate->parsed()) {
    Manifest m;
    if (int rc = load_manifest(check_path, m)) return rc;
    try {
      validate_manifest(m);
    } catch (const ConfigError& e) {
      return report_config_error(e);
    } catch (const std::invalid_argument& e) {
      return fail(kUsage, "E_CONFIG_INVALID", e.what());
    }
    std::cout << "OK " << m.hash_hex() << '\n';
    return kOk;
  }
  return kUsage;
}

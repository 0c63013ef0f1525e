#include "echosim/runner.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "echosim/csv.hpp"
#include "echosim/units.hpp"

#ifndef ECHOSIM_VERSION
#define ECHOSIM_VERSION "0.0.0"
#endif

namespace echosim {

namespace fs = std::filesystem;

std::string code_version() { return ECHOSIM_VERSION; }

namespace {

ConfigError key_error(const Manifest& m, const std::string& key, const std::string& msg) {
  if (m.has(key)) {
    const auto& e = m.entry(key);
    return ConfigError(key + ": " + msg, e.line, e.column, key);
  }
  return ConfigError(key + ": " + msg, 0, 0, key);
}

std::string experiment_type(const Manifest& m) {
  const std::string t = m.get_string("experiment.type", "protocol");
  static const char* known[] = {"protocol", "sweep", "interference", "multiplex", "rotation",
                                "rap_compare"};
  for (const char* k : known)
    if (t == k) return t;
  throw key_error(m, "experiment.type",
                  "unknown experiment '" + t +
                      "' (protocol, sweep, interference, multiplex, rotation, rap_compare)");
}

template <class F>
auto keyed(const Manifest& m, const std::string& key, F&& f) {
  try {
    return f();
  } catch (const std::invalid_argument& ex) {
    throw key_error(m, key, ex.what());
  }
}

SweepMetric read_metric(const Manifest& m) {
  const std::string s = m.get_string("sweep.metric", "peak");
  if (s == "peak") return SweepMetric::EchoPeak;
  if (s == "detection") return SweepMetric::Detection;
  throw key_error(m, "sweep.metric", "expected 'peak' or 'detection'");
}

SweepMethod read_method(const Manifest& m, const std::string& key, SweepMethod fallback) {
  if (!m.has(key)) return fallback;
  const std::string s = m.get_string(key);
  if (s == "full") return SweepMethod::Full;
  if (s == "ideal") return SweepMethod::Ideal;
  throw key_error(m, key, "expected 'full' or 'ideal'");
}

std::optional<ModelKind> read_model(const Manifest& m, const std::string& key) {
  if (!m.has(key) || m.get_string(key) == "none") return std::nullopt;
  return keyed(m, key, [&] { return model_kind_from_string(m.get_string(key)); });
}

class Outputs {
 public:
  Outputs(const std::string& dir, std::vector<std::string>& files) : dir_(dir), files_(files) {
    if (!dir_.empty()) fs::create_directories(dir_);
  }
  bool enabled() const { return !dir_.empty(); }

  template <class F>
  void write(const std::string& name, F&& body) {
    if (dir_.empty()) return;
    const fs::path p = fs::path(dir_) / name;
    std::ofstream os(p, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + p.string());
    body(os);
    if (!os) throw std::runtime_error("error writing " + p.string());
    files_.push_back(p.string());
  }

 private:
  std::string dir_;
  std::vector<std::string>& files_;
};

/// Plot-ready long format: one (series, x, y) row per point.
class LongTable {
 public:
  void add(const std::string& series, double x, double y) { rows_.push_back({series, x, y}); }
  void write(std::ostream& os, const std::string& x_unit, const std::string& y_unit) const {
    csv::write_header(os, {"series", "x", "y"}, {"", x_unit, y_unit}, {"long format"});
    for (const auto& r : rows_)
      os << r.series << ',' << csv::format(r.x) << ',' << csv::format(r.y) << '\n';
  }

 private:
  struct Row {
    std::string series;
    double x, y;
  };
  std::vector<Row> rows_;
};

Json echo_json(const EchoMetric& e) {
  return Json{{"peak_time_us", e.peak_time},
              {"peak_amplitude", e.peak_amplitude},
              {"window_start_us", e.window_start},
              {"window_end_us", e.window_end},
              {"integrated_magnitude", e.integrated_magnitude}};
}

Json complex_json(cplx z) { return Json::array({z.real(), z.imag()}); }

FitResult fit_series(ModelKind kind, const std::vector<double>& x, const std::vector<double>& y) {
  const FitModel model = FitModel::make(kind);
  const FitData data{x, y, {}};
  return nlls_solve(model, data, initial_guess(model, data));
}

void add_trace_series(LongTable& lt, const TraceSet& t, const std::string& prefix = {}) {
  for (std::size_t i = 0; i < t.size(); ++i) {
    lt.add(prefix + "abs_s12", t.times[i], std::abs(t.s12[i]));
    lt.add(prefix + "abs_s13", t.times[i], std::abs(t.s13[i]));
    lt.add(prefix + "abs_s23", t.times[i], std::abs(t.s23[i]));
    lt.add(prefix + "p3", t.times[i], t.p3[i]);
  }
}

Json run_protocol_exp(const ProtocolConfig& c, Outputs& out, std::ostream* log) {
  if (log) *log << "protocol: " << c.grid.m_optical * c.grid.m_spin << " atoms\n";
  const ProtocolResult r = run_protocol(c);
  out.write("trace.csv", [&](std::ostream& os) { write_trace_csv(os, r.traces); });
  LongTable lt;
  add_trace_series(lt, r.traces);
  out.write("long.csv", [&](std::ostream& os) { lt.write(os, "us", ""); });
  Json j;
  j["predicted_echo_us"] = r.times.predicted_echo;
  j["echo"] = echo_json(r.echo);
  j["post_mw_amplitude"] = r.post_mw_amplitude;
  j["echo_to_post_mw"] = r.post_mw_amplitude > 0 ? r.echo.peak_amplitude / r.post_mw_amplitude : 0.0;
  j["undesired_peak"] = r.undesired_peak;
  j["undesired_ratio"] = r.undesired_ratio;
  j["t_detect_us"] = r.times.t_detect;
  j["detection"] = complex_json(r.detection);
  j["adiabaticity"] = adiabaticity_factor(c.rap.peak_rabi, c.rap.chirp_bandwidth, c.rap.duration);
  j["max_norm_drift"] = r.max_norm_drift;
  j["rk4_steps"] = r.rk4_steps;
  return j;
}

Json run_rap_compare(const Manifest& m, const ProtocolConfig& base, Outputs& out, std::ostream* log) {
  std::vector<double> factors = m.get_list("compare.rabi_gamma_p");
  if (factors.empty()) factors = {2.5, 5.0};
  LongTable lt;
  Json cols = Json::array();
  for (double f : factors) {
    if (!(f > 0.0)) throw key_error(m, "compare.rabi_gamma_p", "factors must be positive");
    ProtocolConfig c = base;
    c.rap.peak_rabi = units::angular_from_mhz(f * c.gamma_p);
    if (log) *log << "rap_compare: Omega_R = " << f << " Gamma_P\n";
    const ProtocolResult r = run_protocol(c);
    std::ostringstream name;
    name << "trace_omega_" << f << "gp.csv";
    out.write(name.str(), [&](std::ostream& os) { write_trace_csv(os, r.traces); });
    std::ostringstream prefix;
    prefix << f << "gp:";
    add_trace_series(lt, r.traces, prefix.str());
    cols.push_back(Json{{"rabi_gamma_p", f},
                        {"adiabaticity", adiabaticity_factor(c.rap.peak_rabi, c.rap.chirp_bandwidth,
                                                             c.rap.duration)},
                        {"echo", echo_json(r.echo)},
                        {"undesired_peak", r.undesired_peak},
                        {"undesired_ratio", r.undesired_ratio},
                        {"max_norm_drift", r.max_norm_drift}});
  }
  out.write("long.csv", [&](std::ostream& os) { lt.write(os, "us", ""); });
  return Json{{"columns", cols}};
}

double fit_x(const ProtocolConfig& base, SweepAxis axis, double v, bool storage_time) {
  if (!storage_time) return v;
  if (axis != SweepAxis::StorageTau2) return v;
  return 2.0 * (v + base.rap.duration);
}

Json run_sweep_exp(const Manifest& m, const ProtocolConfig& c, Outputs& out, std::ostream* log) {
  const SweepAxis axis =
      keyed(m, "sweep.axis", [&] { return sweep_axis_from_string(m.get_string("sweep.axis", "")); });
  const auto values = read_values(m, "sweep", {});
  if (values.empty()) throw key_error(m, "sweep.values", "no sweep values given");
  const SweepMetric metric = read_metric(m);
  const SweepMethod method = read_method(m, "sweep.method", SweepMethod::Full);
  const auto model = read_model(m, "sweep.fit_model");
  const std::string fy = m.get_string("sweep.fit_y", "amplitude");
  if (fy != "amplitude" && fy != "intensity") throw key_error(m, "sweep.fit_y", "expected 'amplitude' or 'intensity'");
  const std::string fxs = m.get_string("sweep.fit_x", "value");
  if (fxs != "value" && fxs != "storage_time") throw key_error(m, "sweep.fit_x", "expected 'value' or 'storage_time'");
  if (log) *log << "sweep " << to_string(axis) << ": " << values.size() << " points\n";
  const SweepResult r = keyed(m, "sweep.values", [&] { return sweep(c, axis, values, metric, method); });

  const std::string unit(axis_unit(axis));
  out.write("sweep.csv", [&](std::ostream& os) {
    csv::write_header(os, {"value", "amplitude", "intensity", "peak_time", "re_detection", "im_detection"},
                      {unit, "", "", "us", "", ""}, {"sweep axis " + r.axis});
    for (const auto& p : r.points)
      csv::write_row(os, {p.value, p.amplitude, p.amplitude * p.amplitude, p.peak_time,
                          p.detection.real(), p.detection.imag()});
  });
  LongTable lt;
  for (const auto& p : r.points) lt.add("amplitude", p.value, p.amplitude);

  Json j;
  j["axis"] = r.axis;
  j["unit"] = unit;
  j["metric"] = metric == SweepMetric::EchoPeak ? "peak" : "detection";
  j["method"] = method == SweepMethod::Full ? "full" : "ideal";
  Json pts = Json::array();
  for (const auto& p : r.points) pts.push_back(Json{{"value", p.value}, {"amplitude", p.amplitude}});
  j["points"] = pts;
  if (model) {
    std::vector<double> x, y;
    for (const auto& p : r.points) {
      x.push_back(fit_x(c, axis, p.value, fxs == "storage_time"));
      y.push_back(fy == "intensity" ? p.amplitude * p.amplitude : p.amplitude);
    }
    const FitResult f = fit_series(*model, x, y);
    j["fit"] = fit_to_json(f);
    j["fit"]["x"] = fxs;
    j["fit"]["y"] = fy;
    const FitModel fm = FitModel::make(*model);
    for (std::size_t i = 0; i < x.size(); ++i) lt.add("fit", r.points[i].value, fm.eval(x[i], f.parameters));
  }
  if (axis == SweepAxis::MwAmplitude) j["r_squared_linear"] = linear_r_squared(r.values(), r.amplitudes(), true);
  out.write("long.csv", [&](std::ostream& os) { lt.write(os, unit, ""); });
  return j;
}

Json run_interference_exp(const Manifest& m, const ProtocolConfig& c0, Outputs& out,
                          std::ostream* log) {
  const std::string ms = m.get_string("interference.mode", "phase");
  if (ms != "phase" && ms != "frequency")
    throw key_error(m, "interference.mode", "expected 'phase' or 'frequency'");
  const InterferenceMode mode = ms == "phase" ? InterferenceMode::Phase : InterferenceMode::Frequency;
  ProtocolConfig c = c0;
  if (!c.mw2) c.mw2 = c.mw;
  std::vector<double> fallback;
  for (int i = 0; i <= 36; ++i) fallback.push_back(-units::pi + units::two_pi * i / 36.0);
  if (mode == InterferenceMode::Frequency) {
    fallback.clear();
    for (int i = 0; i <= 100; ++i) fallback.push_back(-0.5 + 0.01 * i);
  }
  const auto values = read_values(m, "interference", fallback);
  std::optional<HomodyneSpec> lo;
  if (m.has("interference.homodyne_amplitude")) {
    lo = HomodyneSpec{m.get_double("interference.homodyne_amplitude", 0.0),
                      m.get_double("interference.homodyne_phase_rad", 0.0)};
  }
  const SweepMethod method = read_method(m, "interference.method", SweepMethod::Ideal);

  Json j;
  if (m.has("interference.emulated_decay_us")) {
    double td = 0.0;
    if (m.get_string("interference.emulated_decay_us") == "auto") {
      ProtocolConfig dc = c;
      dc.mw2.reset();
      dc.detection.reference = DetectionReference::Mw1;
      dc.detection.t_detect.reset();
      if (log) *log << "interference: delay sweep for the emulated decay\n";
      const DelayDecay dd = delay_decay(dc, default_delay_values());
      td = dd.time_constant;
      j["delay_fit"] = fit_to_json(dd.fit);
    } else {
      td = m.get_double("interference.emulated_decay_us", 0.0);
    }
    c = keyed(m, "interference.emulated_decay_us", [&] { return emulate_mw2_decay(c, td); });
    const ProtocolTimes t = protocol_times(c);
    j["emulated_decay_us"] = td;
    j["mw_delay_us"] = t.mw2_start - t.mw_start;
    j["expected_i2_over_i1"] = std::exp(-(t.mw2_start - t.mw_start) / td);
  }
  if (log) *log << "interference " << ms << ": " << values.size() << " points\n";
  const InterferenceResult r = interference_run(c, mode, values, lo, method);

  const std::string unit = mode == InterferenceMode::Phase ? "rad" : "MHz";
  out.write("interference.csv", [&](std::ostream& os) {
    csv::write_header(os, {"value", "re_field", "im_field", "amplitude", "intensity"},
                      {unit, "", "", "", ""},
                      {mode == InterferenceMode::Phase ? "MW2 - MW1 phase" : "MW2 carrier offset"});
    for (const auto& p : r.points)
      csv::write_row(os, {p.value, p.field.real(), p.field.imag(), p.amplitude, p.intensity});
  });
  LongTable lt;
  double lo_i = 1e300, hi_i = -1e300;
  std::vector<double> x, y;
  for (const auto& p : r.points) {
    lt.add("intensity", p.value, p.intensity);
    lo_i = std::min(lo_i, p.intensity);
    hi_i = std::max(hi_i, p.intensity);
    x.push_back(p.value);
    y.push_back(p.intensity);
  }
  j["mode"] = ms;
  j["intensity_mw1"] = std::norm(r.field_mw1);
  j["intensity_mw2"] = std::norm(r.field_mw2);
  j["visibility_sweep"] = hi_i + lo_i > 0 ? (hi_i - lo_i) / (hi_i + lo_i) : 0.0;

  std::optional<ModelKind> model = read_model(m, "interference.fit");
  if (!m.has("interference.fit")) {
    model = lo ? ModelKind::HomodyneFringe
               : mode == InterferenceMode::Phase ? ModelKind::CosineInterference
                                                 : ModelKind::LorentzModCosine;
  }
  if (model && x.size() >= 6) {
    const FitResult f = fit_series(*model, x, y);
    j["fit"] = fit_to_json(f);
    const FitModel fm = FitModel::make(*model);
    double ss = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double e = fm.eval(x[i], f.parameters);
      lt.add("fit", x[i], e);
      ss += (y[i] - e) * (y[i] - e);
    }
    const double rms = std::sqrt(ss / static_cast<double>(x.size()));
    j["fit"]["rms_residual"] = rms;
    j["fit"]["rms_over_range"] = hi_i > lo_i ? rms / (hi_i - lo_i) : 0.0;
    if (*model == ModelKind::CosineInterference || *model == ModelKind::LorentzModCosine) {
      j["fit"]["i2_over_i1"] = f.value("I2") / f.value("I1");
      j["fit"]["visibility"] = visibility(f.value("I1"), f.value("I2"));
    }
  }
  out.write("long.csv", [&](std::ostream& os) { lt.write(os, unit, ""); });
  return j;
}

MultiplexPlan read_plan(const Manifest& m) {
  const double spacing = m.get_double("multiplex.spacing_us", 10.0);
  MultiplexPlan p;
  if (m.has("multiplex.bits")) {
    p = keyed(m, "multiplex.bits", [&] { return MultiplexPlan::from_bits(m.get_string("multiplex.bits"), spacing); });
  } else {
    const long n = m.get_int("multiplex.modes", 10);
    if (n < 1) throw key_error(m, "multiplex.modes", "must be at least 1");
    p = MultiplexPlan::uniform(static_cast<std::size_t>(n), spacing);
  }
  auto apply = [&](const std::string& key, double MultiplexMode::*field) {
    const auto v = m.get_list(key);
    if (v.empty()) return;
    if (v.size() != 1 && v.size() != p.modes.size())
      throw key_error(m, key, "give one value or one per mode");
    for (std::size_t k = 0; k < p.modes.size(); ++k)
      p.modes[k].*field = units::angular_from_mhz(v.size() == 1 ? v[0] : v[k]);
  };
  apply("multiplex.pump_offsets_mhz", &MultiplexMode::pump_offset);
  apply("multiplex.mw_offsets_mhz", &MultiplexMode::mw_offset);
  return p;
}

Json run_multiplex_exp(const Manifest& m, const ProtocolConfig& c, Outputs& out, std::ostream* log) {
  const MultiplexPlan plan = read_plan(m);
  if (log) *log << "multiplex: " << plan.modes.size() << " modes\n";
  const MultiplexResult r = keyed(m, "multiplex.spacing_us", [&] { return multiplex_run(c, plan); });
  out.write("trace.csv", [&](std::ostream& os) { write_trace_csv(os, r.traces); });
  out.write("modes.csv", [&](std::ostream& os) {
    csv::write_header(os, {"mode", "mw_on", "expected_time", "peak_time", "peak_amplitude", "re_detection", "im_detection"},
                      {"", "", "us", "us", "", "", ""});
    for (std::size_t k = 0; k < r.echoes.size(); ++k)
      csv::write_row(os, {static_cast<double>(k), plan.modes[k].mw_on ? 1.0 : 0.0, r.expected_times[k],
                          r.echoes[k].peak_time, r.echoes[k].peak_amplitude, r.detection[k].real(),
                          r.detection[k].imag()});
  });
  LongTable lt;
  for (std::size_t i = 0; i < r.traces.size(); ++i) lt.add("abs_s12", r.traces.times[i], std::abs(r.traces.s12[i]));
  for (std::size_t k = 0; k < r.echoes.size(); ++k) lt.add("mode_peak", r.echoes[k].peak_time, r.echoes[k].peak_amplitude);

  Json j;
  Json modes = Json::array();
  for (std::size_t k = 0; k < r.echoes.size(); ++k)
    modes.push_back(Json{{"expected_time_us", r.expected_times[k]}, {"echo", echo_json(r.echoes[k])}});
  j["modes"] = modes;
  j["max_norm_drift"] = r.max_norm_drift;

  const long plans = m.get_int("multiplex.random_plans", 0);
  if (plans < 0) throw key_error(m, "multiplex.random_plans", "must be >= 0");
  if (plans > 0) {
    const long nb = m.get_int("multiplex.random_bits", 8);
    if (nb < 1) throw key_error(m, "multiplex.random_bits", "must be at least 1");
    const long seed = m.get_int("multiplex.seed", 1);
    if (log) *log << "multiplex: calibrating discriminator\n";
    const Discriminator d = calibrate_discriminator(c, static_cast<std::size_t>(nb), plan.spacing);
    std::mt19937_64 rng(static_cast<std::uint64_t>(seed));
    std::bernoulli_distribution coin(0.5);
    std::size_t exact = 0;
    Json rows = Json::array();
    std::vector<std::string> sent, got;
    for (long p = 0; p < plans; ++p) {
      std::string bits;
      for (long b = 0; b < nb; ++b) bits.push_back(coin(rng) ? '1' : '0');
      if (log) *log << "multiplex: plan " << p + 1 << "/" << plans << " " << bits << "\n";
      const auto res = multiplex_run(c, MultiplexPlan::from_bits(bits, plan.spacing));
      const std::string dec = decode_bits(res, d);
      exact += dec == bits;
      sent.push_back(bits);
      got.push_back(dec);
      rows.push_back(Json{{"bits", bits}, {"decoded", dec}});
    }
    out.write("plans.csv", [&](std::ostream& os) {
      csv::write_header(os, {"plan", "bits", "decoded", "match"}, {"", "", "", ""},
                        {"discriminator threshold " + csv::format(d.threshold)});
      for (std::size_t i = 0; i < sent.size(); ++i)
        os << i << ',' << sent[i] << ',' << got[i] << ',' << (sent[i] == got[i] ? 1 : 0) << '\n';
    });
    j["discriminator"] = Json{{"threshold", d.threshold}, {"half_width_us", d.half_width}};
    j["plans"] = rows;
    j["plans_exact"] = exact;
  }
  out.write("long.csv", [&](std::ostream& os) { lt.write(os, "us", ""); });
  return j;
}

RotationDemoConfig read_rotation(const Manifest& m) {
  RotationDemoConfig r;
  const long mm = m.get_int("rotation.m", static_cast<long>(r.m));
  if (mm < 2) throw key_error(m, "rotation.m", "must be at least 2");
  r.m = static_cast<std::size_t>(mm);
  r.span = m.get_double("rotation.span", r.span);
  r.spin.fwhm = m.get_double("rotation.spin_fwhm_mhz", r.spin.fwhm);
  if (!(r.spin.fwhm > 0.0) || !(r.span > 0.0))
    throw key_error(m, "rotation.spin_fwhm_mhz", "line width and span must be positive");
  if (m.has("rotation.shape")) {
    const auto k = keyed(m, "rotation.shape", [&] { return envelope_kind_from_string(m.get_string("rotation.shape")); });
    r.pulse1.shape.kind = r.pulse2.shape.kind = k;
  }
  r.pulse1.duration = r.pulse2.duration = m.get_double("rotation.duration_us", r.pulse1.duration);
  r.pulse1.area = r.pulse2.area = units::pi * m.get_double("rotation.area_pi", r.pulse1.area / units::pi);
  r.pulse2.detuning = units::angular_from_mhz(m.get_double("rotation.detuning2_mhz", 0.0));
  r.pulse2.phase = m.get_double("rotation.phase2_rad", 0.0);
  std::vector<double> fallback;
  for (int i = 0; i <= 60; ++i) fallback.push_back(-3.0 + 0.1 * i);
  for (double v : read_values(m, "rotation", fallback)) r.detunings.push_back(units::angular_from_mhz(v));
  r.path_atoms = static_cast<std::size_t>(std::max(1L, m.get_int("rotation.path_atoms", 9)));
  r.path_points = static_cast<std::size_t>(std::max(2L, m.get_int("rotation.path_points", 41)));
  r.reference_time = m.get_optional("rotation.reference_us");
  return r;
}

Json run_rotation_exp(const Manifest& m, const ProtocolConfig& c, Outputs& out, std::ostream* log) {
  RotationDemoConfig r = read_rotation(m);
  r.integrator = c.integrator;
  if (log) *log << "rotation: " << r.m << " spin packets\n";
  const RotationDemoResult res = keyed(m, "rotation.duration_us", [&] { return ensemble_rotation_demo(r); });
  out.write("rotation_scan.csv", [&](std::ostream& os) {
    csv::write_header(os, {"detuning2", "magnitude"}, {"MHz", ""},
                      {"collective <s23> referred to t = " + csv::format(res.reference_time) + " us"});
    for (std::size_t i = 0; i < res.detunings.size(); ++i)
      csv::write_row(os, {units::mhz_from_angular(res.detunings[i]), res.magnitude[i]});
  });
  out.write("bloch_paths.csv", [&](std::ostream& os) {
    csv::write_header(os, {"atom_index", "delta23", "time", "x", "y", "z"}, {"", "MHz", "us", "", "", ""},
                      {"normalized (2,3) Bloch vectors"});
    for (const auto& p : res.paths)
      csv::write_row(os, {static_cast<double>(p.atom), units::mhz_from_angular(p.delta23), p.time,
                          p.xyz[0], p.xyz[1], p.xyz[2]});
  });
  LongTable lt;
  for (std::size_t i = 0; i < res.detunings.size(); ++i)
    lt.add("magnitude", units::mhz_from_angular(res.detunings[i]), res.magnitude[i]);
  out.write("long.csv", [&](std::ostream& os) { lt.write(os, "MHz", ""); });
  return Json{{"reference_time_us", res.reference_time},
              {"coherence", complex_json(res.coherence)},
              {"coherence_abs", std::abs(res.coherence)},
              {"raw_coherence", complex_json(res.raw_coherence)}};
}

} // namespace

std::vector<double> read_values(const Manifest& m, const std::string& sec,
                                const std::vector<double>& fallback) {
  if (m.has(sec + ".values")) return m.get_list(sec + ".values");
  const bool any = m.has(sec + ".start") || m.has(sec + ".stop") || m.has(sec + ".count");
  if (!any) return fallback;
  if (!(m.has(sec + ".start") && m.has(sec + ".stop") && m.has(sec + ".count")))
    throw key_error(m, sec + ".count", "start, stop and count go together");
  const double a = m.get_double(sec + ".start", 0.0), b = m.get_double(sec + ".stop", 0.0);
  const long n = m.get_int(sec + ".count", 0);
  if (n < 1) throw key_error(m, sec + ".count", "must be at least 1");
  std::vector<double> v;
  for (long i = 0; i < n; ++i) v.push_back(n == 1 ? a : a + (b - a) * static_cast<double>(i) / static_cast<double>(n - 1));
  return v;
}

std::vector<double> default_delay_values() {
  std::vector<double> v;
  for (int i = 0; i <= 24; ++i) v.push_back(0.25 * i);
  return v;
}

DelayDecay delay_decay(const ProtocolConfig& config, const std::vector<double>& delays) {
  DelayDecay d;
  d.sweep = sweep(config, SweepAxis::PumpMwDelay, delays, SweepMetric::Detection, SweepMethod::Ideal);
  d.fit = fit_series(ModelKind::ExpDecay, d.sweep.values(), d.sweep.intensities());
  d.time_constant = d.fit.value("Td");
  return d;
}

Json fit_to_json(const FitResult& r) {
  Json p, e;
  for (std::size_t i = 0; i < r.names.size(); ++i) {
    p[r.names[i]] = r.parameters[i];
    e[r.names[i]] = std::isfinite(r.standard_errors[i]) ? Json(r.standard_errors[i]) : Json(nullptr);
  }
  return Json{{"model", std::string(to_string(r.kind))},
              {"parameters", p},
              {"standard_errors", e},
              {"residual_norm", r.residual_norm},
              {"converged", r.converged},
              {"iterations", r.iterations},
              {"message", r.message}};
}

void validate_manifest(const Manifest& m) {
  const ProtocolConfig c = protocol_from_manifest(m);
  const std::string type = experiment_type(m);
  if (type == "sweep") {
    keyed(m, "sweep.axis", [&] { return sweep_axis_from_string(m.get_string("sweep.axis", "")); });
    if (read_values(m, "sweep", {}).empty()) throw key_error(m, "sweep.values", "no sweep values given");
    read_metric(m);
    read_method(m, "sweep.method", SweepMethod::Full);
    read_model(m, "sweep.fit_model");
  } else if (type == "interference") {
    read_values(m, "interference", {});
    read_method(m, "interference.method", SweepMethod::Ideal);
    read_model(m, "interference.fit");
    if (m.has("interference.emulated_decay_us") && m.get_string("interference.emulated_decay_us") != "auto" &&
        !(m.get_double("interference.emulated_decay_us", 0.0) > 0.0))
      throw key_error(m, "interference.emulated_decay_us", "must be positive or 'auto'");
  } else if (type == "multiplex") {
    read_plan(m);
  } else if (type == "rotation") {
    read_rotation(m);
  } else if (type == "rap_compare") {
    for (double f : m.get_list("compare.rabi_gamma_p"))
      if (!(f > 0.0)) throw key_error(m, "compare.rabi_gamma_p", "factors must be positive");
  }
  (void)c;
}

RunReport run_experiment(const Manifest& m, const RunSettings& s) {
  validate_manifest(m);
  const ProtocolConfig c = protocol_from_manifest(m);
  RunReport rep;
  rep.experiment = experiment_type(m);
  Outputs out(s.out_dir, rep.files);
  const auto t0 = std::chrono::steady_clock::now();

  Json results;
  if (rep.experiment == "protocol") results = run_protocol_exp(c, out, s.log);
  else if (rep.experiment == "sweep") results = run_sweep_exp(m, c, out, s.log);
  else if (rep.experiment == "interference") results = run_interference_exp(m, c, out, s.log);
  else if (rep.experiment == "multiplex") results = run_multiplex_exp(m, c, out, s.log);
  else if (rep.experiment == "rotation") results = run_rotation_exp(m, c, out, s.log);
  else results = run_rap_compare(m, c, out, s.log);

  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  out.write("manifest.cfg", [&](std::ostream& os) { os << m.canonical(); });
  rep.summary["experiment"] = rep.experiment;
  rep.summary["name"] = m.get_string("experiment.name", rep.experiment);
  rep.summary["config_hash"] = m.hash_hex();
  rep.summary["code_version"] = code_version();
  rep.summary["workers"] = c.workers;
  rep.summary["wall_seconds"] = wall;
  rep.summary["results"] = results;
  Json files = Json::array();
  for (const auto& f : rep.files) files.push_back(fs::path(f).filename().string());
  files.push_back("summary.json");
  rep.summary["files"] = files;
  out.write("summary.json", [&](std::ostream& os) { os << rep.summary.dump(2) << '\n'; });
  return rep;
}

} // namespace echosim

#include "echosim/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <limits>
#include <cmath>
#include <stdexcept>

#include "echosim/units.hpp"

namespace echosim {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument(what);
}

PulseSegment make_segment(Transition tr, double t_start, const PulseConfig& p) {
  PulseSegment s;
  s.transition = tr;
  s.t_start = t_start;
  s.duration = p.duration;
  s.peak_rabi = p.peak_rabi;
  s.carrier_detuning = p.carrier_detuning;
  s.phase = p.phase;
  s.envelope = p.shape;
  return s;
}

std::vector<PulseSegment> rap_segments(const RapConfig& r, double t_start) {
  std::vector<PulseSegment> out;
  for (double offset : r.window_offsets) {
    PulseSegment s;
    s.transition = Transition::RAP;
    s.t_start = t_start;
    s.duration = r.duration;
    s.peak_rabi = r.peak_rabi;
    s.chirp_bandwidth = r.chirp_bandwidth;
    s.carrier_detuning = offset;
    s.phase = r.phase;
    s.envelope = r.shape;
    out.push_back(s);
  }
  return out;
}

// Uniform samples on [t0, t1] plus extra marks, sorted and de-duplicated.
std::vector<double> sample_grid(double t0, double t1, double dt, std::vector<double> extra) {
  std::vector<double> t;
  const auto n = static_cast<std::size_t>(std::floor((t1 - t0) / dt + 1e-9));
  t.reserve(n + 1 + extra.size());
  for (std::size_t k = 0; k <= n; ++k) t.push_back(t0 + static_cast<double>(k) * dt);
  for (double e : extra)
    if (e >= t0 && e <= t1) t.push_back(e);
  std::sort(t.begin(), t.end());
  std::vector<double> out;
  for (double x : t) {
    if (!out.empty() && x - out.back() <= 1e-9 * std::max(1.0, std::abs(x))) {
      // keep an exact extra mark in place of a nearby uniform sample
      if (std::find(extra.begin(), extra.end(), x) != extra.end()) out.back() = x;
      continue;
    }
    out.push_back(x);
  }
  return out;
}

std::size_t nearest_index(const std::vector<double>& t, double x) {
  auto it = std::lower_bound(t.begin(), t.end(), x);
  if (it == t.end()) return t.size() - 1;
  std::size_t i = static_cast<std::size_t>(it - t.begin());
  if (i > 0 && std::abs(t[i - 1] - x) < std::abs(t[i] - x)) --i;
  return i;
}

double mw_reference_time(const ProtocolConfig& c, const ProtocolTimes& t) {
  const double c1 = 0.5 * (t.mw_start + t.mw_end);
  if (c.detection.reference == DetectionReference::MwMidpoint && c.mw2)
    return 0.5 * (c1 + 0.5 * (t.mw2_start + t.mw2_end));
  return c1;
}

double last_mw_end(const ProtocolConfig& c, const ProtocolTimes& t) {
  return c.mw2 ? t.mw2_end : t.mw_end;
}

} // namespace

AtomGrid GridConfig::build() const {
  return build_grid(m_optical, m_spin, optical, spin, optical_span, spin_span);
}

double PulseConfig::area() const {
  return peak_rabi * unit_envelope_area(shape, duration);
}

void PulseConfig::set_area(double a) { peak_rabi = rabi_for_area(shape, duration, a); }

ProtocolConfig ProtocolConfig::baseline() {
  ProtocolConfig c;
  c.pump.shape = EnvelopeShape::sinc();
  c.pump.duration = 4.0;
  c.pump.set_area(units::pi / 2.0);
  c.mw.shape = EnvelopeShape::sinc();
  c.mw.duration = 2.0;
  c.mw.set_area(units::pi / 10.0);
  c.rap.duration = 60.0;
  c.rap.chirp_bandwidth = units::angular_from_mhz(1.5);
  c.rap.peak_rabi = units::angular_from_mhz(5.0 * c.gamma_p);
  return c;
}

void ProtocolConfig::validate() const {
  require(grid.m_optical >= 1 && grid.m_spin >= 1, "grid.m must be at least 1");
  grid.optical.validate();
  grid.spin.validate();
  for (const PulseConfig* p : {&pump, &mw}) {
    require(p->duration > 0.0 && std::isfinite(p->duration), "pulse durations must be positive");
    require(p->peak_rabi >= 0.0 && std::isfinite(p->peak_rabi), "Rabi frequencies must be >= 0");
  }
  if (mw2) {
    require(mw2->duration > 0.0, "mw2.duration must be positive");
    require(mw2->peak_rabi >= 0.0, "mw2 Rabi frequency must be >= 0");
  }
  require(rap.duration > 0.0, "rap.duration must be positive");
  require(rap.peak_rabi >= 0.0, "rap Rabi frequency must be >= 0");
  require(rap.chirp_bandwidth >= 0.0, "rap.chirp_mhz must be >= 0");
  require(!rap.window_offsets.empty(), "at least one RAP window is required");
  require(timing.tau0 >= 0.0, "timing.tau0 must be >= 0");
  require(timing.mw_gap >= 0.0, "timing.mw_gap must be >= 0");
  require(timing.tau2 > timing.tau1, "timing.tau2 must exceed timing.tau1");
  require(detection.sample_dt > 0.0, "output.sample_dt must be positive");
  require(detection.echo_half_window > 0.0, "output.echo_half_window must be positive");
  require(workers >= 1, "workers must be at least 1");
  require(chunk_size >= 1, "chunk size must be at least 1");
  require(gamma_p > 0.0, "rap.gamma_p_mhz must be positive");
  const ProtocolTimes t = protocol_times(*this);
  require(t.rap1_start >= last_mw_end(*this, t) - 1e-12,
          "timing.tau1 places RAP1 before the end of the MW pulse(s)");
  for (int pair = 0; pair < 3; ++pair) {
    const auto t2 = dephasing.for_pair(pair);
    require(!t2 || *t2 > 0.0, "dephasing T2 values must be positive");
  }
}

ProtocolTimes protocol_times(const ProtocolConfig& c) {
  ProtocolTimes t;
  t.pump_start = -0.5 * c.pump.duration;
  t.pump_end = 0.5 * c.pump.duration;
  t.mw_start = t.pump_end + c.timing.tau0;
  t.mw_end = t.mw_start + c.mw.duration;
  if (c.mw2) {
    t.mw2_start = t.mw_end + c.timing.mw_gap;
    t.mw2_end = t.mw2_start + c.mw2->duration;
  }
  t.rap1_start = c.timing.tau1;
  t.rap1_end = t.rap1_start + c.rap.duration;
  t.rap2_start = t.rap1_end + c.timing.tau2;
  t.rap2_end = t.rap2_start + c.rap.duration;
  t.predicted_echo = 2.0 * (c.timing.tau2 + c.rap.duration);
  const double c1 = 0.5 * (t.rap1_start + t.rap1_end), c2 = 0.5 * (t.rap2_start + t.rap2_end);
  t.rephase_delay = 2.0 * (c2 - c1);
  t.rap_echo = 2.0 * c2 - c1;
  t.t_detect = c.detection.t_detect ? *c.detection.t_detect
                                    : t.rephase_delay + mw_reference_time(c, t);
  t.t_end = c.detection.t_end > 0.0 ? c.detection.t_end : t.rap_echo + c.rap.duration;
  t.t_end = std::max({t.t_end, t.predicted_echo + c.detection.echo_half_window, t.t_detect});
  return t;
}

Sequence build_sequence(const ProtocolConfig& c, bool with_raps) {
  const ProtocolTimes t = protocol_times(c);
  Sequence s;
  s.segments.push_back(make_segment(Transition::Pump, t.pump_start, c.pump));
  s.segments.push_back(make_segment(Transition::MW, t.mw_start, c.mw));
  if (c.mw2) s.segments.push_back(make_segment(Transition::MW, t.mw2_start, *c.mw2));
  if (with_raps) {
    for (const auto& r : rap_segments(c.rap, t.rap1_start)) s.segments.push_back(r);
    for (const auto& r : rap_segments(c.rap, t.rap2_start)) s.segments.push_back(r);
  }
  s.dephasing = c.dephasing;
  std::vector<double> marks{t.mw_end, t.rap1_end, t.rap2_end, t.t_detect};
  if (c.mw2) marks.push_back(t.mw2_end);
  s.sample_times = sample_grid(t.pump_start, t.t_end, c.detection.sample_dt, marks);
  return s;
}

ProtocolResult run_protocol(const ProtocolConfig& c) {
  c.validate();
  const auto t0 = std::chrono::steady_clock::now();
  ProtocolResult r;
  r.times = protocol_times(c);
  const Sequence seq = build_sequence(c, true);
  RunOptions opt;
  opt.workers = c.workers;
  opt.chunk_size = c.chunk_size;
  const EnsembleTrajectory tr = run_ensemble(c.grid.build(), seq, c.integrator, opt);
  r.traces = make_traces(tr);
  r.max_norm_drift = tr.max_norm_drift;
  r.rk4_steps = tr.rk4_steps;

  const auto& times = r.traces.times;
  const auto& s12 = r.traces.s12;
  const double w = c.detection.echo_half_window;
  r.echo = detect_echo(times, s12, r.times.predicted_echo - w, r.times.predicted_echo + w);
  r.post_mw_amplitude = std::abs(s12[nearest_index(times, last_mw_end(c, r.times))]);
  r.detection = s12[nearest_index(times, r.times.t_detect)];
  for (std::size_t k = 0; k < times.size(); ++k) {
    if (times[k] < r.times.rap2_end) continue;
    if (std::abs(times[k] - r.echo.peak_time) <= w) continue;
    r.undesired_peak = std::max(r.undesired_peak, std::abs(s12[k]));
  }
  r.undesired_ratio = r.echo.peak_amplitude > 0.0 ? r.undesired_peak / r.echo.peak_amplitude
                                                  : std::numeric_limits<double>::infinity();
  r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

IdealResult run_ideal(const ProtocolConfig& c) {
  c.validate();
  IdealResult r;
  r.protocol = protocol_times(c);
  const ProtocolTimes& pt = r.protocol;
  const double ts = last_mw_end(c, pt);
  Sequence seq = build_sequence(c, false);
  seq.sample_times = {ts};
  seq.dephasing = {};
  RunOptions opt;
  opt.workers = c.workers;
  opt.chunk_size = c.chunk_size;
  opt.snapshot_times = {ts};
  const AtomGrid grid = c.grid.build();
  const EnsembleTrajectory tr = run_ensemble(grid, seq, c.integrator, opt);
  r.post_mw_amplitude = std::abs(tr.coherence[0][0]);

  const auto& states = tr.snapshots[0];
  std::vector<cplx> s12(grid.size());
  std::vector<double> e2(grid.size());
  for (std::size_t k = 0; k < grid.size(); ++k) {
    s12[k] = 2.0 * grid.weights[k] * std::conj(states[k][0]) * states[k][1];
    e2[k] = -grid.d13(k) + grid.d23(k);
  }
  const double w = c.detection.echo_half_window;
  r.times = sample_grid(pt.predicted_echo - w, pt.predicted_echo + w, c.detection.sample_dt,
                        {pt.t_detect});
  if (std::find(r.times.begin(), r.times.end(), pt.t_detect) == r.times.end()) {
    r.times.push_back(pt.t_detect);
    std::sort(r.times.begin(), r.times.end());
  }
  const auto t2 = c.dephasing.t2_12;
  auto field_at = [&](double t) {
    const double lag = t - ts - pt.rephase_delay;
    cplx sum{};
    for (std::size_t k = 0; k < s12.size(); ++k) sum += s12[k] * std::polar(1.0, -e2[k] * lag);
    if (t2) sum *= std::exp(-std::max(0.0, t - ts - 2.0 * c.rap.duration) / *t2);
    return sum;
  };
  r.trace.resize(r.times.size());
  for (std::size_t i = 0; i < r.times.size(); ++i) r.trace[i] = field_at(r.times[i]);
  r.echo = detect_echo(r.times, r.trace, pt.predicted_echo - w, pt.predicted_echo + w);
  r.detection = r.trace[nearest_index(r.times, pt.t_detect)];
  return r;
}

std::string_view to_string(SweepAxis a) {
  switch (a) {
    case SweepAxis::PumpMwDelay: return "pump_mw_delay";
    case SweepAxis::StorageTau2: return "storage_tau2";
    case SweepAxis::MwAmplitude: return "mw_amplitude";
    case SweepAxis::MwFrequency: return "mw_frequency";
    case SweepAxis::MwPhaseDiff: return "mw_phase_diff";
    case SweepAxis::RapPower: return "rap_power";
    case SweepAxis::PumpPower: return "pump_power";
    case SweepAxis::PumpDuration: return "pump_duration";
    case SweepAxis::MwDuration: return "mw_duration";
  }
  return "?";
}

SweepAxis sweep_axis_from_string(std::string_view s) {
  for (SweepAxis a : {SweepAxis::PumpMwDelay, SweepAxis::StorageTau2, SweepAxis::MwAmplitude,
                      SweepAxis::MwFrequency, SweepAxis::MwPhaseDiff, SweepAxis::RapPower,
                      SweepAxis::PumpPower, SweepAxis::PumpDuration, SweepAxis::MwDuration}) {
    if (to_string(a) == s) return a;
  }
  throw std::invalid_argument("unknown sweep axis '" + std::string(s) + "'");
}

std::string_view axis_unit(SweepAxis a) {
  switch (a) {
    case SweepAxis::PumpMwDelay:
    case SweepAxis::StorageTau2:
    case SweepAxis::PumpDuration:
    case SweepAxis::MwDuration: return "us";
    case SweepAxis::MwAmplitude:
    case SweepAxis::MwPhaseDiff: return "rad";
    case SweepAxis::MwFrequency: return "MHz";
    case SweepAxis::RapPower:
    case SweepAxis::PumpPower: return "kHz";
  }
  return "";
}

ProtocolConfig apply_axis(const ProtocolConfig& base, SweepAxis axis, double v) {
  require(std::isfinite(v), "sweep values must be finite");
  ProtocolConfig c = base;
  switch (axis) {
    case SweepAxis::PumpMwDelay:
      require(v >= 0.0, "pump_mw_delay must be >= 0");
      c.timing.tau0 = v;
      break;
    case SweepAxis::StorageTau2: c.timing.tau2 = v; break;
    case SweepAxis::MwAmplitude:
      require(v >= 0.0, "mw_amplitude must be >= 0");
      c.mw.set_area(v);
      break;
    case SweepAxis::MwFrequency: c.mw.carrier_detuning = units::angular_from_mhz(v); break;
    case SweepAxis::MwPhaseDiff:
      require(c.mw2.has_value(), "mw_phase_diff needs a second MW pulse");
      c.mw2->phase = c.mw.phase + v;
      break;
    case SweepAxis::RapPower:
      require(v >= 0.0, "rap_power must be >= 0");
      c.rap.peak_rabi = units::angular_from_khz(v);
      break;
    case SweepAxis::PumpPower:
      require(v >= 0.0, "pump_power must be >= 0");
      c.pump.peak_rabi = units::angular_from_khz(v);
      break;
    case SweepAxis::PumpDuration:
      require(v > 0.0, "pump_duration must be positive");
      c.pump.duration = v;
      break;
    case SweepAxis::MwDuration:
      require(v > 0.0, "mw_duration must be positive");
      c.mw.duration = v;
      break;
  }
  return c;
}

std::vector<double> SweepResult::values() const {
  std::vector<double> v;
  for (const auto& p : points) v.push_back(p.value);
  return v;
}

std::vector<double> SweepResult::amplitudes() const {
  std::vector<double> v;
  for (const auto& p : points) v.push_back(p.amplitude);
  return v;
}

std::vector<double> SweepResult::intensities() const {
  std::vector<double> v;
  for (const auto& p : points) v.push_back(p.amplitude * p.amplitude);
  return v;
}

SweepResult sweep(const ProtocolConfig& config, SweepAxis axis, const std::vector<double>& values,
                  SweepMetric metric, SweepMethod method) {
  config.validate();
  SweepResult r;
  r.axis = to_string(axis);
  r.unit = axis_unit(axis);
  r.metric = metric;
  r.method = method;
  r.base = config;
  const double base_detect = protocol_times(config).t_detect;
  for (double v : values) {
    ProtocolConfig c = apply_axis(config, axis, v);
    if (axis == SweepAxis::PumpMwDelay && !c.detection.t_detect) c.detection.t_detect = base_detect;
    SweepPoint p;
    p.value = v;
    if (method == SweepMethod::Full) {
      const ProtocolResult pr = run_protocol(c);
      p.peak_time = pr.echo.peak_time;
      p.detection = pr.detection;
      p.amplitude = metric == SweepMetric::EchoPeak ? pr.echo.peak_amplitude : std::abs(pr.detection);
    } else {
      const IdealResult ir = run_ideal(c);
      p.peak_time = ir.echo.peak_time;
      p.detection = ir.detection;
      p.amplitude = metric == SweepMetric::EchoPeak ? ir.echo.peak_amplitude : std::abs(ir.detection);
    }
    r.points.push_back(p);
  }
  return r;
}

namespace {

cplx readout(const ProtocolConfig& c, SweepMethod method) {
  return method == SweepMethod::Full ? run_protocol(c).detection : run_ideal(c).detection;
}

} // namespace

InterferenceResult interference_run(const ProtocolConfig& config, InterferenceMode mode,
                                    const std::vector<double>& values,
                                    std::optional<HomodyneSpec> homodyne, SweepMethod method) {
  if (!config.mw2) throw std::invalid_argument("interference needs a second MW pulse (mw2)");
  config.validate();
  InterferenceResult r;
  r.mode = mode;
  // Hold the detection time fixed across the sweep.
  ProtocolConfig base = config;
  base.detection.t_detect = protocol_times(config).t_detect;
  const cplx lo = homodyne ? std::polar(homodyne->amplitude, homodyne->phase) : cplx{};

  {
    ProtocolConfig only1 = base;
    only1.mw2->peak_rabi = 0.0;
    r.field_mw1 = readout(only1, method);
    ProtocolConfig only2 = base;
    only2.mw.peak_rabi = 0.0;
    r.field_mw2 = readout(only2, method);
  }
  for (double v : values) {
    require(std::isfinite(v), "interference sweep values must be finite");
    ProtocolConfig c = base;
    if (mode == InterferenceMode::Phase)
      c.mw2->phase = c.mw.phase + v;
    else
      c.mw2->carrier_detuning = units::angular_from_mhz(v);
    InterferencePoint p;
    p.value = v;
    p.field = readout(c, method);
    p.amplitude = std::abs(p.field + lo);
    p.intensity = p.amplitude * p.amplitude;
    r.points.push_back(p);
  }
  return r;
}

ProtocolConfig emulate_mw2_decay(const ProtocolConfig& config, double t_decay) {
  if (!config.mw2) throw std::invalid_argument("decay emulation needs a second MW pulse (mw2)");
  require(std::isfinite(t_decay) && t_decay > 0.0, "emulated decay time must be positive");
  const ProtocolTimes t = protocol_times(config);
  ProtocolConfig c = config;
  c.mw2->peak_rabi *= std::exp(-(t.mw2_start - t.mw_start) / (2.0 * t_decay));
  return c;
}

MultiplexPlan MultiplexPlan::from_bits(std::string_view bits, double spacing) {
  MultiplexPlan p;
  p.spacing = spacing;
  for (char b : bits) {
    require(b == '0' || b == '1', "bit strings may only contain 0 and 1");
    MultiplexMode m;
    m.mw_on = b == '1';
    p.modes.push_back(m);
  }
  return p;
}

MultiplexPlan MultiplexPlan::uniform(std::size_t n, double spacing) {
  return from_bits(std::string(n, '1'), spacing);
}

MultiplexResult multiplex_run(const ProtocolConfig& c, const MultiplexPlan& plan) {
  c.validate();
  const std::size_t n = plan.modes.size();
  require(n >= 1, "multiplex plan needs at least one mode");
  const double need = std::max(2.0 * c.pump.duration,
                               c.pump.duration + c.timing.tau0 + c.mw.duration);
  require(plan.spacing >= need - 1e-12,
          "multiplex modes overlap: spacing must be at least " + std::to_string(need) + " us");

  const ProtocolTimes t = protocol_times(c);
  Sequence seq;
  std::vector<double> mw_centres;
  double last_end = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double origin = static_cast<double>(k) * plan.spacing;
    PulseConfig pump = c.pump;
    pump.carrier_detuning += plan.modes[k].pump_offset;
    seq.segments.push_back(make_segment(Transition::Pump, origin + t.pump_start, pump));
    PulseConfig mw = c.mw;
    mw.carrier_detuning += plan.modes[k].mw_offset;
    if (!plan.modes[k].mw_on) mw.peak_rabi = 0.0;
    const double mw_start = origin + t.mw_start;
    if (plan.modes[k].mw_on) seq.segments.push_back(make_segment(Transition::MW, mw_start, mw));
    mw_centres.push_back(mw_start + 0.5 * c.mw.duration);
    last_end = std::max(last_end, mw_start + c.mw.duration);
  }
  require(t.rap1_start >= last_end - 1e-12,
          "timing.tau1 places RAP1 before the last multiplexed MW pulse");
  for (const auto& r : rap_segments(c.rap, t.rap1_start)) seq.segments.push_back(r);
  for (const auto& r : rap_segments(c.rap, t.rap2_start)) seq.segments.push_back(r);
  seq.dephasing = c.dephasing;

  MultiplexResult res;
  for (double mc : mw_centres) res.expected_times.push_back(t.rephase_delay + mc);
  const double t_end = std::max(t.rap2_end, res.expected_times.back() + plan.spacing);
  seq.sample_times = sample_grid(t.pump_start, t_end, c.detection.sample_dt, res.expected_times);

  RunOptions opt;
  opt.workers = c.workers;
  opt.chunk_size = c.chunk_size;
  const EnsembleTrajectory tr = run_ensemble(c.grid.build(), seq, c.integrator, opt);
  res.traces = make_traces(tr);
  res.max_norm_drift = tr.max_norm_drift;
  for (double te : res.expected_times) {
    res.echoes.push_back(detect_echo(res.traces.times, res.traces.s12, te - 0.5 * plan.spacing,
                                     te + 0.5 * plan.spacing));
    res.detection.push_back(res.traces.s12[nearest_index(res.traces.times, te)]);
  }
  return res;
}

std::vector<double> bin_amplitudes(const MultiplexResult& r, const Discriminator& d) {
  require(d.centres.size() == r.echoes.size(), "discriminator calibrated for a different mode count");
  std::vector<double> out;
  for (double c : d.centres) {
    double best = 0.0;
    for (std::size_t i = 0; i < r.traces.times.size(); ++i) {
      const double t = r.traces.times[i];
      if (t >= c - d.half_width && t <= c + d.half_width) best = std::max(best, std::abs(r.traces.s12[i]));
    }
    out.push_back(best);
  }
  return out;
}

Discriminator calibrate_discriminator(const ProtocolConfig& c, std::size_t n, double spacing) {
  const auto on = multiplex_run(c, MultiplexPlan::from_bits(std::string(n, '1'), spacing));
  const auto off = multiplex_run(c, MultiplexPlan::from_bits(std::string(n, '0'), spacing));
  Discriminator d;
  d.half_width = 0.25 * spacing;
  for (const auto& e : on.echoes) d.centres.push_back(e.peak_time);
  d.on_levels = bin_amplitudes(on, d);
  d.off_levels = bin_amplitudes(off, d);
  double mon = 0.0, moff = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    mon += d.on_levels[k];
    moff += d.off_levels[k];
  }
  d.threshold = 0.5 * (mon + moff) / static_cast<double>(n);
  return d;
}

std::string decode_bits(const MultiplexResult& r, const Discriminator& d) {
  const auto a = bin_amplitudes(r, d);
  std::string bits;
  for (double x : a) bits.push_back(x > d.threshold ? '1' : '0');
  return bits;
}

RotationDemoResult ensemble_rotation_demo(const RotationDemoConfig& c) {
  c.spin.validate();
  require(c.m >= 2, "rotation demo needs m >= 2");
  for (const MwSpec* p : {&c.pulse1, &c.pulse2})
    require(p->duration > 0.0 && std::isfinite(p->area), "rotation demo pulses need duration > 0");
  const AtomGrid grid = build_spin_line(c.m, c.spin, c.span, 0.0);
  ThreeLevelState excited;
  excited.c = {cplx{}, cplx{}, cplx{1.0, 0.0}};

  auto segment = [](const MwSpec& s, double t0) {
    PulseSegment seg;
    seg.transition = Transition::MW;
    seg.t_start = t0;
    seg.duration = s.duration;
    seg.peak_rabi = rabi_for_area(s.shape, s.duration, s.area);
    seg.carrier_detuning = s.detuning;
    seg.phase = s.phase;
    seg.envelope = s.shape;
    return seg;
  };
  const double t_total = c.pulse1.duration + c.pulse2.duration;
  auto run = [&](const MwSpec& p2, const std::vector<double>& snaps) {
    Sequence s;
    s.segments = {segment(c.pulse1, 0.0), segment(p2, c.pulse1.duration)};
    s.sample_times = {0.0, t_total};
    RunOptions opt;
    opt.initial = excited;
    opt.snapshot_times = snaps;
    return run_ensemble(grid, s, c.integrator, opt);
  };

  RotationDemoResult r;
  r.reference_time = c.reference_time.value_or(0.5 * t_total);
  require(std::isfinite(r.reference_time), "rotation demo reference time must be finite");
  // Free precession of conj(c2) c3 goes as exp(+i d23 t); undo it back to
  // the reference time.
  auto referred = [&](const std::vector<ThreeLevelState>& states) {
    const double back = t_total - r.reference_time;
    cplx sum{};
    for (std::size_t k = 0; k < grid.size(); ++k)
      sum += grid.weights[k] * 2.0 * std::conj(states[k][1]) * states[k][2] *
             std::polar(1.0, -grid.d23(k) * back);
    return sum;
  };
  std::vector<double> snaps;
  const std::size_t np = std::max<std::size_t>(c.path_points, 2);
  for (std::size_t i = 0; i < np; ++i)
    snaps.push_back(t_total * static_cast<double>(i) / static_cast<double>(np - 1));
  const auto main = run(c.pulse2, snaps);
  r.raw_coherence = main.coherence.back()[2];
  r.coherence = referred(main.snapshots.back());

  const std::size_t na = std::min(c.path_atoms, grid.size());
  for (std::size_t a = 0; a < na; ++a) {
    const std::size_t k = na == 1 ? grid.size() / 2 : a * (grid.size() - 1) / (na - 1);
    for (std::size_t s = 0; s < snaps.size(); ++s) {
      BlochPathPoint p;
      p.atom = k;
      p.delta23 = grid.d23(k);
      p.time = snaps[s];
      p.xyz = bloch_subvector(main.snapshots[s][k], 2, 3);
      r.paths.push_back(p);
    }
  }
  for (double d : c.detunings) {
    MwSpec p2 = c.pulse2;
    p2.detuning = d;
    r.detunings.push_back(d);
    r.magnitude.push_back(std::abs(referred(run(p2, {t_total}).snapshots.back())));
  }
  return r;
}

} // namespace echosim

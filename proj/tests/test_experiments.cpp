#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "echosim/experiments.hpp"
#include "echosim/fitting.hpp"
#include "echosim/units.hpp"

using namespace echosim;
using units::pi;

namespace {

std::vector<double> linspace(double a, double b, int n) {
  std::vector<double> v;
  for (int i = 0; i < n; ++i) v.push_back(a + (b - a) * i / (n - 1));
  return v;
}

double window_max(const TraceSet& t, double a, double b) {
  double m = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i)
    if (t.times[i] >= a && t.times[i] <= b) m = std::max(m, std::abs(t.s12[i]));
  return m;
}

ProtocolConfig small(std::size_t m = 40) {
  ProtocolConfig c = ProtocolConfig::baseline();
  c.grid.m_optical = c.grid.m_spin = m;
  return c;
}

} // namespace

TEST_CASE("protocol timing") {
  const ProtocolConfig c = ProtocolConfig::baseline();
  const ProtocolTimes t = protocol_times(c);
  CHECK(t.pump_start == -2.0);
  CHECK(t.mw_start == 2.0);
  CHECK(t.rap1_start == 50.0);
  CHECK(t.rap2_start == 280.0);
  CHECK(t.predicted_echo == 460.0);
  CHECK(t.rephase_delay == 460.0);
  CHECK(t.t_detect == 463.0);
  ProtocolConfig m = c;
  m.mw2 = m.mw;
  m.detection.reference = DetectionReference::MwMidpoint;
  CHECK(protocol_times(m).t_detect == 464.0);
}

TEST_CASE("echo moves with the storage time") {
  ProtocolConfig c = ProtocolConfig::baseline();
  c.timing.tau2 = 230.0;
  const ProtocolResult r = run_protocol(c);
  CHECK(r.times.predicted_echo == 580.0);
  CHECK(std::abs(r.echo.peak_time - 580.0) <= 4.0);
  // the coherence created at the MW centre (t = 3) rephases after 2 (tau2 + tauR)
  CHECK(std::abs(r.echo.peak_time - 583.0) <= 0.5);
  CHECK(r.max_norm_drift <= 1e-9);
}

TEST_CASE("no MW drive leaves no echo") {
  ProtocolConfig c = ProtocolConfig::baseline();
  c.mw.peak_rabi = 0.0;
  c.detection.echo_half_window = 10.0;
  const ProtocolResult r = run_protocol(c);
  CHECK(window_max(r.traces, 450.0, 470.0) <= 1e-6);
  CHECK(r.echo.peak_amplitude <= 1e-6);
}

TEST_CASE("MW phase is carried to the readout") {
  ProtocolConfig c = small();
  const cplx a = run_protocol(c).detection;
  for (double phi : {0.7, -2.0}) {
    c.mw.phase = phi;
    const cplx b = run_protocol(c).detection;
    CHECK(std::abs(std::arg(b / a) - phi) < 1e-4);
    CHECK(std::abs(b) == doctest::Approx(std::abs(a)).epsilon(1e-6));
  }
}

TEST_CASE("ideal rephasing agrees with the full protocol") {
  const ProtocolConfig c = small();
  const ProtocolResult full = run_protocol(c);
  const IdealResult ideal = run_ideal(c);
  CHECK(std::abs(ideal.echo.peak_time - full.echo.peak_time) < 1.0);
  CHECK(ideal.post_mw_amplitude == doctest::Approx(full.post_mw_amplitude).epsilon(1e-6));
  // the RAP pair is not perfect, so the full echo is within a few percent
  CHECK(std::abs(full.detection) == doctest::Approx(std::abs(ideal.detection)).epsilon(0.1));
}

TEST_CASE("out-of-phase MW pulses cancel with the midpoint reference") {
  ProtocolConfig c = ProtocolConfig::baseline();
  c.mw2 = c.mw;
  c.detection.reference = DetectionReference::MwMidpoint;
  for (auto method : {SweepMethod::Ideal, SweepMethod::Full}) {
    const InterferenceResult r = interference_run(c, InterferenceMode::Phase, {0.0, pi}, std::nullopt, method);
    CHECK(r.points[1].intensity <= 0.02 * r.points[0].intensity);
    // constructive: both fields add, 4x a single pulse
    CHECK(r.points[0].intensity == doctest::Approx(4.0 * std::norm(r.field_mw1)).epsilon(0.02));
    CHECK(std::norm(r.field_mw2) == doctest::Approx(std::norm(r.field_mw1)).epsilon(0.01));
  }
}

TEST_CASE("unequal amplitudes follow the visibility formula") {
  ProtocolConfig c = small(60);
  c.mw2 = c.mw;
  c.mw2->set_area(0.4 * c.mw.area());
  c.detection.reference = DetectionReference::MwMidpoint;
  const InterferenceResult r = interference_run(c, InterferenceMode::Phase, linspace(-pi, pi, 37));
  double hi = 0.0, lo = 1e300;
  for (const auto& p : r.points) {
    hi = std::max(hi, p.intensity);
    lo = std::min(lo, p.intensity);
  }
  const double v = visibility(std::norm(r.field_mw1), std::norm(r.field_mw2));
  CHECK((hi - lo) / (hi + lo) == doctest::Approx(v).epsilon(0.02));
}

TEST_CASE("emulated decay scales the second pulse") {
  ProtocolConfig c = ProtocolConfig::baseline();
  c.mw2 = c.mw;
  c.timing.mw_gap = 1.0;
  const ProtocolConfig d = emulate_mw2_decay(c, 0.6);
  CHECK(d.mw2->peak_rabi == doctest::Approx(c.mw.peak_rabi * std::exp(-3.0 / 1.2)));
  CHECK(d.mw.peak_rabi == c.mw.peak_rabi);
  CHECK_THROWS_AS(emulate_mw2_decay(c, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(emulate_mw2_decay(ProtocolConfig::baseline(), 1.0), std::invalid_argument);
}

TEST_CASE("storage sweep recovers T2") {
  ProtocolConfig c = ProtocolConfig::baseline();
  c.dephasing.t2_12 = 475.0;
  const SweepResult s = sweep(c, SweepAxis::StorageTau2, linspace(170, 670, 11), SweepMetric::EchoPeak,
                              SweepMethod::Ideal);
  FitData d;
  for (const auto& p : s.points) {
    d.x.push_back(2.0 * (p.value + c.rap.duration));
    d.y.push_back(p.amplitude * p.amplitude);
  }
  const FitModel m = FitModel::make(ModelKind::ExpDecay2T2);
  const FitResult f = nlls_solve(m, d, initial_guess(m, d));
  CHECK(f.converged);
  CHECK(f.value("T2") == doctest::Approx(475.0).epsilon(0.05));
}

TEST_CASE("echo amplitude is linear in a small MW area") {
  const SweepResult s = sweep(ProtocolConfig::baseline(), SweepAxis::MwAmplitude, linspace(0.02, pi / 10, 12),
                              SweepMetric::EchoPeak, SweepMethod::Ideal);
  CHECK(linear_r_squared(s.values(), s.amplitudes()) >= 0.999);
  CHECK(s.unit == "rad");
}

TEST_CASE("MW frequency response traces the spin line") {
  ProtocolConfig c = ProtocolConfig::baseline();
  c.grid.m_optical = 1;
  c.grid.m_spin = 201;
  c.grid.spin.fwhm = 0.642;
  c.grid.spin_span = 10.0;
  // a long square pulse resolves the line
  c.mw.shape = EnvelopeShape::square();
  c.mw.duration = 20.0;
  c.mw.set_area(pi / 10);
  const SweepResult s = sweep(c, SweepAxis::MwFrequency, linspace(-1.5, 1.5, 31), SweepMetric::Detection,
                              SweepMethod::Ideal);
  FitData d{s.values(), s.amplitudes(), {}};
  const FitModel m = FitModel::make(ModelKind::Lorentzian);
  const FitResult f = nlls_solve(m, d, initial_guess(m, d));
  CHECK(f.converged);
  CHECK(f.value("Gamma") == doctest::Approx(0.642).epsilon(0.15));
  CHECK(std::abs(f.value("x0")) < 0.01);
}

TEST_CASE("pump-MW delay lowers the fixed-time readout") {
  ProtocolConfig c = ProtocolConfig::baseline();
  c.grid.m_optical = 15;
  c.grid.m_spin = 201;
  c.grid.spin.fwhm = 0.6;
  c.grid.spin_span = 10.0;
  const SweepResult s = sweep(c, SweepAxis::PumpMwDelay, {0.0, 0.5, 1.0, 2.0}, SweepMetric::Detection,
                              SweepMethod::Ideal);
  for (std::size_t i = 1; i < s.points.size(); ++i) CHECK(s.points[i].amplitude < s.points[i - 1].amplitude);
}

TEST_CASE("axis application") {
  const ProtocolConfig c = ProtocolConfig::baseline();
  CHECK(apply_axis(c, SweepAxis::StorageTau2, 300).timing.tau2 == 300.0);
  CHECK(apply_axis(c, SweepAxis::PumpMwDelay, 1.5).timing.tau0 == 1.5);
  CHECK(apply_axis(c, SweepAxis::MwAmplitude, 0.2).mw.area() == doctest::Approx(0.2));
  CHECK(apply_axis(c, SweepAxis::MwFrequency, 0.25).mw.carrier_detuning == doctest::Approx(units::two_pi * 0.25));
  for (auto a : {SweepAxis::PumpMwDelay, SweepAxis::StorageTau2, SweepAxis::MwAmplitude, SweepAxis::MwFrequency,
                 SweepAxis::MwPhaseDiff, SweepAxis::RapPower, SweepAxis::PumpPower, SweepAxis::PumpDuration,
                 SweepAxis::MwDuration})
    CHECK(sweep_axis_from_string(to_string(a)) == a);
  CHECK_THROWS_AS(sweep_axis_from_string("colour"), std::invalid_argument);
}

TEST_CASE("invalid protocol settings") {
  ProtocolConfig c = ProtocolConfig::baseline();
  c.timing.tau1 = 1.0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = ProtocolConfig::baseline();
  c.timing.tau2 = 10.0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = ProtocolConfig::baseline();
  c.rap.window_offsets.clear();
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  CHECK_THROWS_AS(interference_run(ProtocolConfig::baseline(), InterferenceMode::Phase, {0.0}), std::invalid_argument);
}

TEST_CASE("rotation demo: two pulses add in phase and cancel out of phase") {
  RotationDemoConfig r;
  r.path_atoms = 3;
  r.path_points = 5;
  for (double f : {-3.0, -1.0, 0.0, 1.0, 3.0}) r.detunings.push_back(units::angular_from_mhz(f));
  const RotationDemoResult in = ensemble_rotation_demo(r);
  RotationDemoConfig rp = r;
  rp.pulse2.phase = pi;
  const RotationDemoResult out = ensemble_rotation_demo(rp);
  RotationDemoConfig single = r;
  single.pulse2.area = 0.0;
  const RotationDemoResult one = ensemble_rotation_demo(single);

  CHECK(std::abs(out.coherence) <= 0.01 * std::abs(in.coherence));
  CHECK(std::abs(in.coherence) == doctest::Approx(2.0 * std::abs(one.coherence)).epsilon(0.05));
  // the in-phase response peaks at zero detuning and falls toward the single-pulse level
  REQUIRE(in.magnitude.size() == 5);
  CHECK(in.magnitude[2] > in.magnitude[1]);
  CHECK(in.magnitude[2] > in.magnitude[3]);
  CHECK(in.magnitude[0] < 0.65 * in.magnitude[2]);
  CHECK(in.magnitude[4] < 0.65 * in.magnitude[2]);
  CHECK(in.magnitude[0] == doctest::Approx(in.magnitude[4]).epsilon(1e-6));
  CHECK(in.paths.size() == 3 * 5);
  for (const auto& p : in.paths) {
    const double n = p.xyz[0] * p.xyz[0] + p.xyz[1] * p.xyz[1] + p.xyz[2] * p.xyz[2];
    CHECK(n == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("multiplex plans") {
  const MultiplexPlan p = MultiplexPlan::from_bits("1010", 10.0);
  REQUIRE(p.modes.size() == 4);
  CHECK(p.modes[0].mw_on);
  CHECK(!p.modes[1].mw_on);
  CHECK(MultiplexPlan::uniform(3, 10.0).modes.size() == 3);
  CHECK_THROWS_AS(MultiplexPlan::from_bits("10a1", 10.0), std::invalid_argument);

  ProtocolConfig c = ProtocolConfig::baseline();
  CHECK_THROWS_AS(multiplex_run(c, MultiplexPlan::uniform(3, 3.0)), std::invalid_argument);
  c.timing.tau1 = 50.0;
  CHECK_THROWS_AS(multiplex_run(c, MultiplexPlan::uniform(6, 10.0)), std::invalid_argument);
}

TEST_CASE("multiplexed modes come back first in, first out") {
  ProtocolConfig c = ProtocolConfig::baseline();
  c.grid.m_optical = 201;
  c.grid.m_spin = 121;
  c.grid.optical = {ProfileKind::Gaussian, 0.4, 0.0};
  c.grid.optical_span = 2.0;
  c.grid.spin = {ProfileKind::Lorentzian, 0.2, 0.0};
  c.grid.spin_span = 6.0;
  c.pump.set_area(0.1 * pi);
  c.integrator.oversampling = 5.0;
  c.integrator.dt_max = 0.05;
  c.integrator.tol = 1e-8;
  const double spacing = 10.0;
  c.timing.tau1 = 4 * spacing + 6.0;

  const MultiplexResult all = multiplex_run(c, MultiplexPlan::uniform(3, spacing));
  REQUIRE(all.echoes.size() == 3);
  for (std::size_t k = 0; k < 3; ++k) {
    CHECK(std::abs(all.echoes[k].peak_time - all.expected_times[k]) < 0.25 * spacing);
    if (k > 0) CHECK(all.echoes[k].peak_time > all.echoes[k - 1].peak_time);
  }

  const Discriminator d = calibrate_discriminator(c, 4, spacing);
  CHECK(d.centres.size() == 4);
  CHECK(d.half_width == 0.25 * spacing);
  for (double on : d.on_levels) CHECK(on > d.threshold);
  for (double off : d.off_levels) CHECK(off < d.threshold);
  const MultiplexResult r = multiplex_run(c, MultiplexPlan::from_bits("1010", spacing));
  CHECK(decode_bits(r, d) == "1010");
  CHECK(bin_amplitudes(r, d).size() == 4);
}

#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "echosim/dynamics.hpp"
#include "echosim/ensemble.hpp"
#include "echosim/observables.hpp"
#include "echosim/pulsegen.hpp"

namespace echosim {

struct GridConfig {
  std::size_t m_optical = 150;
  std::size_t m_spin = 150;
  BroadeningProfile optical{ProfileKind::Gaussian, 0.03, 0.0};
  BroadeningProfile spin{ProfileKind::Lorentzian, 0.03, 0.0};
  /// Half-width in FWHM units; non-positive selects the profile default.
  double optical_span = 0.0;
  double spin_span = 0.0;

  AtomGrid build() const;
};

/// Pump or MW pulse. Rabi frequency and detuning in rad/us.
struct PulseConfig {
  EnvelopeShape shape = EnvelopeShape::sinc();
  double duration = 1.0;
  double peak_rabi = 0.0;
  double carrier_detuning = 0.0;
  double phase = 0.0;

  /// Signed pulse area (rad).
  double area() const;
  void set_area(double area);
};

struct RapConfig {
  EnvelopeShape shape = EnvelopeShape::sinc();
  double duration = 60.0;
  double peak_rabi = 0.0;
  double chirp_bandwidth = 0.0;
  double phase = 0.0;
  /// Carrier offsets (rad/us) of superposed RAP windows; one entry per window.
  std::vector<double> window_offsets{0.0};
};

/// Protocol timing (us). The origin is the pump centre. tau0 runs from pump
/// end to MW start, tau1 from the origin to RAP1 start and tau2 from RAP1 end
/// to RAP2 start; the echo is expected at 2 (tau2 + tauR).
struct TimingConfig {
  double tau0 = 0.0;
  double tau1 = 50.0;
  double tau2 = 170.0;
  /// Spacing between MW1 end and MW2 start when a second MW pulse is used.
  double mw_gap = 0.0;
};

enum class DetectionReference { Mw1, MwMidpoint };

struct DetectionConfig {
  /// Half-width of the echo search window around the expected echo (us).
  double echo_half_window = 20.0;
  double sample_dt = 0.5;
  /// Last sample time; non-positive picks the RAP echo time plus tauR.
  double t_end = 0.0;
  /// Fixed detection time for the linear (complex) readout. When unset it is
  /// 2 (tau2 + tauR) plus the reference MW centre.
  std::optional<double> t_detect;
  DetectionReference reference = DetectionReference::Mw1;
};

struct ProtocolConfig {
  GridConfig grid;
  PulseConfig pump;
  PulseConfig mw;
  std::optional<PulseConfig> mw2;
  RapConfig rap;
  TimingConfig timing;
  DephasingTimes dephasing;
  IntegratorControl integrator;
  DetectionConfig detection;
  unsigned workers = 1;
  std::size_t chunk_size = 256;
  /// Pump-transition linewidth used as the RAP Rabi unit (MHz).
  double gamma_p = 0.03;

  /// pi/2 sinc pump over 4 us, pi/10 sinc MW over 2 us, sinc RAPs of 60 us
  /// with 1.5 MHz chirp at 5 Gamma_P, 30 kHz lines, m = 150.
  static ProtocolConfig baseline();
  void validate() const;
};

struct ProtocolTimes {
  double pump_start = 0, pump_end = 0;
  double mw_start = 0, mw_end = 0;
  double mw2_start = 0, mw2_end = 0;
  double rap1_start = 0, rap1_end = 0, rap2_start = 0, rap2_end = 0;
  double predicted_echo = 0;
  /// 2 x (RAP2 centre - RAP1 centre): delay from a coherence reference time
  /// to its rephasing.
  double rephase_delay = 0;
  double rap_echo = 0;
  double t_detect = 0;
  double t_end = 0;
};

ProtocolTimes protocol_times(const ProtocolConfig& config);

/// Pump, MW(s) and, when `with_raps`, the RAP pair (one segment per window).
Sequence build_sequence(const ProtocolConfig& config, bool with_raps = true);

struct ProtocolResult {
  TraceSet traces;
  EchoMetric echo;
  ProtocolTimes times;
  /// |<s12>| at the end of the last MW pulse.
  double post_mw_amplitude = 0.0;
  /// Complex <s12> at the fixed detection time.
  cplx detection{};
  /// Largest |<s12>| after RAP2 outside the main echo window, absolute and
  /// relative to the main echo peak.
  double undesired_peak = 0.0;
  double undesired_ratio = 0.0;
  double max_norm_drift = 0.0;
  std::size_t rk4_steps = 0;
  double wall_seconds = 0.0;
};

ProtocolResult run_protocol(const ProtocolConfig& config);

/// Ideal-rephasing readout: the pump and MW pulses are integrated, then the
/// RAP pair is replaced by a perfect swap pair at the RAP centres, so <s12>
/// after RAP2 is the free coherence evaluated with time reversed about the
/// rephasing point. Much cheaper than the full run for wide spin lines.
struct IdealResult {
  std::vector<double> times;
  std::vector<cplx> trace;
  EchoMetric echo;
  cplx detection{};
  ProtocolTimes protocol;
  double post_mw_amplitude = 0.0;
};

IdealResult run_ideal(const ProtocolConfig& config);

enum class SweepAxis {
  PumpMwDelay,
  StorageTau2,
  MwAmplitude,
  MwFrequency,
  MwPhaseDiff,
  RapPower,
  PumpPower,
  PumpDuration,
  MwDuration
};

std::string_view to_string(SweepAxis a);
SweepAxis sweep_axis_from_string(std::string_view s);
/// Unit label of the axis values as given to sweep().
std::string_view axis_unit(SweepAxis a);

enum class SweepMetric { EchoPeak, Detection };
enum class SweepMethod { Full, Ideal };

/// Returns a copy of `config` with `axis` set to `value` (axis units: us, rad,
/// MHz or kHz as reported by axis_unit()).
ProtocolConfig apply_axis(const ProtocolConfig& config, SweepAxis axis, double value);

struct SweepPoint {
  double value = 0.0;
  /// Metric value: echo peak amplitude or |detection|.
  double amplitude = 0.0;
  double peak_time = 0.0;
  cplx detection{};
};

struct SweepResult {
  std::string axis;
  std::string unit;
  SweepMetric metric = SweepMetric::EchoPeak;
  SweepMethod method = SweepMethod::Full;
  std::vector<SweepPoint> points;
  ProtocolConfig base;

  std::vector<double> values() const;
  std::vector<double> amplitudes() const;
  std::vector<double> intensities() const;
};

/// Re-runs the protocol per value. For PumpMwDelay the detection time is held
/// at the base configuration's value so the readout sees the echo move away.
SweepResult sweep(const ProtocolConfig& config, SweepAxis axis, const std::vector<double>& values,
                  SweepMetric metric = SweepMetric::EchoPeak,
                  SweepMethod method = SweepMethod::Full);

enum class InterferenceMode { Phase, Frequency };

/// Local-oscillator field added to the complex readout before detection.
struct HomodyneSpec {
  double amplitude = 0.0;
  double phase = 0.0;
};

struct InterferencePoint {
  double value = 0.0;
  cplx field{};
  double amplitude = 0.0;
  double intensity = 0.0;
};

struct InterferenceResult {
  InterferenceMode mode = InterferenceMode::Phase;
  std::vector<InterferencePoint> points;
  /// Readouts with only MW1 and only MW2 active.
  cplx field_mw1{};
  cplx field_mw2{};
};

/// Two back-to-back MW pulses. Phase mode sweeps phi2 - phi1 (rad); frequency
/// mode sweeps the MW2 carrier offset (MHz) at the configured phase difference.
/// The readout is the complex <s12> at the fixed detection time.
InterferenceResult interference_run(const ProtocolConfig& config, InterferenceMode mode,
                                    const std::vector<double>& values,
                                    std::optional<HomodyneSpec> homodyne = std::nullopt,
                                    SweepMethod method = SweepMethod::Ideal);

/// Scales the MW2 drive by exp(-dt / (2 t_decay)), dt being the MW1-to-MW2
/// start delay, so its readout intensity carries an imposed storage decay.
ProtocolConfig emulate_mw2_decay(const ProtocolConfig& config, double t_decay);

struct MultiplexMode {
  double pump_offset = 0.0; // rad/us
  bool mw_on = true;
  double mw_offset = 0.0; // rad/us
};

/// n temporal modes stored under one RAP pair. Mode k's pump is centred at
/// k * spacing; its MW follows after tau0.
struct MultiplexPlan {
  std::vector<MultiplexMode> modes;
  double spacing = 10.0;

  static MultiplexPlan from_bits(std::string_view bits, double spacing);
  static MultiplexPlan uniform(std::size_t n, double spacing);
};

struct MultiplexResult {
  std::vector<double> expected_times;
  std::vector<EchoMetric> echoes;
  std::vector<cplx> detection;
  TraceSet traces;
  double max_norm_drift = 0.0;
};

MultiplexResult multiplex_run(const ProtocolConfig& config, const MultiplexPlan& plan);

/// Bins centred on the echo peaks of an all-on calibration run, and one level
/// halfway between the mean all-on and mean all-off bin amplitudes.
struct Discriminator {
  std::vector<double> centres;
  double half_width = 0.0;
  double threshold = 0.0;
  std::vector<double> on_levels;
  std::vector<double> off_levels;
};

Discriminator calibrate_discriminator(const ProtocolConfig& config, std::size_t n, double spacing);

/// Largest |<s12>| within each bin.
std::vector<double> bin_amplitudes(const MultiplexResult& result, const Discriminator& d);

/// One bit per mode: bin amplitude above the threshold.
std::string decode_bits(const MultiplexResult& result, const Discriminator& d);

/// MW pulse on the spin transition of the rotation demo.
struct MwSpec {
  EnvelopeShape shape = EnvelopeShape::square();
  double duration = 2.0;
  double area = 0.31415926535897931; // pi/10
  double detuning = 0.0;             // rad/us
  double phase = 0.0;
};

struct RotationDemoConfig {
  BroadeningProfile spin{ProfileKind::Lorentzian, 0.6, 0.0};
  std::size_t m = 201;
  double span = 10.0;
  MwSpec pulse1;
  MwSpec pulse2;
  /// Pulse-2 detunings (rad/us) at which the final collective coherence is
  /// reported.
  std::vector<double> detunings;
  /// Number of atoms whose Bloch paths are exported and points per path.
  std::size_t path_atoms = 9;
  std::size_t path_points = 41;
  /// Time to which the reported coherence is referred back by undoing each
  /// atom's free precession, as a rephasing readout would. Unset means the
  /// midpoint of the two-pulse block.
  std::optional<double> reference_time;
  IntegratorControl integrator;
};

struct BlochPathPoint {
  std::size_t atom = 0;
  double delta23 = 0.0;
  double time = 0.0;
  std::array<double, 3> xyz{};
};

struct RotationDemoResult {
  double reference_time = 0.0;
  /// <s23> after both pulses, referred to the reference time.
  cplx coherence{};
  /// <s23> as it stands at the end of pulse 2.
  cplx raw_coherence{};
  /// Referred |<s23>| as a function of pulse-2 detuning.
  std::vector<double> detunings;
  std::vector<double> magnitude;
  std::vector<BlochPathPoint> paths;
};

/// Two sequential MW rotations on a Lorentzian spin line with every atom
/// starting in |3> (pumped excited manifold).
RotationDemoResult ensemble_rotation_demo(const RotationDemoConfig& config);

} // namespace echosim

#pragma once

#include <string>
#include <string_view>

namespace echosim {

enum class EnvelopeKind { Square, Sinc, Gaussian };

/// Temporal envelope of a drive pulse, hard-truncated to its segment.
/// For Gaussian, `gaussian_sigma_fraction` is sigma in units of the duration.
struct EnvelopeShape {
  EnvelopeKind kind = EnvelopeKind::Sinc;
  double gaussian_sigma_fraction = 0.2;

  static EnvelopeShape square() { return {EnvelopeKind::Square, 0.2}; }
  static EnvelopeShape sinc() { return {EnvelopeKind::Sinc, 0.2}; }
  static EnvelopeShape gaussian(double sigma_fraction = 0.2) {
    return {EnvelopeKind::Gaussian, sigma_fraction};
  }
};

/// Which pair of levels a segment drives. Pump couples |1>-|3>, MW couples
/// |2>-|3>, RAP couples |1>-|2>. Gap is an explicit free-evolution interval.
enum class Transition { Pump, MW, RAP, Gap };

/// One timed drive interval. Times in us, frequencies in rad/us.
///
/// `carrier_detuning` is the offset of the drive carrier from the ensemble
/// centre; the drive is resonant with atoms whose detuning coordinate on that
/// transition equals the offset. `chirp_bandwidth` is only meaningful on RAP
/// segments, where the instantaneous frequency sweeps from -chirp to +chirp.
struct PulseSegment {
  Transition transition = Transition::Gap;
  double t_start = 0.0;
  double duration = 0.0;
  double peak_rabi = 0.0;
  double carrier_detuning = 0.0;
  double phase = 0.0;
  double chirp_bandwidth = 0.0;
  EnvelopeShape envelope{};

  double t_end() const { return t_start + duration; }
  double center() const { return t_start + 0.5 * duration; }
  bool covers(double t) const { return t >= t_start && t <= t_end(); }

  /// Throws std::invalid_argument when the segment breaks its invariants.
  void validate() const;
};

std::string_view to_string(Transition t);
std::string_view to_string(EnvelopeKind k);
Transition transition_from_string(std::string_view s);
EnvelopeKind envelope_kind_from_string(std::string_view s);

/// sinc(x) = sin(pi x)/(pi x), sinc(0) = 1.
double normalized_sinc(double x);

/// Envelope amplitude in [-0.22, 1]; exactly zero outside [t_start, t_start+duration].
double sample_envelope(const EnvelopeShape& shape, double t, double t_start, double duration);

/// Chirp phase (chirp_bandwidth/duration)(t - t0)^2 about the segment centre t0.
double chirp_phase(double t, double t_start, double duration, double chirp_bandwidth);

/// d/dt of chirp_phase: sweeps linearly from -chirp_bandwidth to +chirp_bandwidth.
double chirp_detuning(double t, double t_start, double duration, double chirp_bandwidth);

/// Integral of peak_rabi * |envelope| over the segment (rad).
double pulse_area(const PulseSegment& segment);

/// Integral of peak_rabi * envelope over the segment (rad).
double signed_pulse_area(const PulseSegment& segment);

/// Signed area of a unit-amplitude envelope over `duration` (us).
double unit_envelope_area(const EnvelopeShape& shape, double duration);

/// Peak Rabi frequency giving the requested signed area.
double rabi_for_area(const EnvelopeShape& shape, double duration, double area);

/// Omega^2 / (chirp_bandwidth / duration).
double adiabaticity_factor(double peak_rabi, double chirp_bandwidth, double duration);

/// Nominal bandwidth in MHz (1/duration for Square and Sinc).
double fourier_bandwidth(const EnvelopeShape& shape, double duration);

} // namespace echosim

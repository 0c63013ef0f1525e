#include "echosim/pulsegen.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <cmath>
#include <stdexcept>
#include <string>

#include "echosim/units.hpp"

namespace echosim {

namespace {

void require_positive_duration(double duration) {
  if (!(duration > 0.0) || !std::isfinite(duration)) {
    throw std::invalid_argument("pulse duration must be positive, got " + std::to_string(duration));
  }
}

double integrate(const PulseSegment& s, bool absolute) {
  if (s.transition == Transition::Gap) {
    throw std::invalid_argument("pulse area is undefined for a Gap segment");
  }
  require_positive_duration(s.duration);
  if (s.peak_rabi == 0.0) return 0.0;
  auto f = [&](double t) {
    const double e = sample_envelope(s.envelope, t, s.t_start, s.duration);
    return absolute ? std::abs(e) : e;
  };
  double err = 0.0;
  const double area = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
      f, s.t_start, s.t_end(), 15, 1e-10, &err);
  return s.peak_rabi * area;
}

} // namespace

void PulseSegment::validate() const {
  if (!std::isfinite(t_start) || !std::isfinite(peak_rabi) || !std::isfinite(phase) ||
      !std::isfinite(carrier_detuning) || !std::isfinite(chirp_bandwidth)) {
    throw std::invalid_argument("pulse segment has non-finite fields");
  }
  if (transition == Transition::Gap) {
    if (peak_rabi != 0.0) throw std::invalid_argument("Gap segment must have zero Rabi frequency");
    if (duration < 0.0) throw std::invalid_argument("Gap segment has negative duration");
    return;
  }
  require_positive_duration(duration);
  if (peak_rabi < 0.0) throw std::invalid_argument("peak Rabi frequency must be non-negative");
  if (chirp_bandwidth != 0.0 && transition != Transition::RAP) {
    throw std::invalid_argument("only RAP segments may be chirped");
  }
  if (envelope.kind == EnvelopeKind::Gaussian && !(envelope.gaussian_sigma_fraction > 0.0)) {
    throw std::invalid_argument("Gaussian envelope needs a positive sigma fraction");
  }
}

std::string_view to_string(Transition t) {
  switch (t) {
    case Transition::Pump: return "pump";
    case Transition::MW: return "mw";
    case Transition::RAP: return "rap";
    case Transition::Gap: return "gap";
  }
  return "?";
}

std::string_view to_string(EnvelopeKind k) {
  switch (k) {
    case EnvelopeKind::Square: return "square";
    case EnvelopeKind::Sinc: return "sinc";
    case EnvelopeKind::Gaussian: return "gaussian";
  }
  return "?";
}

Transition transition_from_string(std::string_view s) {
  if (s == "pump") return Transition::Pump;
  if (s == "mw") return Transition::MW;
  if (s == "rap") return Transition::RAP;
  if (s == "gap") return Transition::Gap;
  throw std::invalid_argument("unknown transition '" + std::string(s) + "'");
}

EnvelopeKind envelope_kind_from_string(std::string_view s) {
  if (s == "square") return EnvelopeKind::Square;
  if (s == "sinc") return EnvelopeKind::Sinc;
  if (s == "gaussian") return EnvelopeKind::Gaussian;
  throw std::invalid_argument("unknown envelope shape '" + std::string(s) + "'");
}

double normalized_sinc(double x) {
  if (std::abs(x) < 1e-8) return 1.0 - (units::pi * units::pi * x * x) / 6.0;
  const double px = units::pi * x;
  return std::sin(px) / px;
}

double sample_envelope(const EnvelopeShape& shape, double t, double t_start, double duration) {
  require_positive_duration(duration);
  if (t < t_start || t > t_start + duration) return 0.0;
  const double t0 = t_start + 0.5 * duration;
  switch (shape.kind) {
    case EnvelopeKind::Square:
      return 1.0;
    case EnvelopeKind::Sinc:
      return normalized_sinc(2.0 * (t - t0) / duration);
    case EnvelopeKind::Gaussian: {
      const double sigma = shape.gaussian_sigma_fraction * duration;
      const double u = (t - t0) / sigma;
      return std::exp(-0.5 * u * u);
    }
  }
  return 0.0;
}

double chirp_phase(double t, double t_start, double duration, double chirp_bandwidth) {
  require_positive_duration(duration);
  const double dt = t - (t_start + 0.5 * duration);
  return chirp_bandwidth / duration * dt * dt;
}

double chirp_detuning(double t, double t_start, double duration, double chirp_bandwidth) {
  require_positive_duration(duration);
  return 2.0 * chirp_bandwidth / duration * (t - (t_start + 0.5 * duration));
}

double pulse_area(const PulseSegment& segment) { return integrate(segment, true); }

double signed_pulse_area(const PulseSegment& segment) { return integrate(segment, false); }

double unit_envelope_area(const EnvelopeShape& shape, double duration) {
  PulseSegment s;
  s.transition = Transition::Pump;
  s.duration = duration;
  s.peak_rabi = 1.0;
  s.envelope = shape;
  return signed_pulse_area(s);
}

double rabi_for_area(const EnvelopeShape& shape, double duration, double area) {
  return area / unit_envelope_area(shape, duration);
}

double adiabaticity_factor(double peak_rabi, double chirp_bandwidth, double duration) {
  require_positive_duration(duration);
  if (chirp_bandwidth == 0.0) {
    throw std::domain_error("adiabaticity factor needs a non-zero chirp bandwidth");
  }
  if (chirp_bandwidth < 0.0) throw std::invalid_argument("chirp bandwidth must be positive");
  const double chirp_rate = chirp_bandwidth / duration;
  return peak_rabi * peak_rabi / chirp_rate;
}

double fourier_bandwidth(const EnvelopeShape& shape, double duration) {
  require_positive_duration(duration);
  switch (shape.kind) {
    case EnvelopeKind::Square:
    case EnvelopeKind::Sinc:
      return 1.0 / duration;
    case EnvelopeKind::Gaussian: {
      // FWHM of the amplitude spectrum of an untruncated Gaussian.
      const double sigma = shape.gaussian_sigma_fraction * duration;
      return 2.0 * std::sqrt(2.0 * std::log(2.0)) / (units::two_pi * sigma);
    }
  }
  return 0.0;
}

} // namespace echosim

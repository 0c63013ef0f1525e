#include "echosim/ensemble.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "echosim/units.hpp"

namespace echosim {

ProfileKind profile_kind_from_string(std::string_view s) {
  if (s == "gaussian") return ProfileKind::Gaussian;
  if (s == "lorentzian") return ProfileKind::Lorentzian;
  throw std::invalid_argument("unknown broadening profile '" + std::string(s) + "'");
}

std::string_view to_string(ProfileKind k) {
  return k == ProfileKind::Gaussian ? "gaussian" : "lorentzian";
}

double BroadeningProfile::density(double f_mhz) const {
  const double x = f_mhz - center;
  if (kind == ProfileKind::Lorentzian) {
    const double half = 0.5 * fwhm;
    return (fwhm / units::two_pi) / (x * x + half * half);
  }
  const double sigma = fwhm / (2.0 * std::sqrt(2.0 * std::log(2.0)));
  return std::exp(-0.5 * x * x / (sigma * sigma)) / (sigma * std::sqrt(units::two_pi));
}

double BroadeningProfile::default_span() const {
  return kind == ProfileKind::Gaussian ? 6.0 : 10.0;
}

void BroadeningProfile::validate() const {
  if (!(fwhm > 0.0) || !std::isfinite(fwhm)) {
    throw std::invalid_argument("broadening FWHM must be positive");
  }
  if (!std::isfinite(center)) throw std::invalid_argument("broadening centre must be finite");
}

namespace {

std::vector<double> uniform_axis(std::size_t m, const BroadeningProfile& p, double span,
                                 std::vector<double>& density) {
  std::vector<double> axis(m);
  density.resize(m);
  const double half = 0.5 * span * p.fwhm;
  // Points are built in mirrored pairs so offsets from the centre are exact
  // negatives of each other and the density weights match bit for bit.
  for (std::size_t i = 0; i < (m + 1) / 2; ++i) {
    const double u = m > 1 ? 1.0 - 2.0 * static_cast<double>(i) / static_cast<double>(m - 1) : 0.0;
    const double offset = (2 * i + 1 == m) ? 0.0 : half * u;
    const double d = p.density(p.center - offset);
    axis[i] = units::angular_from_mhz(p.center - offset);
    axis[m - 1 - i] = units::angular_from_mhz(p.center + offset);
    density[i] = density[m - 1 - i] = d;
  }
  return axis;
}

void normalize(std::vector<double>& w) {
  const double total = std::accumulate(w.begin(), w.end(), 0.0);
  if (!(total > 0.0)) throw std::invalid_argument("grid weights sum to zero");
  for (double& x : w) x /= total;
}

} // namespace

AtomGrid AtomGrid::single(double d13, double d23) {
  AtomGrid g;
  g.delta13 = {d13};
  g.delta23 = {d23};
  g.weights = {1.0};
  return g;
}

AtomGrid AtomGrid::from_axes(std::vector<double> d13, std::vector<double> d23,
                             std::vector<double> w) {
  if (d13.empty() || d23.empty() || w.size() != d13.size() * d23.size()) {
    throw std::invalid_argument("grid axes and weights have inconsistent sizes");
  }
  for (double x : w) {
    if (!(x >= 0.0) || !std::isfinite(x)) throw std::invalid_argument("grid weights must be non-negative");
  }
  AtomGrid g;
  g.delta13 = std::move(d13);
  g.delta23 = std::move(d23);
  g.weights = std::move(w);
  normalize(g.weights);
  return g;
}

AtomGrid build_grid(std::size_t m, const BroadeningProfile& optical, const BroadeningProfile& spin,
                    double span_factor) {
  if (!(span_factor > 0.0)) throw std::invalid_argument("span factor must be positive");
  return build_grid(m, optical, spin, span_factor, span_factor);
}

AtomGrid build_grid(std::size_t m, const BroadeningProfile& optical, const BroadeningProfile& spin,
                    double optical_span, double spin_span) {
  if (m < 2) throw std::invalid_argument("grid needs m >= 2 points per axis");
  return build_grid(m, m, optical, spin, optical_span, spin_span);
}

AtomGrid build_grid(std::size_t m_optical, std::size_t m_spin, const BroadeningProfile& optical,
                    const BroadeningProfile& spin, double optical_span, double spin_span) {
  if (m_optical < 1 || m_spin < 1) throw std::invalid_argument("grid axes need at least one point");
  optical.validate();
  spin.validate();
  if (optical_span <= 0.0) optical_span = optical.default_span();
  if (spin_span <= 0.0) spin_span = spin.default_span();
  if (!std::isfinite(optical_span) || !std::isfinite(spin_span)) {
    throw std::invalid_argument("span factor must be finite");
  }

  AtomGrid g;
  std::vector<double> p_opt, p_spin;
  g.delta13 = uniform_axis(m_optical, optical, optical_span, p_opt);
  g.delta23 = uniform_axis(m_spin, spin, spin_span, p_spin);
  g.optical_span = optical_span;
  g.spin_span = spin_span;
  g.weights.resize(m_optical * m_spin);
  for (std::size_t i = 0; i < m_optical; ++i)
    for (std::size_t j = 0; j < m_spin; ++j) g.weights[i * m_spin + j] = p_opt[i] * p_spin[j];
  normalize(g.weights);
  return g;
}

AtomGrid build_spin_line(std::size_t m, const BroadeningProfile& spin, double span_factor,
                         double delta13) {
  if (m < 2) throw std::invalid_argument("grid needs m >= 2 points per axis");
  spin.validate();
  if (span_factor <= 0.0) span_factor = spin.default_span();
  AtomGrid g;
  std::vector<double> p;
  g.delta13 = {delta13};
  g.delta23 = uniform_axis(m, spin, span_factor, p);
  g.weights = std::move(p);
  g.spin_span = span_factor;
  normalize(g.weights);
  return g;
}

ThreeLevelState ground_state() { return ThreeLevelState{}; }

} // namespace echosim

#pragma once

#include <array>
#include <complex>
#include <cstddef>
#include <string_view>
#include <vector>

namespace echosim {

using cplx = std::complex<double>;

enum class ProfileKind { Gaussian, Lorentzian };

ProfileKind profile_kind_from_string(std::string_view s);
std::string_view to_string(ProfileKind k);

/// Inhomogeneous line shape. Frequencies in MHz (ordinary).
struct BroadeningProfile {
  ProfileKind kind = ProfileKind::Gaussian;
  double fwhm = 0.03;
  double center = 0.0;

  /// Normalized probability density per MHz.
  double density(double f_mhz) const;
  /// Grid half-width in FWHM units used when none is given: 6 for Gaussian,
  /// 10 for Lorentzian.
  double default_span() const;
  void validate() const;
};

/// Rectangular grid of (delta13, delta23) detuning pairs with normalized
/// weights. Detunings are angular (rad/us). Atom k = i * n_spin + j, where i
/// indexes the optical axis and j the spin axis.
struct AtomGrid {
  std::vector<double> delta13;
  std::vector<double> delta23;
  std::vector<double> weights;
  double optical_span = 0.0;
  double spin_span = 0.0;

  std::size_t n_optical() const { return delta13.size(); }
  std::size_t n_spin() const { return delta23.size(); }
  std::size_t size() const { return weights.size(); }
  double weight(std::size_t i, std::size_t j) const { return weights[i * n_spin() + j]; }
  double d13(std::size_t k) const { return delta13[k / n_spin()]; }
  double d23(std::size_t k) const { return delta23[k % n_spin()]; }

  /// One atom of unit weight.
  static AtomGrid single(double delta13 = 0.0, double delta23 = 0.0);
  /// Arbitrary axes with explicit weights (renormalized to sum 1).
  static AtomGrid from_axes(std::vector<double> delta13, std::vector<double> delta23,
                            std::vector<double> weights);
};

/// Uniform m x m grid spanning center +/- span*FWHM/2 on each axis with
/// product-density weights.
AtomGrid build_grid(std::size_t m, const BroadeningProfile& optical, const BroadeningProfile& spin,
                    double span_factor);

/// Same as above with separate spans; a non-positive span selects the
/// profile's default.
AtomGrid build_grid(std::size_t m, const BroadeningProfile& optical, const BroadeningProfile& spin,
                    double optical_span, double spin_span);

/// Rectangular variant: independent point counts per axis (1 allowed, giving
/// the profile centre only).
AtomGrid build_grid(std::size_t m_optical, std::size_t m_spin, const BroadeningProfile& optical,
                    const BroadeningProfile& spin, double optical_span, double spin_span);

/// One-axis grid on the spin transition only (delta13 fixed at `delta13`).
AtomGrid build_spin_line(std::size_t m, const BroadeningProfile& spin, double span_factor,
                         double delta13 = 0.0);

/// Amplitudes (c1, c2, c3) of |1> ground, |2> lower excited, |3> upper excited.
struct ThreeLevelState {
  std::array<cplx, 3> c{cplx{1.0, 0.0}, cplx{}, cplx{}};

  cplx& operator[](std::size_t i) { return c[i]; }
  const cplx& operator[](std::size_t i) const { return c[i]; }
  double norm_squared() const { return std::norm(c[0]) + std::norm(c[1]) + std::norm(c[2]); }
};

ThreeLevelState ground_state();

} // namespace echosim

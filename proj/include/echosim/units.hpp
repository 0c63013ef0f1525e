#pragma once

#include <numbers>

// Times are in microseconds and angular frequencies in rad/us throughout the
// library. Ordinary frequencies (MHz, kHz) only appear at the I/O boundary.
namespace echosim::units {

inline constexpr double pi = std::numbers::pi;
inline constexpr double two_pi = 2.0 * std::numbers::pi;

constexpr double angular_from_mhz(double f_mhz) { return two_pi * f_mhz; }
constexpr double angular_from_khz(double f_khz) { return two_pi * f_khz * 1e-3; }
constexpr double mhz_from_angular(double w) { return w / two_pi; }
constexpr double khz_from_angular(double w) { return 1e3 * w / two_pi; }

} // namespace echosim::units

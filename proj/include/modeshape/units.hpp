#pragma once

#include <numbers>

namespace modeshape::units {

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Everything internal is rad/s and seconds; these convert at the file/flag boundary.
constexpr double mhz_to_radps(double f) { return kTwoPi * 1e6 * f; }
constexpr double khz_to_radps(double f) { return kTwoPi * 1e3 * f; }
constexpr double hz_to_radps(double f) { return kTwoPi * f; }
constexpr double radps_to_mhz(double w) { return w / (kTwoPi * 1e6); }
constexpr double radps_to_khz(double w) { return w / (kTwoPi * 1e3); }
constexpr double radps_to_hz(double w) { return w / kTwoPi; }
constexpr double us_to_s(double t) { return t * 1e-6; }
constexpr double s_to_us(double t) { return t * 1e6; }

}  // namespace modeshape::units

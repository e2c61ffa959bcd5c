#pragma once

// Unit conventions: positions in miles, speeds in mph, accelerations in
// mph per second, time in seconds. The car-following law is evaluated in SI.

namespace wztt::units {

inline constexpr double kMetersPerMile = 1609.344;
inline constexpr double kMetersPerSecondPerMph = 0.44704;
inline constexpr double kSecondsPerHour = 3600.0;

constexpr double miles_to_meters(double mi) { return mi * kMetersPerMile; }
constexpr double meters_to_miles(double m) { return m / kMetersPerMile; }
constexpr double mph_to_mps(double v) { return v * kMetersPerSecondPerMph; }
constexpr double mps_to_mph(double v) { return v / kMetersPerSecondPerMph; }

/// Distance covered in `seconds` at `mph`, in miles.
constexpr double travel_miles(double mph, double seconds) {
  return mph * seconds / kSecondsPerHour;
}

/// Time to cover `miles` at `mph`, in seconds.
constexpr double travel_seconds(double miles, double mph) {
  return miles / mph * kSecondsPerHour;
}

}  // namespace wztt::units

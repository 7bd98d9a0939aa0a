#pragma once

// Canonical internal units are vehicles, miles and hours. Sampling periods
// arrive in seconds and effective vehicle lengths in feet; convert once at
// the boundary and keep everything else unit-free.

namespace dptraffic::units {

constexpr double kSecondsPerHour = 3600.0;
constexpr double kFeetPerMile = 5280.0;

constexpr double hours_from_seconds(double seconds) { return seconds / kSecondsPerHour; }
constexpr double seconds_from_hours(double hours) { return hours * kSecondsPerHour; }
constexpr double miles_from_feet(double feet) { return feet / kFeetPerMile; }
constexpr double feet_from_miles(double miles) { return miles * kFeetPerMile; }

}  // namespace dptraffic::units

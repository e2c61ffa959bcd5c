#pragma once

#include <array>
#include <filesystem>
#include <vector>

#include "wztt/sim.hpp"

namespace wztt {

/// Average 24-hour volume profile for one month, vehicles per hour over both
/// upstream lanes.
struct DemandProfile {
  int month = 1;
  std::array<double, 24> hourly_volume{};

  void validate() const;
  double peak() const;
};

/// Twelve synthetic diurnal profiles with AM/PM peaks. Summer and autumn
/// months exceed the single-lane work-zone capacity at peak; winter months
/// stay below it.
std::vector<DemandProfile> default_profiles();

/// Homogeneous Poisson arrivals over one hour at profile.hourly_volume[hour].
/// Times are seconds within the hour, strictly increasing; lanes are drawn
/// uniformly over `lanes`.
std::vector<Arrival> generate_arrivals(const DemandProfile& profile, int hour, Rng& rng,
                                       int lanes = 2);

/// Arrivals for `hours` consecutive hours starting at midnight, absolute times.
std::vector<Arrival> generate_day(const DemandProfile& profile, double hours, int lanes, Rng& rng);

/// Apply overrides from a CSV with header `month,hour,volume` on top of `base`.
std::vector<DemandProfile> load_profile_overrides(const std::filesystem::path& path,
                                                  std::vector<DemandProfile> base);

/// Multiply every hourly volume by `factor`.
DemandProfile scaled(DemandProfile profile, double factor);

}  // namespace wztt

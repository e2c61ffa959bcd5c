#include "wztt/demand.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "wztt/csv.hpp"

namespace wztt {
namespace {

// Fraction of the peak-hour volume by hour of day.
constexpr std::array<double, 24> kDiurnalShape = {
    0.10, 0.07, 0.06, 0.06, 0.10, 0.25, 0.55, 0.85, 0.95, 0.72, 0.58, 0.56,
    0.58, 0.60, 0.64, 0.76, 0.92, 1.00, 0.82, 0.58, 0.42, 0.32, 0.22, 0.15};

// Peak-hour volume by month, vehicles per hour over both lanes.
constexpr std::array<double, 12> kMonthlyPeak = {1250, 1280, 1350, 1400, 1440, 1480,
                                                 1500, 1500, 1460, 1440, 1400, 1340};

}  // namespace

void DemandProfile::validate() const {
  if (month < 1 || month > 12) throw std::invalid_argument("demand.month must be in 1..12");
  for (std::size_t h = 0; h < hourly_volume.size(); ++h) {
    if (!(hourly_volume[h] >= 0)) {
      throw std::invalid_argument("demand volume for month " + std::to_string(month) + " hour " +
                                  std::to_string(h) + " must be >= 0");
    }
  }
}

double DemandProfile::peak() const {
  return *std::max_element(hourly_volume.begin(), hourly_volume.end());
}

std::vector<DemandProfile> default_profiles() {
  std::vector<DemandProfile> profiles(12);
  for (int m = 0; m < 12; ++m) {
    profiles[m].month = m + 1;
    for (std::size_t h = 0; h < 24; ++h) {
      profiles[m].hourly_volume[h] = std::round(kMonthlyPeak[m] * kDiurnalShape[h]);
    }
  }
  return profiles;
}

std::vector<Arrival> generate_arrivals(const DemandProfile& profile, int hour, Rng& rng,
                                       int lanes) {
  if (hour < 0 || hour > 23) throw std::invalid_argument("hour must be in 0..23");
  const double volume = profile.hourly_volume[static_cast<std::size_t>(hour)];
  if (volume < 0) throw std::invalid_argument("volume must be >= 0");
  std::vector<Arrival> arrivals;
  if (volume == 0) return arrivals;
  std::exponential_distribution<double> gap(volume / units::kSecondsPerHour);
  std::uniform_int_distribution<int> lane(0, lanes - 1);
  double t = 0.0;
  while (true) {
    const double next = t + gap(rng);
    if (next >= units::kSecondsPerHour) break;
    if (next <= t) continue;
    t = next;
    arrivals.push_back({t, lane(rng)});
  }
  return arrivals;
}

std::vector<Arrival> generate_day(const DemandProfile& profile, double hours, int lanes, Rng& rng) {
  std::vector<Arrival> day;
  const int whole_hours = static_cast<int>(std::ceil(hours));
  const double horizon = hours * units::kSecondsPerHour;
  for (int h = 0; h < whole_hours; ++h) {
    // Profiles cover one day; longer horizons wrap.
    for (auto a : generate_arrivals(profile, h % 24, rng, lanes)) {
      a.time += h * units::kSecondsPerHour;
      if (a.time < horizon) day.push_back(a);
    }
  }
  return day;
}

std::vector<DemandProfile> load_profile_overrides(const std::filesystem::path& path,
                                                  std::vector<DemandProfile> base) {
  const auto table = csv::read(path);
  csv::expect_header(table, {"month", "hour", "volume"}, path);
  for (const auto& row : table.rows) {
    const auto month = csv::parse_int(row[0]);
    const auto hour = csv::parse_int(row[1]);
    const double volume = csv::parse_double(row[2]);
    if (month < 1 || month > 12) throw std::invalid_argument(path.string() + ": month out of range");
    if (hour < 0 || hour > 23) throw std::invalid_argument(path.string() + ": hour out of range");
    if (!(volume >= 0)) throw std::invalid_argument(path.string() + ": volume must be >= 0");
    auto it = std::find_if(base.begin(), base.end(),
                           [&](const DemandProfile& p) { return p.month == month; });
    if (it == base.end()) {
      base.push_back({static_cast<int>(month), {}});
      it = std::prev(base.end());
    }
    it->hourly_volume[static_cast<std::size_t>(hour)] = volume;
  }
  std::sort(base.begin(), base.end(),
            [](const DemandProfile& a, const DemandProfile& b) { return a.month < b.month; });
  return base;
}

DemandProfile scaled(DemandProfile profile, double factor) {
  for (auto& v : profile.hourly_volume) v *= factor;
  return profile;
}

}  // namespace wztt

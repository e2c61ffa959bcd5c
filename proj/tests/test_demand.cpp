#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "wztt/demand.hpp"

using namespace wztt;
namespace fs = std::filesystem;

TEST_CASE("default profiles have a diurnal double peak") {
  const auto profiles = default_profiles();
  REQUIRE(profiles.size() == 12);
  int congesting = 0;
  for (std::size_t m = 0; m < profiles.size(); ++m) {
    const auto& p = profiles[m];
    CHECK(p.month == static_cast<int>(m) + 1);
    CHECK(p.hourly_volume.size() == 24);
    CHECK_NOTHROW(p.validate());
    CHECK(p.hourly_volume[3] <= 0.2 * p.peak());
    const auto& v = p.hourly_volume;
    CHECK(v[8] > v[11]);   // AM peak above midday
    CHECK(v[17] > v[12]);  // PM peak above midday
    if (p.peak() > 1400) ++congesting;
  }
  CHECK(congesting >= 4);
  CHECK(congesting < 12);
}

TEST_CASE("arrivals") {
  DemandProfile p;
  SUBCASE("zero volume gives nothing") {
    Rng rng(1);
    CHECK(generate_arrivals(p, 5, rng).empty());
  }
  SUBCASE("times strictly increase inside the hour") {
    p.hourly_volume.fill(3000);
    Rng rng(2);
    const auto a = generate_arrivals(p, 7, rng);
    REQUIRE(a.size() > 100);
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].time >= 0.0);
      CHECK(a[i].time < 3600.0);
      CHECK((a[i].lane == 0 || a[i].lane == 1));
      if (i > 0) CHECK(a[i].time > a[i - 1].time);
    }
  }
  SUBCASE("rate and lane split converge") {
    p.hourly_volume.fill(1200);
    Rng rng = make_rng(99, 1);
    const int hours = 10000;
    std::size_t total = 0;
    std::size_t lane0 = 0;
    for (int h = 0; h < hours; ++h) {
      for (const auto& a : generate_arrivals(p, h % 24, rng)) {
        ++total;
        lane0 += a.lane == 0 ? 1 : 0;
      }
    }
    const double mean = static_cast<double>(total) / hours;
    CHECK(std::abs(mean - 1200.0) < 12.0);
    CHECK(static_cast<double>(lane0) / static_cast<double>(total) == doctest::Approx(0.5).epsilon(0.01));
  }
  SUBCASE("seeded streams repeat") {
    p.hourly_volume.fill(800);
    Rng a = make_rng(4, 1);
    Rng b = make_rng(4, 1);
    const auto x = generate_day(p, 3.0, 2, a);
    const auto y = generate_day(p, 3.0, 2, b);
    REQUIRE(x.size() == y.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
      CHECK(x[i].time == y[i].time);
      CHECK(x[i].lane == y[i].lane);
    }
  }
  SUBCASE("a partial last hour is truncated") {
    p.hourly_volume.fill(2000);
    Rng rng(8);
    const auto day = generate_day(p, 1.5, 2, rng);
    REQUIRE(!day.empty());
    CHECK(day.back().time < 1.5 * 3600.0);
    CHECK(day.back().time > 3600.0);
  }
}

TEST_CASE("profile overrides and scaling") {
  const fs::path path = fs::temp_directory_path() / "wztt_demand_override.csv";
  {
    std::ofstream out(path);
    out << "month,hour,volume\n3,8,1777\n12,0,0\n";
  }
  const auto base = default_profiles();
  const auto p = load_profile_overrides(path, base);
  CHECK(p[2].hourly_volume[8] == 1777);
  CHECK(p[11].hourly_volume[0] == 0);
  CHECK(p[2].hourly_volume[9] == base[2].hourly_volume[9]);

  {
    std::ofstream out(path);
    out << "month,hour,volume\n13,0,5\n";
  }
  CHECK_THROWS(load_profile_overrides(path, base));
  {
    std::ofstream out(path);
    out << "month,hour,volume\n1,0,-5\n";
  }
  CHECK_THROWS(load_profile_overrides(path, base));
  fs::remove(path);

  const auto s = scaled(base[6], 0.5);
  CHECK(s.peak() == doctest::Approx(base[6].peak() / 2));

  DemandProfile bad;
  bad.hourly_volume[4] = -1;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

#pragma once

#include <optional>
#include <random>
#include <string>
#include <vector>

#include "stagewise/roster.hpp"

namespace fixtures {

struct Row {
  int x = 0;
  std::optional<int> arrival;
  int arm = 0;
  double y = 0.0;
};

// Single covariate "x" with `levels` levels.
inline stagewise::PopulationRoster roster(const std::vector<Row>& rows, int levels = 2,
                                          int horizon = 10) {
  std::vector<stagewise::UnitRecord> units;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    stagewise::UnitRecord u;
    u.unit_id = "u" + std::to_string(i);
    u.profile.levels = {{"x", rows[i].x}};
    if (rows[i].arrival) {
      u.arrival_day = *rows[i].arrival;
      u.arm = rows[i].arm;
      u.outcome = rows[i].y;
    }
    units.push_back(std::move(u));
  }
  return stagewise::PopulationRoster({{{"x", levels}}, horizon}, std::move(units));
}

// Per-stratum arm-balanced random roster: within each stratum and arrival day
// units come in treated/control pairs.
inline stagewise::PopulationRoster balanced(std::mt19937_64& rng, int levels, int horizon) {
  std::uniform_int_distribution<int> pairs(1, 6);
  std::uniform_int_distribution<int> day(0, horizon);  // horizon means never
  std::normal_distribution<double> noise(0.0, 1.0);
  std::vector<Row> rows;
  for (int x = 0; x < levels; ++x) {
    const double effect = noise(rng);
    const int n = pairs(rng);
    for (int p = 0; p < n; ++p) {
      const int d = day(rng);
      std::optional<int> a = d < horizon ? std::optional<int>(d) : std::nullopt;
      rows.push_back({x, a, 1, effect + noise(rng)});
      rows.push_back({x, a, 0, noise(rng)});
    }
  }
  return roster(rows, levels, horizon);
}

}  // namespace fixtures

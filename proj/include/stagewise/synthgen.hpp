#pragma once

// Synthetic nested-trial experiment: one discrete covariate x, arrivals
// driven by a unit-level hazard with a weekday/weekend calendar, and
// heterogeneous treatment effects tied to x.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "stagewise/roster.hpp"

namespace stagewise {

enum class HazardModel {
  FixedUnit,    // u drawn once per unit, applied every day
  DailyRedraw,  // u redrawn every day
};

std::string to_string(HazardModel model);

struct SynthConfig {
  int n_units = 2000;
  Day horizon = 30;
  int n_levels = 4;
  int treat_count = 1000;
  double outcome_noise_sd = 0.1;
  std::vector<int> weekend_days{5, 6};  // day index mod 7
  std::uint64_t seed = 0;
  HazardModel hazard = HazardModel::FixedUnit;
  // Treated Y = 1 + tau - s/2 + N(0, sd^2) + s * U(x/L, (x+1)/L); control
  // Y = N(1, sd^2). tau = 0, s = 1 gives treated N(0.5, sd^2) + U(...).
  double tau = 0.0;
  double heterogeneity = 1.0;

  /// Throws ValidationError on an invalid field.
  void validate() const;
  bool is_weekend(Day k) const;
};

SynthConfig synth_config_from_json(std::istream& in);
SynthConfig load_synth_config(const std::filesystem::path& path);
void write_synth_config(const SynthConfig& config, std::ostream& out);

struct GroundTruth {
  double true_tau = 0.0;
  std::vector<double> stratum_htes;  // expected effect per level
  HazardModel hazard = HazardModel::FixedUnit;
  std::uint64_t seed = 0;
};

struct SyntheticExperiment {
  PopulationRoster roster;
  std::vector<int> assigned_arm;  // every unit, including non-arrivals
  GroundTruth truth;
};

/// Roster schema "x:<n_levels>" over the configured horizon.
RosterSchema synth_schema(const SynthConfig& config);

SyntheticExperiment generate(const SynthConfig& config);

GroundTruth ground_truth(const SynthConfig& config);

/// P(arrival before day t | x) under the generator's hazard model.
double analytic_pi(const SynthConfig& config, int x, Day t);

/// {true_tau, stratum_htes, hazard_interpretation, seed}
void write_ground_truth_json(const GroundTruth& truth, std::ostream& out);

}  // namespace stagewise

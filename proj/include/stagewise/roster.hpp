#pragma once

// Experiment data model for nested-trial experiments: a known target
// population, the subset that has arrived by a given day, their arms and
// outcomes.

#include <Eigen/Core>

#include <compare>
#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "stagewise/common.hpp"

namespace stagewise {

struct Covariate {
  std::string name;
  int cardinality = 1;
};

using CovariateSchema = std::vector<Covariate>;

/// What the roster CSV does not carry: covariate names/cardinalities and the
/// declared horizon.
struct RosterSchema {
  CovariateSchema covariates;
  Day horizon = 1;
};

/// Discrete covariate levels of one unit, in schema order. Equal profiles
/// define a stratum.
struct CovariateProfile {
  std::vector<std::pair<std::string, int>> levels;

  auto operator<=>(const CovariateProfile&) const = default;
  bool operator==(const CovariateProfile&) const = default;

  /// "x=0" or "age=2;region=1"
  std::string key() const;
  /// Level of the named covariate; throws ValidationError if absent.
  int level(std::string_view name) const;
};

struct UnitRecord {
  std::string unit_id;
  CovariateProfile profile;
  std::optional<Day> arrival_day;
  std::optional<int> arm;  // 0 control, 1 treatment
  std::optional<double> outcome;
  std::vector<double> pre_metrics;

  /// S_it: arrived strictly before day t.
  bool participates_by(Day t) const { return arrival_day && *arrival_day < t; }
};

struct StratumSummary {
  CovariateProfile profile;
  int population = 0;
  int participants = 0;  // arrived by the horizon
};

/// Validated, immutable population. Construction checks every invariant and
/// throws ValidationError on the first violation.
class PopulationRoster {
 public:
  PopulationRoster(RosterSchema schema, std::vector<UnitRecord> units,
                   std::vector<std::string> pre_metric_names = {});

  const RosterSchema& schema() const { return schema_; }
  const CovariateSchema& covariates() const { return schema_.covariates; }
  Day horizon() const { return schema_.horizon; }
  std::size_t size() const { return units_.size(); }
  const std::vector<UnitRecord>& units() const { return units_; }
  const UnitRecord& unit(std::size_t i) const { return units_[i]; }
  const std::vector<std::string>& pre_metric_names() const { return pre_metric_names_; }

  /// Distinct profiles present in the population, sorted.
  const std::vector<CovariateProfile>& strata_profiles() const { return profiles_; }
  /// Index into strata_profiles() for every unit.
  const std::vector<int>& stratum_of() const { return stratum_of_; }
  /// Population size per stratum.
  Eigen::VectorXi population_counts() const;
  /// Index of a profile in strata_profiles(), or nullopt.
  std::optional<int> find_stratum(const CovariateProfile& profile) const;

  /// Roster restricted to the given units (same schema and horizon).
  PopulationRoster subset(std::span<const std::size_t> indices) const;

  bool operator==(const PopulationRoster& other) const;

 private:
  RosterSchema schema_;
  std::vector<UnitRecord> units_;
  std::vector<std::string> pre_metric_names_;
  std::vector<CovariateProfile> profiles_;
  std::vector<int> stratum_of_;
};

PopulationRoster load_roster(const std::filesystem::path& path, const RosterSchema& schema);
PopulationRoster read_roster(std::istream& in, const RosterSchema& schema);
void write_roster(const PopulationRoster& roster, std::ostream& out);
void write_roster(const PopulationRoster& roster, const std::filesystem::path& path);

/// Parses "x:4" or "age:3,region:2".
CovariateSchema parse_covariate_schema(std::string_view spec);

/// Indices of units with arrival_day < t. Throws ValidationError unless
/// 0 <= t <= horizon.
std::vector<std::size_t> participants_at(const PopulationRoster& roster, Day t);

std::vector<StratumSummary> strata(const PopulationRoster& roster);

/// Participants at day t in columnar form, plus the population stratum sizes.
/// This is what estimators, fits on resamples, and the bootstrap consume.
struct Sample {
  Day t = 0;
  std::vector<CovariateProfile> profiles;  // population strata
  Eigen::VectorXi population;              // N_x per stratum
  Eigen::VectorXi stratum;                 // per participant
  Eigen::VectorXi arm;
  Eigen::VectorXi arrival;
  Eigen::VectorXd outcome;
  Eigen::MatrixXd pre_metrics;  // participants x metrics
  std::vector<std::string> pre_metric_names;
  // Whole-population view, present on samples built from a roster: stratum
  // of every population unit and its participant row (-1 if not arrived).
  Eigen::VectorXi unit_stratum;
  Eigen::VectorXi unit_row;

  Eigen::Index size() const { return outcome.size(); }
  int population_total() const { return population.sum(); }
  Eigen::Index treated_count() const { return (arm.array() == 1).count(); }
  Eigen::Index control_count() const { return (arm.array() == 0).count(); }

  /// Participant rows picked by index (with repetition); population info is
  /// kept, the whole-population view is dropped.
  Sample take(std::span<const Eigen::Index> rows) const;
  /// Sample of a resampled population: `units` indexes population units
  /// (with repetition); stratum sizes are recounted from the draw.
  Sample take_population(std::span<const Eigen::Index> units) const;
  /// Participants that arrived before day t (t <= this->t).
  Sample truncate(Day new_t) const;
  /// Stratification of the same participants by a single covariate.
  Sample restratify(std::string_view covariate) const;
};

Sample sample_at(const PopulationRoster& roster, Day t);

}  // namespace stagewise

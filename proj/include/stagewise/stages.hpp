#pragma once

// Stage detection: the worst-stratum participation probability pi_inf(t),
// its first crossings of eta_o and eta_r, and the bias diagnostics tied to
// the representative threshold.

#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "stagewise/roster.hpp"
#include "stagewise/survival.hpp"

namespace stagewise {

struct StageConfig {
  double eta_o = 0.5;
  double rho_fraction = 0.2;  // rho as a fraction of sup_t |DIM(t)|
  double C = 2.0;
  std::optional<double> eta_r;  // derived from C and rho_fraction when absent

  double effective_eta_r() const;
  /// Throws ValidationError on an out-of-range field.
  void validate() const;
};

enum class Stage { Unstable, Overlapping, Representative };

std::string to_string(Stage stage);

struct HeuristicPoint {
  Day t = 0;
  std::optional<double> pi_inf;  // absent when that day's fit failed
};

struct StageReport {
  StageConfig config;
  std::vector<HeuristicPoint> series;  // same-day fits, t = 1..horizon
  std::optional<Day> T_o;
  std::optional<Day> T_r;
  std::vector<Stage> stage_at;  // parallel to series
  // Crossings of the series read off the final-day fit.
  std::optional<Day> retrospective_T_o;
  std::optional<Day> retrospective_T_r;

  Stage stage(Day t) const;
};

/// Minimum of pi_hat(t | x) over the population strata of the fit.
double pi_inf(const SurvivalFit& fit, Day t);

/// Smallest t whose pi_inf exceeds eta; points without a value never cross.
std::optional<Day> detect_crossing(const std::vector<HeuristicPoint>& series, double eta);
inline std::optional<Day> detect_T_o(const std::vector<HeuristicPoint>& series, double eta_o) {
  return detect_crossing(series, eta_o);
}
inline std::optional<Day> detect_T_r(const std::vector<HeuristicPoint>& series, double eta_r) {
  return detect_crossing(series, eta_r);
}

/// eta_r = C / (rho_fraction + C).
double compute_eta_r(double C, double rho_fraction);

Stage classify(Day t, std::optional<Day> T_o, std::optional<Day> T_r);

/// Fits the participation model afresh on each day 1..horizon using only
/// arrivals observed so far, and classifies every day.
StageReport online_stages(const PopulationRoster& roster, SurvivalKind kind,
                          const StageConfig& config, const CoxOptions& cox = {});

/// Same-day heuristic series without classification.
std::vector<HeuristicPoint> online_heuristic(const PopulationRoster& roster, SurvivalKind kind,
                                             const CoxOptions& cox = {});

/// 2 * sum_x w_x |HTE_x| / |DIM|, w_x = participant shares. Throws
/// AnalysisError("unstable C ...") when |DIM| < 1e-12.
double estimate_C(const Sample& sample);

/// 2 (1/pi_inf - 1) sum_x w_x |HTE_x|. Throws AnalysisError when pi_inf is 0.
double bias_bound(const Sample& sample, const SurvivalFit& fit);

/// max over levels of |HTE| / |DIM| under stratification by one covariate.
double covariate_selection_score(const Sample& sample, std::string_view covariate);

/// Rows "t,pi_inf,stage".
void write_stages_csv(const StageReport& report, std::ostream& out);

}  // namespace stagewise

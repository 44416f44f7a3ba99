#pragma once

// Participation-time models. The "event" is arrival into the experiment;
// units that have not arrived by the analysis day are administratively
// censored there. Both fitters consume an EventTable, the per-stratum daily
// arrival counts plus stratum population sizes, which is a sufficient
// statistic for stratified KM and for Cox with stratum-level covariates.

#include <Eigen/Core>

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "stagewise/roster.hpp"

namespace stagewise {

struct EventTable {
  CovariateSchema covariates;
  std::vector<CovariateProfile> profiles;
  Eigen::VectorXi population;  // N_x
  Eigen::MatrixXi events;      // strata x days; arrivals of stratum s on day d

  Eigen::Index strata_count() const { return population.size(); }
  Day days() const { return static_cast<Day>(events.cols()); }
};

/// Arrivals over the full horizon.
EventTable event_table(const PopulationRoster& roster);
/// Arrivals observed in a participant sample (all before sample.t).
EventTable event_table(const Sample& sample, const CovariateSchema& covariates);

enum class SurvivalKind { KaplanMeier, Cox };
enum class CoxEncoding { Ordinal, OneHot };

std::string to_string(SurvivalKind kind);
SurvivalKind parse_survival_kind(const std::string& text);

struct CoxOptions {
  int max_iters = 50;
  /// Converged when max |score| or the Newton decrement falls below this.
  double tolerance = 1e-8;
  /// Coefficients beyond this magnitude are treated as monotone-likelihood
  /// divergence.
  double max_coefficient = 30.0;
  CoxEncoding encoding = CoxEncoding::Ordinal;
};

struct SurvivalFit {
  SurvivalKind kind = SurvivalKind::KaplanMeier;
  Day t_obs = 0;
  CovariateSchema covariates;
  std::vector<CovariateProfile> profiles;
  /// curves(s, t) = pi_hat(t | profiles[s]) for t = 0..t_obs.
  Eigen::MatrixXd curves;

  // Cox only.
  CoxEncoding encoding = CoxEncoding::Ordinal;
  std::optional<Eigen::VectorXd> coefficients;
  std::optional<Eigen::VectorXd> baseline_survival;  // S0(t), t = 0..t_obs
  int iterations = 0;
  double score_norm = 0.0;

  std::optional<int> find_stratum(const CovariateProfile& profile) const;
};

/// Stratified Kaplan-Meier with risk set = stratum population minus prior
/// arrivals. The product is accumulated as a reduced fraction so that, under
/// administrative censoring, pi_hat equals the empirical arrival CDF exactly.
SurvivalFit fit_km(const EventTable& table, Day t_obs);
SurvivalFit fit_km(const PopulationRoster& roster, Day t_obs);

/// Cox proportional hazards, Breslow ties, Newton-Raphson with step halving.
SurvivalFit fit_cox(const EventTable& table, Day t_obs, const CoxOptions& options = {});
SurvivalFit fit_cox(const PopulationRoster& roster, Day t_obs, const CoxOptions& options = {});

SurvivalFit fit_survival(SurvivalKind kind, const EventTable& table, Day t_obs,
                         const CoxOptions& options = {});

/// Row encoding of a profile for the Cox linear predictor.
Eigen::RowVectorXd encode_profile(const CovariateProfile& profile, const CovariateSchema& schema,
                                  CoxEncoding encoding);
std::vector<std::string> encoded_column_names(const CovariateSchema& schema,
                                              CoxEncoding encoding);

struct CoxSolution {
  Eigen::VectorXd beta;
  Eigen::VectorXd baseline_hazard;  // Breslow increment on day d, d = 0..t_obs-1
  double log_likelihood = 0.0;
  int iterations = 0;
  double score_norm = 0.0;
};

/// Maximizes the Breslow partial likelihood for stratum-level rows:
/// `design` is strata x p, `events`/`population` as in EventTable, events on
/// days >= t_obs are treated as censored at t_obs.
CoxSolution solve_cox(const Eigen::MatrixXd& design, const Eigen::MatrixXi& events,
                      const Eigen::VectorXi& population, Day t_obs,
                      const CoxOptions& options = {});

/// Left-continuous step lookup of pi_hat(t | x). Throws AnalysisError for
/// t outside [0, t_obs] or, for KM, an unknown stratum.
double pi_hat(const SurvivalFit& fit, Day t, const CovariateProfile& x);

/// Mann-Whitney AUC with mid-ranks for ties; nullopt if one class is empty.
std::optional<double> roc_auc(const Eigen::Ref<const Eigen::VectorXd>& scores,
                              const Eigen::Ref<const Eigen::VectorXi>& labels);

struct AucPoint {
  Day t = 0;
  std::optional<double> auc;
};

/// Random train/test split of the population (train share = split_fraction).
/// For every t in 1..horizon the model is fit on training units censored at
/// t and test units are scored by pi_hat(t | x) against arrival-before-t.
std::vector<AucPoint> auc_eval(const PopulationRoster& roster, double split_fraction,
                               SurvivalKind kind, std::uint64_t seed,
                               const CoxOptions& options = {});

/// Rows "stratum,t,pi_hat".
void write_fit_csv(const SurvivalFit& fit, std::ostream& out);
/// Rows "covariate,beta" (Cox fits only).
void write_cox_coefficients_csv(const SurvivalFit& fit, std::ostream& out);

}  // namespace stagewise

#pragma once

// Treatment-effect estimators on the participants of an ongoing experiment.

#include <Eigen/Core>

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "stagewise/roster.hpp"
#include "stagewise/survival.hpp"

namespace stagewise {

enum class Method { DIM, IPW, OutcomeReg, DoublyRobust, Jackknife };

std::string to_string(Method method);

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  double level = 0.95;

  bool contains(double value) const { return lo <= value && value <= hi; }
};

struct EffectEstimate {
  Method method = Method::DIM;
  Day t = 0;
  double point = 0.0;
  std::optional<Interval> ci;
  Eigen::Index n_treat = 0;
  Eigen::Index n_ctrl = 0;
};

// Kernels. `arm` is 0/1; weights multiply outcomes before the arm means.

/// Mean of treated outcomes minus mean of control outcomes.
template <typename DerivedY, typename DerivedW>
double difference_in_means(const Eigen::DenseBase<DerivedY>& y,
                           const Eigen::DenseBase<DerivedW>& arm) {
  double sum_t = 0.0, sum_c = 0.0;
  Eigen::Index n_t = 0, n_c = 0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    if (arm(i) == 1) {
      sum_t += y(i);
      ++n_t;
    } else {
      sum_c += y(i);
      ++n_c;
    }
  }
  if (n_t == 0 || n_c == 0) throw AnalysisError("insufficient data: an arm is empty");
  return sum_t / static_cast<double>(n_t) - sum_c / static_cast<double>(n_c);
}

enum class IpwNormalization {
  ArmCount,  // divide each arm's weighted sum by the arm's participant count
  Hajek,     // divide by the arm's sum of weights
};

template <typename DerivedY, typename DerivedW, typename DerivedV>
double weighted_difference(const Eigen::DenseBase<DerivedY>& y,
                           const Eigen::DenseBase<DerivedW>& arm,
                           const Eigen::DenseBase<DerivedV>& weight,
                           IpwNormalization normalization) {
  double sum_t = 0.0, sum_c = 0.0, den_t = 0.0, den_c = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    const double d = normalization == IpwNormalization::ArmCount ? 1.0 : weight(i);
    if (arm(i) == 1) {
      sum_t += weight(i) * y(i);
      den_t += d;
    } else {
      sum_c += weight(i) * y(i);
      den_c += d;
    }
  }
  if (den_t == 0.0 || den_c == 0.0) throw AnalysisError("insufficient data: an arm is empty");
  return sum_t / den_t - sum_c / den_c;
}

EffectEstimate dim(const Sample& sample);
EffectEstimate dim(const PopulationRoster& roster, Day t);

/// Within-stratum difference of arm means. Throws AnalysisError if the
/// stratum has no participant in one of the arms.
double hte(const Sample& sample, int stratum);
double hte(const Sample& sample, const CovariateProfile& x);
double hte(const PopulationRoster& roster, Day t, const CovariateProfile& x);

/// Per-stratum effects and participant shares for strata with participants.
struct StratumEffects {
  std::vector<int> strata;
  Eigen::VectorXd effect;
  Eigen::VectorXd share;  // participant share of the stratum at t

  double weighted_abs_mean() const { return share.dot(effect.cwiseAbs()); }
  double weighted_mean() const { return share.dot(effect); }
};
StratumEffects stratum_effects(const Sample& sample);

struct IpwOptions {
  IpwNormalization normalization = IpwNormalization::ArmCount;
  double weight_floor = 1e-6;
};

/// pi_hat(sample.t | x) for every participant; throws AnalysisError listing
/// strata whose probability does not exceed the weight floor.
Eigen::VectorXd participation_probabilities(const Sample& sample, const SurvivalFit& fit,
                                            double weight_floor);

EffectEstimate ipw(const Sample& sample, const SurvivalFit& fit, const IpwOptions& options = {});
EffectEstimate ipw(const PopulationRoster& roster, Day t, const SurvivalFit& fit,
                   const IpwOptions& options = {});

/// g(x, w): predicted outcome for profile x under arm w.
struct OutcomeModel {
  std::function<double(const CovariateProfile&, int)> predict;
  std::string description;
  /// (profile, arm) cells that had no participants and borrowed the arm mean.
  std::vector<std::pair<CovariateProfile, int>> borrowed_cells;
};

/// Population mean over all N units of g(x, 1) - g(x, 0).
EffectEstimate outcome_regression(const Sample& sample, const OutcomeModel& model);
EffectEstimate outcome_regression(const PopulationRoster& roster, Day t,
                                  const OutcomeModel& model);

/// IPW of the residuals y - g(x, w) plus the outcome-regression term.
EffectEstimate doubly_robust(const Sample& sample, const SurvivalFit& fit,
                             const OutcomeModel& model, const IpwOptions& options = {});
EffectEstimate doubly_robust(const PopulationRoster& roster, Day t, const SurvivalFit& fit,
                             const OutcomeModel& model, const IpwOptions& options = {});

/// Sample mean outcome per (stratum, arm) among participants.
OutcomeModel stratum_mean_model(const Sample& sample);
OutcomeModel stratum_mean_model(const PopulationRoster& roster, Day t);

enum class JackknifeBlocks {
  /// Delete one of the t calendar days. With first-exposure data a run
  /// missing one day is a (t-1)-day run, so every replicate is DIM(t-1).
  CalendarDay,
  /// Delete one arrival-day cohort at a time.
  ArrivalCohort,
};

/// d * full - (d - 1) * mean(replicates), d = replicates.size().
double jackknife_combine(double full, std::span<const double> replicates);

EffectEstimate jackknife(const Sample& sample, JackknifeBlocks blocks = JackknifeBlocks::CalendarDay);
EffectEstimate jackknife(const PopulationRoster& roster, Day t,
                         JackknifeBlocks blocks = JackknifeBlocks::CalendarDay);

}  // namespace stagewise

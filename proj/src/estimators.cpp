#include "stagewise/estimators.hpp"

#include <algorithm>
#include <map>
#include <memory>
#include <numeric>
#include <set>
#include <sstream>

namespace stagewise {

std::string to_string(Method method) {
  switch (method) {
    case Method::DIM: return "dim";
    case Method::IPW: return "ipw";
    case Method::OutcomeReg: return "outcome_reg";
    case Method::DoublyRobust: return "doubly_robust";
    case Method::Jackknife: return "jackknife";
  }
  return "unknown";
}

namespace {

EffectEstimate make_estimate(Method method, const Sample& sample, double point) {
  EffectEstimate e;
  e.method = method;
  e.t = sample.t;
  e.point = point;
  e.n_treat = sample.treated_count();
  e.n_ctrl = sample.control_count();
  return e;
}

int stratum_index(const Sample& sample, const CovariateProfile& x) {
  const auto it = std::find(sample.profiles.begin(), sample.profiles.end(), x);
  if (it == sample.profiles.end()) {
    throw AnalysisError("stratum " + x.key() + " is not in the population");
  }
  return static_cast<int>(it - sample.profiles.begin());
}

}  // namespace

EffectEstimate dim(const Sample& sample) {
  if (sample.treated_count() == 0 || sample.control_count() == 0) {
    throw AnalysisError("insufficient data at t=" + std::to_string(sample.t) + ": an arm is empty");
  }
  return make_estimate(Method::DIM, sample, difference_in_means(sample.outcome, sample.arm));
}

EffectEstimate dim(const PopulationRoster& roster, Day t) { return dim(sample_at(roster, t)); }

double hte(const Sample& sample, int stratum) {
  double sum[2] = {0.0, 0.0};
  int n[2] = {0, 0};
  for (Eigen::Index i = 0; i < sample.size(); ++i) {
    if (sample.stratum(i) != stratum) continue;
    const int w = sample.arm(i);
    sum[w] += sample.outcome(i);
    ++n[w];
  }
  if (n[0] == 0 || n[1] == 0) {
    throw AnalysisError("empty stratum-arm cell in stratum " +
                        sample.profiles[static_cast<std::size_t>(stratum)].key() +
                        " at t=" + std::to_string(sample.t));
  }
  return sum[1] / n[1] - sum[0] / n[0];
}

double hte(const Sample& sample, const CovariateProfile& x) {
  return hte(sample, stratum_index(sample, x));
}

double hte(const PopulationRoster& roster, Day t, const CovariateProfile& x) {
  return hte(sample_at(roster, t), x);
}

StratumEffects stratum_effects(const Sample& sample) {
  const auto k = static_cast<Eigen::Index>(sample.profiles.size());
  Eigen::VectorXi counts = Eigen::VectorXi::Zero(k);
  for (Eigen::Index i = 0; i < sample.size(); ++i) ++counts(sample.stratum(i));
  StratumEffects out;
  std::vector<double> effect, share;
  for (Eigen::Index s = 0; s < k; ++s) {
    if (counts(s) == 0) continue;
    out.strata.push_back(static_cast<int>(s));
    effect.push_back(hte(sample, static_cast<int>(s)));
    share.push_back(static_cast<double>(counts(s)) / static_cast<double>(sample.size()));
  }
  out.effect = Eigen::Map<Eigen::VectorXd>(effect.data(), static_cast<Eigen::Index>(effect.size()));
  out.share = Eigen::Map<Eigen::VectorXd>(share.data(), static_cast<Eigen::Index>(share.size()));
  return out;
}

Eigen::VectorXd participation_probabilities(const Sample& sample, const SurvivalFit& fit,
                                            double weight_floor) {
  const auto k = static_cast<Eigen::Index>(sample.profiles.size());
  Eigen::VectorXd per_stratum = Eigen::VectorXd::Constant(k, -1.0);
  std::vector<std::string> offending;
  for (Eigen::Index i = 0; i < sample.size(); ++i) {
    const int s = sample.stratum(i);
    if (per_stratum(s) >= 0.0) continue;
    const auto& x = sample.profiles[static_cast<std::size_t>(s)];
    per_stratum(s) = pi_hat(fit, sample.t, x);
    if (per_stratum(s) <= weight_floor) offending.push_back(x.key());
  }
  if (!offending.empty()) {
    std::ostringstream msg;
    msg << "participation probability at or below " << weight_floor << " at t=" << sample.t
        << " for strata:";
    for (const auto& key : offending) msg << ' ' << key;
    throw AnalysisError(msg.str());
  }
  Eigen::VectorXd p(sample.size());
  for (Eigen::Index i = 0; i < sample.size(); ++i) p(i) = per_stratum(sample.stratum(i));
  return p;
}

EffectEstimate ipw(const Sample& sample, const SurvivalFit& fit, const IpwOptions& options) {
  if (sample.treated_count() == 0 || sample.control_count() == 0) {
    throw AnalysisError("insufficient data at t=" + std::to_string(sample.t) + ": an arm is empty");
  }
  const Eigen::VectorXd w =
      participation_probabilities(sample, fit, options.weight_floor).cwiseInverse();
  return make_estimate(Method::IPW, sample,
                       weighted_difference(sample.outcome, sample.arm, w, options.normalization));
}

EffectEstimate ipw(const PopulationRoster& roster, Day t, const SurvivalFit& fit,
                   const IpwOptions& options) {
  return ipw(sample_at(roster, t), fit, options);
}

namespace {

double population_effect(const Sample& sample, const OutcomeModel& model) {
  if (!model.predict) throw AnalysisError("outcome model has no predictor");
  double total = 0.0;
  for (std::size_t s = 0; s < sample.profiles.size(); ++s) {
    const int n = sample.population(static_cast<Eigen::Index>(s));
    if (n == 0) continue;
    const auto& x = sample.profiles[s];
    total += n * (model.predict(x, 1) - model.predict(x, 0));
  }
  return total / sample.population_total();
}

}  // namespace

EffectEstimate outcome_regression(const Sample& sample, const OutcomeModel& model) {
  return make_estimate(Method::OutcomeReg, sample, population_effect(sample, model));
}

EffectEstimate outcome_regression(const PopulationRoster& roster, Day t,
                                  const OutcomeModel& model) {
  return outcome_regression(sample_at(roster, t), model);
}

EffectEstimate doubly_robust(const Sample& sample, const SurvivalFit& fit,
                             const OutcomeModel& model, const IpwOptions& options) {
  if (sample.treated_count() == 0 || sample.control_count() == 0) {
    throw AnalysisError("insufficient data at t=" + std::to_string(sample.t) + ": an arm is empty");
  }
  const double regression = population_effect(sample, model);
  const Eigen::VectorXd w =
      participation_probabilities(sample, fit, options.weight_floor).cwiseInverse();
  Eigen::VectorXd residual(sample.size());
  for (Eigen::Index i = 0; i < sample.size(); ++i) {
    const auto& x = sample.profiles[static_cast<std::size_t>(sample.stratum(i))];
    residual(i) = sample.outcome(i) - model.predict(x, sample.arm(i));
  }
  const double correction =
      weighted_difference(residual, sample.arm, w, options.normalization);
  return make_estimate(Method::DoublyRobust, sample, correction + regression);
}

EffectEstimate doubly_robust(const PopulationRoster& roster, Day t, const SurvivalFit& fit,
                             const OutcomeModel& model, const IpwOptions& options) {
  return doubly_robust(sample_at(roster, t), fit, model, options);
}

OutcomeModel stratum_mean_model(const Sample& sample) {
  if (sample.treated_count() == 0 || sample.control_count() == 0) {
    throw AnalysisError("insufficient data at t=" + std::to_string(sample.t) + ": an arm is empty");
  }
  const auto k = static_cast<Eigen::Index>(sample.profiles.size());
  Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(k, 2);
  Eigen::MatrixXi count = Eigen::MatrixXi::Zero(k, 2);
  for (Eigen::Index i = 0; i < sample.size(); ++i) {
    sum(sample.stratum(i), sample.arm(i)) += sample.outcome(i);
    ++count(sample.stratum(i), sample.arm(i));
  }
  const Eigen::RowVector2d arm_mean =
      sum.colwise().sum().array() / count.colwise().sum().cast<double>().array();

  OutcomeModel model;
  auto means = std::make_shared<std::map<CovariateProfile, Eigen::RowVector2d>>();
  for (Eigen::Index s = 0; s < k; ++s) {
    Eigen::RowVector2d m;
    for (int w = 0; w < 2; ++w) {
      if (count(s, w) > 0) {
        m(w) = sum(s, w) / count(s, w);
      } else {
        m(w) = arm_mean(w);
        model.borrowed_cells.emplace_back(sample.profiles[static_cast<std::size_t>(s)], w);
      }
    }
    means->emplace(sample.profiles[static_cast<std::size_t>(s)], m);
  }
  model.predict = [means](const CovariateProfile& x, int w) {
    const auto it = means->find(x);
    if (it == means->end()) throw AnalysisError("outcome model undefined on stratum " + x.key());
    return it->second(w);
  };
  model.description = "stratum means at t=" + std::to_string(sample.t);
  if (!model.borrowed_cells.empty()) {
    model.description += " (" + std::to_string(model.borrowed_cells.size()) + " cells borrowed)";
  }
  return model;
}

OutcomeModel stratum_mean_model(const PopulationRoster& roster, Day t) {
  return stratum_mean_model(sample_at(roster, t));
}

double jackknife_combine(double full, std::span<const double> replicates) {
  if (replicates.empty()) throw AnalysisError("jackknife needs at least one replicate");
  const double d = static_cast<double>(replicates.size());
  const double mean = std::accumulate(replicates.begin(), replicates.end(), 0.0) / d;
  return d * full - (d - 1.0) * mean;
}

EffectEstimate jackknife(const Sample& sample, JackknifeBlocks blocks) {
  const double full = dim(sample).point;
  std::vector<double> replicates;
  if (blocks == JackknifeBlocks::CalendarDay) {
    if (sample.t < 2) throw AnalysisError("jackknife needs at least two days of data");
    const double shorter = dim(sample.truncate(sample.t - 1)).point;
    replicates.assign(static_cast<std::size_t>(sample.t), shorter);
  } else {
    const std::set<int> cohorts(sample.arrival.begin(), sample.arrival.end());
    if (cohorts.size() < 2) throw AnalysisError("jackknife needs at least two arrival-day cohorts");
    for (const int c : cohorts) {
      std::vector<Eigen::Index> keep;
      for (Eigen::Index i = 0; i < sample.size(); ++i) {
        if (sample.arrival(i) != c) keep.push_back(i);
      }
      replicates.push_back(dim(sample.take(keep)).point);
    }
  }
  return make_estimate(Method::Jackknife, sample, jackknife_combine(full, replicates));
}

EffectEstimate jackknife(const PopulationRoster& roster, Day t, JackknifeBlocks blocks) {
  return jackknife(sample_at(roster, t), blocks);
}

}  // namespace stagewise

#include "stagewise/survival.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <random>

namespace stagewise {

namespace {

void check_t_obs(const EventTable& table, Day t_obs) {
  if (t_obs < 0 || t_obs > table.days()) {
    throw ValidationError("t_obs " + std::to_string(t_obs) + " outside the observed window [0, " +
                          std::to_string(table.days()) + "]");
  }
}

void check_roster_t_obs(const PopulationRoster& roster, Day t_obs) {
  if (t_obs < 0 || t_obs > roster.horizon()) {
    throw ValidationError("t_obs " + std::to_string(t_obs) + " outside [0, horizon]");
  }
}

// Risk sets r(s, d) = N_s - arrivals of s before d, for d = 0..t_obs-1.
Eigen::MatrixXd risk_sets(const Eigen::MatrixXi& events, const Eigen::VectorXi& population,
                          Day t_obs) {
  Eigen::MatrixXd risk(population.size(), t_obs);
  for (Eigen::Index s = 0; s < population.size(); ++s) {
    int remaining = population(s);
    for (Day d = 0; d < t_obs; ++d) {
      risk(s, d) = remaining;
      remaining -= events(s, d);
    }
  }
  return risk;
}

struct PartialLikelihood {
  double value = 0.0;
  Eigen::VectorXd score;
  Eigen::MatrixXd information;
};

// Breslow partial likelihood on stratum-level rows; `design` is centered.
PartialLikelihood evaluate(const Eigen::MatrixXd& design, const Eigen::MatrixXd& event_counts,
                           const Eigen::MatrixXd& risk, const Eigen::VectorXd& beta) {
  const Eigen::Index p = design.cols();
  PartialLikelihood out;
  out.score = Eigen::VectorXd::Zero(p);
  out.information = Eigen::MatrixXd::Zero(p, p);

  const Eigen::VectorXd eta = design * beta;
  const Eigen::VectorXd rel = eta.array().exp().matrix();
  for (Eigen::Index d = 0; d < risk.cols(); ++d) {
    const double total_events = event_counts.col(d).sum();
    if (total_events == 0.0) continue;
    const Eigen::VectorXd wr = risk.col(d).cwiseProduct(rel);
    const double s0 = wr.sum();
    const Eigen::VectorXd s1 = design.transpose() * wr;
    const Eigen::MatrixXd s2 = design.transpose() * wr.asDiagonal() * design;
    out.value += event_counts.col(d).dot(eta) - total_events * std::log(s0);
    out.score += design.transpose() * event_counts.col(d) - total_events * s1 / s0;
    out.information += total_events * (s2 / s0 - s1 * s1.transpose() / (s0 * s0));
  }
  return out;
}

}  // namespace

EventTable event_table(const PopulationRoster& roster) {
  EventTable table;
  table.covariates = roster.covariates();
  table.profiles = roster.strata_profiles();
  table.population = roster.population_counts();
  table.events = Eigen::MatrixXi::Zero(table.population.size(), roster.horizon() + 1);
  const auto& idx = roster.stratum_of();
  for (std::size_t i = 0; i < roster.size(); ++i) {
    const auto& u = roster.unit(i);
    if (u.arrival_day) ++table.events(idx[i], *u.arrival_day);
  }
  return table;
}

EventTable event_table(const Sample& sample, const CovariateSchema& covariates) {
  EventTable table;
  table.covariates = covariates;
  table.profiles = sample.profiles;
  table.population = sample.population;
  table.events = Eigen::MatrixXi::Zero(sample.population.size(), sample.t);
  for (Eigen::Index r = 0; r < sample.size(); ++r) {
    ++table.events(sample.stratum(r), sample.arrival(r));
  }
  return table;
}

std::string to_string(SurvivalKind kind) {
  return kind == SurvivalKind::KaplanMeier ? "km" : "cox";
}

SurvivalKind parse_survival_kind(const std::string& text) {
  if (text == "km") return SurvivalKind::KaplanMeier;
  if (text == "cox") return SurvivalKind::Cox;
  throw ValidationError("unknown survival model '" + text + "' (expected km or cox)");
}

std::optional<int> SurvivalFit::find_stratum(const CovariateProfile& profile) const {
  auto it = std::lower_bound(profiles.begin(), profiles.end(), profile);
  if (it == profiles.end() || *it != profile) return std::nullopt;
  return static_cast<int>(it - profiles.begin());
}

SurvivalFit fit_km(const EventTable& table, Day t_obs) {
  check_t_obs(table, t_obs);
  SurvivalFit fit;
  fit.kind = SurvivalKind::KaplanMeier;
  fit.t_obs = t_obs;
  fit.covariates = table.covariates;
  fit.profiles = table.profiles;
  fit.curves = Eigen::MatrixXd::Zero(table.strata_count(), t_obs + 1);

  for (Eigen::Index s = 0; s < table.strata_count(); ++s) {
    // survival = num / den, kept reduced
    std::int64_t num = 1;
    std::int64_t den = 1;
    std::int64_t at_risk = table.population(s);
    for (Day d = 0; d < t_obs; ++d) {
      const std::int64_t e = table.events(s, d);
      if (e > 0) {
        // multiply by (at_risk - e) / at_risk with cross-cancellation
        const std::int64_t a = at_risk - e;
        const std::int64_t b = at_risk;
        const std::int64_t g1 = std::gcd(num, b);
        const std::int64_t g2 = a == 0 ? den : std::gcd(a, den);
        num = (num / g1) * (a / g2);
        den = (den / g2) * (b / g1);
        if (num == 0) den = 1;
      }
      at_risk -= e;
      fit.curves(s, d + 1) = static_cast<double>(den - num) / static_cast<double>(den);
    }
  }
  return fit;
}

SurvivalFit fit_km(const PopulationRoster& roster, Day t_obs) {
  check_roster_t_obs(roster, t_obs);
  return fit_km(event_table(roster), t_obs);
}

Eigen::RowVectorXd encode_profile(const CovariateProfile& profile, const CovariateSchema& schema,
                                  CoxEncoding encoding) {
  std::vector<double> row;
  for (const auto& cov : schema) {
    const int lvl = profile.level(cov.name);
    if (encoding == CoxEncoding::Ordinal) {
      row.push_back(lvl);
    } else {
      for (int k = 1; k < cov.cardinality; ++k) row.push_back(lvl == k ? 1.0 : 0.0);
    }
  }
  return Eigen::Map<Eigen::RowVectorXd>(row.data(), static_cast<Eigen::Index>(row.size()));
}

std::vector<std::string> encoded_column_names(const CovariateSchema& schema,
                                              CoxEncoding encoding) {
  std::vector<std::string> names;
  for (const auto& cov : schema) {
    if (encoding == CoxEncoding::Ordinal) {
      names.push_back(cov.name);
    } else {
      for (int k = 1; k < cov.cardinality; ++k) names.push_back(cov.name + "=" + std::to_string(k));
    }
  }
  return names;
}

CoxSolution solve_cox(const Eigen::MatrixXd& design, const Eigen::MatrixXi& events,
                      const Eigen::VectorXi& population, Day t_obs, const CoxOptions& options) {
  const Eigen::Index p = design.cols();
  const Eigen::MatrixXd risk = risk_sets(events, population, t_obs);
  const Eigen::MatrixXd event_counts = events.leftCols(t_obs).cast<double>();

  // Centering by the population mean leaves beta unchanged and keeps exp()
  // well scaled.
  const Eigen::VectorXd weights = population.cast<double>();
  const Eigen::RowVectorXd center = (weights.transpose() * design) / weights.sum();
  const Eigen::MatrixXd centered = design.rowwise() - center;

  if (Eigen::ColPivHouseholderQR<Eigen::MatrixXd>(weights.cwiseSqrt().asDiagonal() * centered)
          .rank() < p) {
    throw AnalysisError("Cox design is rank deficient after encoding");
  }

  CoxSolution sol;
  sol.beta = Eigen::VectorXd::Zero(p);
  auto current = evaluate(centered, event_counts, risk, sol.beta);
  bool converged = false;
  for (int iter = 0; iter < options.max_iters; ++iter) {
    sol.score_norm = current.score.cwiseAbs().maxCoeff();
    if (sol.score_norm < options.tolerance) {
      converged = true;
      break;
    }
    sol.iterations = iter + 1;
    const Eigen::VectorXd step = current.information.ldlt().solve(current.score);
    // Near the optimum the likelihood stops resolving improvements before the
    // score reaches an absolute tolerance on large samples.
    if (current.score.dot(step) < options.tolerance) {
      sol.beta += step;
      current = evaluate(centered, event_counts, risk, sol.beta);
      converged = true;
      break;
    }
    double scale = 1.0;
    Eigen::VectorXd candidate = sol.beta + step;
    auto next = evaluate(centered, event_counts, risk, candidate);
    for (int halving = 0; halving < 40 && !(next.value >= current.value); ++halving) {
      scale *= 0.5;
      candidate = sol.beta + scale * step;
      next = evaluate(centered, event_counts, risk, candidate);
    }
    sol.beta = candidate;
    current = std::move(next);
    if (sol.beta.cwiseAbs().maxCoeff() > options.max_coefficient) {
      throw AnalysisError("Cox fit diverged (monotone likelihood): |beta| exceeded " +
                          format_double(options.max_coefficient));
    }
  }
  if (!converged) {
    sol.score_norm = current.score.cwiseAbs().maxCoeff();
    if (sol.score_norm >= options.tolerance) {
      throw AnalysisError("Cox fit did not converge after " + std::to_string(options.max_iters) +
                          " iterations; final score norm " + format_double(sol.score_norm));
    }
  }
  sol.log_likelihood = current.value;

  // Breslow increments for the raw (uncentered) baseline z = 0.
  const Eigen::VectorXd rel = (design * sol.beta).array().exp().matrix();
  sol.baseline_hazard = Eigen::VectorXd::Zero(t_obs);
  for (Day d = 0; d < t_obs; ++d) {
    const double total = event_counts.col(d).sum();
    if (total > 0) sol.baseline_hazard(d) = total / risk.col(d).dot(rel);
  }
  return sol;
}

SurvivalFit fit_cox(const EventTable& table, Day t_obs, const CoxOptions& options) {
  check_t_obs(table, t_obs);
  const auto s_count = table.strata_count();
  const auto names = encoded_column_names(table.covariates, options.encoding);
  Eigen::MatrixXd design(s_count, static_cast<Eigen::Index>(names.size()));
  for (Eigen::Index s = 0; s < s_count; ++s) {
    design.row(s) = encode_profile(table.profiles[static_cast<std::size_t>(s)], table.covariates,
                                   options.encoding);
  }
  const auto sol = solve_cox(design, table.events, table.population, t_obs, options);

  SurvivalFit fit;
  fit.kind = SurvivalKind::Cox;
  fit.t_obs = t_obs;
  fit.covariates = table.covariates;
  fit.profiles = table.profiles;
  fit.encoding = options.encoding;
  fit.coefficients = sol.beta;
  fit.iterations = sol.iterations;
  fit.score_norm = sol.score_norm;

  Eigen::VectorXd baseline(t_obs + 1);
  double cumulative = 0.0;
  baseline(0) = 1.0;
  for (Day d = 0; d < t_obs; ++d) {
    cumulative += sol.baseline_hazard(d);
    baseline(d + 1) = std::exp(-cumulative);
  }
  fit.baseline_survival = baseline;

  fit.curves.resize(s_count, t_obs + 1);
  for (Eigen::Index s = 0; s < s_count; ++s) {
    const double rel = std::exp(design.row(s).dot(sol.beta));
    fit.curves.row(s) = (1.0 - baseline.array().pow(rel)).matrix().transpose();
  }
  return fit;
}

SurvivalFit fit_cox(const PopulationRoster& roster, Day t_obs, const CoxOptions& options) {
  check_roster_t_obs(roster, t_obs);
  return fit_cox(event_table(roster), t_obs, options);
}

SurvivalFit fit_survival(SurvivalKind kind, const EventTable& table, Day t_obs,
                         const CoxOptions& options) {
  return kind == SurvivalKind::KaplanMeier ? fit_km(table, t_obs) : fit_cox(table, t_obs, options);
}

double pi_hat(const SurvivalFit& fit, Day t, const CovariateProfile& x) {
  if (t < 0 || t > fit.t_obs) {
    throw AnalysisError("pi_hat at day " + std::to_string(t) + " is beyond the fit window [0, " +
                        std::to_string(fit.t_obs) + "]");
  }
  if (auto s = fit.find_stratum(x)) return fit.curves(*s, t);
  if (fit.kind == SurvivalKind::KaplanMeier) {
    throw AnalysisError("unknown stratum '" + x.key() + "' for a Kaplan-Meier fit");
  }
  const double rel =
      std::exp(encode_profile(x, fit.covariates, fit.encoding).dot(*fit.coefficients));
  return 1.0 - std::pow((*fit.baseline_survival)(t), rel);
}

std::optional<double> roc_auc(const Eigen::Ref<const Eigen::VectorXd>& scores,
                              const Eigen::Ref<const Eigen::VectorXi>& labels) {
  const Eigen::Index n = scores.size();
  const Eigen::Index positives = (labels.array() == 1).count();
  const Eigen::Index negatives = n - positives;
  if (positives == 0 || negatives == 0) return std::nullopt;

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](Eigen::Index a, Eigen::Index b) { return scores(a) < scores(b); });
  double positive_rank_sum = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && scores(order[j + 1]) == scores(order[i])) ++j;
    const double mid_rank = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) {
      if (labels(order[k]) == 1) positive_rank_sum += mid_rank;
    }
    i = j + 1;
  }
  const double np = static_cast<double>(positives);
  const double nn = static_cast<double>(negatives);
  return (positive_rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

std::vector<AucPoint> auc_eval(const PopulationRoster& roster, double split_fraction,
                               SurvivalKind kind, std::uint64_t seed,
                               const CoxOptions& options) {
  if (!(split_fraction > 0.0 && split_fraction < 1.0)) {
    throw ValidationError("split_fraction must lie in (0, 1)");
  }
  std::vector<std::size_t> order(roster.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_train = static_cast<std::size_t>(
      std::llround(split_fraction * static_cast<double>(roster.size())));
  if (n_train == 0 || n_train >= roster.size()) {
    throw ValidationError("split leaves an empty training or test fold");
  }
  std::vector<std::size_t> train(order.begin(), order.begin() + static_cast<long>(n_train));
  std::vector<std::size_t> test(order.begin() + static_cast<long>(n_train), order.end());
  std::sort(train.begin(), train.end());
  std::sort(test.begin(), test.end());

  const auto train_roster = roster.subset(train);
  const auto table = event_table(train_roster);

  std::vector<AucPoint> out;
  Eigen::VectorXd scores(static_cast<Eigen::Index>(test.size()));
  Eigen::VectorXi labels(static_cast<Eigen::Index>(test.size()));
  for (Day t = 1; t <= roster.horizon(); ++t) {
    const auto fit = fit_survival(kind, table, t, options);
    for (std::size_t k = 0; k < test.size(); ++k) {
      const auto& u = roster.unit(test[k]);
      scores(static_cast<Eigen::Index>(k)) = pi_hat(fit, t, u.profile);
      labels(static_cast<Eigen::Index>(k)) = u.participates_by(t) ? 1 : 0;
    }
    out.push_back({t, roc_auc(scores, labels)});
  }
  return out;
}

void write_fit_csv(const SurvivalFit& fit, std::ostream& out) {
  out << "stratum,t,pi_hat\n";
  for (std::size_t s = 0; s < fit.profiles.size(); ++s) {
    for (Day t = 0; t <= fit.t_obs; ++t) {
      out << fit.profiles[s].key() << ',' << t << ','
          << format_double(fit.curves(static_cast<Eigen::Index>(s), t)) << '\n';
    }
  }
}

void write_cox_coefficients_csv(const SurvivalFit& fit, std::ostream& out) {
  if (!fit.coefficients) throw AnalysisError("not a Cox fit");
  const auto names = encoded_column_names(fit.covariates, fit.encoding);
  out << "covariate,beta\n";
  for (std::size_t k = 0; k < names.size(); ++k) {
    out << names[k] << ',' << format_double((*fit.coefficients)(static_cast<Eigen::Index>(k)))
        << '\n';
  }
}

}  // namespace stagewise

#include "stagewise/stages.hpp"

#include <cmath>
#include <ostream>

#include "stagewise/estimators.hpp"

namespace stagewise {

namespace {

void check_probability(const char* name, double value) {
  if (!(value > 0.0 && value < 1.0)) {
    throw ValidationError(std::string(name) + " must lie in (0, 1), got " + format_double(value));
  }
}

}  // namespace

double StageConfig::effective_eta_r() const {
  return eta_r ? *eta_r : compute_eta_r(C, rho_fraction);
}

void StageConfig::validate() const {
  check_probability("eta_o", eta_o);
  if (eta_r) check_probability("eta_r", *eta_r);
  if (!(C > 0.0)) throw ValidationError("C must be positive, got " + format_double(C));
  if (!(rho_fraction > 0.0)) {
    throw ValidationError("rho_fraction must be positive, got " + format_double(rho_fraction));
  }
}

std::string to_string(Stage stage) {
  switch (stage) {
    case Stage::Unstable: return "unstable";
    case Stage::Overlapping: return "overlapping";
    case Stage::Representative: return "representative";
  }
  return "unknown";
}

Stage StageReport::stage(Day t) const { return classify(t, T_o, T_r); }

double pi_inf(const SurvivalFit& fit, Day t) {
  if (t < 0 || t > fit.t_obs) {
    throw AnalysisError("t=" + std::to_string(t) + " outside the fitted window [0, " +
                        std::to_string(fit.t_obs) + "]");
  }
  if (fit.curves.rows() == 0) throw AnalysisError("fit has no strata");
  return fit.curves.col(t).minCoeff();
}

std::optional<Day> detect_crossing(const std::vector<HeuristicPoint>& series, double eta) {
  for (const auto& p : series) {
    if (p.pi_inf && *p.pi_inf > eta) return p.t;
  }
  return std::nullopt;
}

double compute_eta_r(double C, double rho_fraction) {
  if (!(C > 0.0) || !(rho_fraction > 0.0)) {
    throw ValidationError("C and rho_fraction must be positive");
  }
  return C / (rho_fraction + C);
}

Stage classify(Day t, std::optional<Day> T_o, std::optional<Day> T_r) {
  if (T_r && t >= *T_r) return Stage::Representative;
  if (T_o && t >= *T_o) return Stage::Overlapping;
  return Stage::Unstable;
}

std::vector<HeuristicPoint> online_heuristic(const PopulationRoster& roster, SurvivalKind kind,
                                             const CoxOptions& cox) {
  const EventTable table = event_table(roster);
  std::vector<HeuristicPoint> series;
  for (Day t = 1; t <= roster.horizon(); ++t) {
    HeuristicPoint p{t, std::nullopt};
    try {
      p.pi_inf = pi_inf(fit_survival(kind, table, t, cox), t);
    } catch (const AnalysisError&) {
    }
    series.push_back(p);
  }
  return series;
}

StageReport online_stages(const PopulationRoster& roster, SurvivalKind kind,
                          const StageConfig& config, const CoxOptions& cox) {
  config.validate();
  StageReport report;
  report.config = config;
  report.series = online_heuristic(roster, kind, cox);
  const double eta_r = config.effective_eta_r();
  report.T_o = detect_T_o(report.series, config.eta_o);
  report.T_r = detect_T_r(report.series, eta_r);
  for (const auto& p : report.series) report.stage_at.push_back(report.stage(p.t));

  try {
    const SurvivalFit final_fit =
        fit_survival(kind, event_table(roster), roster.horizon(), cox);
    std::vector<HeuristicPoint> retro;
    for (Day t = 1; t <= roster.horizon(); ++t) retro.push_back({t, pi_inf(final_fit, t)});
    report.retrospective_T_o = detect_T_o(retro, config.eta_o);
    report.retrospective_T_r = detect_T_r(retro, eta_r);
  } catch (const AnalysisError&) {
  }
  return report;
}

double estimate_C(const Sample& sample) {
  const double d = dim(sample).point;
  if (std::abs(d) < 1e-12) {
    throw AnalysisError("unstable C at t=" + std::to_string(sample.t) +
                        ": difference in means is zero");
  }
  return 2.0 * stratum_effects(sample).weighted_abs_mean() / std::abs(d);
}

double bias_bound(const Sample& sample, const SurvivalFit& fit) {
  const double p = pi_inf(fit, sample.t);
  if (p <= 0.0) {
    throw AnalysisError("bias bound undefined at t=" + std::to_string(sample.t) +
                        ": a stratum has zero participation (still unstable)");
  }
  return 2.0 * (1.0 / p - 1.0) * stratum_effects(sample).weighted_abs_mean();
}

double covariate_selection_score(const Sample& sample, std::string_view covariate) {
  const double d = dim(sample).point;
  if (std::abs(d) < 1e-12) {
    throw AnalysisError("unstable C at t=" + std::to_string(sample.t) +
                        ": difference in means is zero");
  }
  const StratumEffects effects = stratum_effects(sample.restratify(covariate));
  return effects.effect.cwiseAbs().maxCoeff() / std::abs(d);
}

void write_stages_csv(const StageReport& report, std::ostream& out) {
  out << "t,pi_inf,stage\n";
  for (std::size_t i = 0; i < report.series.size(); ++i) {
    const auto& p = report.series[i];
    out << p.t << ',' << (p.pi_inf ? format_double(*p.pi_inf) : "") << ','
        << to_string(report.stage_at[i]) << '\n';
  }
}

}  // namespace stagewise

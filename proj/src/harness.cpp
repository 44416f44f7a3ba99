#include "stagewise/harness.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <ostream>
#include <random>
#include <sstream>

namespace stagewise {

long long power_sample_size(double sigma_sq, double delta) {
  if (!(sigma_sq > 0.0)) throw ValidationError("sigma_sq must be positive");
  if (!(delta > 0.0)) throw ValidationError("delta must be positive");
  // The guard keeps exact quotients such as 1600 from rounding up to 1601.
  return static_cast<long long>(std::ceil(16.0 * sigma_sq / (delta * delta) - 1e-9));
}

EffectEstimate ipw_with_ci(const Sample& sample, const CovariateSchema& covariates,
                           SurvivalKind kind, const CoxOptions& cox, const IpwOptions& ipw_opts,
                           const BootstrapOptions& boot) {
  auto statistic = [&](const Sample& s) {
    const SurvivalFit fit = fit_survival(kind, event_table(s, covariates), s.t, cox);
    return ipw(s, fit, ipw_opts).point;
  };
  EffectEstimate e = ipw(sample, fit_survival(kind, event_table(sample, covariates), sample.t, cox),
                         ipw_opts);
  BootstrapOptions opts = boot;
  opts.scope = ResampleScope::Population;
  e.ci = bootstrap(sample, statistic, opts).interval;
  return e;
}

EffectEstimate dim_with_ci(const Sample& sample, const BootstrapOptions& boot) {
  EffectEstimate e = dim(sample);
  BootstrapOptions opts = boot;
  opts.scope = ResampleScope::Participants;
  e.ci = bootstrap(sample, [](const Sample& s) { return dim(s).point; }, opts).interval;
  return e;
}

AnalysisResult analyze(const PopulationRoster& roster, const AnalysisOptions& options) {
  options.stage.validate();
  if (options.bootstrap < 2) throw ValidationError("bootstrap needs at least two resamples");
  if (!(options.alpha > 0.0 && options.alpha < 1.0)) {
    throw ValidationError("alpha must lie in (0, 1)");
  }
  AnalysisResult result;
  result.stages = online_stages(roster, options.model, options.stage, options.cox);

  BootstrapOptions boot;
  boot.resamples = options.bootstrap;
  boot.level = 1.0 - options.alpha;

  for (std::size_t i = 0; i < result.stages.series.size(); ++i) {
    const Day t = result.stages.series[i].t;
    const Stage stage = result.stages.stage_at[i];
    const Sample sample = sample_at(roster, t);
    auto attempt = [&](Method method, auto&& compute) {
      try {
        result.estimates.push_back(compute());
      } catch (const AnalysisError& e) {
        result.gaps.push_back({t, method, e.what()});
      }
    };
    attempt(Method::DIM, [&] {
      if (stage != Stage::Representative) return dim(sample);
      boot.seed = mix_seed(options.seed, 2 * static_cast<std::uint64_t>(t));
      return dim_with_ci(sample, boot);
    });
    if (stage == Stage::Overlapping) {
      attempt(Method::IPW, [&] {
        boot.seed = mix_seed(options.seed, 2 * static_cast<std::uint64_t>(t) + 1);
        return ipw_with_ci(sample, roster.covariates(), options.model, options.cox, options.ipw,
                           boot);
      });
    }
  }
  if (result.estimates.empty()) {
    throw AnalysisError("no day produced an estimate (" + std::to_string(result.gaps.size()) +
                        " failures)");
  }

  const auto& metrics =
      options.aa_metrics.empty() ? roster.pre_metric_names() : options.aa_metrics;
  result.validity =
      aa_check(roster, metrics, 1, roster.horizon(), options.alpha, options.expected_ratio);
  return result;
}

void write_estimates_csv(const std::vector<EffectEstimate>& estimates, std::ostream& out) {
  out << "t,method,point,ci_lo,ci_hi,n_treat,n_ctrl\n";
  for (const auto& e : estimates) {
    out << e.t << ',' << to_string(e.method) << ',' << format_double(e.point) << ','
        << (e.ci ? format_double(e.ci->lo) : "") << ',' << (e.ci ? format_double(e.ci->hi) : "")
        << ',' << e.n_treat << ',' << e.n_ctrl << '\n';
  }
}

namespace {

nlohmann::json optional_day(const std::optional<Day>& d) {
  return d ? nlohmann::json(*d) : nlohmann::json(nullptr);
}

}  // namespace

void write_analysis_summary_json(const AnalysisResult& result, const AnalysisOptions& options,
                                 std::ostream& out) {
  using nlohmann::json;
  const StageReport& s = result.stages;
  json gaps = json::array();
  for (const auto& g : result.gaps) {
    gaps.push_back({{"t", g.t}, {"method", to_string(g.method)}, {"reason", g.reason}});
  }
  const json j{{"eta_o", s.config.eta_o},
               {"eta_r", s.config.effective_eta_r()},
               {"C", s.config.C},
               {"rho_fraction", s.config.rho_fraction},
               {"T_o", optional_day(s.T_o)},
               {"T_r", optional_day(s.T_r)},
               {"retrospective_T_o", optional_day(s.retrospective_T_o)},
               {"retrospective_T_r", optional_day(s.retrospective_T_r)},
               {"model", to_string(options.model)},
               {"bootstrap", options.bootstrap},
               {"alpha", options.alpha},
               {"seed", options.seed},
               {"estimates", result.estimates.size()},
               {"gaps", gaps}};
  out << j.dump(2) << '\n';
}

std::string StoppingPolicy::name() const {
  switch (kind) {
    case PolicyKind::PowerBaseline: return "power_baseline";
    case PolicyKind::StopAtOverlap: return "stop_at_overlap";
    case PolicyKind::StopAtRepresentative: return "stop_at_representative";
  }
  return "unknown";
}

std::vector<StoppingPolicy> default_policies(const StageConfig& stage, double sigma_sq,
                                             double delta) {
  std::vector<StoppingPolicy> out(3);
  out[0].kind = PolicyKind::PowerBaseline;
  out[1].kind = PolicyKind::StopAtOverlap;
  out[2].kind = PolicyKind::StopAtRepresentative;
  for (auto& p : out) {
    p.sigma_sq = sigma_sq;
    p.delta = delta;
    p.stage = stage;
  }
  return out;
}

void SuiteConfig::validate() const {
  if (experiments <= 0) throw ValidationError("experiments must be positive");
  if (effective < 0 || effective > experiments) {
    throw ValidationError("effective must lie in [0, experiments]");
  }
  if (!(tau_lo <= tau_hi)) throw ValidationError("tau_lo must not exceed tau_hi");
  if (!(heterogeneity_lo <= heterogeneity_hi)) {
    throw ValidationError("heterogeneity_lo must not exceed heterogeneity_hi");
  }
  if (bootstrap < 2) throw ValidationError("bootstrap needs at least two resamples");
  base.validate();
}

SuiteConfig suite_config_from_json(std::istream& in) {
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("suite config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ValidationError("suite config must be a JSON object");
  SuiteConfig c;
  try {
    for (const auto& item : j.items()) {
      const auto& k = item.key();
      if (k == "experiments") {
        c.experiments = item.value().get<int>();
      } else if (k == "effective") {
        c.effective = item.value().get<int>();
      } else if (k == "tau_lo") {
        c.tau_lo = item.value().get<double>();
      } else if (k == "tau_hi") {
        c.tau_hi = item.value().get<double>();
      } else if (k == "heterogeneity_lo") {
        c.heterogeneity_lo = item.value().get<double>();
      } else if (k == "heterogeneity_hi") {
        c.heterogeneity_hi = item.value().get<double>();
      } else if (k == "bootstrap") {
        c.bootstrap = item.value().get<int>();
      } else if (k == "model") {
        c.model = parse_survival_kind(item.value().get<std::string>());
      } else if (k == "base") {
        std::istringstream base(item.value().dump());
        c.base = synth_config_from_json(base);
      } else {
        throw ValidationError("unknown suite config key '" + k + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("bad suite config value: ") + e.what());
  }
  c.validate();
  return c;
}

SuiteConfig load_suite_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open suite config " + path.string());
  return suite_config_from_json(in);
}

SynthConfig suite_experiment(const SuiteConfig& suite, std::uint64_t seed, int index) {
  std::mt19937_64 rng(mix_seed(seed, static_cast<std::uint64_t>(index)));
  SynthConfig c = suite.base;
  const bool effective = index < suite.effective;
  c.tau = effective ? std::uniform_real_distribution<double>(suite.tau_lo, suite.tau_hi)(rng) : 0.0;
  c.heterogeneity =
      std::uniform_real_distribution<double>(suite.heterogeneity_lo, suite.heterogeneity_hi)(rng);
  c.seed = rng();
  return c;
}

std::optional<double> PolicyOutcome::fpr() const {
  if (fp + tn == 0) return std::nullopt;
  return static_cast<double>(fp) / static_cast<double>(fp + tn);
}

std::optional<double> PolicyOutcome::tpr() const {
  if (tp + fn == 0) return std::nullopt;
  return static_cast<double>(tp) / static_cast<double>(tp + fn);
}

namespace {

bool welch_positive(const Sample& s, double alpha) {
  std::vector<double> treated, control;
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    (s.arm(i) == 1 ? treated : control).push_back(s.outcome(i));
  }
  const TTestResult r = welch_t_test(treated, control);
  return r.p_value < alpha && r.statistic > 0.0;
}

// nullopt: the policy never stopped or its test could not be run.
std::optional<bool> decide(const StoppingPolicy& policy, const PopulationRoster& roster,
                           const std::vector<HeuristicPoint>& series, const SuiteConfig& suite,
                           double alpha, std::uint64_t boot_seed) {
  std::optional<Day> stop;
  switch (policy.kind) {
    case PolicyKind::PowerBaseline: {
      const long long n = power_sample_size(policy.sigma_sq, policy.delta);
      const long long needed = policy.per_arm ? 2 * n : n;
      for (Day t = 1; t <= roster.horizon() && !stop; ++t) {
        if (static_cast<long long>(participants_at(roster, t).size()) >= needed) stop = t;
      }
      break;
    }
    case PolicyKind::StopAtOverlap:
      stop = detect_T_o(series, policy.stage.eta_o);
      break;
    case PolicyKind::StopAtRepresentative:
      stop = detect_T_r(series, policy.stage.effective_eta_r());
      break;
  }
  if (!stop) return std::nullopt;
  const Sample s = sample_at(roster, *stop);
  try {
    if (policy.kind == PolicyKind::StopAtOverlap) {
      BootstrapOptions boot;
      boot.resamples = suite.bootstrap;
      boot.level = 1.0 - alpha;
      boot.seed = boot_seed;
      const EffectEstimate e =
          ipw_with_ci(s, roster.covariates(), suite.model, CoxOptions{}, IpwOptions{}, boot);
      return e.ci->lo > 0.0;
    }
    return welch_positive(s, alpha);
  } catch (const AnalysisError&) {
    return std::nullopt;
  }
}

}  // namespace

EvaluationSummary evaluate(const std::vector<StoppingPolicy>& policies, const SuiteConfig& suite,
                           double alpha, const std::vector<std::uint64_t>& suite_seeds) {
  suite.validate();
  if (!(alpha > 0.0 && alpha < 1.0)) throw ValidationError("alpha must lie in (0, 1)");
  for (const auto& p : policies) {
    p.stage.validate();
    if (p.kind == PolicyKind::PowerBaseline) power_sample_size(p.sigma_sq, p.delta);
  }
  EvaluationSummary summary;
  summary.alpha = alpha;
  summary.suite_seeds = suite_seeds;
  summary.ground_truth_rule =
      "effective iff the generator's true tau > 0; a decision is positive iff the stage test "
      "finds a significantly positive effect";
  for (const auto& p : policies) summary.policies.push_back({p.name()});

  for (const std::uint64_t seed : suite_seeds) {
    for (int e = 0; e < suite.experiments; ++e) {
      const SynthConfig config = suite_experiment(suite, seed, e);
      const SyntheticExperiment experiment = generate(config);
      const bool effective = experiment.truth.true_tau > 0.0;
      const auto series = online_heuristic(experiment.roster, suite.model);
      ++summary.experiments;
      for (std::size_t k = 0; k < policies.size(); ++k) {
        const auto positive = decide(policies[k], experiment.roster, series, suite, alpha,
                                     mix_seed(config.seed, k));
        PolicyOutcome& out = summary.policies[k];
        if (!positive) {
          ++out.no_decision;
        } else if (effective) {
          ++(*positive ? out.tp : out.fn);
        } else {
          ++(*positive ? out.fp : out.tn);
        }
      }
    }
  }
  return summary;
}

void write_evaluation_json(const EvaluationSummary& summary, std::ostream& out) {
  using nlohmann::json;
  auto rate = [](const std::optional<double>& r) { return r ? json(*r) : json(nullptr); };
  json policies = json::array();
  for (const auto& p : summary.policies) {
    policies.push_back({{"policy", p.policy},
                        {"TP", p.tp},
                        {"TN", p.tn},
                        {"FP", p.fp},
                        {"FN", p.fn},
                        {"no_decision", p.no_decision},
                        {"FPR", rate(p.fpr())},
                        {"TPR", rate(p.tpr())}});
  }
  const json j{{"alpha", summary.alpha},
               {"suite_seeds", summary.suite_seeds},
               {"experiments", summary.experiments},
               {"ground_truth_rule", summary.ground_truth_rule},
               {"policies", policies}};
  out << j.dump(2) << '\n';
}

}  // namespace stagewise

#pragma once

// Pipeline driver behind the CLI: the day-by-day analysis loop, the power
// analysis baseline and the stopping-policy evaluation over synthetic suites.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "stagewise/estimators.hpp"
#include "stagewise/inference.hpp"
#include "stagewise/stages.hpp"
#include "stagewise/survival.hpp"
#include "stagewise/synthgen.hpp"

namespace stagewise {

/// ceil(16 sigma^2 / delta^2): per-arm size for a two-sided 5% test at 80%
/// power.
long long power_sample_size(double sigma_sq, double delta);

struct AnalysisOptions {
  StageConfig stage;
  SurvivalKind model = SurvivalKind::KaplanMeier;
  CoxOptions cox;
  IpwOptions ipw;
  int bootstrap = 1000;
  double alpha = 0.05;
  std::uint64_t seed = 0;
  double expected_ratio = 1.0;
  /// Pre-period metrics for the AA grid; empty means all in the roster.
  std::vector<std::string> aa_metrics;
};

struct EstimateGap {
  Day t = 0;
  Method method = Method::DIM;
  std::string reason;
};

struct AnalysisResult {
  StageReport stages;
  std::vector<EffectEstimate> estimates;
  std::vector<EstimateGap> gaps;
  ValidityReport validity;
};

/// Per day: that day's fit and stage, DIM always, IPW with a bootstrap CI in
/// the overlapping stage, a DIM CI in the representative stage.
/// Per-day estimator failures are recorded as gaps; throws AnalysisError only
/// if no day produced any estimate.
AnalysisResult analyze(const PopulationRoster& roster, const AnalysisOptions& options);

/// IPW at sample.t with a bootstrap CI; every resample refits the
/// participation model on a redrawn population.
EffectEstimate ipw_with_ci(const Sample& sample, const CovariateSchema& covariates,
                           SurvivalKind kind, const CoxOptions& cox, const IpwOptions& ipw_opts,
                           const BootstrapOptions& boot);

EffectEstimate dim_with_ci(const Sample& sample, const BootstrapOptions& boot);

/// Rows "t,method,point,ci_lo,ci_hi,n_treat,n_ctrl".
void write_estimates_csv(const std::vector<EffectEstimate>& estimates, std::ostream& out);
void write_analysis_summary_json(const AnalysisResult& result, const AnalysisOptions& options,
                                 std::ostream& out);

enum class PolicyKind { PowerBaseline, StopAtOverlap, StopAtRepresentative };

struct StoppingPolicy {
  PolicyKind kind = PolicyKind::PowerBaseline;
  double sigma_sq = 0.02;
  double delta = 0.05;
  bool per_arm = true;  // stop at 2n participants rather than n
  StageConfig stage;

  std::string name() const;
};

/// Baseline with the given variance and effect size, and both stage
/// policies with the given thresholds.
std::vector<StoppingPolicy> default_policies(const StageConfig& stage, double sigma_sq = 0.02,
                                             double delta = 0.05);

struct SuiteConfig {
  int experiments = 100;
  int effective = 20;  // the first `effective` experiments carry tau > 0
  double tau_lo = 0.02;
  double tau_hi = 0.06;
  double heterogeneity_lo = -1.0;
  double heterogeneity_hi = 1.0;
  SynthConfig base;  // seed, tau and heterogeneity are overwritten per experiment
  SurvivalKind model = SurvivalKind::KaplanMeier;
  int bootstrap = 500;

  void validate() const;
};

/// Suite fields at the top level plus the generator settings under "base".
SuiteConfig suite_config_from_json(std::istream& in);
SuiteConfig load_suite_config(const std::filesystem::path& path);

/// Parameters of experiment `index` of the suite seeded with `seed`.
SynthConfig suite_experiment(const SuiteConfig& suite, std::uint64_t seed, int index);

struct PolicyOutcome {
  std::string policy;
  long long tp = 0, tn = 0, fp = 0, fn = 0, no_decision = 0;

  std::optional<double> fpr() const;
  std::optional<double> tpr() const;
};

struct EvaluationSummary {
  double alpha = 0.05;
  std::vector<std::uint64_t> suite_seeds;
  int experiments = 0;
  std::vector<PolicyOutcome> policies;
  std::string ground_truth_rule;
};

/// Runs every policy on every experiment of each suite seed and pools the
/// confusion matrices.
EvaluationSummary evaluate(const std::vector<StoppingPolicy>& policies, const SuiteConfig& suite,
                           double alpha, const std::vector<std::uint64_t>& suite_seeds);

void write_evaluation_json(const EvaluationSummary& summary, std::ostream& out);

}  // namespace stagewise

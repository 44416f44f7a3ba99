#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "stagewise/harness.hpp"

namespace fs = std::filesystem;
using namespace stagewise;

namespace {

struct Common {
  double eta_o = 0.5;
  std::optional<double> eta_r;
  double rho_frac = 0.2;
  double c_const = 2.0;
  std::string model = "km";
  int bootstrap = 1000;
  double alpha = 0.05;
  std::uint64_t seed = 0;
  std::string config;
  std::string out = ".";
  std::string roster;
  std::string schema = "x:4";
  int horizon = 30;
  int suites = 1;
  double sigma_sq = 0.02;
  double delta = 0.05;
  bool power_total = false;
};

void add_stage_flags(CLI::App* cmd, Common& c) {
  cmd->add_option("--eta-o", c.eta_o, "overlap threshold");
  cmd->add_option("--eta-r", c.eta_r, "representative threshold (default from C and rho)");
  cmd->add_option("--rho-frac", c.rho_frac, "rho as a fraction of sup |DIM|");
  cmd->add_option("--c-const", c.c_const, "constant C");
  cmd->add_option("--model", c.model, "participation model")
      ->check(CLI::IsMember({"km", "cox"}));
  cmd->add_option("--bootstrap", c.bootstrap, "bootstrap resamples");
  cmd->add_option("--alpha", c.alpha, "significance level");
}

void add_roster_flags(CLI::App* cmd, Common& c) {
  cmd->add_option("--roster", c.roster, "roster CSV");
  cmd->add_option("--schema", c.schema, "covariates, e.g. x:4 or age:3,region:2");
  cmd->add_option("--horizon", c.horizon, "declared horizon in days");
  cmd->add_option("--config", c.config, "generator config JSON (used when no --roster)");
}

StageConfig stage_config(const Common& c) {
  StageConfig s;
  s.eta_o = c.eta_o;
  s.eta_r = c.eta_r;
  s.rho_fraction = c.rho_frac;
  s.C = c.c_const;
  s.validate();
  return s;
}

PopulationRoster input_roster(const Common& c, bool seed_given) {
  if (!c.roster.empty()) {
    return load_roster(c.roster, RosterSchema{parse_covariate_schema(c.schema), c.horizon});
  }
  SynthConfig config = c.config.empty() ? SynthConfig{} : load_synth_config(c.config);
  if (seed_given) config.seed = c.seed;
  return generate(config).roster;
}

fs::path output_dir(const std::string& out) {
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec || !fs::is_directory(out)) throw ValidationError("cannot create output directory " + out);
  return fs::path(out);
}

std::ofstream open_output(const fs::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ValidationError("cannot write " + path.string());
  return f;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stage-wise analysis of experiments with ongoing enrollment"};
  app.require_subcommand(1);
  Common c;

  auto* simulate = app.add_subcommand("simulate", "generate a synthetic roster");
  simulate->add_option("--config", c.config, "generator config JSON");
  simulate->add_option("--seed", c.seed, "generator seed (overrides the config)");
  simulate->add_option("--out", c.out, "output directory");

  auto* analyze_cmd = app.add_subcommand("analyze", "stage detection and estimates per day");
  add_stage_flags(analyze_cmd, c);
  add_roster_flags(analyze_cmd, c);
  analyze_cmd->add_option("--seed", c.seed, "seed for the bootstrap (and the generator)");
  analyze_cmd->add_option("--out", c.out, "output directory");

  auto* validate = app.add_subcommand("validate", "SRM and AA checks");
  add_roster_flags(validate, c);
  validate->add_option("--alpha", c.alpha, "significance level");
  validate->add_option("--seed", c.seed, "generator seed");
  validate->add_option("--out", c.out, "output directory");

  auto* evaluate_cmd = app.add_subcommand("evaluate", "stopping policies on a synthetic suite");
  add_stage_flags(evaluate_cmd, c);
  evaluate_cmd->add_option("--config", c.config, "suite config JSON");
  evaluate_cmd->add_option("--seed", c.seed, "first suite seed");
  evaluate_cmd->add_option("--suites", c.suites, "number of consecutive suite seeds to pool")
      ->check(CLI::PositiveNumber);
  evaluate_cmd->add_option("--sigma-sq", c.sigma_sq, "baseline outcome variance");
  evaluate_cmd->add_option("--delta", c.delta, "baseline minimum detectable effect");
  evaluate_cmd->add_flag("--power-total", c.power_total,
                         "baseline sample size counts both arms together");
  evaluate_cmd->add_option("--out", c.out, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (simulate->parsed()) {
      SynthConfig config = c.config.empty() ? SynthConfig{} : load_synth_config(c.config);
      if (simulate->count("--seed")) config.seed = c.seed;
      const SyntheticExperiment experiment = generate(config);
      const fs::path dir = output_dir(c.out);
      auto roster = open_output(dir / "roster.csv");
      write_roster(experiment.roster, roster);
      auto truth = open_output(dir / "truth.json");
      write_ground_truth_json(experiment.truth, truth);
      auto cfg = open_output(dir / "config.json");
      write_synth_config(config, cfg);
    } else if (analyze_cmd->parsed()) {
      AnalysisOptions options;
      options.stage = stage_config(c);
      options.model = parse_survival_kind(c.model);
      options.bootstrap = c.bootstrap;
      options.alpha = c.alpha;
      options.seed = c.seed;
      const PopulationRoster roster = input_roster(c, analyze_cmd->count("--seed") > 0);
      const AnalysisResult result = analyze(roster, options);
      const fs::path dir = output_dir(c.out);
      auto stages = open_output(dir / "stages.csv");
      write_stages_csv(result.stages, stages);
      auto estimates = open_output(dir / "estimates.csv");
      write_estimates_csv(result.estimates, estimates);
      auto validity = open_output(dir / "validity.json");
      write_validity_json(result.validity, validity);
      auto aa = open_output(dir / "aa.csv");
      write_aa_csv(result.validity, aa);
      auto summary = open_output(dir / "summary.json");
      write_analysis_summary_json(result, options, summary);
    } else if (validate->parsed()) {
      if (!(c.alpha > 0.0 && c.alpha < 1.0)) throw ValidationError("alpha must lie in (0, 1)");
      const PopulationRoster roster = input_roster(c, validate->count("--seed") > 0);
      const ValidityReport report =
          aa_check(roster, roster.pre_metric_names(), 1, roster.horizon(), c.alpha);
      const fs::path dir = output_dir(c.out);
      auto validity = open_output(dir / "validity.json");
      write_validity_json(report, validity);
      auto aa = open_output(dir / "aa.csv");
      write_aa_csv(report, aa);
    } else if (evaluate_cmd->parsed()) {
      SuiteConfig suite = c.config.empty() ? SuiteConfig{} : load_suite_config(c.config);
      suite.model = parse_survival_kind(c.model);
      if (evaluate_cmd->count("--bootstrap")) suite.bootstrap = c.bootstrap;
      std::vector<std::uint64_t> seeds;
      for (int i = 0; i < c.suites; ++i) seeds.push_back(c.seed + static_cast<std::uint64_t>(i));
      auto policies = default_policies(stage_config(c), c.sigma_sq, c.delta);
      policies.front().per_arm = !c.power_total;
      const EvaluationSummary summary = evaluate(policies, suite, c.alpha, seeds);
      const fs::path dir = output_dir(c.out);
      auto out = open_output(dir / "evaluation.json");
      write_evaluation_json(summary, out);
    }
  } catch (const ValidationError& e) {
    std::cerr << "validation error: " << e.what() << '\n';
    return 1;
  } catch (const AnalysisError& e) {
    std::cerr << "analysis failure: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "analysis failure: " << e.what() << '\n';
    return 2;
  }
  return 0;
}

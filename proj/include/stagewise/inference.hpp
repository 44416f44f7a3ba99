#pragma once

// Inference and validity checks: percentile bootstrap, Welch t-test, SRM
// chi-square, multiple-testing corrections and the AA grid over pre-period
// metrics.

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stagewise/estimators.hpp"
#include "stagewise/roster.hpp"

namespace stagewise {

struct TTestResult {
  double statistic = 0.0;
  double p_value = 1.0;
  double df = 0.0;
  /// Both samples constant: p is 1 if their values agree, else 0.
  bool degenerate = false;
};

/// Welch two-sample t-test, two-sided. Each sample needs two values.
TTestResult welch_t_test(std::span<const double> a, std::span<const double> b);
TTestResult welch_t_test(const Eigen::Ref<const Eigen::VectorXd>& a,
                         const Eigen::Ref<const Eigen::VectorXd>& b);

struct SrmResult {
  double chi_square = 0.0;
  double p_value = 1.0;
};

/// Pearson chi-square (1 df) of the observed split against
/// expected_ratio = treated:control.
SrmResult srm_test(long long n_treat, long long n_ctrl, double expected_ratio = 1.0);

enum class Correction { Bonferroni, BH, BY };

std::string to_string(Correction method);

/// Rejection flags, in input order.
std::vector<bool> correct_pvalues(std::span<const double> ps, Correction method, double alpha);

/// Linear-interpolation percentiles at (1-level)/2 and 1-(1-level)/2.
Interval percentile_interval(std::vector<double> values, double level);

enum class ResampleScope {
  Participants,  // draw participants at t with replacement
  Population,    // draw the whole population; participant set and N_x vary
};

using SampleStatistic = std::function<double(const Sample&)>;

struct BootstrapOptions {
  int resamples = 1000;
  double level = 0.95;
  std::uint64_t seed = 0;
  ResampleScope scope = ResampleScope::Participants;
  /// Fraction of failed resamples tolerated before the bootstrap fails.
  double max_failure_fraction = 0.10;
  unsigned threads = 0;  // 0: hardware concurrency
};

struct BootstrapResult {
  Interval interval;
  int failures = 0;
  std::vector<double> replicates;  // successful ones, in resample order
};

/// Resample b draws with its own generator seeded by mix_seed(seed, b), so
/// the result does not depend on the thread count.
BootstrapResult bootstrap(const Sample& sample, const SampleStatistic& statistic,
                          const BootstrapOptions& options);

struct SrmPoint {
  Day t = 0;
  long long n_treat = 0;
  long long n_ctrl = 0;
  SrmResult result;
};

struct AaCell {
  std::string metric;
  Day t = 0;
  std::optional<double> rel_diff;  // (mean_t - mean_c) / mean_c, absent if mean_c is 0
  std::optional<double> p_value;   // absent when an arm has fewer than two
  bool degenerate = false;
};

struct ValidityReport {
  double alpha = 0.05;
  double expected_ratio = 1.0;
  std::vector<SrmPoint> srm;
  std::vector<AaCell> aa;
  /// Per method, flags over the AA cells (cells without a p are never flagged).
  std::vector<std::pair<Correction, std::vector<bool>>> aa_flags;
  std::vector<std::pair<Correction, std::vector<bool>>> srm_flags;
};

/// SRM per day and the AA grid for the named pre-period metrics over days
/// t_from..t_to. Corrections run across the full metric x day grid.
ValidityReport aa_check(const PopulationRoster& roster, const std::vector<std::string>& metrics,
                        Day t_from, Day t_to, double alpha, double expected_ratio = 1.0);

void write_validity_json(const ValidityReport& report, std::ostream& out);
/// Rows "metric,t,rel_diff,p,bonferroni,bh,by".
void write_aa_csv(const ValidityReport& report, std::ostream& out);

}  // namespace stagewise

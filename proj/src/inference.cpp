#include "stagewise/inference.hpp"

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/students_t.hpp>
#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>
#include <thread>

namespace stagewise {

namespace {

struct Moments {
  double mean = 0.0;
  double var = 0.0;  // unbiased
  double n = 0.0;
};

Moments moments(std::span<const double> x) {
  Moments m;
  m.n = static_cast<double>(x.size());
  m.mean = std::accumulate(x.begin(), x.end(), 0.0) / m.n;
  double ss = 0.0;
  for (const double v : x) ss += (v - m.mean) * (v - m.mean);
  m.var = ss / (m.n - 1.0);
  return m;
}

}  // namespace

TTestResult welch_t_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() < 2 || b.size() < 2) {
    throw AnalysisError("t-test needs at least two values per sample");
  }
  const Moments ma = moments(a), mb = moments(b);
  const double va = ma.var / ma.n, vb = mb.var / mb.n;
  const double se2 = va + vb;
  TTestResult r;
  if (se2 == 0.0) {
    r.degenerate = true;
    if (ma.mean == mb.mean) {
      r.statistic = 0.0;
      r.p_value = 1.0;
    } else {
      r.statistic = std::copysign(std::numeric_limits<double>::infinity(), ma.mean - mb.mean);
      r.p_value = 0.0;
    }
    return r;
  }
  r.statistic = (ma.mean - mb.mean) / std::sqrt(se2);
  r.df = se2 * se2 / (va * va / (ma.n - 1.0) + vb * vb / (mb.n - 1.0));
  const boost::math::students_t dist(r.df);
  r.p_value = std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(r.statistic))));
  return r;
}

TTestResult welch_t_test(const Eigen::Ref<const Eigen::VectorXd>& a,
                         const Eigen::Ref<const Eigen::VectorXd>& b) {
  return welch_t_test(std::span<const double>(a.data(), static_cast<std::size_t>(a.size())),
                      std::span<const double>(b.data(), static_cast<std::size_t>(b.size())));
}

SrmResult srm_test(long long n_treat, long long n_ctrl, double expected_ratio) {
  if (n_treat < 0 || n_ctrl < 0 || n_treat + n_ctrl == 0) {
    throw AnalysisError("SRM test needs a positive total count");
  }
  if (!(expected_ratio > 0.0)) throw ValidationError("expected ratio must be positive");
  const double n = static_cast<double>(n_treat + n_ctrl);
  const double e_t = n * expected_ratio / (1.0 + expected_ratio);
  const double e_c = n - e_t;
  const double d_t = static_cast<double>(n_treat) - e_t;
  const double d_c = static_cast<double>(n_ctrl) - e_c;
  SrmResult r;
  r.chi_square = d_t * d_t / e_t + d_c * d_c / e_c;
  const boost::math::chi_squared dist(1.0);
  r.p_value = boost::math::cdf(boost::math::complement(dist, r.chi_square));
  return r;
}

std::string to_string(Correction method) {
  switch (method) {
    case Correction::Bonferroni: return "bonferroni";
    case Correction::BH: return "bh";
    case Correction::BY: return "by";
  }
  return "unknown";
}

std::vector<bool> correct_pvalues(std::span<const double> ps, Correction method, double alpha) {
  const std::size_t m = ps.size();
  std::vector<bool> reject(m, false);
  if (m == 0) return reject;
  for (const double p : ps) {
    if (!(p >= 0.0 && p <= 1.0)) throw ValidationError("p-value outside [0, 1]");
  }
  const double md = static_cast<double>(m);
  if (method == Correction::Bonferroni) {
    for (std::size_t i = 0; i < m; ++i) reject[i] = ps[i] <= alpha / md;
    return reject;
  }
  double level = alpha;
  if (method == Correction::BY) {
    double harmonic = 0.0;
    for (std::size_t i = 1; i <= m; ++i) harmonic += 1.0 / static_cast<double>(i);
    level /= harmonic;
  }
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return ps[a] < ps[b]; });
  std::size_t k = 0;
  for (std::size_t rank = 1; rank <= m; ++rank) {
    if (ps[order[rank - 1]] <= level * static_cast<double>(rank) / md) k = rank;
  }
  for (std::size_t rank = 0; rank < k; ++rank) reject[order[rank]] = true;
  return reject;
}

Interval percentile_interval(std::vector<double> values, double level) {
  if (values.empty()) throw AnalysisError("no bootstrap replicates");
  if (!(level > 0.0 && level < 1.0)) throw ValidationError("level must lie in (0, 1)");
  std::sort(values.begin(), values.end());
  auto quantile = [&](double q) {
    const double pos = q * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
  };
  const double tail = (1.0 - level) / 2.0;
  return {quantile(tail), quantile(1.0 - tail), level};
}

BootstrapResult bootstrap(const Sample& sample, const SampleStatistic& statistic,
                          const BootstrapOptions& options) {
  if (options.resamples < 2) throw ValidationError("bootstrap needs at least two resamples");
  const bool population = options.scope == ResampleScope::Population;
  if (population && sample.unit_stratum.size() == 0) {
    throw AnalysisError("population resampling needs a sample built from a roster");
  }
  const Eigen::Index draw_size = population ? sample.unit_stratum.size() : sample.size();
  if (draw_size == 0) throw AnalysisError("nothing to resample");

  const auto B = static_cast<std::size_t>(options.resamples);
  std::vector<double> values(B, 0.0);
  std::vector<char> ok(B, 0);
  std::atomic<std::size_t> next{0};

  auto worker = [&] {
    std::vector<Eigen::Index> rows(static_cast<std::size_t>(draw_size));
    for (std::size_t b = next++; b < B; b = next++) {
      std::mt19937_64 rng(mix_seed(options.seed, b));
      std::uniform_int_distribution<Eigen::Index> pick(0, draw_size - 1);
      for (auto& r : rows) r = pick(rng);
      try {
        const Sample resample = population ? sample.take_population(rows) : sample.take(rows);
        values[b] = statistic(resample);
        ok[b] = std::isfinite(values[b]) ? 1 : 0;
      } catch (const AnalysisError&) {
      }
    }
  };
  unsigned threads = options.threads ? options.threads : std::thread::hardware_concurrency();
  threads = std::clamp<unsigned>(threads, 1, static_cast<unsigned>(B));
  std::vector<std::thread> pool;
  for (unsigned i = 1; i < threads; ++i) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();

  BootstrapResult result;
  for (std::size_t b = 0; b < B; ++b) {
    if (ok[b]) {
      result.replicates.push_back(values[b]);
    } else {
      ++result.failures;
    }
  }
  if (static_cast<double>(result.failures) > options.max_failure_fraction * static_cast<double>(B)) {
    throw AnalysisError("bootstrap failed on " + std::to_string(result.failures) + " of " +
                        std::to_string(B) + " resamples");
  }
  result.interval = percentile_interval(result.replicates, options.level);
  return result;
}

ValidityReport aa_check(const PopulationRoster& roster, const std::vector<std::string>& metrics,
                        Day t_from, Day t_to, double alpha, double expected_ratio) {
  if (t_from < 1 || t_to > roster.horizon() || t_from > t_to) {
    throw ValidationError("AA day range must satisfy 1 <= from <= to <= horizon");
  }
  std::vector<Eigen::Index> columns;
  for (const auto& name : metrics) {
    const auto& names = roster.pre_metric_names();
    const auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) throw ValidationError("metric '" + name + "' absent from roster");
    columns.push_back(it - names.begin());
  }

  ValidityReport report;
  report.alpha = alpha;
  report.expected_ratio = expected_ratio;
  for (Day t = t_from; t <= t_to; ++t) {
    const Sample s = sample_at(roster, t);
    if (s.size() > 0) {
      report.srm.push_back({t, s.treated_count(), s.control_count(),
                            srm_test(s.treated_count(), s.control_count(), expected_ratio)});
    }
    for (std::size_t m = 0; m < metrics.size(); ++m) {
      AaCell cell;
      cell.metric = metrics[m];
      cell.t = t;
      std::vector<double> treated, control;
      for (Eigen::Index i = 0; i < s.size(); ++i) {
        (s.arm(i) == 1 ? treated : control).push_back(s.pre_metrics(i, columns[m]));
      }
      if (treated.size() >= 2 && control.size() >= 2) {
        const TTestResult tt = welch_t_test(treated, control);
        cell.p_value = tt.p_value;
        cell.degenerate = tt.degenerate;
        const double mt = std::accumulate(treated.begin(), treated.end(), 0.0) / treated.size();
        const double mc = std::accumulate(control.begin(), control.end(), 0.0) / control.size();
        if (mc != 0.0) cell.rel_diff = (mt - mc) / mc;
      }
      report.aa.push_back(cell);
    }
  }

  std::vector<double> aa_ps, srm_ps;
  for (const auto& c : report.aa) {
    if (c.p_value) aa_ps.push_back(*c.p_value);
  }
  for (const auto& s : report.srm) srm_ps.push_back(s.result.p_value);
  for (const Correction method : {Correction::Bonferroni, Correction::BH, Correction::BY}) {
    const auto flags = correct_pvalues(aa_ps, method, alpha);
    std::vector<bool> grid(report.aa.size(), false);
    std::size_t k = 0;
    for (std::size_t i = 0; i < report.aa.size(); ++i) {
      if (report.aa[i].p_value) grid[i] = flags[k++];
    }
    report.aa_flags.emplace_back(method, std::move(grid));
    report.srm_flags.emplace_back(method, correct_pvalues(srm_ps, method, alpha));
  }
  return report;
}

namespace {

nlohmann::json optional_number(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

}  // namespace

void write_validity_json(const ValidityReport& report, std::ostream& out) {
  using nlohmann::json;
  json j;
  j["alpha"] = report.alpha;
  j["expected_ratio"] = report.expected_ratio;
  json srm = json::array();
  for (std::size_t i = 0; i < report.srm.size(); ++i) {
    const auto& s = report.srm[i];
    json row{{"t", s.t},
             {"n_treat", s.n_treat},
             {"n_ctrl", s.n_ctrl},
             {"chi_square", s.result.chi_square},
             {"p", s.result.p_value}};
    for (const auto& [method, flags] : report.srm_flags) row[to_string(method)] = bool(flags[i]);
    srm.push_back(row);
  }
  j["srm"] = srm;
  json aa = json::array();
  for (std::size_t i = 0; i < report.aa.size(); ++i) {
    const auto& c = report.aa[i];
    json row{{"metric", c.metric},
             {"t", c.t},
             {"rel_diff", optional_number(c.rel_diff)},
             {"p", optional_number(c.p_value)},
             {"degenerate", c.degenerate}};
    for (const auto& [method, flags] : report.aa_flags) row[to_string(method)] = bool(flags[i]);
    aa.push_back(row);
  }
  j["aa"] = aa;
  out << j.dump(2) << '\n';
}

void write_aa_csv(const ValidityReport& report, std::ostream& out) {
  out << "metric,t,rel_diff,p,bonferroni,bh,by\n";
  for (std::size_t i = 0; i < report.aa.size(); ++i) {
    const auto& c = report.aa[i];
    out << c.metric << ',' << c.t << ',' << (c.rel_diff ? format_double(*c.rel_diff) : "") << ','
        << (c.p_value ? format_double(*c.p_value) : "");
    for (const auto& [method, flags] : report.aa_flags) out << ',' << (flags[i] ? 1 : 0);
    out << '\n';
  }
}

}  // namespace stagewise

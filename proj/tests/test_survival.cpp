#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "fixtures.hpp"
#include "stagewise/survival.hpp"
#include "stagewise/synthgen.hpp"

using namespace stagewise;
using fixtures::Row;

namespace {

CovariateProfile level(int x) { return CovariateProfile{{{"x", x}}}; }

}  // namespace

TEST_CASE("KM on the three-unit stratum") {
  const auto r = fixtures::roster({{0, 1, 1, 0.0}, {0, 2, 0, 0.0}, {0, std::nullopt}}, 1, 3);
  const auto fit = fit_km(r, 3);
  CHECK(pi_hat(fit, 0, level(0)) == 0.0);
  CHECK(pi_hat(fit, 2, level(0)) == doctest::Approx(1.0 / 3.0));
  CHECK(pi_hat(fit, 3, level(0)) == doctest::Approx(2.0 / 3.0));
  CHECK_THROWS_AS(pi_hat(fit, 4, level(0)), AnalysisError);
  CHECK_THROWS_AS(pi_hat(fit, 1, level(1)), AnalysisError);
}

TEST_CASE("KM with everyone arriving on the first day") {
  const auto r = fixtures::roster({{0, 0, 1, 0.0}, {0, 0, 0, 0.0}, {1, 0, 1, 0.0}}, 2, 4);
  const auto fit = fit_km(r, 4);
  for (int t = 1; t <= 4; ++t) {
    CHECK(pi_hat(fit, t, level(0)) == 1.0);
    CHECK(pi_hat(fit, t, level(1)) == 1.0);
  }
}

TEST_CASE("KM equals the empirical CDF on random rosters") {
  std::mt19937_64 rng(5);
  for (int rep = 0; rep < 50; ++rep) {
    std::uniform_int_distribution<int> n(1, 30), x(0, 2), day(0, 8);
    std::vector<Row> rows;
    const int size = n(rng);
    for (int i = 0; i < size; ++i) {
      const int d = day(rng);
      rows.push_back({x(rng), d < 8 ? std::optional<int>(d) : std::nullopt, i % 2, 0.0});
    }
    const auto r = fixtures::roster(rows, 3, 8);
    const auto fit = fit_km(r, 8);
    for (const auto& p : r.strata_profiles()) {
      for (int t = 0; t <= 8; ++t) {
        int num = 0, den = 0;
        for (const auto& u : r.units()) {
          if (u.profile != p) continue;
          ++den;
          num += u.participates_by(t) ? 1 : 0;
        }
        CHECK(pi_hat(fit, t, p) == static_cast<double>(num) / den);
      }
    }
  }
}

TEST_CASE("KM tracks the analytic curve of the synthetic design") {
  SynthConfig config;
  config.n_units = 20000;
  config.treat_count = 10000;
  config.seed = 3;
  const auto e = generate(config);
  const auto fit = fit_km(e.roster, 30);
  for (int t = 1; t <= 30; ++t) {
    const double closed = 1.0 - 4.0 * (1.0 - std::pow(0.75, t + 1)) / (t + 1);
    CHECK(analytic_pi(config, 0, t) == doctest::Approx(closed).epsilon(1e-12));
    CHECK(std::abs(pi_hat(fit, t, level(0)) - closed) < 0.03);
  }
}

TEST_CASE("Cox on identical strata gives a null coefficient and the pooled Breslow curve") {
  const std::vector<int> days{0, 0, 1, 2, 2, 3, 5};
  std::vector<Row> rows;
  for (int x = 0; x < 2; ++x) {
    for (const int d : days) rows.push_back({x, d, 0, 0.0});
    rows.push_back({x, std::nullopt});
  }
  const auto r = fixtures::roster(rows, 2, 6);
  const auto cox = fit_cox(r, 6);
  REQUIRE(cox.coefficients);
  CHECK(std::abs((*cox.coefficients)(0)) < 1e-8);
  // With beta = 0 the curve is 1 - exp(-Nelson-Aalen) of the pooled data.
  double cumulative = 0.0;
  int at_risk = 16;
  for (int t = 0; t <= 6; ++t) {
    CHECK(pi_hat(cox, t, level(0)) == doctest::Approx(pi_hat(cox, t, level(1))));
    CHECK(pi_hat(cox, t, level(0)) == doctest::Approx(1.0 - std::exp(-cumulative)).epsilon(1e-9));
    const int events = 2 * static_cast<int>(std::count(days.begin(), days.end(), t));
    if (t < 6) cumulative += static_cast<double>(events) / at_risk;
    at_risk -= events;
  }
  // The empirical CDF is close but not identical.
  const auto km = fit_km(r, 6);
  CHECK(std::abs(pi_hat(cox, 6, level(0)) - pi_hat(km, 6, level(0))) < 0.1);
}

TEST_CASE("Cox recovers a doubled hazard") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Row> rows;
  for (int i = 0; i < 20000; ++i) {
    const int x = i % 2;
    const double h = x ? 0.04 : 0.02;
    std::optional<int> arrival;
    for (int d = 0; d < 20 && !arrival; ++d) {
      if (u(rng) < h) arrival = d;
    }
    rows.push_back({x, arrival, 0, 0.0});
  }
  const auto fit = fit_cox(fixtures::roster(rows, 2, 20), 20);
  REQUIRE(fit.coefficients);
  CHECK(std::exp((*fit.coefficients)(0)) == doctest::Approx(2.0).epsilon(0.1));
}

TEST_CASE("Cox one-hot encoding and unseen profiles") {
  SynthConfig config;
  config.seed = 2;
  const auto e = generate(config);
  CoxOptions opts;
  opts.encoding = CoxEncoding::OneHot;
  const auto fit = fit_cox(e.roster, 30, opts);
  REQUIRE(fit.coefficients);
  CHECK(fit.coefficients->size() == 3);
  CHECK(encoded_column_names(e.roster.covariates(), CoxEncoding::OneHot).front() == "x=1");
  const auto km = fit_km(e.roster, 30);
  for (int x = 0; x < 4; ++x) {
    CHECK(std::abs(pi_hat(fit, 20, level(x)) - pi_hat(km, 20, level(x))) < 0.02);
  }
}

TEST_CASE("AUC edge cases") {
  Eigen::VectorXd scores(4);
  scores << 0.1, 0.2, 0.8, 0.9;
  Eigen::VectorXi labels(4);
  labels << 0, 0, 1, 1;
  CHECK(*roc_auc(scores, labels) == 1.0);
  CHECK(*roc_auc(Eigen::VectorXd::Constant(4, 0.3), labels) == 0.5);
  CHECK_FALSE(roc_auc(scores, Eigen::VectorXi::Zero(4)).has_value());
}

TEST_CASE("AUC evaluation on the synthetic design") {
  SynthConfig config;
  config.seed = 4;
  const auto e = generate(config);
  const auto km = auc_eval(e.roster, 0.9, SurvivalKind::KaplanMeier, 1);
  REQUIRE(km.size() == 30);
  double sum = 0.0;
  int n = 0;
  for (const auto& p : km) {
    if (p.auc) {
      sum += *p.auc;
      ++n;
    }
  }
  CHECK(sum / n > 0.7);
}

TEST_CASE("survival kind parsing") {
  CHECK(parse_survival_kind("km") == SurvivalKind::KaplanMeier);
  CHECK(parse_survival_kind("cox") == SurvivalKind::Cox);
  CHECK_THROWS_AS(parse_survival_kind("weibull"), ValidationError);
}

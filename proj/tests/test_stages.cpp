#include <doctest.h>

#include <random>

#include "fixtures.hpp"
#include "stagewise/estimators.hpp"
#include "stagewise/stages.hpp"
#include "stagewise/synthgen.hpp"

using namespace stagewise;
using fixtures::Row;

namespace {

SurvivalFit fit_with(const std::vector<double>& pi) {
  SurvivalFit fit;
  fit.t_obs = 1;
  fit.curves.resize(static_cast<Eigen::Index>(pi.size()), 2);
  for (std::size_t s = 0; s < pi.size(); ++s) {
    fit.profiles.push_back(CovariateProfile{{{"x", static_cast<int>(s)}}});
    fit.curves(static_cast<Eigen::Index>(s), 0) = 0.0;
    fit.curves(static_cast<Eigen::Index>(s), 1) = pi[s];
  }
  return fit;
}

}  // namespace

TEST_CASE("pi_inf is the worst stratum") {
  CHECK(pi_inf(fit_with({1.0, 1.0}), 1) == 1.0);
  CHECK(pi_inf(fit_with({0.4, 0.6, 0.9}), 1) == 0.4);
  CHECK_THROWS_AS(pi_inf(fit_with({0.4}), 2), AnalysisError);
}

TEST_CASE("crossings") {
  const std::vector<HeuristicPoint> series{{1, 0.3}, {2, std::nullopt}, {3, 0.6}, {4, 0.9}};
  CHECK(detect_T_o(series, 0.5) == 3);
  CHECK(detect_T_o(series, 0.0) == 1);
  CHECK_FALSE(detect_T_r(series, 0.99).has_value());
  CHECK(detect_T_r(series, 0.85) == 4);
}

TEST_CASE("eta_r from C and rho") {
  CHECK(compute_eta_r(1.2, 0.2) == doctest::Approx(6.0 / 7.0));
  CHECK(compute_eta_r(2.0, 2.0) == 0.5);
  CHECK(compute_eta_r(1.0, 9.0) == doctest::Approx(0.1));
  CHECK(compute_eta_r(2.0, 0.2) > compute_eta_r(1.0, 0.2));
  CHECK(compute_eta_r(1.0, 0.1) > compute_eta_r(1.0, 0.2));
  StageConfig config;
  CHECK(config.effective_eta_r() == doctest::Approx(2.0 / 2.2));
  config.eta_r = 0.85;
  CHECK(config.effective_eta_r() == 0.85);
  config.eta_o = 1.0;
  CHECK_THROWS_AS(config.validate(), ValidationError);
}

TEST_CASE("classification follows the crossings") {
  CHECK(classify(1, 3, 6) == Stage::Unstable);
  CHECK(classify(3, 3, 6) == Stage::Overlapping);
  CHECK(classify(6, 3, 6) == Stage::Representative);
  CHECK(classify(9, std::nullopt, std::nullopt) == Stage::Unstable);
}

TEST_CASE("everyone arriving on the first day is representative from day one") {
  const auto r = fixtures::roster({{0, 0, 1, 1.0}, {0, 0, 0, 0.0}, {1, 0, 1, 1.0}, {1, 0, 0, 0.0}},
                                  2, 4);
  StageConfig config;
  config.eta_r = 0.85;
  const auto report = online_stages(r, SurvivalKind::KaplanMeier, config);
  CHECK(report.T_o == 1);
  CHECK(report.T_r == 1);
  for (const auto s : report.stage_at) CHECK(s == Stage::Representative);
}

TEST_CASE("an empty stratum keeps the experiment unstable") {
  const auto r = fixtures::roster({{0, 0, 1, 1.0}, {0, 0, 0, 0.0}, {1, std::nullopt}}, 2, 3);
  const auto report = online_stages(r, SurvivalKind::KaplanMeier, StageConfig{});
  for (const auto& p : report.series) CHECK(*p.pi_inf == 0.0);
  CHECK_FALSE(report.T_o.has_value());
}

TEST_CASE("stages on the synthetic design") {
  SynthConfig config;
  config.seed = 1;
  const auto e = generate(config);
  StageConfig stage;
  stage.eta_r = 0.85;
  const auto km = online_stages(e.roster, SurvivalKind::KaplanMeier, stage);
  REQUIRE(km.T_o);
  REQUIRE(km.T_r);
  CHECK(*km.T_o >= 3);
  CHECK(*km.T_o <= 8);
  CHECK(*km.T_r > *km.T_o);
  // A single KM fit is monotone, so the online and final-fit crossings agree.
  CHECK(km.retrospective_T_o == km.T_o);
  CHECK(km.retrospective_T_r == km.T_r);
  for (std::size_t i = 1; i < km.series.size(); ++i) {
    CHECK(*km.series[i].pi_inf >= *km.series[i - 1].pi_inf);
  }
}

TEST_CASE("estimate_C") {
  std::vector<Row> rows;
  for (int x = 0; x < 2; ++x) {
    rows.push_back({x, 0, 1, 1.0 + x});
    rows.push_back({x, 0, 0, 0.5 + x});
  }
  CHECK(estimate_C(sample_at(fixtures::roster(rows, 2, 2), 1)) == doctest::Approx(2.0));

  const auto zeros = fixtures::roster({{0, 0, 1, 0.0}, {0, 0, 0, 0.0}}, 1, 2);
  CHECK_THROWS_WITH_AS(estimate_C(sample_at(zeros, 1)), doctest::Contains("unstable C"),
                       AnalysisError);

  const auto opposed = fixtures::roster(
      {{0, 0, 1, 1.0}, {0, 0, 0, 0.0}, {1, 0, 1, 0.0}, {1, 0, 0, 1.0}}, 2, 2);
  CHECK_THROWS_AS(estimate_C(sample_at(opposed, 1)), AnalysisError);
}

TEST_CASE("bias bound") {
  const auto r = fixtures::roster({{0, 0, 1, 1.0}, {0, 0, 0, 0.5}, {1, 0, 1, 0.0}, {1, 0, 0, 0.0}},
                                  2, 2);
  const Sample s = sample_at(r, 1);
  CHECK(bias_bound(s, fit_with({1.0, 1.0})) == 0.0);
  // Weighted mean |HTE| = 0.25.
  CHECK(bias_bound(s, fit_with({0.5, 0.9})) == doctest::Approx(0.5));
  CHECK_THROWS_AS(bias_bound(s, fit_with({0.0, 0.9})), AnalysisError);
}

TEST_CASE("bias bound holds on balanced rosters") {
  std::mt19937_64 rng(21);
  for (int rep = 0; rep < 100; ++rep) {
    const auto r = fixtures::balanced(rng, 3, 6);
    for (Day t = 1; t <= 6; ++t) {
      const Sample s = sample_at(r, t);
      const auto fit = fit_km(r, t);
      if (s.size() == 0 || pi_inf(fit, t) <= 0.0) continue;
      const double gap = std::abs(dim(s).point - ipw(s, fit).point);
      CHECK(gap <= bias_bound(s, fit) + 1e-10);
    }
  }
}

TEST_CASE("covariate selection score") {
  const auto r = fixtures::roster({{0, 0, 1, 1.0}, {0, 0, 0, 0.0}, {1, 0, 1, 3.0}, {1, 0, 0, 0.0}},
                                  2, 2);
  // DIM = 2, stratum effects 1 and 3.
  CHECK(covariate_selection_score(sample_at(r, 1), "x") == doctest::Approx(1.5));

  const auto one = fixtures::roster({{0, 0, 1, 1.0}, {0, 0, 0, 0.2}, {0, 1, 1, 0.7}}, 1, 2);
  CHECK(covariate_selection_score(sample_at(one, 2), "x") == doctest::Approx(1.0));
  CHECK_THROWS_AS(covariate_selection_score(sample_at(one, 2), "z"), ValidationError);
}

#include <doctest.h>

#include <cmath>
#include <random>

#include "fixtures.hpp"
#include "stagewise/estimators.hpp"
#include "stagewise/synthgen.hpp"

using namespace stagewise;
using fixtures::Row;

namespace {

CovariateProfile level(int x) { return CovariateProfile{{{"x", x}}}; }

// KM-kind fit with a flat curve per stratum.
SurvivalFit flat_fit(const std::vector<double>& pi, Day t_obs) {
  SurvivalFit fit;
  fit.t_obs = t_obs;
  fit.covariates = {{"x", static_cast<int>(pi.size())}};
  fit.curves.resize(static_cast<Eigen::Index>(pi.size()), t_obs + 1);
  for (std::size_t s = 0; s < pi.size(); ++s) {
    fit.profiles.push_back(level(static_cast<int>(s)));
    fit.curves.row(static_cast<Eigen::Index>(s)).setConstant(pi[s]);
  }
  return fit;
}

}  // namespace

TEST_CASE("difference in means") {
  const auto r = fixtures::roster({{0, 0, 1, 1.0}, {0, 0, 1, 1.0}, {0, 0, 0, 0.0}, {0, 0, 0, 0.0}});
  const auto e = dim(r, 1);
  CHECK(e.point == 1.0);
  CHECK(e.n_treat == 2);
  CHECK(e.n_ctrl == 2);

  const auto same = fixtures::roster({{0, 0, 1, 0.3}, {1, 0, 1, 0.7}, {0, 0, 0, 0.3}, {1, 0, 0, 0.7}});
  CHECK(dim(same, 1).point == doctest::Approx(0.0));

  const auto one_arm = fixtures::roster({{0, 0, 1, 1.0}, {0, 0, 1, 2.0}});
  CHECK_THROWS_AS(dim(one_arm, 1), AnalysisError);
}

TEST_CASE("stratum effects and decomposition on balanced data") {
  std::mt19937_64 rng(9);
  for (int rep = 0; rep < 30; ++rep) {
    const auto r = fixtures::balanced(rng, 3, 6);
    for (Day t = 1; t <= 6; ++t) {
      const Sample s = sample_at(r, t);
      if (s.size() == 0) continue;
      const auto eff = stratum_effects(s);
      CHECK(eff.weighted_mean() == doctest::Approx(dim(s).point).epsilon(1e-12));
    }
  }
  const auto single = fixtures::roster({{0, 0, 1, 2.0}, {0, 1, 0, 1.0}, {0, 1, 1, 3.0}}, 1, 3);
  CHECK(hte(single, 3, level(0)) == doctest::Approx(dim(single, 3).point));
  CHECK_THROWS_AS(hte(single, 1, level(0)), AnalysisError);
}

TEST_CASE("IPW with unit probabilities is DIM") {
  const auto r = fixtures::roster({{0, 0, 1, 1.5}, {1, 0, 1, 2.0}, {0, 0, 0, 0.5}, {1, 0, 0, 1.0}});
  const auto fit = flat_fit({1.0, 1.0}, 1);
  CHECK(ipw(r, 1, fit).point == dim(r, 1).point);
}

TEST_CASE("IPW doubles the weight of a half-represented stratum") {
  // 8 units; stratum 0 has pi = 0.5.
  const auto r = fixtures::roster({{0, 0, 1, 1.0},
                                   {0, 0, 0, 0.5},
                                   {0, std::nullopt},
                                   {0, std::nullopt},
                                   {1, 0, 1, 2.0},
                                   {1, 0, 1, 4.0},
                                   {1, 0, 0, 1.0},
                                   {1, 0, 0, 3.0}});
  const auto fit = flat_fit({0.5, 1.0}, 1);
  // Treated: (2*1 + 2 + 4) / 3; control: (2*0.5 + 1 + 3) / 3.
  CHECK(ipw(r, 1, fit).point == doctest::Approx(8.0 / 3.0 - 5.0 / 3.0));
  IpwOptions hajek;
  hajek.normalization = IpwNormalization::Hajek;
  CHECK(ipw(r, 1, fit, hajek).point == doctest::Approx(8.0 / 4.0 - 5.0 / 4.0));
}

TEST_CASE("IPW rejects probabilities at the floor") {
  const auto r = fixtures::roster({{0, 0, 1, 1.0}, {1, 0, 0, 0.5}, {1, 0, 1, 0.5}});
  const auto fit = flat_fit({1e-7, 1.0}, 1);
  CHECK_THROWS_WITH_AS(ipw(r, 1, fit), doctest::Contains("x=0"), AnalysisError);
}

TEST_CASE("IPW is linear in the outcomes") {
  std::mt19937_64 rng(4);
  const auto r = fixtures::balanced(rng, 3, 5);
  std::vector<Row> scaled;
  for (const auto& u : r.units()) {
    Row row{u.profile.level("x"), u.arrival_day, u.arm.value_or(0), 3.0 * u.outcome.value_or(0.0)};
    scaled.push_back(row);
  }
  const auto r3 = fixtures::roster(scaled, 3, 5);
  const auto fit = fit_km(r, 5);
  REQUIRE(sample_at(r, 5).size() > 0);
  CHECK(ipw(r3, 5, fit).point == doctest::Approx(3.0 * ipw(r, 5, fit).point));
}

TEST_CASE("outcome regression and doubly robust") {
  const auto r = fixtures::roster({{0, 0, 1, 1.0}, {0, 0, 0, 0.5}, {1, 0, 1, 2.0}, {1, 0, 0, 3.0},
                                   {1, std::nullopt}});
  OutcomeModel constant{[](const CovariateProfile&, int) { return 4.2; }, "constant", {}};
  CHECK(outcome_regression(r, 1, constant).point == 0.0);

  OutcomeModel zero{[](const CovariateProfile&, int) { return 0.0; }, "zero", {}};
  const auto unit = flat_fit({1.0, 1.0}, 1);
  CHECK(doubly_robust(r, 1, unit, zero).point == doctest::Approx(dim(r, 1).point));

  // The true model leaves no residual.
  OutcomeModel truth{[](const CovariateProfile& x, int w) {
                       if (x.level("x") == 0) return w ? 1.0 : 0.5;
                       return w ? 2.0 : 3.0;
                     },
                     "truth",
                     {}};
  const auto fit = flat_fit({0.7, 0.4}, 1);
  CHECK(doubly_robust(r, 1, fit, truth).point ==
        doctest::Approx(outcome_regression(r, 1, truth).point));
  // Population weights: 2 units at x=0 (effect 0.5), 3 at x=1 (effect -1).
  CHECK(outcome_regression(r, 1, truth).point == doctest::Approx((2 * 0.5 - 3 * 1.0) / 5.0));
}

TEST_CASE("stratum mean model") {
  const auto single = fixtures::roster({{0, 0, 1, 2.0}, {0, 0, 1, 4.0}, {0, 0, 0, 1.0}}, 1, 2);
  const auto m = stratum_mean_model(single, 1);
  CHECK(m.predict(level(0), 1) == 3.0);
  CHECK(m.predict(level(0), 0) == 1.0);
  CHECK(m.borrowed_cells.empty());

  const auto gap = fixtures::roster({{0, 0, 1, 2.0}, {0, 0, 0, 1.0}, {1, 0, 1, 6.0}}, 2, 2);
  const auto g = stratum_mean_model(gap, 1);
  REQUIRE(g.borrowed_cells.size() == 1);
  CHECK(g.borrowed_cells[0].second == 0);
  CHECK(g.predict(level(1), 0) == 1.0);
  CHECK_THROWS_AS(g.predict(level(5), 0), AnalysisError);
}

TEST_CASE("jackknife combine arithmetic") {
  const std::vector<double> reps{0.2, 0.4};
  CHECK(jackknife_combine(0.25, reps) == doctest::Approx(0.2));
  const std::vector<double> flat{0.3, 0.3, 0.3};
  CHECK(jackknife_combine(0.3, flat) == doctest::Approx(0.3));
}

TEST_CASE("jackknife on cohort-homogeneous data equals DIM") {
  std::vector<Row> rows;
  for (int d = 0; d < 4; ++d) {
    rows.push_back({0, d, 1, 2.0});
    rows.push_back({0, d, 0, 1.0});
  }
  const auto r = fixtures::roster(rows, 1, 5);
  CHECK(jackknife(r, 5).point == doctest::Approx(dim(r, 5).point));
  CHECK(jackknife(r, 5, JackknifeBlocks::ArrivalCohort).point == doctest::Approx(dim(r, 5).point));

  const auto single = fixtures::roster({{0, 0, 1, 2.0}, {0, 0, 0, 1.0}}, 1, 3);
  CHECK_THROWS_AS(jackknife(single, 3, JackknifeBlocks::ArrivalCohort), AnalysisError);
  CHECK_THROWS_AS(jackknife(single, 1), AnalysisError);
}

TEST_CASE("calendar-day jackknife extrapolates from the previous day") {
  const auto r = fixtures::roster({{0, 0, 1, 2.0}, {0, 0, 0, 1.0}, {0, 1, 1, 5.0}, {0, 1, 0, 1.0}},
                                  1, 3);
  // DIM(2) = 2.5, DIM(1) = 1.
  CHECK(jackknife(r, 2).point == doctest::Approx(2 * 2.5 - 1 * 1.0));
}

TEST_CASE("stratum mean model on the synthetic design matches analytic means") {
  SynthConfig config;
  config.seed = 8;
  const auto e = generate(config);
  const Sample s = sample_at(e.roster, 30);
  const auto m = stratum_mean_model(s);
  for (int x = 0; x < 4; ++x) {
    CHECK(std::abs(m.predict(level(x), 0) - 1.0) < 0.03);
    CHECK(std::abs(m.predict(level(x), 1) - (0.5 + (2 * x + 1) / 8.0)) < 0.05);
  }
}

#include <doctest.h>

#include <cmath>
#include <sstream>

#include "stagewise/estimators.hpp"
#include "stagewise/survival.hpp"
#include "stagewise/synthgen.hpp"

using namespace stagewise;

namespace {

CovariateProfile level(int x) { return CovariateProfile{{{"x", x}}}; }

}  // namespace

TEST_CASE("default design truth") {
  const auto truth = ground_truth(SynthConfig{});
  CHECK(truth.true_tau == doctest::Approx(0.0));
  REQUIRE(truth.stratum_htes.size() == 4);
  CHECK(truth.stratum_htes[0] == doctest::Approx(-0.375));
  CHECK(truth.stratum_htes[3] == doctest::Approx(0.375));
}

TEST_CASE("exact treated count and determinism") {
  SynthConfig config;
  config.seed = 42;
  const auto a = generate(config);
  const auto b = generate(config);
  CHECK(a.roster == b.roster);
  int treated = 0;
  for (const int w : a.assigned_arm) treated += w;
  CHECK(treated == 1000);
  config.seed = 43;
  CHECK_FALSE(generate(config).roster == a.roster);
}

TEST_CASE("config validation") {
  SynthConfig config;
  config.n_units = 0;
  CHECK_THROWS_AS(generate(config), ValidationError);
  config = SynthConfig{};
  config.treat_count = 3000;
  CHECK_THROWS_AS(config.validate(), ValidationError);

  std::istringstream bad(R"({"n_units": 0})");
  CHECK_THROWS_AS(synth_config_from_json(bad), ValidationError);
  std::istringstream unknown(R"({"units": 10})");
  CHECK_THROWS_AS(synth_config_from_json(unknown), ValidationError);
  std::istringstream good(R"({"n_units": 50, "treat_count": 25, "hazard": "daily_redraw"})");
  const auto c = synth_config_from_json(good);
  CHECK(c.n_units == 50);
  CHECK(c.hazard == HazardModel::DailyRedraw);

  std::stringstream round;
  write_synth_config(c, round);
  const auto back = synth_config_from_json(round);
  CHECK(back.n_units == 50);
  CHECK(back.hazard == HazardModel::DailyRedraw);
}

TEST_CASE("analytic participation curve") {
  const SynthConfig config;
  for (int x = 0; x < 4; ++x) CHECK(analytic_pi(config, x, 0) == 0.0);
  CHECK(analytic_pi(config, 0, 24) == doctest::Approx(0.84).epsilon(0.01));
  CHECK(analytic_pi(config, 0, 6) == doctest::Approx(0.505).epsilon(0.01));
  // A level-3 unit on a weekend day arrives with probability u in (0.75, 1).
  SynthConfig weekend_only = config;
  weekend_only.weekend_days = {0, 1, 2, 3, 4, 5, 6};
  const double first = analytic_pi(weekend_only, 3, 1);
  CHECK(first > 0.75);
  CHECK(first < 1.0);
}

TEST_CASE("empirical arrival curves converge to the analytic curve") {
  // Per seed the stratum curves carry binomial noise (about 500 units each),
  // so the per-seed bound is loose; the seed average must be tight.
  const SynthConfig base;
  Eigen::MatrixXd mean_gap = Eigen::MatrixXd::Zero(4, base.horizon + 1);
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    SynthConfig config = base;
    config.seed = seed;
    const auto fit = fit_km(generate(config).roster, config.horizon);
    for (int x = 0; x < 4; ++x) {
      for (Day t = 0; t <= config.horizon; ++t) {
        const double gap = pi_hat(fit, t, level(x)) - analytic_pi(config, x, t);
        CHECK(std::abs(gap) < 0.08);
        mean_gap(x, t) += gap / 10.0;
      }
    }
  }
  CHECK(mean_gap.cwiseAbs().maxCoeff() < 0.02);
}

TEST_CASE("daily redraw crosses early") {
  SynthConfig config;
  config.hazard = HazardModel::DailyRedraw;
  double at15 = 1.0;
  for (int x = 0; x < 4; ++x) at15 = std::min(at15, analytic_pi(config, x, 15));
  CHECK(at15 > 0.85);
}

TEST_CASE("stratum effects at full participation") {
  SynthConfig config;
  config.n_units = 8000;
  config.treat_count = 4000;
  config.seed = 12;
  const auto e = generate(config);
  const Sample s = sample_at(e.roster, 30);
  const auto truth = ground_truth(config);
  for (int x = 0; x < 4; ++x) {
    CHECK(std::abs(hte(s, level(x)) - truth.stratum_htes[static_cast<std::size_t>(x)]) < 0.03);
  }
}

TEST_CASE("ground truth sidecar") {
  std::ostringstream out;
  write_ground_truth_json(ground_truth(SynthConfig{}), out);
  CHECK(out.str().find("\"true_tau\": 0.0") != std::string::npos);
  CHECK(out.str().find("fixed_unit") != std::string::npos);
}

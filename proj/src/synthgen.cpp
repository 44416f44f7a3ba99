#include "stagewise/synthgen.hpp"

#include <boost/math/quadrature/gauss.hpp>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <ostream>
#include <random>

namespace stagewise {

std::string to_string(HazardModel model) {
  return model == HazardModel::FixedUnit ? "fixed_unit" : "daily_redraw";
}

void SynthConfig::validate() const {
  if (n_units <= 0) throw ValidationError("n_units must be positive");
  if (horizon <= 0) throw ValidationError("horizon must be positive");
  if (n_levels < 1) throw ValidationError("n_levels must be at least 1");
  if (treat_count < 0 || treat_count > n_units) {
    throw ValidationError("treat_count must lie in [0, n_units]");
  }
  if (!(outcome_noise_sd >= 0.0)) throw ValidationError("outcome_noise_sd must be non-negative");
  for (const int d : weekend_days) {
    if (d < 0 || d > 6) throw ValidationError("weekend_days entries must lie in [0, 6]");
  }
  if (!std::isfinite(tau) || !std::isfinite(heterogeneity)) {
    throw ValidationError("tau and heterogeneity must be finite");
  }
}

bool SynthConfig::is_weekend(Day k) const {
  return std::find(weekend_days.begin(), weekend_days.end(), k % 7) != weekend_days.end();
}

SynthConfig synth_config_from_json(std::istream& in) {
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ValidationError("config must be a JSON object");
  SynthConfig c;
  static const std::vector<std::string> known{
      "n_units",  "horizon", "n_levels", "treat_count", "outcome_noise_sd", "weekend_days",
      "seed",     "hazard",  "tau",      "heterogeneity"};
  for (const auto& item : j.items()) {
    if (std::find(known.begin(), known.end(), item.key()) == known.end()) {
      throw ValidationError("unknown config key '" + item.key() + "'");
    }
  }
  try {
    c.n_units = j.value("n_units", c.n_units);
    c.horizon = j.value("horizon", c.horizon);
    c.n_levels = j.value("n_levels", c.n_levels);
    c.treat_count = j.value("treat_count", c.treat_count);
    c.outcome_noise_sd = j.value("outcome_noise_sd", c.outcome_noise_sd);
    c.weekend_days = j.value("weekend_days", c.weekend_days);
    c.seed = j.value("seed", c.seed);
    c.tau = j.value("tau", c.tau);
    c.heterogeneity = j.value("heterogeneity", c.heterogeneity);
    const std::string hazard = j.value("hazard", to_string(c.hazard));
    if (hazard == "fixed_unit") {
      c.hazard = HazardModel::FixedUnit;
    } else if (hazard == "daily_redraw") {
      c.hazard = HazardModel::DailyRedraw;
    } else {
      throw ValidationError("hazard must be fixed_unit or daily_redraw");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("bad config value: ") + e.what());
  }
  c.validate();
  return c;
}

SynthConfig load_synth_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config " + path.string());
  return synth_config_from_json(in);
}

void write_synth_config(const SynthConfig& c, std::ostream& out) {
  const nlohmann::json j{{"n_units", c.n_units},
                         {"horizon", c.horizon},
                         {"n_levels", c.n_levels},
                         {"treat_count", c.treat_count},
                         {"outcome_noise_sd", c.outcome_noise_sd},
                         {"weekend_days", c.weekend_days},
                         {"seed", c.seed},
                         {"hazard", to_string(c.hazard)},
                         {"tau", c.tau},
                         {"heterogeneity", c.heterogeneity}};
  out << j.dump(2) << '\n';
}

RosterSchema synth_schema(const SynthConfig& config) {
  return RosterSchema{{Covariate{"x", config.n_levels}}, config.horizon};
}

GroundTruth ground_truth(const SynthConfig& config) {
  GroundTruth truth;
  const double L = config.n_levels;
  const double s = config.heterogeneity;
  for (int x = 0; x < config.n_levels; ++x) {
    truth.stratum_htes.push_back(config.tau - s / 2.0 + s * (2.0 * x + 1.0) / (2.0 * L));
  }
  truth.true_tau = std::accumulate(truth.stratum_htes.begin(), truth.stratum_htes.end(), 0.0) / L;
  truth.hazard = config.hazard;
  truth.seed = config.seed;
  return truth;
}

SyntheticExperiment generate(const SynthConfig& config) {
  config.validate();
  std::mt19937_64 rng(config.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const bool noisy = config.outcome_noise_sd > 0.0;
  std::normal_distribution<double> gaussian(0.0, noisy ? config.outcome_noise_sd : 1.0);
  auto noise = [&](std::mt19937_64& g) { return noisy ? gaussian(g) : 0.0; };
  const int n = config.n_units;
  const double L = config.n_levels;
  auto level_uniform = [&](int x) { return (x + unit(rng)) / L; };

  std::uniform_int_distribution<int> level(0, config.n_levels - 1);
  std::vector<int> x(static_cast<std::size_t>(n));
  for (auto& v : x) v = level(rng);
  std::vector<double> u(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) u[i] = level_uniform(x[i]);

  std::vector<std::optional<Day>> arrival(x.size());
  for (Day k = 0; k < config.horizon; ++k) {
    const bool weekend = config.is_weekend(k);
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (arrival[i]) continue;
      const double hazard = config.hazard == HazardModel::FixedUnit ? u[i] : level_uniform(x[i]);
      const double p = weekend ? hazard : hazard / (x[i] + 1);
      if (unit(rng) < p) arrival[i] = k;
    }
  }

  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<int> arm(x.size(), 0);
  for (int i = 0; i < config.treat_count; ++i) arm[order[static_cast<std::size_t>(i)]] = 1;

  const double s = config.heterogeneity;
  std::vector<UnitRecord> units;
  units.reserve(x.size());
  const int width = static_cast<int>(std::to_string(n - 1).size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    double y;
    if (arm[i] == 1) {
      y = 1.0 + config.tau - s / 2.0 + noise(rng);
      y += s * level_uniform(x[i]);
    } else {
      y = 1.0 + noise(rng);
    }
    const double pre_outcome = 1.0 + noise(rng);
    UnitRecord rec;
    std::string id = std::to_string(i);
    rec.unit_id = "u" + std::string(static_cast<std::size_t>(width) - id.size(), '0') + id;
    rec.profile.levels = {{"x", x[i]}};
    rec.pre_metrics = {pre_outcome, u[i]};
    if (arrival[i]) {
      rec.arrival_day = arrival[i];
      rec.arm = arm[i];
      rec.outcome = y;
    }
    units.push_back(std::move(rec));
  }
  return SyntheticExperiment{
      PopulationRoster(synth_schema(config), std::move(units), {"y", "activity"}),
      std::move(arm), ground_truth(config)};
}

double analytic_pi(const SynthConfig& config, int x, Day t) {
  if (x < 0 || x >= config.n_levels) throw ValidationError("level out of range");
  if (t < 0) throw ValidationError("day must be non-negative");
  int weekend = 0;
  for (Day k = 0; k < t; ++k) weekend += config.is_weekend(k) ? 1 : 0;
  const int weekday = t - weekend;
  const double L = config.n_levels;
  const double scale = 1.0 / (x + 1);
  if (config.hazard == HazardModel::DailyRedraw) {
    const double mean_u = (2.0 * x + 1.0) / (2.0 * L);
    return 1.0 - std::pow(1.0 - mean_u, weekend) * std::pow(1.0 - mean_u * scale, weekday);
  }
  // Survival is a polynomial in u of degree t; 64-point Gauss-Legendre is
  // exact up to degree 127.
  auto survival = [&](double v) {
    return std::pow(1.0 - v, weekend) * std::pow(1.0 - v * scale, weekday);
  };
  const double lo = x / L, hi = (x + 1) / L;
  const double mean_survival =
      boost::math::quadrature::gauss<double, 64>::integrate(survival, lo, hi) / (hi - lo);
  return 1.0 - mean_survival;
}

void write_ground_truth_json(const GroundTruth& truth, std::ostream& out) {
  const nlohmann::json j{{"true_tau", truth.true_tau},
                         {"stratum_htes", truth.stratum_htes},
                         {"hazard_interpretation", to_string(truth.hazard)},
                         {"seed", truth.seed}};
  out << j.dump(2) << '\n';
}

}  // namespace stagewise

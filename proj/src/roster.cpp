#include "stagewise/roster.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

namespace stagewise {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

std::string at_line(std::size_t line_no, const std::string& message) {
  return "line " + std::to_string(line_no) + ": " + message;
}

}  // namespace

std::string CovariateProfile::key() const {
  std::string out;
  for (const auto& [name, lvl] : levels) {
    if (!out.empty()) out += ';';
    out += name + '=' + std::to_string(lvl);
  }
  return out;
}

int CovariateProfile::level(std::string_view name) const {
  for (const auto& [n, lvl] : levels) {
    if (n == name) return lvl;
  }
  throw ValidationError("profile has no covariate '" + std::string(name) + "'");
}

PopulationRoster::PopulationRoster(RosterSchema schema, std::vector<UnitRecord> units,
                                   std::vector<std::string> pre_metric_names)
    : schema_(std::move(schema)),
      units_(std::move(units)),
      pre_metric_names_(std::move(pre_metric_names)) {
  if (schema_.horizon <= 0) throw ValidationError("horizon must be positive");
  if (units_.empty()) throw ValidationError("roster has no units");
  for (const auto& cov : schema_.covariates) {
    if (cov.cardinality < 1) {
      throw ValidationError("covariate '" + cov.name + "' has non-positive cardinality");
    }
  }

  std::set<std::string> ids;
  for (const auto& u : units_) {
    if (!ids.insert(u.unit_id).second) {
      throw ValidationError("duplicate unit_id '" + u.unit_id + "'");
    }
    if (u.profile.levels.size() != schema_.covariates.size()) {
      throw ValidationError("unit '" + u.unit_id + "' does not match the covariate schema");
    }
    for (std::size_t k = 0; k < schema_.covariates.size(); ++k) {
      const auto& [name, lvl] = u.profile.levels[k];
      const auto& cov = schema_.covariates[k];
      if (name != cov.name) {
        throw ValidationError("unit '" + u.unit_id + "' has covariate '" + name +
                              "' where '" + cov.name + "' was expected");
      }
      if (lvl < 0 || lvl >= cov.cardinality) {
        throw ValidationError("unit '" + u.unit_id + "': covariate level out of range for '" +
                              name + "'");
      }
    }
    if (!u.arrival_day && (u.arm || u.outcome)) {
      throw ValidationError("unit '" + u.unit_id + "': outcome/arm without arrival");
    }
    if (u.arrival_day && (!u.arm || !u.outcome)) {
      throw ValidationError("unit '" + u.unit_id + "': arrival without arm and outcome");
    }
    if (u.arrival_day && (*u.arrival_day < 0 || *u.arrival_day > schema_.horizon)) {
      throw ValidationError("unit '" + u.unit_id + "': arrival_day outside [0, horizon]");
    }
    if (u.arm && *u.arm != 0 && *u.arm != 1) {
      throw ValidationError("unit '" + u.unit_id + "': arm must be 0 or 1");
    }
    if (u.pre_metrics.size() != pre_metric_names_.size()) {
      throw ValidationError("unit '" + u.unit_id + "': wrong number of pre-treatment metrics");
    }
  }

  std::map<CovariateProfile, int> index;
  for (const auto& u : units_) index.emplace(u.profile, 0);
  int next = 0;
  for (auto& [profile, idx] : index) {
    idx = next++;
    profiles_.push_back(profile);
  }
  stratum_of_.reserve(units_.size());
  for (const auto& u : units_) stratum_of_.push_back(index.at(u.profile));
}

Eigen::VectorXi PopulationRoster::population_counts() const {
  Eigen::VectorXi counts = Eigen::VectorXi::Zero(static_cast<Eigen::Index>(profiles_.size()));
  for (int s : stratum_of_) ++counts(s);
  return counts;
}

std::optional<int> PopulationRoster::find_stratum(const CovariateProfile& profile) const {
  auto it = std::lower_bound(profiles_.begin(), profiles_.end(), profile);
  if (it == profiles_.end() || *it != profile) return std::nullopt;
  return static_cast<int>(it - profiles_.begin());
}

PopulationRoster PopulationRoster::subset(std::span<const std::size_t> indices) const {
  std::vector<UnitRecord> picked;
  picked.reserve(indices.size());
  for (std::size_t i : indices) picked.push_back(units_.at(i));
  return PopulationRoster(schema_, std::move(picked), pre_metric_names_);
}

bool PopulationRoster::operator==(const PopulationRoster& other) const {
  if (schema_.horizon != other.schema_.horizon) return false;
  if (schema_.covariates.size() != other.schema_.covariates.size()) return false;
  for (std::size_t k = 0; k < schema_.covariates.size(); ++k) {
    if (schema_.covariates[k].name != other.schema_.covariates[k].name ||
        schema_.covariates[k].cardinality != other.schema_.covariates[k].cardinality) {
      return false;
    }
  }
  if (pre_metric_names_ != other.pre_metric_names_) return false;
  if (units_.size() != other.units_.size()) return false;
  for (std::size_t i = 0; i < units_.size(); ++i) {
    const auto& a = units_[i];
    const auto& b = other.units_[i];
    if (a.unit_id != b.unit_id || a.profile != b.profile || a.arrival_day != b.arrival_day ||
        a.arm != b.arm || a.outcome != b.outcome || a.pre_metrics != b.pre_metrics) {
      return false;
    }
  }
  return true;
}

PopulationRoster read_roster(std::istream& in, const RosterSchema& schema) {
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("line 1: missing header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_csv_line(line);

  const std::size_t n_cov = schema.covariates.size();
  const std::size_t fixed = 1 + n_cov + 3;
  if (header.size() < fixed || header[0] != "unit_id") {
    throw ValidationError("line 1: header must start with unit_id");
  }
  for (std::size_t k = 0; k < n_cov; ++k) {
    if (header[1 + k] != schema.covariates[k].name) {
      throw ValidationError("line 1: expected covariate column '" + schema.covariates[k].name +
                            "', found '" + header[1 + k] + "'");
    }
  }
  if (header[1 + n_cov] != "arrival_day" || header[2 + n_cov] != "arm" ||
      header[3 + n_cov] != "outcome") {
    throw ValidationError("line 1: expected arrival_day,arm,outcome after covariates");
  }
  std::vector<std::string> metric_names;
  for (std::size_t k = fixed; k < header.size(); ++k) {
    if (header[k].rfind("pre_", 0) != 0 || header[k].size() == 4) {
      throw ValidationError("line 1: extra column '" + header[k] + "' must be pre_<metric>");
    }
    metric_names.push_back(header[k].substr(4));
  }

  std::vector<UnitRecord> units;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != header.size()) {
      throw ValidationError(at_line(line_no, "expected " + std::to_string(header.size()) +
                                                 " fields, found " +
                                                 std::to_string(fields.size())));
    }
    try {
      UnitRecord u;
      u.unit_id = fields[0];
      if (u.unit_id.empty()) throw ValidationError("empty unit_id");
      for (std::size_t k = 0; k < n_cov; ++k) {
        const auto lvl = parse_integer(fields[1 + k], schema.covariates[k].name);
        if (lvl < 0 || lvl >= schema.covariates[k].cardinality) {
          throw ValidationError("covariate level out of range for '" +
                                schema.covariates[k].name + "'");
        }
        u.profile.levels.emplace_back(schema.covariates[k].name, static_cast<int>(lvl));
      }
      if (!fields[1 + n_cov].empty()) {
        u.arrival_day = static_cast<Day>(parse_integer(fields[1 + n_cov], "arrival_day"));
      }
      if (!fields[2 + n_cov].empty()) {
        u.arm = static_cast<int>(parse_integer(fields[2 + n_cov], "arm"));
      }
      if (!fields[3 + n_cov].empty()) u.outcome = parse_double(fields[3 + n_cov], "outcome");
      if (!u.arrival_day && (u.arm || u.outcome)) {
        throw ValidationError("outcome/arm without arrival");
      }
      for (std::size_t k = fixed; k < fields.size(); ++k) {
        u.pre_metrics.push_back(parse_double(fields[k], header[k]));
      }
      units.push_back(std::move(u));
    } catch (const ValidationError& e) {
      throw ValidationError(at_line(line_no, e.what()));
    }
  }
  return PopulationRoster(schema, std::move(units), std::move(metric_names));
}

PopulationRoster load_roster(const std::filesystem::path& path, const RosterSchema& schema) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open roster '" + path.string() + "'");
  return read_roster(in, schema);
}

void write_roster(const PopulationRoster& roster, std::ostream& out) {
  out << "unit_id";
  for (const auto& cov : roster.covariates()) out << ',' << cov.name;
  out << ",arrival_day,arm,outcome";
  for (const auto& m : roster.pre_metric_names()) out << ",pre_" << m;
  out << '\n';
  for (const auto& u : roster.units()) {
    out << u.unit_id;
    for (const auto& [name, lvl] : u.profile.levels) out << ',' << lvl;
    out << ',';
    if (u.arrival_day) out << *u.arrival_day;
    out << ',';
    if (u.arm) out << *u.arm;
    out << ',';
    if (u.outcome) out << format_double(*u.outcome);
    for (double v : u.pre_metrics) out << ',' << format_double(v);
    out << '\n';
  }
}

void write_roster(const PopulationRoster& roster, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write roster '" + path.string() + "'");
  write_roster(roster, out);
}

CovariateSchema parse_covariate_schema(std::string_view spec) {
  CovariateSchema schema;
  std::string text(spec);
  std::istringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto colon = item.find(':');
    if (colon == std::string::npos || colon == 0) {
      throw ValidationError("schema entry '" + item + "' must be name:cardinality");
    }
    const auto card = parse_integer(item.substr(colon + 1), "cardinality");
    if (card < 1) throw ValidationError("cardinality must be positive in '" + item + "'");
    schema.push_back({item.substr(0, colon), static_cast<int>(card)});
  }
  if (schema.empty()) throw ValidationError("empty covariate schema");
  return schema;
}

std::vector<std::size_t> participants_at(const PopulationRoster& roster, Day t) {
  if (t < 0 || t > roster.horizon()) {
    throw ValidationError("day " + std::to_string(t) + " outside [0, horizon]");
  }
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < roster.size(); ++i) {
    if (roster.unit(i).participates_by(t)) out.push_back(i);
  }
  return out;
}

std::vector<StratumSummary> strata(const PopulationRoster& roster) {
  std::vector<StratumSummary> out;
  for (const auto& p : roster.strata_profiles()) out.push_back({p, 0, 0});
  const auto& idx = roster.stratum_of();
  for (std::size_t i = 0; i < roster.size(); ++i) {
    auto& s = out[static_cast<std::size_t>(idx[i])];
    ++s.population;
    if (roster.unit(i).participates_by(roster.horizon() + 1)) ++s.participants;
  }
  return out;
}

Sample sample_at(const PopulationRoster& roster, Day t) {
  const auto rows = participants_at(roster, t);
  const auto n = static_cast<Eigen::Index>(rows.size());
  const auto n_metrics = static_cast<Eigen::Index>(roster.pre_metric_names().size());

  Sample s;
  s.t = t;
  s.profiles = roster.strata_profiles();
  s.population = roster.population_counts();
  s.stratum.resize(n);
  s.arm.resize(n);
  s.arrival.resize(n);
  s.outcome.resize(n);
  s.pre_metrics.resize(n, n_metrics);
  s.pre_metric_names = roster.pre_metric_names();
  s.unit_stratum.resize(static_cast<Eigen::Index>(roster.size()));
  s.unit_row = Eigen::VectorXi::Constant(static_cast<Eigen::Index>(roster.size()), -1);
  for (std::size_t i = 0; i < roster.size(); ++i) {
    s.unit_stratum(static_cast<Eigen::Index>(i)) = roster.stratum_of()[i];
  }
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto i = rows[static_cast<std::size_t>(r)];
    const auto& u = roster.unit(i);
    s.stratum(r) = roster.stratum_of()[i];
    s.arm(r) = *u.arm;
    s.arrival(r) = *u.arrival_day;
    s.outcome(r) = *u.outcome;
    s.unit_row(static_cast<Eigen::Index>(i)) = static_cast<int>(r);
    for (Eigen::Index m = 0; m < n_metrics; ++m) {
      s.pre_metrics(r, m) = u.pre_metrics[static_cast<std::size_t>(m)];
    }
  }
  return s;
}

Sample Sample::take(std::span<const Eigen::Index> rows) const {
  Sample s;
  s.t = t;
  s.profiles = profiles;
  s.population = population;
  s.pre_metric_names = pre_metric_names;
  const auto n = static_cast<Eigen::Index>(rows.size());
  s.stratum.resize(n);
  s.arm.resize(n);
  s.arrival.resize(n);
  s.outcome.resize(n);
  s.pre_metrics.resize(n, pre_metrics.cols());
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto src = rows[static_cast<std::size_t>(r)];
    s.stratum(r) = stratum(src);
    s.arm(r) = arm(src);
    s.arrival(r) = arrival(src);
    s.outcome(r) = outcome(src);
    s.pre_metrics.row(r) = pre_metrics.row(src);
  }
  return s;
}

Sample Sample::take_population(std::span<const Eigen::Index> units) const {
  if (unit_stratum.size() == 0) {
    throw AnalysisError("sample carries no population view to resample");
  }
  std::vector<Eigen::Index> rows;
  Eigen::VectorXi counts = Eigen::VectorXi::Zero(population.size());
  for (Eigen::Index u : units) {
    ++counts(unit_stratum(u));
    if (unit_row(u) >= 0) rows.push_back(unit_row(u));
  }
  Sample s = take(rows);
  s.population = counts;
  return s;
}

Sample Sample::truncate(Day new_t) const {
  if (new_t > t) throw AnalysisError("cannot extend a sample beyond its analysis day");
  std::vector<Eigen::Index> rows;
  for (Eigen::Index r = 0; r < size(); ++r) {
    if (arrival(r) < new_t) rows.push_back(r);
  }
  Sample s = take(rows);
  s.t = new_t;
  return s;
}

Sample Sample::restratify(std::string_view covariate) const {
  std::map<CovariateProfile, int> index;
  std::vector<int> remap(profiles.size());
  for (const auto& p : profiles) {
    index.emplace(CovariateProfile{{{std::string(covariate), p.level(covariate)}}}, 0);
  }
  Sample s = *this;
  s.profiles.clear();
  int next = 0;
  for (auto& [profile, idx] : index) {
    idx = next++;
    s.profiles.push_back(profile);
  }
  s.population = Eigen::VectorXi::Zero(next);
  for (std::size_t k = 0; k < profiles.size(); ++k) {
    const CovariateProfile single{{{std::string(covariate), profiles[k].level(covariate)}}};
    remap[k] = index.at(single);
    s.population(remap[k]) += population(static_cast<Eigen::Index>(k));
  }
  for (Eigen::Index r = 0; r < s.size(); ++r) {
    s.stratum(r) = remap[static_cast<std::size_t>(stratum(r))];
  }
  for (Eigen::Index u = 0; u < s.unit_stratum.size(); ++u) {
    s.unit_stratum(u) = remap[static_cast<std::size_t>(unit_stratum(u))];
  }
  return s;
}

}  // namespace stagewise

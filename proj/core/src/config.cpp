#include "borderlab/config.hpp"

#include "borderlab/error.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

namespace borderlab::config {

namespace {

std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <typename T>
T parse_number(const std::string& key, const std::string& text, const char* expected) {
  const std::string t = trim(text);
  T v{};
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || ptr != t.data() + t.size() || t.empty())
    throw ParseError("config key " + key + ": expected " + expected + ", got '" + text + "'");
  return v;
}

template <std::size_t N>
std::array<double, N> fixed_list(const Config& cfg, const std::string& key, const std::array<double, N>& fallback) {
  const auto v = cfg.get_doubles(key, std::vector<double>(fallback.begin(), fallback.end()));
  if (v.size() != N)
    throw ParseError("config key " + key + ": expected " + std::to_string(N) + " values, got " + std::to_string(v.size()));
  std::array<double, N> out{};
  std::copy(v.begin(), v.end(), out.begin());
  return out;
}

const std::map<std::string, std::set<std::string>>& known_keys() {
  static const std::map<std::string, std::set<std::string>> keys{
      {"dgp",
       {"preset", "n_workers_treated", "n_workers_control", "first_year", "last_year", "treatment_year", "true_effect",
        "effect_profile", "exposure_path", "wage_mean_treated", "wage_mean_control", "noise_sd", "worker_effect_sd",
        "year_effect_drift", "education_mix_treated", "education_mix_control", "education_premia", "education_trends",
        "female_share_treated", "female_share_control", "female_gap", "race_mix_treated", "race_mix_control",
        "heterogeneity", "education_effects", "exposure_effects", "exposed_occupation_share", "exposed_activity_share",
        "informal_fraction", "attrition_rate", "retention_rate", "retention_effect", "mover_base_prob", "mover_uplift",
        "treated_state", "treated_municipalities", "control_states", "seed"}},
      {"economy", {"alpha", "beta", "l_bar", "h_bar", "informal_share", "price_level"}},
      {"shock", {"eta", "mu", "delta"}},
      {"border_town", {"phi", "psi", "tau", "nu", "rho", "delta_penalty"}},
      {"estimate",
       {"outcome", "treatment", "family", "fixed_effects", "cluster", "propensity_covariates", "covariates",
        "trim_quantile", "reference_year", "interaction", "propensity_weighting", "sector", "control_states",
        "dimension", "placebo_mode", "sample_lower_quantile", "sample_upper_quantile", "winsorize", "sample_rules"}},
      {"scm", {"ridge"}},
      {"run", {"seed", "out", "format", "threads", "panel", "ratio", "truth"}},
  };
  return keys;
}

// Economy keys may also appear at top level.
std::string economy_key(const Config& cfg, const std::string& name) {
  const std::string sectioned = "economy." + name;
  return cfg.has(sectioned) || !cfg.has(name) ? sectioned : name;
}

}  // namespace

Config Config::parse(std::istream& in) {
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ParseError("config: " + e.message(), e.line());
  }
  Config cfg;
  for (const auto& [name, node] : tree) {
    if (node.empty()) {
      cfg.values_[name] = trim(node.data());
      continue;
    }
    for (const auto& [key, leaf] : node) cfg.values_[name + "." + key] = trim(leaf.data());
  }
  return cfg;
}

Config Config::parse_string(const std::string& text) {
  std::istringstream in(text);
  return parse(in);
}

Config Config::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config file " + path.string());
  return parse(in);
}

std::optional<std::string> Config::get(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return std::nullopt;
  return it->second;
}

std::string Config::get_string(const std::string& key, const std::string& fallback) const {
  return get(key).value_or(fallback);
}

double Config::get_double(const std::string& key, double fallback) const {
  const auto v = get(key);
  return v ? parse_number<double>(key, *v, "a number") : fallback;
}

int Config::get_int(const std::string& key, int fallback) const {
  const auto v = get(key);
  return v ? parse_number<int>(key, *v, "an integer") : fallback;
}

std::uint64_t Config::get_u64(const std::string& key, std::uint64_t fallback) const {
  const auto v = get(key);
  return v ? parse_number<std::uint64_t>(key, *v, "a nonnegative integer") : fallback;
}

bool Config::get_bool(const std::string& key, bool fallback) const {
  const auto v = get(key);
  if (!v) return fallback;
  std::string t = trim(*v);
  std::transform(t.begin(), t.end(), t.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (t == "true" || t == "1" || t == "yes" || t == "on") return true;
  if (t == "false" || t == "0" || t == "no" || t == "off") return false;
  throw ParseError("config key " + key + ": expected a boolean, got '" + *v + "'");
}

std::vector<double> Config::get_doubles(const std::string& key, const std::vector<double>& fallback) const {
  const auto v = get(key);
  if (!v) return fallback;
  std::vector<double> out;
  for (const auto& item : split_list(*v)) out.push_back(parse_number<double>(key, item, "a number"));
  return out;
}

std::vector<std::string> Config::get_strings(const std::string& key, const std::vector<std::string>& fallback) const {
  const auto v = get(key);
  return v ? split_list(*v) : fallback;
}

void check_known_keys(const Config& cfg) {
  const auto& known = known_keys();
  const auto& top = known.at("economy");
  for (const auto& [key, value] : cfg.values()) {
    const auto dot = key.find('.');
    if (dot == std::string::npos) {
      if (!top.count(key)) throw ParseError("config: unknown top-level key '" + key + "'");
      continue;
    }
    const auto section = known.find(key.substr(0, dot));
    if (section == known.end()) throw ParseError("config: unknown section [" + key.substr(0, dot) + "]");
    if (!section->second.count(key.substr(dot + 1))) throw ParseError("config: unknown key '" + key + "'");
  }
}

dgp::DgpConfig dgp_config(const Config& cfg) {
  const std::string preset = cfg.get_string("dgp.preset", "default");
  dgp::DgpConfig c;
  if (preset == "noiseless")
    c = dgp::DgpConfig::noiseless();
  else if (preset == "confounded")
    c = dgp::DgpConfig::confounded();
  else if (preset != "default")
    throw ParseError("config key dgp.preset: expected default, noiseless or confounded");

  c.n_workers_treated = cfg.get_int("dgp.n_workers_treated", c.n_workers_treated);
  c.n_workers_control = cfg.get_int("dgp.n_workers_control", c.n_workers_control);
  c.first_year = cfg.get_int("dgp.first_year", c.first_year);
  c.last_year = cfg.get_int("dgp.last_year", c.last_year);
  c.treatment_year = cfg.get_int("dgp.treatment_year", c.treatment_year);
  c.true_effect = cfg.get_double("dgp.true_effect", c.true_effect);
  if (auto p = cfg.get("dgp.effect_profile")) c.effect_profile = dgp::parse_effect_profile(*p);
  c.exposure_path = cfg.get_doubles("dgp.exposure_path", c.exposure_path);
  c.wage_mean_treated = cfg.get_double("dgp.wage_mean_treated", c.wage_mean_treated);
  c.wage_mean_control = cfg.get_double("dgp.wage_mean_control", c.wage_mean_control);
  c.noise_sd = cfg.get_double("dgp.noise_sd", c.noise_sd);
  c.worker_effect_sd = cfg.get_double("dgp.worker_effect_sd", c.worker_effect_sd);
  c.year_effect_drift = cfg.get_double("dgp.year_effect_drift", c.year_effect_drift);
  c.education_mix_treated = fixed_list(cfg, "dgp.education_mix_treated", c.education_mix_treated);
  c.education_mix_control = fixed_list(cfg, "dgp.education_mix_control", c.education_mix_control);
  c.education_premia = fixed_list(cfg, "dgp.education_premia", c.education_premia);
  c.education_trends = fixed_list(cfg, "dgp.education_trends", c.education_trends);
  c.female_share_treated = cfg.get_double("dgp.female_share_treated", c.female_share_treated);
  c.female_share_control = cfg.get_double("dgp.female_share_control", c.female_share_control);
  c.female_gap = cfg.get_double("dgp.female_gap", c.female_gap);
  c.race_mix_treated = fixed_list(cfg, "dgp.race_mix_treated", c.race_mix_treated);
  c.race_mix_control = fixed_list(cfg, "dgp.race_mix_control", c.race_mix_control);
  c.heterogeneity = cfg.get_bool("dgp.heterogeneity", c.heterogeneity);
  c.education_effects = fixed_list(cfg, "dgp.education_effects", c.education_effects);
  c.exposure_effects = fixed_list(cfg, "dgp.exposure_effects", c.exposure_effects);
  c.exposed_occupation_share = cfg.get_double("dgp.exposed_occupation_share", c.exposed_occupation_share);
  c.exposed_activity_share = cfg.get_double("dgp.exposed_activity_share", c.exposed_activity_share);
  c.informal_fraction = cfg.get_double("dgp.informal_fraction", c.informal_fraction);
  c.attrition_rate = cfg.get_double("dgp.attrition_rate", c.attrition_rate);
  c.retention_rate = cfg.get_double("dgp.retention_rate", c.retention_rate);
  c.retention_effect = cfg.get_double("dgp.retention_effect", c.retention_effect);
  c.mover_base_prob = cfg.get_double("dgp.mover_base_prob", c.mover_base_prob);
  c.mover_uplift = cfg.get_double("dgp.mover_uplift", c.mover_uplift);
  c.treated_state = cfg.get_string("dgp.treated_state", c.treated_state);
  c.treated_municipalities = cfg.get_int("dgp.treated_municipalities", c.treated_municipalities);
  if (auto list = cfg.get("dgp.control_states")) {
    // NAME:MUNICIPALITIES[:OFFSET], comma separated
    c.control_states.clear();
    for (const auto& item : split_list(*list)) {
      std::vector<std::string> parts;
      std::stringstream ss(item);
      std::string part;
      while (std::getline(ss, part, ':')) parts.push_back(trim(part));
      if (parts.size() < 2 || parts.size() > 3)
        throw ParseError("config key dgp.control_states: expected NAME:MUNICIPALITIES[:OFFSET], got '" + item + "'");
      dgp::StateLayout s;
      s.name = parts[0];
      s.municipalities = parse_number<int>("dgp.control_states", parts[1], "an integer");
      if (parts.size() == 3) s.level_offset = parse_number<double>("dgp.control_states", parts[2], "a number");
      c.control_states.push_back(s);
    }
  }
  c.seed = cfg.get_u64("dgp.seed", cfg.get_u64("run.seed", c.seed));
  c.validate();
  return c;
}

economy::EconomyParams economy_params(const Config& cfg) {
  economy::EconomyParams p;
  p.alpha = cfg.get_double(economy_key(cfg, "alpha"), p.alpha);
  p.beta = cfg.get_double(economy_key(cfg, "beta"), p.beta);
  p.l_bar = cfg.get_double(economy_key(cfg, "l_bar"), p.l_bar);
  p.h_bar = cfg.get_double(economy_key(cfg, "h_bar"), p.h_bar);
  p.informal_share = cfg.get_double(economy_key(cfg, "informal_share"), p.informal_share);
  p.validate();
  return p;
}

std::optional<economy::ImmigrationShock> immigration_shock(const Config& cfg) {
  if (!cfg.has("shock.eta") && !cfg.has("shock.mu") && !cfg.has("shock.delta")) return std::nullopt;
  economy::ImmigrationShock s;
  s.eta = cfg.get_double("shock.eta", 0.0);
  s.mu = cfg.get_double("shock.mu", 0.0);
  if (cfg.has("shock.delta")) s.delta = cfg.get_double("shock.delta", 0.0);
  s.validate(economy_params(cfg));
  return s;
}

economy::BorderTownParams border_town_params(const Config& cfg) {
  economy::BorderTownParams p;
  p.phi = cfg.get_double("border_town.phi", p.phi);
  p.psi = cfg.get_double("border_town.psi", p.psi);
  p.tau = cfg.get_double("border_town.tau", p.tau);
  p.nu = cfg.get_double("border_town.nu", p.nu);
  p.rho = cfg.get_double("border_town.rho", p.rho);
  p.delta_penalty = cfg.get_double("border_town.delta_penalty", p.delta_penalty);
  p.validate();
  return p;
}

EstimationSpec estimation_spec(const Config& cfg) {
  EstimationSpec s;
  s.outcome = cfg.get_string("estimate.outcome", s.outcome);
  if (auto v = cfg.get("estimate.treatment")) s.treatment = parse_treatment(*v);
  if (auto v = cfg.get("estimate.family")) {
    s.family = parse_family(*v);
    if (s.family == Family::PooledOls) {
      s.fixed_effects = FixedEffects::StateYear;
      s.cluster = ClusterLevel::State;
    }
  }
  if (auto v = cfg.get("estimate.fixed_effects")) s.fixed_effects = parse_fixed_effects(*v);
  if (auto v = cfg.get("estimate.cluster")) s.cluster = parse_cluster_level(*v);
  s.propensity_covariates = cfg.get_strings("estimate.propensity_covariates", s.propensity_covariates);
  s.covariates = cfg.get_strings("estimate.covariates", s.covariates);
  s.trim_quantile = cfg.get_double("estimate.trim_quantile", s.trim_quantile);
  s.reference_year = cfg.get_int("estimate.reference_year", s.reference_year);
  if (auto v = cfg.get("estimate.interaction")) s.interaction = parse_interaction(*v);
  s.propensity_weighting = cfg.get_bool("estimate.propensity_weighting", s.propensity_weighting);
  if (auto v = cfg.get("estimate.sector")) s.sector = parse_sector(*v);
  s.control_states = cfg.get_strings("estimate.control_states", s.control_states);
  s.validate();
  return s;
}

ScmOptions scm_options(const Config& cfg) {
  ScmOptions o;
  o.ridge = cfg.get_double("scm.ridge", o.ridge);
  if (!(o.ridge >= 0.0)) throw DomainError("scm.ridge must be >= 0");
  return o;
}

SampleOptions sample_options(const Config& cfg) {
  SampleOptions o;
  o.enabled = cfg.get_bool("estimate.sample_rules", o.enabled);
  o.rules.lower_quantile = cfg.get_double("estimate.sample_lower_quantile", o.rules.lower_quantile);
  o.rules.upper_quantile = cfg.get_double("estimate.sample_upper_quantile", o.rules.upper_quantile);
  o.rules.winsorize = cfg.get_bool("estimate.winsorize", o.rules.winsorize);
  if (!(o.rules.lower_quantile > 0.0 && o.rules.lower_quantile < o.rules.upper_quantile && o.rules.upper_quantile <= 1.0))
    throw DomainError("estimate.sample_lower_quantile/sample_upper_quantile: need 0 < lower < upper <= 1");
  return o;
}

RunOptions run_options(const Config& cfg) {
  RunOptions r;
  if (cfg.has("run.seed")) r.seed = cfg.get_u64("run.seed", 0);
  r.out = cfg.get("run.out");
  r.format = cfg.get("run.format");
  if (cfg.has("run.threads")) r.threads = cfg.get_int("run.threads", 1);
  r.panel = cfg.get("run.panel");
  r.ratio = cfg.get("run.ratio");
  r.truth = cfg.get("run.truth");
  return r;
}

}  // namespace borderlab::config

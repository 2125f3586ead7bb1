#include "borderlab/dgp.hpp"

#include "borderlab/error.hpp"
#include "borderlab/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>
#include <set>

namespace borderlab::dgp {

namespace {

constexpr std::uint64_t kAttributes = 1;
constexpr std::uint64_t kWorkerEffect = 2;
constexpr std::uint64_t kPath = 3;
constexpr std::uint64_t kMunicipality = 4;

const std::array<panel::Education, 3> kEducations{panel::Education::LessThanHighSchool, panel::Education::HighSchool,
                                                   panel::Education::College};

template <std::size_t N>
void check_mix(const std::array<double, N>& mix, const std::string& field) {
  double total = 0.0;
  for (double p : mix) {
    if (!(p >= 0.0 && p <= 1.0)) throw DomainError(field + ": proportions must lie in [0, 1]");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9)
    throw DomainError(field + ": proportions must sum to 1 (got " + std::to_string(total) + ")");
}

void check_probability(double p, const std::string& field) {
  if (!(p >= 0.0 && p <= 1.0)) throw DomainError(field + " must lie in [0, 1]");
}

template <std::size_t N>
std::size_t draw_category(const std::array<double, N>& mix, double u) {
  double acc = 0.0;
  for (std::size_t k = 0; k + 1 < N; ++k) {
    acc += mix[k];
    if (u < acc) return k;
  }
  return N - 1;
}

std::string padded(char prefix, int index, int width) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%c%0*d", prefix, width, index);
  return buf;
}

std::string municipality_name(const std::string& state, int index) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%02d", index + 1);
  return state + buf;
}

struct Worker {
  std::string id;
  bool treated = false;
  std::string state;
  std::string municipality;
  double state_level = 0.0;
  std::size_t education = 1;
  bool female = false;
  int race = 0;
  double age0 = 0.0;
  double tenure0 = 0.0;
  bool home_exposed = false;
  std::string home_occupation;
  std::string alt_occupation;
  bool exposed_activity = false;
  std::string activity_code;
  bool informal = false;
  double hours = 40.0;
  double worker_effect = 0.0;
  double multiplier = 1.0;
};

// Row-level injected effect kept alongside each observation for truth accounting.
struct Generated {
  std::vector<panel::Observation> rows;
  std::vector<double> effects;
};

struct Shock {
  double informal = 0.0;
  double formal_low = 0.0;
  double high = 0.0;
};

double lognormal_factor(const DgpConfig& c, const std::array<double, 3>& education_mix, double female_share) {
  double edu = 0.0;
  for (std::size_t e = 0; e < 3; ++e) edu += education_mix[e] * std::exp(c.education_premia[e]);
  const double gender = 1.0 - female_share + female_share * std::exp(c.female_gap);
  const double var = c.worker_effect_sd * c.worker_effect_sd + c.noise_sd * c.noise_sd;
  return edu * gender * std::exp(0.5 * var);
}

Simulation simulate(const DgpConfig& c, const std::optional<Shock>& shock) {
  c.validate();
  const auto years = c.years();
  const auto path = c.resolved_exposure_path();
  const int ref_year = c.treatment_year - 1;

  const double treated_level =
      std::log(c.wage_mean_treated / lognormal_factor(c, c.education_mix_treated, c.female_share_treated));
  int control_munis = 0;
  double offset_mean = 0.0;
  for (const auto& s : c.control_states) control_munis += s.municipalities;
  for (const auto& s : c.control_states)
    offset_mean += static_cast<double>(s.municipalities) / control_munis * std::exp(s.level_offset);
  const double control_level = std::log(c.wage_mean_control /
                                        (lognormal_factor(c, c.education_mix_control, c.female_share_control) * offset_mean));

  const auto n_workers = static_cast<std::size_t>(c.n_workers_treated + c.n_workers_control);
  std::vector<Worker> workers(n_workers);

  // Control ids sort before treated ids, so this order is already canonical.
  parallel_for(n_workers, [&](std::size_t idx) {
    Worker& w = workers[idx];
    const bool treated = idx >= static_cast<std::size_t>(c.n_workers_control);
    const int number = treated ? static_cast<int>(idx) - c.n_workers_control + 1 : static_cast<int>(idx) + 1;
    w.id = padded(treated ? 'T' : 'C', number, 7);
    w.treated = treated;
    std::mt19937_64 rng(substream_seed(c.seed, w.id, kAttributes));
    std::uniform_real_distribution<double> unif(0.0, 1.0);

    if (treated) {
      w.state = c.treated_state;
      w.municipality = municipality_name(w.state, static_cast<int>(unif(rng) * c.treated_municipalities));
      w.state_level = treated_level;
    } else {
      int pick = static_cast<int>(unif(rng) * control_munis);
      for (const auto& s : c.control_states) {
        if (pick < s.municipalities) {
          w.state = s.name;
          w.municipality = municipality_name(s.name, pick);
          w.state_level = control_level + s.level_offset;
          break;
        }
        pick -= s.municipalities;
      }
    }
    w.education = draw_category(treated ? c.education_mix_treated : c.education_mix_control, unif(rng));
    w.female = unif(rng) < (treated ? c.female_share_treated : c.female_share_control);
    w.race = static_cast<int>(draw_category(treated ? c.race_mix_treated : c.race_mix_control, unif(rng)));
    w.age0 = 20.0 + std::floor(unif(rng) * 36.0);
    w.tenure0 = std::floor(unif(rng) * 120.0);
    w.home_exposed = unif(rng) < c.exposed_occupation_share;
    const int occ = static_cast<int>(unif(rng) * 20.0);
    w.home_occupation = std::to_string((w.home_exposed ? 500 : 600) + occ);
    w.alt_occupation = std::to_string(700 + occ);
    w.exposed_activity = unif(rng) < c.exposed_activity_share;
    static const std::array<const char*, 3> kExposedActivities{"45", "47", "56"};
    static const std::array<const char*, 3> kOtherActivities{"10", "25", "84"};
    const auto act = std::min<std::size_t>(2, static_cast<std::size_t>(unif(rng) * 3.0));
    w.activity_code = w.exposed_activity ? kExposedActivities[act] : kOtherActivities[act];
    w.informal = unif(rng) < c.informal_fraction;
    w.hours = unif(rng) < 0.5 ? 40.0 : 44.0;

    std::mt19937_64 fe_rng(substream_seed(c.seed, w.id, kWorkerEffect));
    std::normal_distribution<double> normal(0.0, 1.0);
    w.worker_effect = c.worker_effect_sd * normal(fe_rng);
    if (c.heterogeneity)
      w.multiplier = c.education_effects[w.education] * c.exposure_effects[w.exposed_activity ? 1 : 0];
  });

  if (c.heterogeneity) {
    double total = 0.0;
    std::size_t count = 0;
    for (const auto& w : workers)
      if (w.treated && !w.informal) {
        total += w.multiplier;
        ++count;
      }
    const double mean = count ? total / static_cast<double>(count) : 0.0;
    if (!(std::abs(mean) > 1e-12))
      throw DomainError("dgp.education_effects: heterogeneity multipliers average to zero over treated workers");
    for (auto& w : workers) w.multiplier /= mean;
  }

  std::vector<Generated> generated(n_workers);
  parallel_for(n_workers, [&](std::size_t idx) {
    const Worker& w = workers[idx];
    Generated& g = generated[idx];
    std::mt19937_64 rng(substream_seed(c.seed, w.id, kPath));
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (std::size_t k = 0; k < years.size(); ++k) {
      const int t = years[k];
      const double exit_draw = unif(rng);
      const double noise = normal(rng);
      const double retain_draw = unif(rng);
      const double move_draw = unif(rng);
      if (k > 0 && exit_draw < c.attrition_rate) break;

      const bool treated_post = w.treated && t >= c.treatment_year;
      double effect = 0.0;
      if (treated_post) {
        if (!w.informal) {
          effect = c.true_effect * c.profile_weight(t) * w.multiplier;
          if (shock) effect += w.education == 2 ? shock->high : shock->formal_low;
        } else if (shock && w.exposed_activity) {
          effect = shock->informal;
        }
      }
      const double q = c.mover_base_prob + (treated_post ? c.mover_uplift : 0.0);
      const bool alt = w.home_exposed && move_draw < q;

      panel::Observation o;
      o.worker_id = w.id;
      o.year = t;
      o.state = w.state;
      o.municipality = w.municipality;
      const double trend = (c.year_effect_drift + c.education_trends[w.education]) * (t - ref_year);
      o.monthly_wage = std::exp(w.state_level + c.education_premia[w.education] + (w.female ? c.female_gap : 0.0) +
                                w.worker_effect + trend + effect + c.noise_sd * noise);
      o.weekly_hours = w.hours;
      o.retained = retain_draw < c.retention_rate + (treated_post ? c.retention_effect : 0.0) ? 1 : 0;
      o.occupation_code = alt ? w.alt_occupation : w.home_occupation;
      o.activity_code = w.activity_code;
      o.exposed_occupation = w.home_exposed && !alt;
      o.exposed_activity = w.exposed_activity;
      o.female = w.female;
      o.race = w.race;
      o.age = w.age0 + static_cast<double>(k);
      o.tenure = w.tenure0 + 12.0 * static_cast<double>(k);
      o.education = kEducations[w.education];
      o.informal = w.informal;
      g.rows.push_back(std::move(o));
      g.effects.push_back(effect);
    }
  });

  Simulation sim;
  auto& p = sim.panel;
  p.treated_state = c.treated_state;
  p.treatment_year = c.treatment_year;
  auto& truth = sim.truth;
  truth.seed = c.seed;
  truth.retention_effect = c.retention_effect;

  std::map<int, std::pair<double, std::size_t>> by_year;
  std::map<std::string, std::pair<double, std::size_t>> by_cohort;
  double post_total = 0.0;
  std::size_t post_count = 0;
  for (int t : years) by_year[t] = {0.0, 0};
  for (std::size_t idx = 0; idx < n_workers; ++idx) {
    const Worker& w = workers[idx];
    auto& g = generated[idx];
    for (std::size_t r = 0; r < g.rows.size(); ++r) {
      const auto& o = g.rows[r];
      const double e = g.effects[r];
      if (w.treated && o.year >= c.treatment_year) {
        auto add = [&](const std::string& key) {
          by_cohort[key].first += e;
          by_cohort[key].second += 1;
        };
        if (w.informal) {
          add(w.exposed_activity ? "informal:exposed_activity" : "informal:unexposed_activity");
        } else {
          post_total += e;
          ++post_count;
          add("education:" + std::string(panel::to_string(o.education)));
          add(std::string("exposed_activity:") + (o.exposed_activity ? "1" : "0"));
          add(std::string("exposed_occupation:") + (o.exposed_occupation ? "1" : "0"));
        }
      }
      if (w.treated && !w.informal) {
        by_year[o.year].first += e;
        by_year[o.year].second += 1;
      }
    }
    for (auto& o : g.rows) p.observations.push_back(std::move(o));
  }
  for (const auto& [t, acc] : by_year) truth.att_by_year[t] = acc.second ? acc.first / static_cast<double>(acc.second) : 0.0;
  for (const auto& [key, acc] : by_cohort) truth.cohort_effects[key] = acc.first / static_cast<double>(acc.second);
  truth.overall_att = post_count ? post_total / static_cast<double>(post_count) : 0.0;
  if (shock) {
    truth.log_multipliers["informal"] = shock->informal;
    truth.log_multipliers["formal_low"] = shock->formal_low;
    truth.log_multipliers["high"] = shock->high;
  }

  // Mover-rate change implied by the occupation process, averaged over post years.
  const double base = c.mover_base_prob;
  const double up = c.mover_uplift;
  const int post_years = c.last_year - c.treatment_year + 1;
  truth.mover_effect =
      (up * (1.0 - base) + (post_years - 1) * up * (1.0 - 2.0 * base - up)) / static_cast<double>(post_years);

  std::set<std::string> treated_munis;
  for (int m = 0; m < c.treated_municipalities; ++m) treated_munis.insert(municipality_name(c.treated_state, m));
  for (const auto& name : treated_munis) {
    std::mt19937_64 rng(substream_seed(c.seed, name, kMunicipality));
    const double scale = 0.5 + std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    for (std::size_t k = 0; k < years.size(); ++k) p.vz_ratio[{name, years[k]}] = std::min(1.0, path[k] * scale);
  }
  for (const auto& s : c.control_states)
    for (int m = 0; m < s.municipalities; ++m)
      for (int t : years) p.vz_ratio[{municipality_name(s.name, m), t}] = 0.0;
  truth.exposure = p.vz_ratio;
  p.validate();
  return sim;
}

}  // namespace

std::string_view to_string(EffectProfile p) { return p == EffectProfile::Flat ? "flat" : "ramp"; }

EffectProfile parse_effect_profile(std::string_view s) {
  if (s == "flat") return EffectProfile::Flat;
  if (s == "ramp") return EffectProfile::Ramp;
  throw DomainError("dgp.effect_profile: expected flat or ramp, got '" + std::string(s) + "'");
}

std::vector<int> DgpConfig::years() const {
  std::vector<int> ys(static_cast<std::size_t>(std::max(0, last_year - first_year + 1)));
  std::iota(ys.begin(), ys.end(), first_year);
  return ys;
}

double DgpConfig::profile_weight(int year) const {
  if (year < treatment_year) return 0.0;
  if (effect_profile == EffectProfile::Flat || last_year == treatment_year) return 1.0;
  return 2.0 * (year - treatment_year) / static_cast<double>(last_year - treatment_year);
}

std::vector<double> DgpConfig::resolved_exposure_path() const {
  if (!exposure_path.empty()) return exposure_path;
  std::vector<double> out;
  const int post = last_year - treatment_year + 1;
  for (int t : years()) out.push_back(t < treatment_year ? 0.0 : 0.04 * (t - treatment_year + 1) / post);
  return out;
}

void DgpConfig::validate() const {
  if (n_workers_treated <= 0) throw DomainError("dgp.n_workers_treated must be > 0");
  if (n_workers_control <= 0) throw DomainError("dgp.n_workers_control must be > 0");
  if (n_workers_treated > 9999999 || n_workers_control > 9999999)
    throw DomainError("dgp.n_workers_*: at most 9999999 workers per group");
  if (!(first_year < treatment_year && treatment_year <= last_year))
    throw DomainError("dgp.treatment_year must lie in (first_year, last_year]");
  if (!std::isfinite(true_effect)) throw DomainError("dgp.true_effect must be finite");
  if (!exposure_path.empty()) {
    if (exposure_path.size() != years().size())
      throw DomainError("dgp.exposure_path needs one entry per year (" + std::to_string(years().size()) + ")");
    for (double v : exposure_path) check_probability(v, "dgp.exposure_path entries");
  }
  if (!(wage_mean_treated > 0.0 && std::isfinite(wage_mean_treated)))
    throw DomainError("dgp.wage_mean_treated must be > 0");
  if (!(wage_mean_control > 0.0 && std::isfinite(wage_mean_control)))
    throw DomainError("dgp.wage_mean_control must be > 0");
  if (!(noise_sd >= 0.0)) throw DomainError("dgp.noise_sd must be >= 0");
  if (!(worker_effect_sd >= 0.0)) throw DomainError("dgp.worker_effect_sd must be >= 0");
  if (!std::isfinite(year_effect_drift)) throw DomainError("dgp.year_effect_drift must be finite");
  check_mix(education_mix_treated, "dgp.education_mix_treated");
  check_mix(education_mix_control, "dgp.education_mix_control");
  check_mix(race_mix_treated, "dgp.race_mix_treated");
  check_mix(race_mix_control, "dgp.race_mix_control");
  check_probability(female_share_treated, "dgp.female_share_treated");
  check_probability(female_share_control, "dgp.female_share_control");
  check_probability(exposed_occupation_share, "dgp.exposed_occupation_share");
  check_probability(exposed_activity_share, "dgp.exposed_activity_share");
  check_probability(informal_fraction, "dgp.informal_fraction");
  if (!(attrition_rate >= 0.0 && attrition_rate < 1.0)) throw DomainError("dgp.attrition_rate must lie in [0, 1)");
  check_probability(retention_rate, "dgp.retention_rate");
  check_probability(retention_rate + retention_effect, "dgp.retention_rate + dgp.retention_effect");
  check_probability(mover_base_prob, "dgp.mover_base_prob");
  check_probability(mover_base_prob + mover_uplift, "dgp.mover_base_prob + dgp.mover_uplift");
  for (double v : education_premia)
    if (!std::isfinite(v)) throw DomainError("dgp.education_premia must be finite");
  for (double v : education_trends)
    if (!std::isfinite(v)) throw DomainError("dgp.education_trends must be finite");
  if (treated_municipalities <= 0 || treated_municipalities > 99)
    throw DomainError("dgp.treated_municipalities must lie in [1, 99]");
  if (control_states.empty()) throw DomainError("dgp.control_states must not be empty");
  std::set<std::string> names{treated_state};
  for (const auto& s : control_states) {
    if (s.municipalities <= 0 || s.municipalities > 99)
      throw DomainError("dgp.control_states: municipalities per state must lie in [1, 99]");
    if (!names.insert(s.name).second) throw DomainError("dgp.control_states: duplicate state '" + s.name + "'");
  }
}

DgpConfig DgpConfig::noiseless() {
  DgpConfig c;
  c.noise_sd = 0.0;
  c.worker_effect_sd = 0.0;
  c.attrition_rate = 0.0;
  c.heterogeneity = false;
  return c;
}

DgpConfig DgpConfig::confounded() {
  DgpConfig c;
  c.education_mix_treated = {0.15, 0.45, 0.40};
  c.education_mix_control = {0.45, 0.45, 0.10};
  c.education_trends = {-0.01, 0.0, 0.02};
  c.heterogeneity = false;
  c.effect_profile = EffectProfile::Flat;
  return c;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t substream_seed(std::uint64_t master, std::string_view key, std::uint64_t component) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (unsigned char ch : key) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return splitmix64(splitmix64(splitmix64(master) ^ h) ^ component);
}

Simulation generate(const DgpConfig& config) { return simulate(config, std::nullopt); }

Simulation generate_shock_consistent(const DgpConfig& config, const economy::EconomyParams& params,
                                     const economy::ImmigrationShock& shock) {
  const auto m = economy::shock_multipliers(params, shock);
  return simulate(config, Shock{std::log(m.informal), std::log(m.formal_low), std::log(m.high)});
}

std::vector<SummaryRow> summary_statistics(const panel::Panel& panel, std::optional<int> year) {
  const int y = year.value_or(panel.treatment_year - 1);
  std::array<SummaryRow, 2> rows;
  rows[0].group = "treated";
  rows[1].group = "control";
  std::array<std::set<std::string>, 2> ids;
  for (const auto& o : panel.observations) {
    if (o.year != y || o.informal) continue;
    const std::size_t g = panel.treated(o) ? 0 : 1;
    auto& r = rows[g];
    ids[g].insert(o.worker_id);
    ++r.observations;
    r.mean_wage += o.monthly_wage;
    r.female_share += o.female ? 1.0 : 0.0;
    r.education_shares[static_cast<std::size_t>(o.education)] += 1.0;
    r.mean_age += o.age;
    r.mean_tenure += o.tenure;
    r.mean_hours += o.weekly_hours;
  }
  for (std::size_t g = 0; g < 2; ++g) {
    auto& r = rows[g];
    r.workers = ids[g].size();
    if (r.observations == 0) continue;
    const double n = static_cast<double>(r.observations);
    r.mean_wage /= n;
    r.female_share /= n;
    for (auto& s : r.education_shares) s /= n;
    r.mean_age /= n;
    r.mean_tenure /= n;
    r.mean_hours /= n;
  }
  return {rows.begin(), rows.end()};
}

}  // namespace borderlab::dgp

#pragma once

#include "borderlab/economy.hpp"
#include "borderlab/panel.hpp"

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace borderlab::dgp {

enum class EffectProfile { Flat, Ramp };

std::string_view to_string(EffectProfile p);
EffectProfile parse_effect_profile(std::string_view s);

struct StateLayout {
  std::string name;
  int municipalities = 1;
  double level_offset = 0.0;  // log-wage offset relative to the group level
};

struct DgpConfig {
  int n_workers_treated = 1500;
  int n_workers_control = 4500;
  int first_year = 2008;
  int last_year = 2018;
  int treatment_year = 2014;

  double true_effect = 0.022;  // mean post-period log-wage effect on treated formal workers
  EffectProfile effect_profile = EffectProfile::Ramp;
  /// Immigrant share in treated municipalities, one entry per year. Empty selects the default path.
  std::vector<double> exposure_path;

  double wage_mean_treated = 1916.07;  // expected monthly wage in the year before treatment
  double wage_mean_control = 1841.05;
  double noise_sd = 0.25;
  double worker_effect_sd = 0.5;
  double year_effect_drift = 0.01;  // common log-wage growth per year

  // less than high school, high school, college
  std::array<double, 3> education_mix_treated{0.24, 0.64, 0.12};
  std::array<double, 3> education_mix_control{0.32, 0.58, 0.10};
  std::array<double, 3> education_premia{0.0, 0.25, 0.8};
  /// Education-specific log-wage trend per year (zero in the default design).
  std::array<double, 3> education_trends{0.0, 0.0, 0.0};
  double female_share_treated = 0.36;
  double female_share_control = 0.32;
  double female_gap = -0.15;
  std::array<double, 4> race_mix_treated{0.22, 0.02, 0.63, 0.13};
  std::array<double, 4> race_mix_control{0.17, 0.03, 0.65, 0.15};

  /// Effect heterogeneity. Multipliers are rescaled so the mean over treated
  /// formal workers is 1, which keeps the average effect at true_effect.
  bool heterogeneity = true;
  std::array<double, 3> education_effects{0.041, 0.015, -0.037};
  std::array<double, 2> exposure_effects{1.0, 1.0};  // unexposed, exposed activity

  double exposed_occupation_share = 0.3;
  double exposed_activity_share = 0.35;
  double informal_fraction = 0.15;
  double attrition_rate = 0.02;  // yearly absorbing exit probability
  double retention_rate = 0.85;
  double retention_effect = 0.0;  // added to the retention probability for treated post rows
  double mover_base_prob = 0.05;  // yearly probability an exposed-occupation worker sits in an unexposed job
  double mover_uplift = 0.0;      // added to that probability for treated post rows

  std::string treated_state = "RR";
  int treated_municipalities = 15;
  std::vector<StateLayout> control_states{{"AP", 16, 0.15}, {"AC", 22, -0.15}};

  std::uint64_t seed = 20140101;

  std::vector<int> years() const;
  /// Effect multiplier of the base path in year t (0 before treatment).
  double profile_weight(int year) const;
  std::vector<double> resolved_exposure_path() const;
  void validate() const;

  /// Noise, worker effects, attrition and heterogeneity switched off.
  static DgpConfig noiseless();
  /// Education drives both treated-state membership and wage trends; homogeneous flat effect.
  static DgpConfig confounded();
};

struct GroundTruth {
  std::map<int, double> att_by_year;  // realized mean injected effect on treated formal rows
  double overall_att = 0.0;           // realized mean over treated formal post rows
  /// Realized mean injected effect by cohort over treated post rows. Keys look
  /// like "education:college", "exposed_activity:1", "informal:exposed_activity".
  std::map<std::string, double> cohort_effects;
  std::map<std::string, double> log_multipliers;  // shock-consistent runs: "informal", "formal_low", "high"
  std::map<panel::RatioKey, double> exposure;
  double mover_effect = 0.0;      // expected post-period change in the mover rate for at-risk treated rows
  double retention_effect = 0.0;
  std::uint64_t seed = 0;
};

struct Simulation {
  panel::Panel panel;
  GroundTruth truth;
};

Simulation generate(const DgpConfig& config);

/// Layers the structural wage multipliers onto treated post-period rows:
/// college formal workers by m_h, other formal workers by m_l and informal
/// workers in exposed activities by m_i. eta = mu = 0 reproduces generate().
Simulation generate_shock_consistent(const DgpConfig& config, const economy::EconomyParams& params,
                                     const economy::ImmigrationShock& shock);

/// Deterministic 64-bit mixer used for substream seeding.
std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t substream_seed(std::uint64_t master, std::string_view key, std::uint64_t component);

struct SummaryRow {
  std::string group;  // "treated" or "control"
  std::size_t workers = 0;
  std::size_t observations = 0;
  double mean_wage = 0.0;
  double female_share = 0.0;
  std::array<double, 3> education_shares{};
  double mean_age = 0.0;
  double mean_tenure = 0.0;
  double mean_hours = 0.0;
};

/// Descriptive statistics over formal rows of one year (default: the year before treatment).
std::vector<SummaryRow> summary_statistics(const panel::Panel& panel, std::optional<int> year = std::nullopt);

}  // namespace borderlab::dgp

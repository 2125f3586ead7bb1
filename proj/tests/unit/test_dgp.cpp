#include "borderlab/dgp.hpp"
#include "borderlab/error.hpp"

#include "../support/oracles.hpp"

#include <doctest.h>

#include <cmath>
#include <set>
#include <sstream>

using namespace borderlab;
using namespace borderlab::dgp;

namespace {

std::string csv_of(const panel::Panel& p) {
  std::ostringstream os;
  panel::write_csv(p, os);
  panel::write_ratio_csv(p, os);
  return os.str();
}

}  // namespace

TEST_CASE("same seed, same panel") {
  const auto cfg = testing::small_config(42);
  CHECK(csv_of(generate(cfg).panel) == csv_of(generate(cfg).panel));
  auto other = cfg;
  other.seed = 43;
  CHECK(csv_of(generate(other).panel) != csv_of(generate(cfg).panel));
}

TEST_CASE("substream seeds are stable and distinct") {
  CHECK(substream_seed(1, "T0000001", 1) == substream_seed(1, "T0000001", 1));
  CHECK(substream_seed(1, "T0000001", 1) != substream_seed(1, "T0000001", 2));
  CHECK(substream_seed(1, "T0000001", 1) != substream_seed(2, "T0000001", 1));
  CHECK(substream_seed(1, "T0000001", 1) != substream_seed(1, "T0000002", 1));
  CHECK(splitmix64(0) != splitmix64(1));
}

TEST_CASE("generated panel is valid and canonical") {
  const auto sim = generate(testing::small_config(1));
  CHECK_NOTHROW(sim.panel.validate());
  auto sorted = sim.panel;
  sorted.sort_canonical();
  CHECK(csv_of(sorted) == csv_of(sim.panel));
  std::set<std::string> states;
  for (const auto& o : sim.panel.observations) states.insert(o.state);
  CHECK(states == std::set<std::string>{"AC", "AP", "RR"});
}

TEST_CASE("exposure path is zero before treatment and nondecreasing after") {
  DgpConfig cfg;
  const auto path = cfg.resolved_exposure_path();
  REQUIRE(path.size() == 11);
  for (int t = 0; t < 6; ++t) CHECK(path[static_cast<std::size_t>(t)] == 0.0);
  for (std::size_t t = 1; t < path.size(); ++t) CHECK(path[t] >= path[t - 1]);
  const auto sim = generate(testing::small_config(2));
  for (const auto& [key, v] : sim.panel.vz_ratio) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
    if (key.first.rfind("RR", 0) != 0) CHECK(v == 0.0);
    if (key.second < 2014) CHECK(v == 0.0);
  }
}

TEST_CASE("ramp profile averages to one over post years") {
  DgpConfig cfg;
  double sum = 0;
  int n = 0;
  for (int y = cfg.treatment_year; y <= cfg.last_year; ++y, ++n) sum += cfg.profile_weight(y);
  CHECK(sum / n == doctest::Approx(1.0));
  CHECK(cfg.profile_weight(2013) == 0.0);
  CHECK(cfg.profile_weight(2014) == 0.0);
  cfg.effect_profile = EffectProfile::Flat;
  CHECK(cfg.profile_weight(2014) == 1.0);
}

TEST_CASE("ground truth matches the injected effect in a noiseless world") {
  auto cfg = DgpConfig::noiseless();
  cfg.n_workers_treated = 50;
  cfg.n_workers_control = 50;
  const auto sim = generate(cfg);
  CHECK(sim.truth.overall_att == doctest::Approx(cfg.true_effect).epsilon(1e-12));
  for (const auto& [y, v] : sim.truth.att_by_year)
    CHECK(v == doctest::Approx(cfg.true_effect * cfg.profile_weight(y)).epsilon(1e-12));
}

TEST_CASE("default calibration lands near the target wages") {
  const auto sim = generate(DgpConfig{});
  const auto rows = summary_statistics(sim.panel);
  REQUIRE(rows.size() == 2);
  const auto& treated = rows[0].group == "treated" ? rows[0] : rows[1];
  const auto& control = rows[0].group == "treated" ? rows[1] : rows[0];
  CHECK(std::abs(treated.mean_wage / 1916.07 - 1.0) < 0.05);
  CHECK(std::abs(control.mean_wage / 1841.05 - 1.0) < 0.05);
  CHECK(treated.education_shares[0] + treated.education_shares[1] + treated.education_shares[2] ==
        doctest::Approx(1.0));
}

TEST_CASE("heterogeneous effects keep the treated mean") {
  auto cfg = DgpConfig{};
  cfg.noise_sd = 0.0;
  cfg.effect_profile = EffectProfile::Flat;
  const auto sim = generate(cfg);
  // Normalization holds in expectation; the realized mean stays close.
  CHECK(sim.truth.overall_att == doctest::Approx(cfg.true_effect).epsilon(0.02));
  CHECK(sim.truth.cohort_effects.at("education:college") < 0.0);
  CHECK(sim.truth.cohort_effects.at("education:less_than_hs") > sim.truth.cohort_effects.at("education:high_school"));
}

TEST_CASE("shock-consistent layering with a zero shock reproduces generate") {
  const auto cfg = testing::small_config(5);
  const auto a = generate(cfg);
  const auto b = generate_shock_consistent(cfg, economy::EconomyParams{}, economy::ImmigrationShock{});
  CHECK(csv_of(a.panel) == csv_of(b.panel));
}

TEST_CASE("shock-consistent layering adds log multipliers") {
  auto cfg = DgpConfig::noiseless();
  cfg.n_workers_treated = 200;
  cfg.n_workers_control = 100;
  cfg.education_mix_treated = {0.3, 0.4, 0.3};
  cfg.informal_fraction = 0.3;
  cfg.true_effect = 0.0;
  economy::EconomyParams params;
  economy::ImmigrationShock shock{0.02, 0.10, std::nullopt};
  const auto m = economy::shock_multipliers(params, shock);
  const auto sim = generate_shock_consistent(cfg, params, shock);
  CHECK(sim.truth.log_multipliers.at("high") == doctest::Approx(std::log(m.high)).epsilon(1e-14));
  CHECK(sim.truth.cohort_effects.at("education:college") == doctest::Approx(std::log(m.high)).epsilon(1e-12));
  CHECK(sim.truth.cohort_effects.at("education:high_school") == doctest::Approx(std::log(m.formal_low)).epsilon(1e-12));
  CHECK(sim.truth.cohort_effects.at("informal:exposed_activity") == doctest::Approx(std::log(m.informal)).epsilon(1e-12));
  CHECK(sim.truth.cohort_effects.at("informal:unexposed_activity") == doctest::Approx(0.0));
}

TEST_CASE("validation names the offending field") {
  DgpConfig cfg;
  cfg.education_mix_treated = {0.5, 0.5, 0.5};
  CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("dgp.education_mix_treated"), DomainError);
  cfg = DgpConfig{};
  cfg.treatment_year = 2030;
  CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("treatment_year"), DomainError);
  cfg = DgpConfig{};
  cfg.n_workers_control = 0;
  CHECK_THROWS_AS(generate(cfg), DomainError);
}

TEST_CASE("confounded preset differs by education") {
  const auto cfg = DgpConfig::confounded();
  CHECK(cfg.education_mix_treated[2] > cfg.education_mix_control[2]);
  CHECK(cfg.education_trends[2] > 0.0);
  CHECK_FALSE(cfg.heterogeneity);
  CHECK(cfg.effect_profile == EffectProfile::Flat);
  CHECK_NOTHROW(cfg.validate());
}

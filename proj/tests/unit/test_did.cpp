#include "borderlab/did.hpp"
#include "borderlab/dgp.hpp"
#include "borderlab/error.hpp"

#include "../support/oracles.hpp"

#include <doctest.h>

#include <algorithm>
#include <random>
#include <set>

using namespace borderlab;
using namespace borderlab::did;
using borderlab::testing::dense_dummy_fit;
using borderlab::testing::small_config;

TEST_CASE("twfe equals dense dummy least squares") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto sim = dgp::generate(small_config(seed));
    for (const auto treatment : {Treatment::Binary, Treatment::Continuous}) {
      EstimationSpec spec;
      spec.treatment = treatment;
      const auto design = panel::build_design(sim.panel, spec);
      const auto r = twfe_did(sim.panel, spec);
      const auto oracle = dense_dummy_fit(design);
      CHECK(std::abs(r.coefficients(0) - oracle.slopes(0)) < 1e-8);
      CHECK(std::abs(r.standard_errors(0) - oracle.se(0)) < 1e-10);
    }
  }
}

TEST_CASE("sandwich parts reproduce the clustered covariance") {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> nd;
  const Eigen::Index n = 40;
  Eigen::MatrixXd X(n, 2);
  Eigen::VectorXd e(n), w = Eigen::VectorXd::Ones(n);
  std::vector<int> clusters(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    X(i, 0) = nd(rng);
    X(i, 1) = nd(rng);
    e(i) = nd(rng);
    clusters[static_cast<std::size_t>(i)] = static_cast<int>(i % 5);
  }
  const auto parts = sandwich_parts(X, e, w, clusters);
  CHECK(parts.clusters == 5);
  CHECK(parts.factor == doctest::Approx(5.0 / 4.0 * 39.0 / 38.0));
  const Eigen::MatrixXd bread = (X.transpose() * X).inverse();
  Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(2, 2);
  for (int g = 0; g < 5; ++g) {
    Eigen::Vector2d s = Eigen::Vector2d::Zero();
    for (Eigen::Index i = 0; i < n; ++i)
      if (clusters[static_cast<std::size_t>(i)] == g) s += X.row(i).transpose() * e(i);
    meat += s * s.transpose();
  }
  const Eigen::MatrixXd V = parts.factor * bread * meat * bread;
  CHECK((cluster_robust_vcov(X, e, w, clusters) - V).cwiseAbs().maxCoeff() < 1e-12);
  CHECK_THROWS_AS(cluster_robust_vcov(X, e, w, std::vector<int>(n, 0)), DegenerateDesignError);
}

TEST_CASE("outcome scaling scales coefficients and standard errors") {
  const auto sim = dgp::generate(small_config(9));
  const auto design = panel::build_design(sim.panel, EstimationSpec{});
  auto scaled = design;
  scaled.outcome *= 3.0;
  const auto a = fit_design(design, "twfe");
  const auto b = fit_design(scaled, "twfe");
  CHECK(b.coefficients(0) == doctest::Approx(3.0 * a.coefficients(0)).epsilon(1e-9));
  CHECK(b.standard_errors(0) == doctest::Approx(3.0 * a.standard_errors(0)).epsilon(1e-9));
  CHECK(b.r2_adjusted == doctest::Approx(a.r2_adjusted).epsilon(1e-9));
}

TEST_CASE("row order and cluster labels do not matter") {
  const auto sim = dgp::generate(small_config(10));
  auto shuffled = sim.panel;
  std::mt19937_64 rng(4);
  std::shuffle(shuffled.observations.begin(), shuffled.observations.end(), rng);
  for (auto& o : shuffled.observations) o.municipality = "m_" + o.municipality;
  std::map<panel::RatioKey, double> ratio;
  for (const auto& [k, v] : sim.panel.vz_ratio) ratio[{"m_" + k.first, k.second}] = v;
  shuffled.vz_ratio = ratio;
  for (const auto treatment : {Treatment::Binary, Treatment::Continuous}) {
    EstimationSpec spec;
    spec.treatment = treatment;
    const auto a = twfe_did(sim.panel, spec);
    const auto b = twfe_did(shuffled, spec);
    CHECK(b.coefficients(0) == doctest::Approx(a.coefficients(0)).epsilon(1e-9));
    CHECK(b.standard_errors(0) == doctest::Approx(a.standard_errors(0)).epsilon(1e-9));
  }
}

TEST_CASE("duplicating every cluster leaves the coefficient unchanged") {
  const auto sim = dgp::generate(small_config(11));
  auto doubled = sim.panel;
  for (const auto& o : sim.panel.observations) {
    auto copy = o;
    copy.worker_id += "_dup";
    doubled.observations.push_back(copy);
  }
  doubled.sort_canonical();
  const auto a = twfe_did(sim.panel, EstimationSpec{});
  const auto b = twfe_did(doubled, EstimationSpec{});
  CHECK(b.coefficients(0) == doctest::Approx(a.coefficients(0)).epsilon(1e-9));
  CHECK(b.n_obs == 2 * a.n_obs);
  CHECK(b.n_clusters == a.n_clusters);
}

TEST_CASE("doubly robust equals twfe when propensity is flat on a balanced panel") {
  auto cfg = small_config(12, 40, 60);
  cfg.attrition_rate = 0.0;
  cfg.informal_fraction = 0.0;
  auto sim = dgp::generate(cfg);
  for (auto& o : sim.panel.observations) o.female = false;
  EstimationSpec spec;
  spec.propensity_covariates = {"female"};
  const auto tw = twfe_did(sim.panel, spec);
  spec.family = Family::DoublyRobust;
  const auto dr = doubly_robust_did(sim.panel, spec);
  REQUIRE(dr.propensity);
  CHECK(dr.trimmed == 0);
  CHECK(dr.coefficients(0) == doctest::Approx(tw.coefficients(0)).epsilon(1e-9));
}

TEST_CASE("propensity weights are inverse probabilities") {
  const auto sim = dgp::generate(small_config(13, 60, 90));
  EstimationSpec spec;
  spec.family = Family::DoublyRobust;
  const auto design = panel::build_design(sim.panel, spec);
  PropensityDiagnostics diag;
  const auto w = propensity_weights(sim.panel, design, spec, &diag);
  CHECK(diag.converged);
  std::set<std::string> ids;
  for (const auto r : design.rows) ids.insert(sim.panel.observations[r].worker_id);
  CHECK(diag.workers == ids.size());
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    const auto& o = sim.panel.observations[design.rows[static_cast<std::size_t>(i)]];
    CHECK(w(i) > 1.0);
    if (!sim.panel.treated(o)) CHECK(w(i) < 1e6);
  }
}

TEST_CASE("trimming excludes weights strictly above the quantile") {
  std::mt19937_64 rng(3);
  std::exponential_distribution<double> ex(1.0);
  Eigen::VectorXd w(1000);
  for (auto& x : w) x = 1.0 + ex(rng);
  std::vector<double> sorted(w.begin(), w.end());
  std::sort(sorted.begin(), sorted.end());
  std::size_t previous = w.size();
  for (const double q : {0.5, 0.9, 0.99, 0.9975, 1.0}) {
    const auto t = trim_weights(w, q);
    const double threshold = sorted[static_cast<std::size_t>(std::ceil(q * 1000 - 1e-9)) - 1];
    const auto expected = static_cast<std::size_t>(std::count_if(sorted.begin(), sorted.end(), [&](double x) { return x > threshold; }));
    CHECK(t.count == expected);
    CHECK(t.count <= previous);
    previous = t.count;
  }
  Eigen::VectorXd ties = Eigen::VectorXd::Constant(10, 2.0);
  CHECK(trim_weights(ties, 0.5).count == 0);
}

TEST_CASE("event study with a flat effect and no noise") {
  auto cfg = dgp::DgpConfig::noiseless();
  cfg.n_workers_treated = 30;
  cfg.n_workers_control = 40;
  cfg.effect_profile = dgp::EffectProfile::Flat;
  const auto sim = dgp::generate(cfg);
  EstimationSpec spec;
  spec.family = Family::EventStudy;
  const auto r = event_study(sim.panel, spec);
  CHECK(r.year_coefficients.count(2013) == 0);
  for (const auto& [y, c] : r.year_coefficients) {
    if (y < 2014) CHECK(std::abs(c) < 1e-10);
    else CHECK(c == doctest::Approx(0.022).epsilon(1e-9));
  }
}

TEST_CASE("retention and mover models") {
  auto cfg = small_config(14, 80, 120);
  cfg.retention_effect = -0.2;
  cfg.mover_uplift = 0.3;
  cfg.exposed_occupation_share = 0.8;
  const auto sim = dgp::generate(cfg);
  const auto r = retention_lpm(sim.panel, EstimationSpec{});
  CHECK(r.names.front() == "treat");
  CHECK(r.coefficients(0) < 0.0);
  const auto m = heterogeneity_split(sim.panel, EstimationSpec{}, Dimension::Mover);
  REQUIRE(m.count("mover") == 1);
  CHECK(m.at("mover").coefficients(0) > 0.0);
}

TEST_CASE("heterogeneity split cohorts") {
  const auto sim = dgp::generate(small_config(15, 80, 120));
  const auto edu = heterogeneity_split(sim.panel, EstimationSpec{}, Dimension::Education);
  CHECK(edu.count("college") == 1);
  CHECK(edu.count("high_school") == 1);
  CHECK(edu.count("less_than_hs") == 1);
  const auto act = heterogeneity_split(sim.panel, EstimationSpec{}, Dimension::ExposedActivity);
  CHECK(act.count("exposed") == 1);
  CHECK(act.count("unexposed") == 1);
  std::size_t total = 0;
  for (const auto& [k, r] : act) total += r.n_obs;
  CHECK(total == twfe_did(sim.panel, EstimationSpec{}).n_obs);
}

TEST_CASE("pooled informal model") {
  const auto sim = dgp::generate(small_config(16, 150, 200));
  const auto spec = EstimationSpec::informal_pooled();
  const auto r = pooled_ols_did(sim.panel, spec);
  CHECK(r.names[0] == "treat");
  CHECK(r.names[1] == "exposed_activity");
  CHECK(r.names[2] == "treat_x_exposed_activity");
  CHECK(r.n_clusters == 3);
}

TEST_CASE("placebo suite labels") {
  const auto sim = dgp::generate(small_config(17));
  const auto space = placebo_suite(sim.panel, EstimationSpec{}, PlaceboMode::InSpace);
  REQUIRE(space.size() == 2);
  CHECK(space[0].label == "AC");
  CHECK(space[1].label == "AP");
  const auto time = placebo_suite(sim.panel, EstimationSpec{}, PlaceboMode::InTime);
  REQUIRE(time.size() == 5);
  CHECK(time.front().label == "2009");
  CHECK(time.back().label == "2013");
}

TEST_CASE("p-values and stars inputs") {
  EstimateResult r;
  r.names = {"treat"};
  r.coefficients = Eigen::VectorXd::Constant(1, 1.96);
  r.standard_errors = Eigen::VectorXd::Ones(1);
  CHECK(r.p_value("treat") == doctest::Approx(0.05).epsilon(1e-3));
  CHECK_THROWS(r.coef("missing"));
}

TEST_CASE("estimator errors") {
  const auto sim = dgp::generate(small_config(18));
  EstimationSpec spec;
  spec.control_states = {"nowhere"};
  CHECK_THROWS_AS(twfe_did(sim.panel, spec), DegenerateDesignError);
  auto only_treated = sim.panel;
  std::erase_if(only_treated.observations, [&](const auto& o) { return !only_treated.treated(o); });
  CHECK_THROWS_AS(doubly_robust_did(only_treated, EstimationSpec{}), Error);
}

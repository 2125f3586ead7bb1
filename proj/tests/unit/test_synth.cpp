#include "borderlab/dgp.hpp"
#include "borderlab/error.hpp"
#include "borderlab/synth.hpp"

#include "../support/oracles.hpp"

#include <doctest.h>

#include <random>

using namespace borderlab;
using namespace borderlab::synth;

namespace {

AggregatePanel make_agg(const Eigen::MatrixXd& y, int first_year = 2010, int treatment_year = 2014) {
  AggregatePanel a;
  for (Eigen::Index u = 0; u < y.rows(); ++u) a.units.push_back(u == 0 ? "T" : "D" + std::to_string(u));
  for (Eigen::Index t = 0; t < y.cols(); ++t) a.years.push_back(first_year + static_cast<int>(t));
  a.outcome = y;
  a.treated_unit = "T";
  a.treatment_year = treatment_year;
  return a;
}

}  // namespace

TEST_CASE("exact-match donor receives all weight") {
  Eigen::MatrixXd y(3, 6);
  y << 1, 2, 3, 4, 9, 9,  //
      1, 2, 3, 4, 5, 6,   //
      0, 5, 1, 7, 2, 3;
  const auto s = scm_fit(make_agg(y));
  CHECK(s.weights(0) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(s.mspe < 1e-15);
  CHECK(s.effect == doctest::Approx((9 + 9) / 2.0 - (5 + 6) / 2.0).epsilon(1e-9));
}

TEST_CASE("midpoint treated path splits weight") {
  Eigen::MatrixXd y(3, 5);
  y << 2, 3, 1, 4, 0,  //
      1, 1, 1, 1, 1,   //
      3, 5, 1, 7, 2;
  const auto s = scm_fit(make_agg(y));
  CHECK(s.weights(0) == doctest::Approx(0.5).epsilon(1e-6));
  CHECK(s.weights(1) == doctest::Approx(0.5).epsilon(1e-6));
}

TEST_CASE("sdid ignores level shifts of any unit") {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> nd;
  Eigen::MatrixXd y(5, 8);
  for (Eigen::Index i = 0; i < y.rows(); ++i)
    for (Eigen::Index t = 0; t < y.cols(); ++t) y(i, t) = nd(rng) + 0.1 * static_cast<double>(t);
  const auto base = sdid_fit(make_agg(y));
  Eigen::MatrixXd shifted = y;
  for (Eigen::Index i = 0; i < y.rows(); ++i) shifted.row(i).array() += 10.0 * nd(rng);
  const auto moved = sdid_fit(make_agg(shifted));
  CHECK(std::abs(base.estimate - moved.estimate) < 1e-8);
}

TEST_CASE("uniform sdid weights reduce to the two-by-two difference") {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> nd;
  Eigen::MatrixXd y(4, 6);
  for (Eigen::Index i = 0; i < y.rows(); ++i)
    for (Eigen::Index t = 0; t < y.cols(); ++t) y(i, t) = nd(rng);
  const auto agg = make_agg(y);
  const Eigen::VectorXd uw = Eigen::VectorXd::Constant(3, 1.0 / 3.0);
  const Eigen::VectorXd tw = Eigen::VectorXd::Constant(4, 0.25);
  const double treated = y.row(0).tail(2).mean() - y.row(0).head(4).mean();
  const double control = y.bottomRows(3).rightCols(2).mean() - y.bottomRows(3).leftCols(4).mean();
  CHECK(sdid_estimate(agg, uw, tw) == doctest::Approx(treated - control).epsilon(1e-14));
}

TEST_CASE("sdid weights live on the simplex") {
  const auto sim = dgp::generate(testing::small_config(21, 60, 90));
  const auto agg = aggregate_panel(sim.panel);
  const auto s = sdid_fit(agg);
  CHECK(s.unit_weights.sum() == doctest::Approx(1.0));
  CHECK(s.time_weights.sum() == doctest::Approx(1.0));
  CHECK(s.unit_weights.minCoeff() >= 0.0);
  CHECK(s.time_weights.minCoeff() >= 0.0);
  CHECK(s.estimate == doctest::Approx(sdid_estimate(agg, s.unit_weights, s.time_weights)).epsilon(1e-12));
}

TEST_CASE("aggregate panel means") {
  const auto sim = dgp::generate(testing::small_config(22));
  const auto agg = aggregate_panel(sim.panel);
  CHECK(agg.units == std::vector<std::string>{"AC", "AP", "RR"});
  CHECK(agg.treated_unit == "RR");
  CHECK(agg.pre_periods() == 6);
  double sum = 0;
  int n = 0;
  for (const auto& o : sim.panel.observations)
    if (o.state == "AP" && o.year == 2010 && !o.informal) {
      sum += o.log_wage();
      ++n;
    }
  CHECK(agg.outcome(1, 2) == doctest::Approx(sum / n).epsilon(1e-12));
}

TEST_CASE("synthetic control input validation") {
  Eigen::MatrixXd two(2, 5);
  two.setOnes();
  CHECK_THROWS_AS(scm_fit(make_agg(two)), DomainError);
  Eigen::MatrixXd y = Eigen::MatrixXd::Ones(3, 5);
  auto agg = make_agg(y, 2010, 2010);
  CHECK_THROWS_AS(scm_fit(agg), DomainError);
  y(1, 1) = std::nan("");
  CHECK_THROWS_AS(scm_fit(make_agg(y)), DomainError);
  CHECK_THROWS_AS(scm_placebo(make_agg(Eigen::MatrixXd::Random(3, 6))), DomainError);
}

TEST_CASE("scm placebo ranks the treated unit") {
  Eigen::MatrixXd y(5, 6);
  y << 1, 2, 3, 4, 9, 9,  //
      1, 2, 3, 4, 5, 6,   //
      2, 2, 3, 5, 6, 7,   //
      0, 2, 3, 3, 4, 5,   //
      1, 3, 3, 4, 5, 6;
  const auto p = scm_placebo(make_agg(y));
  CHECK(p.units.front() == "T");
  CHECK(p.effects.size() == 5);
  CHECK(p.treated_rank == 1);
}

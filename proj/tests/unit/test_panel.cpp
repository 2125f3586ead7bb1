#include "borderlab/dgp.hpp"
#include "borderlab/error.hpp"
#include "borderlab/panel.hpp"

#include "../support/oracles.hpp"

#include <doctest.h>

#include <algorithm>
#include <random>
#include <set>
#include <sstream>

using namespace borderlab;
using namespace borderlab::panel;

namespace {

std::string header() { return std::string(kPanelHeader) + "\n"; }

std::string row(const std::string& id, int year, const std::string& state, const std::string& muni, double wage,
                int race = 0, double age = 30) {
  std::ostringstream os;
  os << id << ',' << year << ',' << state << ',' << muni << ',' << wage << ",40,1,123,45,0,1,0," << race << ','
     << age << ",12,high_school\n";
  return os.str();
}

}  // namespace

TEST_CASE("csv round trip is byte identical") {
  const auto sim = dgp::generate(testing::small_config(3));
  std::ostringstream a, ra;
  write_csv(sim.panel, a);
  write_ratio_csv(sim.panel, ra);
  std::istringstream in(a.str()), rin(ra.str());
  const auto loaded = load_csv(in, {}, &rin);
  CHECK(loaded.rejected.empty());
  std::ostringstream b, rb;
  write_csv(loaded.panel, b);
  write_ratio_csv(loaded.panel, rb);
  CHECK(a.str() == b.str());
  CHECK(ra.str() == rb.str());
  CHECK(loaded.panel.observations.size() == sim.panel.observations.size());
}

TEST_CASE("domain-invalid rows are rejected with line numbers") {
  std::istringstream in(header() + row("A", 2013, "RR", "RR01", 100) + row("A", 2014, "RR", "RR01", -5) +
                        row("B", 2013, "AP", "AP01", 100, 9) + row("B", 2014, "AP", "AP01", 120, 0, -1));
  const auto r = load_csv(in);
  CHECK(r.panel.observations.size() == 1);
  REQUIRE(r.rejected.size() == 3);
  CHECK(r.rejected[0].line == 3);
  CHECK(r.rejected[1].line == 4);
  CHECK(r.rejected[1].reason.find("race") != std::string::npos);
  CHECK(r.rejected[2].reason.find("age") != std::string::npos);
}

TEST_CASE("malformed csv raises parse errors") {
  std::istringstream bad_header("worker,year\n");
  CHECK_THROWS_AS(load_csv(bad_header), ParseError);
  std::istringstream bad_field(header() + "A,20x3,RR,RR01,100,40,1,123,45,0,1,0,0,30,12,college\n");
  try {
    load_csv(bad_field);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
  }
  std::istringstream short_row(header() + "A,2013,RR\n");
  CHECK_THROWS_AS(load_csv(short_row), ParseError);
}

TEST_CASE("duplicate worker-year keys are errors") {
  std::istringstream in(header() + row("A", 2013, "RR", "RR01", 100) + row("A", 2013, "RR", "RR01", 110));
  CHECK_THROWS_WITH_AS(load_csv(in), doctest::Contains("duplicate"), DomainError);
}

TEST_CASE("ratio csv validation") {
  std::istringstream ok("municipality,year,ratio\nRR01,2014,0.25\n");
  CHECK(load_ratio_csv(ok).at({"RR01", 2014}) == 0.25);
  std::istringstream out_of_range("municipality,year,ratio\nRR01,2014,1.5\n");
  CHECK_THROWS_AS(load_ratio_csv(out_of_range), DomainError);
  std::istringstream control_pre(header() + row("A", 2013, "AP", "AP01", 100) + row("A", 2014, "AP", "AP01", 100));
  std::istringstream ratio("municipality,year,ratio\nAP01,2013,0.2\n");
  CHECK_THROWS_AS(load_csv(control_pre, {}, &ratio), DomainError);
}

TEST_CASE("optional squared columns are checked") {
  std::string h = std::string(kPanelHeader) + ",age_sq\n";
  std::string good = row("A", 2013, "RR", "RR01", 100);
  good.pop_back();
  std::string bad = good;
  good += ",900\n";
  bad += ",901\n";
  std::istringstream in(h + good + [&] {
    std::string b = row("B", 2013, "RR", "RR01", 100);
    b.pop_back();
    return b + ",901\n";
  }());
  const auto r = load_csv(in);
  CHECK(r.panel.observations.size() == 1);
  CHECK(r.rejected.size() == 1);
}

TEST_CASE("nearest-rank quantile equals the sort oracle") {
  std::mt19937_64 rng(1);
  std::lognormal_distribution<double> ln;
  for (const std::size_t n : {1u, 2u, 7u, 400u, 1001u}) {
    std::vector<double> v(n);
    for (auto& x : v) x = ln(rng);
    std::vector<double> sorted = v;
    std::sort(sorted.begin(), sorted.end());
    for (const double p : {0.0025, 0.25, 0.5, 0.9975, 1.0}) {
      const auto rank = static_cast<std::size_t>(std::max(1.0, std::ceil(p * static_cast<double>(n) - 1e-9)));
      CHECK(quantile_nearest_rank(v, p) == sorted[rank - 1]);
    }
  }
  CHECK_THROWS_AS(quantile_nearest_rank({}, 0.5), DomainError);
  CHECK_THROWS_AS(quantile_nearest_rank({1.0}, 0.0), DomainError);
}

TEST_CASE("sample rules drop nonpositive wages and are idempotent") {
  auto sim = dgp::generate(testing::small_config(4, 60, 80));
  sim.panel.observations[5].monthly_wage = 0.0;
  const auto once = apply_sample_rules(sim.panel);
  CHECK(once.dropped_nonpositive == 1);
  REQUIRE(once.panel.wage_band);
  CHECK(once.dropped_lower + once.dropped_upper > 0);
  const auto twice = apply_sample_rules(once.panel);
  CHECK(twice.panel.observations.size() == once.panel.observations.size());
  CHECK(twice.dropped_lower + twice.dropped_upper + twice.dropped_nonpositive == 0);

  SampleRules w;
  w.winsorize = true;
  const auto capped = apply_sample_rules(sim.panel, w);
  CHECK(capped.panel.observations.size() == sim.panel.observations.size() - 1);
  double lo = INFINITY, hi = 0;
  for (const auto& o : capped.panel.observations) {
    lo = std::min(lo, o.monthly_wage);
    hi = std::max(hi, o.monthly_wage);
  }
  CHECK(lo == capped.panel.wage_band->lower_wage);
  CHECK(hi == capped.panel.wage_band->upper_wage);
}

TEST_CASE("design column names and order") {
  const auto sim = dgp::generate(testing::small_config(5));
  EstimationSpec spec;
  auto d = build_design(sim.panel, spec);
  CHECK(d.names == std::vector<std::string>{"treat"});
  CHECK(d.fe_names == std::vector<std::string>{"worker", "year"});
  spec.treatment = Treatment::Continuous;
  spec.interaction = Interaction::ExposedActivity;
  d = build_design(sim.panel, spec);
  CHECK(d.names == std::vector<std::string>{"treat_vz_ratio_x100", "treat_vz_ratio_x100_x_exposed_activity"});
  spec = EstimationSpec{};
  spec.family = Family::EventStudy;
  d = build_design(sim.panel, spec);
  CHECK(d.names.size() == 10);
  CHECK(std::find(d.names.begin(), d.names.end(), "year_2013") == d.names.end());
  spec.reference_year = 1990;
  CHECK_THROWS_AS(build_design(sim.panel, spec), DomainError);
}

TEST_CASE("control state filter and empty designs") {
  const auto sim = dgp::generate(testing::small_config(6));
  EstimationSpec spec;
  spec.control_states = {"AP"};
  const auto d = build_design(sim.panel, spec);
  std::set<std::string> states;
  for (const auto r : d.rows) states.insert(sim.panel.observations[r].state);
  CHECK(states == std::set<std::string>{"AP", "RR"});
  spec.control_states = {"ZZ"};
  CHECK_THROWS_AS(build_design(sim.panel, spec), DegenerateDesignError);
}

TEST_CASE("covariate block expands dummies and drops constant columns") {
  const auto sim = dgp::generate(testing::small_config(7));
  std::vector<std::size_t> rows(sim.panel.observations.size());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  const auto b = covariate_block(sim.panel, rows, {"race", "education", "age_sq"});
  CHECK(b.names.front() == "race_1");
  CHECK(std::find(b.names.begin(), b.names.end(), "education_college") != b.names.end());
  CHECK(b.values.cols() == static_cast<Eigen::Index>(b.names.size()));
  CHECK_THROWS_AS(covariate_block(sim.panel, rows, {"shoe_size"}), DomainError);
  const auto single = covariate_block(sim.panel, {rows[0]}, {"female", "age"});
  CHECK(single.names.empty());
}

TEST_CASE("demeaning zeroes every weighted group mean") {
  const auto sim = dgp::generate(testing::small_config(8));
  const auto d = build_design(sim.panel, EstimationSpec{});
  const auto dm = two_way_demean(d, 1e-13);
  for (const auto& groups : dm.design.fe_groups) {
    std::map<int, std::pair<double, double>> sums;
    for (Eigen::Index i = 0; i < dm.design.n(); ++i) {
      auto& s = sums[groups[static_cast<std::size_t>(i)]];
      s.first += dm.design.weights(i) * dm.design.outcome(i);
      s.second += dm.design.weights(i);
    }
    for (const auto& [g, s] : sums) CHECK(std::abs(s.first / s.second) < 1e-10);
  }
  // Projection: demeaning twice changes nothing.
  const auto again = two_way_demean(dm.design, 1e-13);
  CHECK((again.design.outcome - dm.design.outcome).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("mover flags") {
  std::istringstream in(header() +
                        "A,2013,RR,RR01,100,40,1,123,45,1,1,0,0,30,12,high_school\n"
                        "A,2014,RR,RR01,100,40,1,124,45,0,1,0,0,31,24,high_school\n"
                        "B,2013,RR,RR01,100,40,1,124,45,0,1,0,0,30,12,high_school\n"
                        "B,2014,RR,RR01,100,40,1,123,45,1,1,0,0,31,24,high_school\n");
  const auto p = load_csv(in).panel;
  const auto f = mover_flags(p);
  CHECK(f.mover == std::vector<double>{0, 1, 0, 0});
  CHECK(f.at_risk == std::vector<bool>{false, true, false, false});
}

TEST_CASE("education tokens") {
  CHECK(parse_education("college") == Education::College);
  CHECK(parse_education("0") == Education::LessThanHighSchool);
  CHECK(to_string(Education::HighSchool) == "high_school");
  CHECK_THROWS_AS(parse_education("phd"), DomainError);
}

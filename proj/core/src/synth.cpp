#include "borderlab/synth.hpp"

#include "borderlab/error.hpp"
#include "borderlab/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

namespace borderlab::synth {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

MatrixXd donor_block(const AggregatePanel& agg, Index first_col, Index cols) {
  const auto donors = agg.donor_indices();
  MatrixXd out(cols, static_cast<Index>(donors.size()));
  for (std::size_t j = 0; j < donors.size(); ++j)
    out.col(static_cast<Index>(j)) = agg.outcome.row(static_cast<Index>(donors[j])).segment(first_col, cols).transpose();
  return out;
}

AggregatePanel without_treated(const AggregatePanel& agg, std::size_t pseudo) {
  AggregatePanel out;
  out.years = agg.years;
  out.treatment_year = agg.treatment_year;
  const auto donors = agg.donor_indices();
  out.outcome.resize(static_cast<Index>(donors.size()), agg.outcome.cols());
  for (std::size_t j = 0; j < donors.size(); ++j) {
    out.units.push_back(agg.units[donors[j]]);
    out.outcome.row(static_cast<Index>(j)) = agg.outcome.row(static_cast<Index>(donors[j]));
  }
  out.treated_unit = agg.units[pseudo];
  return out;
}

}  // namespace

std::size_t AggregatePanel::treated_index() const {
  const auto it = std::find(units.begin(), units.end(), treated_unit);
  if (it == units.end()) throw DomainError("aggregate panel: treated unit '" + treated_unit + "' missing");
  return static_cast<std::size_t>(it - units.begin());
}

std::vector<std::size_t> AggregatePanel::donor_indices() const {
  const std::size_t t = treated_index();
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < units.size(); ++i)
    if (i != t) out.push_back(i);
  return out;
}

std::vector<std::string> AggregatePanel::donors() const {
  std::vector<std::string> out;
  for (std::size_t i : donor_indices()) out.push_back(units[i]);
  return out;
}

std::size_t AggregatePanel::pre_periods() const {
  return static_cast<std::size_t>(std::count_if(years.begin(), years.end(), [&](int y) { return y < treatment_year; }));
}

void AggregatePanel::validate() const {
  if (outcome.rows() != static_cast<Index>(units.size()) || outcome.cols() != static_cast<Index>(years.size()))
    throw DomainError("aggregate panel: outcome must be units x years");
  if (std::set<std::string>(units.begin(), units.end()).size() != units.size())
    throw DomainError("aggregate panel: duplicate unit labels");
  if (!std::is_sorted(years.begin(), years.end()) ||
      std::adjacent_find(years.begin(), years.end()) != years.end())
    throw DomainError("aggregate panel: years must be strictly increasing");
  if (!outcome.allFinite()) throw DomainError("aggregate panel: missing or non-finite cells");
  treated_index();
  if (units.size() < 3) throw DomainError("aggregate panel: at least 2 donors are required");
  if (pre_periods() == 0 || pre_periods() == years.size())
    throw DomainError("aggregate panel: treatment year must leave both pre and post periods");
}

AggregatePanel aggregate_panel(const panel::Panel& panel, Sector sector) {
  std::map<std::pair<std::string, int>, std::pair<double, std::size_t>> cells;
  for (const auto& o : panel.observations) {
    if (sector == Sector::Formal && o.informal) continue;
    if (sector == Sector::Informal && !o.informal) continue;
    if (!(o.monthly_wage > 0.0))
      throw DomainError("aggregate panel: nonpositive wage for (" + o.worker_id + ", " + std::to_string(o.year) + ")");
    auto& c = cells[{o.state, o.year}];
    c.first += o.log_wage();
    c.second += 1;
  }
  AggregatePanel agg;
  agg.treated_unit = panel.treated_state;
  agg.treatment_year = panel.treatment_year;
  std::set<std::string> units;
  std::set<int> years;
  for (const auto& [key, value] : cells) {
    units.insert(key.first);
    years.insert(key.second);
  }
  agg.units.assign(units.begin(), units.end());
  agg.years.assign(years.begin(), years.end());
  agg.outcome.resize(static_cast<Index>(agg.units.size()), static_cast<Index>(agg.years.size()));
  for (std::size_t i = 0; i < agg.units.size(); ++i)
    for (std::size_t t = 0; t < agg.years.size(); ++t) {
      const auto it = cells.find({agg.units[i], agg.years[t]});
      if (it == cells.end())
        throw DomainError("aggregate panel: no observations for (" + agg.units[i] + ", " + std::to_string(agg.years[t]) +
                          ")");
      agg.outcome(static_cast<Index>(i), static_cast<Index>(t)) = it->second.first / static_cast<double>(it->second.second);
    }
  agg.validate();
  return agg;
}

ScmSolution scm_fit(const AggregatePanel& agg) {
  agg.validate();
  const auto t0 = static_cast<Index>(agg.pre_periods());
  const auto T = static_cast<Index>(agg.years.size());
  const auto tr = static_cast<Index>(agg.treated_index());

  numerics::SimplexQpProblem qp{agg.outcome.row(tr).head(t0).transpose(), donor_block(agg, 0, t0)};
  const auto sol = numerics::simplex_qp_solve(qp);

  ScmSolution s;
  s.donors = agg.donors();
  s.weights = sol.weights;
  s.years = agg.years;
  s.treated_path = agg.outcome.row(tr).transpose();
  s.synthetic_path = donor_block(agg, 0, T) * s.weights;
  const VectorXd gap = s.treated_path - s.synthetic_path;
  s.mspe = gap.head(t0).squaredNorm() / static_cast<double>(t0);
  const Index post = T - t0;
  s.effect = (s.treated_path.tail(post).mean() - s.treated_path.head(t0).mean()) -
             (s.synthetic_path.tail(post).mean() - s.synthetic_path.head(t0).mean());
  return s;
}

double sdid_estimate(const AggregatePanel& agg, const VectorXd& unit_weights, const VectorXd& time_weights) {
  agg.validate();
  const auto t0 = static_cast<Index>(agg.pre_periods());
  const auto post = static_cast<Index>(agg.years.size()) - t0;
  const auto donors = agg.donor_indices();
  if (unit_weights.size() != static_cast<Index>(donors.size()))
    throw DomainError("sdid: one unit weight per donor required");
  if (time_weights.size() != t0) throw DomainError("sdid: one time weight per pre-period year required");
  auto contrast = [&](Index row) {
    return agg.outcome.row(row).tail(post).mean() - agg.outcome.row(row).head(t0).dot(time_weights);
  };
  double synthetic = 0.0;
  for (std::size_t j = 0; j < donors.size(); ++j)
    synthetic += unit_weights(static_cast<Index>(j)) * contrast(static_cast<Index>(donors[j]));
  return contrast(static_cast<Index>(agg.treated_index())) - synthetic;
}

SdidSolution sdid_fit(const AggregatePanel& agg, double ridge) {
  agg.validate();
  if (!(ridge >= 0.0 && std::isfinite(ridge))) throw DomainError("sdid: ridge must be >= 0");
  const auto t0 = static_cast<Index>(agg.pre_periods());
  if (t0 < 2) throw DomainError("sdid: at least 2 pre-treatment years are required");
  const auto T = static_cast<Index>(agg.years.size());
  const auto tr = static_cast<Index>(agg.treated_index());
  const MatrixXd pre = donor_block(agg, 0, t0);  // t0 x J
  const auto J = pre.cols();
  const double root = std::sqrt(ridge);

  // Unit weights: slopes only, every path centered on its pre-period mean.
  VectorXd target = VectorXd::Zero(t0 + J);
  MatrixXd donors = MatrixXd::Zero(t0 + J, J);
  const VectorXd treated_pre = agg.outcome.row(tr).head(t0).transpose();
  target.head(t0) = treated_pre.array() - treated_pre.mean();
  donors.topRows(t0) = pre.rowwise() - pre.colwise().mean();
  donors.bottomRows(J) = root * MatrixXd::Identity(J, J);
  const auto unit = numerics::simplex_qp_solve({target, donors});

  // Time weights: donors' post means from their pre-period values, common intercept.
  const MatrixXd post = donor_block(agg, t0, T - t0);
  VectorXd post_mean = post.colwise().mean().transpose();  // J
  MatrixXd lagged = pre.transpose();                        // J x t0
  post_mean.array() -= post_mean.mean();
  lagged = lagged.rowwise() - lagged.colwise().mean();
  VectorXd time_target = VectorXd::Zero(J + t0);
  MatrixXd time_design = MatrixXd::Zero(J + t0, t0);
  time_target.head(J) = post_mean;
  time_design.topRows(J) = lagged;
  time_design.bottomRows(t0) = root * MatrixXd::Identity(t0, t0);
  const auto time = numerics::simplex_qp_solve({time_target, time_design});

  SdidSolution s;
  s.donors = agg.donors();
  s.unit_weights = unit.weights;
  for (Index t = 0; t < t0; ++t) s.pre_years.push_back(agg.years[static_cast<std::size_t>(t)]);
  s.time_weights = time.weights;
  s.ridge = ridge;
  s.estimate = sdid_estimate(agg, s.unit_weights, s.time_weights);
  s.method = "intercept-augmented simplex weights with ridge on unit and time weights";
  return s;
}

ScmPlacebo scm_placebo(const AggregatePanel& agg) {
  agg.validate();
  const auto donors = agg.donor_indices();
  if (donors.size() < 3) throw DomainError("scm placebo: at least 3 donors are required");
  ScmPlacebo out;
  out.units.push_back(agg.treated_unit);
  out.effects.resize(static_cast<Index>(donors.size() + 1));
  out.treated_effect = scm_fit(agg).effect;
  out.effects(0) = out.treated_effect;
  for (std::size_t j = 0; j < donors.size(); ++j) {
    out.units.push_back(agg.units[donors[j]]);
    out.effects(static_cast<Index>(j + 1)) = scm_fit(without_treated(agg, donors[j])).effect;
  }
  out.treated_rank = 1;
  for (Index j = 1; j < out.effects.size(); ++j)
    if (std::abs(out.effects(j)) > std::abs(out.treated_effect)) ++out.treated_rank;
  return out;
}

}  // namespace borderlab::synth

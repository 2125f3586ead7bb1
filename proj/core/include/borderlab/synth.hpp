#pragma once

#include "borderlab/estimation_spec.hpp"
#include "borderlab/panel.hpp"

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace borderlab::synth {

/// Unit-by-year outcome matrix with one treated unit.
struct AggregatePanel {
  std::vector<std::string> units;
  std::vector<int> years;
  Eigen::MatrixXd outcome;  // units x years
  std::string treated_unit;
  int treatment_year = 2014;

  std::size_t treated_index() const;
  std::vector<std::size_t> donor_indices() const;
  std::vector<std::string> donors() const;
  std::size_t pre_periods() const;  // years before treatment_year
  void validate() const;
};

/// Mean log wage per state-year over the rows of `sector`.
AggregatePanel aggregate_panel(const panel::Panel& panel, Sector sector = Sector::Formal);

struct ScmSolution {
  std::vector<std::string> donors;
  Eigen::VectorXd weights;
  double mspe = 0.0;
  std::vector<int> years;
  Eigen::VectorXd treated_path;
  Eigen::VectorXd synthetic_path;
  double effect = 0.0;  // (treated post - pre mean) - (synthetic post - pre mean)
};

ScmSolution scm_fit(const AggregatePanel& agg);

struct SdidSolution {
  std::vector<std::string> donors;
  Eigen::VectorXd unit_weights;
  std::vector<int> pre_years;
  Eigen::VectorXd time_weights;
  double estimate = 0.0;
  double ridge = 0.0;
  std::string method;  // short description of the simplification used
};

/// Synthetic difference-in-differences. Unit weights fit the demeaned
/// pre-period treated path (so level gaps are absorbed) with a ridge penalty;
/// time weights fit each donor's post-period mean from its pre-period values
/// with a common intercept. Both live on the simplex.
SdidSolution sdid_fit(const AggregatePanel& agg, double ridge = 1e-6);

/// Weighted double difference for given unit weights (donor order) and
/// time weights (pre-period order).
double sdid_estimate(const AggregatePanel& agg, const Eigen::VectorXd& unit_weights,
                     const Eigen::VectorXd& time_weights);

struct ScmPlacebo {
  std::vector<std::string> units;  // treated unit first, then donors
  Eigen::VectorXd effects;
  double treated_effect = 0.0;
  /// 1-based rank of the treated unit by |effect| (1 = most extreme; ties favor the treated unit).
  int treated_rank = 0;
};

/// Refits SCM with each donor as the pseudo-treated unit, using the remaining
/// donors as its pool. Needs at least 3 donors so every placebo keeps 2.
ScmPlacebo scm_placebo(const AggregatePanel& agg);

}  // namespace borderlab::synth

#pragma once

#include "borderlab/estimation_spec.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace borderlab::panel {

enum class Education { LessThanHighSchool = 0, HighSchool = 1, College = 2 };

std::string_view to_string(Education e);
Education parse_education(std::string_view s);

/// Race codes: 0 white, 1 black, 2 mixed, 3 not declared.
inline constexpr int kRaceCategories = 4;

/// One worker-year record.
struct Observation {
  std::string worker_id;
  int year = 0;
  std::string state;
  std::string municipality;
  double monthly_wage = 0.0;
  double weekly_hours = 40.0;
  int retained = 1;
  std::string occupation_code;  // 3-digit
  std::string activity_code;    // 2-digit
  bool exposed_occupation = false;
  bool exposed_activity = false;
  bool female = false;
  int race = 0;
  double age = 0.0;
  double tenure = 0.0;  // months
  Education education = Education::HighSchool;
  bool informal = false;

  double log_wage() const { return std::log(monthly_wage); }
  double age_sq() const { return age * age; }
  double tenure_sq() const { return tenure * tenure; }
};

/// Censoring thresholds recorded by apply_sample_rules.
struct WageBand {
  double lower_quantile = 0.0;
  double upper_quantile = 1.0;
  double lower_wage = 0.0;  // monthly wage at the lower nearest-rank quantile
  double upper_wage = 0.0;
  bool winsorized = false;
};

using RatioKey = std::pair<std::string, int>;  // (municipality, year)

struct Panel {
  std::vector<Observation> observations;
  int treatment_year = 2014;
  std::string treated_state = "RR";
  std::map<RatioKey, double> vz_ratio;
  std::optional<WageBand> wage_band;

  /// Immigrant share for (municipality, year); 0 when not tabulated.
  double ratio(const std::string& municipality, int year) const;
  bool treated(const Observation& o) const { return o.state == treated_state; }
  bool post(const Observation& o) const { return o.year >= treatment_year; }

  std::vector<int> years() const;
  std::vector<std::string> states() const;
  bool has_informal() const;

  /// Checks key uniqueness, contiguous years and ratio ranges. Throws on violation.
  void validate() const;
  /// Sorts by (worker_id, year).
  void sort_canonical();
};

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

struct RejectedRow {
  std::size_t line = 0;
  std::string reason;
};

struct LoadOptions {
  std::string treated_state = "RR";
  int treatment_year = 2014;
};

struct LoadResult {
  Panel panel;
  std::vector<RejectedRow> rejected;
};

/// Header of the worker-year CSV. Optional trailing columns `age_sq`,
/// `tenure_sq` (validated against age^2 / tenure^2) and `informal` may follow.
inline constexpr std::string_view kPanelHeader =
    "worker_id,year,state,municipality,monthly_wage,weekly_hours,retained,occupation_code,activity_code,"
    "exposed_occupation,exposed_activity,female,race,age,tenure,education";
inline constexpr std::string_view kRatioHeader = "municipality,year,ratio";

LoadResult load_csv(std::istream& panel_csv, const LoadOptions& options = {}, std::istream* ratio_csv = nullptr);
LoadResult load_csv(const std::filesystem::path& panel_csv, const LoadOptions& options = {},
                    const std::optional<std::filesystem::path>& ratio_csv = std::nullopt);

std::map<RatioKey, double> load_ratio_csv(std::istream& in);

/// Canonical writer. Doubles use the shortest round-trip representation, so a
/// written file reloads and rewrites byte-identically. The `informal` column is
/// emitted only when some observation is informal.
void write_csv(const Panel& panel, std::ostream& out);
void write_ratio_csv(const Panel& panel, std::ostream& out);

std::string format_double(double v);

// ---------------------------------------------------------------------------
// Sample rules
// ---------------------------------------------------------------------------

/// Nearest-rank quantile: the ceil(p * n)-th smallest value (1-based), p in (0, 1].
double quantile_nearest_rank(std::vector<double> values, double p);

struct SampleRules {
  double upper_quantile = 0.9975;
  double lower_quantile = 0.0025;
  bool winsorize = false;  // cap at the thresholds instead of dropping
};

struct SampleRulesResult {
  Panel panel;
  std::size_t dropped_nonpositive = 0;
  std::size_t dropped_lower = 0;
  std::size_t dropped_upper = 0;
  std::size_t winsorized = 0;
};

/// Drops nonpositive wages and censors log wages at the nearest-rank quantiles.
/// The thresholds are stored in the returned panel; a panel that already carries
/// a band for the same quantiles is filtered against that band rather than
/// re-estimating it, which makes the rule idempotent.
SampleRulesResult apply_sample_rules(const Panel& panel, const SampleRules& rules = {});

// ---------------------------------------------------------------------------
// Design matrices
// ---------------------------------------------------------------------------

struct DesignMatrix {
  Eigen::VectorXd outcome;
  Eigen::MatrixXd regressors;
  std::vector<std::string> names;
  Eigen::VectorXd weights;
  std::vector<int> clusters;                 // dense codes 0..G-1
  std::vector<std::vector<int>> fe_groups;   // one dense coding per fixed-effect dimension
  std::vector<std::size_t> rows;             // source indices into Panel::observations
  std::vector<std::string> fe_names;

  Eigen::Index n() const { return outcome.size(); }
  Eigen::Index k() const { return regressors.cols(); }
  int cluster_count() const;
  std::vector<int> fe_counts() const;
  void validate() const;
};

/// Occupation-move flags: mover[i] = 1 when observation i is in an unexposed
/// occupation and the same worker's previous observed row was exposed.
/// at_risk[i] marks rows after the first for workers whose first observed
/// occupation is exposed.
struct MoverFlags {
  std::vector<double> mover;
  std::vector<bool> at_risk;
};
MoverFlags mover_flags(const Panel& panel);

/// Covariate columns for the given rows. `race` and `education` expand into
/// dummies (lowest category omitted); columns constant over `rows` are dropped.
/// Recognized names: female, race, age, age_sq, tenure, tenure_sq, education,
/// exposed_activity, exposed_occupation, informal.
struct CovariateBlock {
  Eigen::MatrixXd values;
  std::vector<std::string> names;
};
CovariateBlock covariate_block(const Panel& panel, const std::vector<std::size_t>& rows,
                               const std::vector<std::string>& covariates);

/// Builds outcome, treatment/regressor columns, unit weights, cluster labels and
/// fixed-effect groups for `spec`. Continuous treatment is the municipal ratio x 100.
DesignMatrix build_design(const Panel& panel, const EstimationSpec& spec);

struct DemeanResult {
  DesignMatrix design;
  int iterations = 0;
  double max_group_mean = 0.0;
};

/// Weighted alternating projections onto the complement of every fixed-effect
/// dimension (outcome and all regressors). Throws ConvergenceError after max_iter sweeps.
DemeanResult two_way_demean(const DesignMatrix& design, double tol = 1e-10, int max_iter = 10000);

/// Same projection applied to arbitrary columns.
Eigen::MatrixXd demean_columns(const Eigen::MatrixXd& columns, const std::vector<std::vector<int>>& groups,
                               const Eigen::VectorXd& weights, double tol, int max_iter, int* iterations = nullptr,
                               double* max_group_mean = nullptr);

}  // namespace borderlab::panel

#pragma once

#include "borderlab/estimation_spec.hpp"
#include "borderlab/panel.hpp"

#include <Eigen/Dense>

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace borderlab::did {

struct PropensityDiagnostics {
  std::size_t workers = 0;
  bool converged = false;
  int iterations = 0;
  double log_likelihood = 0.0;
  std::vector<std::string> covariates;  // logit columns after dummy expansion (intercept first)
  Eigen::VectorXd coefficients;
  double weight_threshold = 0.0;  // rows with a larger weight were excluded
};

struct EstimateResult {
  std::string family;
  std::vector<std::string> names;
  Eigen::VectorXd coefficients;
  Eigen::VectorXd standard_errors;
  std::size_t n_obs = 0;
  int n_clusters = 0;
  double r2_adjusted = 0.0;
  double rmse = 0.0;
  std::size_t trimmed = 0;
  std::optional<PropensityDiagnostics> propensity;
  /// Event studies: coefficient and SE per year, reference year absent.
  std::map<int, double> year_coefficients;
  std::map<int, double> year_standard_errors;
  std::vector<std::string> warnings;
  std::map<std::string, std::string> metadata;

  double coef(const std::string& name) const;
  double se(const std::string& name) const;
  /// Two-sided p-value from the normal approximation.
  double p_value(const std::string& name) const;
  /// Coefficient on the treatment column (first regressor).
  double treatment_coef() const { return coefficients(0); }
  double treatment_se() const { return standard_errors(0); }
};

// ---------------------------------------------------------------------------
// Building blocks
// ---------------------------------------------------------------------------

/// Tolerance used for fixed-effect absorption by the estimators.
inline constexpr double kDemeanTolerance = 1e-12;

/// Cluster-robust covariance (X'WX)^-1 [sum_g X_g'W_g e_g e_g'W_g X_g] (X'WX)^-1
/// scaled by G/(G-1) * (n-1)/(n-k), k = columns of X.
Eigen::MatrixXd cluster_robust_vcov(const Eigen::MatrixXd& X, const Eigen::VectorXd& residuals,
                                    const Eigen::VectorXd& weights, const std::vector<int>& clusters);
Eigen::VectorXd cluster_robust_se(const Eigen::MatrixXd& X, const Eigen::VectorXd& residuals,
                                  const Eigen::VectorXd& weights, const std::vector<int>& clusters);

struct SandwichParts {
  Eigen::MatrixXd gram;  // X'WX
  Eigen::MatrixXd meat;  // sum over clusters of score outer products
  double factor = 1.0;   // G/(G-1) * (n-1)/(n-k)
  int clusters = 0;
};
SandwichParts sandwich_parts(const Eigen::MatrixXd& X, const Eigen::VectorXd& residuals,
                             const Eigen::VectorXd& weights, const std::vector<int>& clusters);

/// Absorbs the design's fixed effects, solves WLS and attaches clustered SEs.
EstimateResult fit_design(const panel::DesignMatrix& design, std::string family);

struct TrimResult {
  double threshold = 0.0;
  std::vector<bool> excluded;
  std::size_t count = 0;
};
/// Flags weights strictly above the nearest-rank quantile q of `weights`.
TrimResult trim_weights(const Eigen::VectorXd& weights, double q);

/// Inverse-propensity weights per row of `design` from a logit of treated-state
/// membership on first-observed worker covariates: 1/p for treated, 1/(1-p) for control.
Eigen::VectorXd propensity_weights(const panel::Panel& panel, const panel::DesignMatrix& design,
                                   const EstimationSpec& spec, PropensityDiagnostics* diagnostics = nullptr);

/// Keeps the rows where keep[i] is true and re-codes clusters and fixed-effect groups.
panel::DesignMatrix subset_design(const panel::DesignMatrix& design, const std::vector<bool>& keep);

// ---------------------------------------------------------------------------
// Estimators
// ---------------------------------------------------------------------------

EstimateResult twfe_did(const panel::Panel& panel, const EstimationSpec& spec);
EstimateResult doubly_robust_did(const panel::Panel& panel, const EstimationSpec& spec);
EstimateResult event_study(const panel::Panel& panel, const EstimationSpec& spec);
EstimateResult retention_lpm(const panel::Panel& panel, const EstimationSpec& spec);
EstimateResult pooled_ols_did(const panel::Panel& panel, const EstimationSpec& spec);

/// Dispatches on spec.family.
EstimateResult estimate(const panel::Panel& panel, const EstimationSpec& spec);

enum class Dimension { Education, ExposedActivity, ExposedOccupation, Mover };
std::string_view to_string(Dimension d);
Dimension parse_dimension(std::string_view s);

/// Runs `spec` on each cohort of `dimension`. Cohorts are keyed by label
/// (education level, "exposed"/"unexposed"). The mover dimension fits the
/// occupation-move linear probability model on at-risk rows under key "mover".
std::map<std::string, EstimateResult> heterogeneity_split(const panel::Panel& panel, const EstimationSpec& spec,
                                                          Dimension dimension);

enum class PlaceboMode { InSpace, InTime };
std::string_view to_string(PlaceboMode m);
PlaceboMode parse_placebo_mode(std::string_view s);

struct PlaceboEstimate {
  std::string label;  // pseudo-treated state or fake treatment year
  EstimateResult result;
};

/// in_space: each control state in turn plays the treated state, the real
/// treated state dropped. in_time: every fake treatment year after the first
/// pre-period year, estimated on pre-period rows only.
std::vector<PlaceboEstimate> placebo_suite(const panel::Panel& panel, const EstimationSpec& spec, PlaceboMode mode);

}  // namespace borderlab::did

#include "borderlab/did.hpp"

#include "borderlab/error.hpp"
#include "borderlab/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <set>

namespace borderlab::did {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using panel::DesignMatrix;
using panel::Panel;

namespace {

std::size_t index_of(const std::vector<std::string>& names, const std::string& name) {
  const auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) throw DomainError("no coefficient named '" + name + "'");
  return static_cast<std::size_t>(it - names.begin());
}

std::vector<int> recode(const std::vector<int>& codes) {
  std::vector<int> sorted(codes);
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  std::vector<int> out(codes.size());
  for (std::size_t i = 0; i < codes.size(); ++i)
    out[i] = static_cast<int>(std::lower_bound(sorted.begin(), sorted.end(), codes[i]) - sorted.begin());
  return out;
}

void require_both_groups(const Panel& panel, const DesignMatrix& d, const std::string& context) {
  bool treated = false;
  bool control = false;
  for (std::size_t r : d.rows) {
    if (panel.treated(panel.observations[r]))
      treated = true;
    else
      control = true;
  }
  if (!treated) throw DegenerateDesignError(context + ": no treated-state observations");
  if (!control) throw DegenerateDesignError(context + ": no control observations");
}

EstimateResult fit_weighted(const Panel& panel, DesignMatrix d, const EstimationSpec& spec, const std::string& family) {
  PropensityDiagnostics diag;
  d.weights = propensity_weights(panel, d, spec, &diag);
  const TrimResult trim = trim_weights(d.weights, spec.trim_quantile);
  diag.weight_threshold = trim.threshold;
  std::vector<bool> keep(trim.excluded.size());
  for (std::size_t i = 0; i < keep.size(); ++i) keep[i] = !trim.excluded[i];
  DesignMatrix kept = subset_design(d, keep);
  if (kept.rows.empty()) throw DegenerateDesignError(family + ": every observation trimmed");
  require_both_groups(panel, kept, family + " after trimming");
  EstimateResult r = fit_design(kept, family);
  r.trimmed = trim.count;
  r.propensity = std::move(diag);
  r.metadata["demeaning"] = "weighted";
  r.metadata["trim_quantile"] = std::to_string(spec.trim_quantile);
  return r;
}

void fill_event_years(EstimateResult& r) {
  for (std::size_t j = 0; j < r.names.size(); ++j) {
    const auto& name = r.names[j];
    if (name.rfind("year_", 0) != 0) continue;
    const int year = std::stoi(name.substr(5));
    r.year_coefficients[year] = r.coefficients(static_cast<Index>(j));
    r.year_standard_errors[year] = r.standard_errors(static_cast<Index>(j));
  }
}

EstimateResult linear_probability(const Panel& panel, const EstimationSpec& spec) {
  EstimationSpec s = spec;
  s.family = Family::LinearProbability;
  const DesignMatrix d = panel::build_design(panel, s);
  require_both_groups(panel, d, "linear_probability");
  if ((d.outcome.array() == d.outcome(0)).all())
    throw DegenerateDesignError("linear_probability: outcome '" + s.outcome + "' has zero variance");
  auto r = s.uses_propensity_weights() ? fit_weighted(panel, d, s, "linear_probability")
                                       : fit_design(d, "linear_probability");
  r.metadata["outcome"] = s.outcome;
  return r;
}

Panel filter_panel(const Panel& panel, const std::function<bool(const panel::Observation&)>& keep) {
  Panel out;
  out.treated_state = panel.treated_state;
  out.treatment_year = panel.treatment_year;
  out.vz_ratio = panel.vz_ratio;
  out.wage_band = panel.wage_band;
  for (const auto& o : panel.observations)
    if (keep(o)) out.observations.push_back(o);
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// EstimateResult
// ---------------------------------------------------------------------------

double EstimateResult::coef(const std::string& name) const {
  return coefficients(static_cast<Index>(index_of(names, name)));
}

double EstimateResult::se(const std::string& name) const {
  return standard_errors(static_cast<Index>(index_of(names, name)));
}

double EstimateResult::p_value(const std::string& name) const {
  const double s = se(name);
  if (!(s > 0.0)) return coef(name) == 0.0 ? 1.0 : 0.0;
  return std::erfc(std::abs(coef(name) / s) / std::sqrt(2.0));
}

// ---------------------------------------------------------------------------
// Inference
// ---------------------------------------------------------------------------

SandwichParts sandwich_parts(const MatrixXd& X, const VectorXd& residuals, const VectorXd& weights,
                             const std::vector<int>& clusters) {
  const Index n = X.rows();
  const Index k = X.cols();
  if (residuals.size() != n || weights.size() != n || static_cast<Index>(clusters.size()) != n)
    throw DomainError("sandwich: inputs must have one entry per row");
  std::map<int, VectorXd> scores;
  Index used = 0;
  SandwichParts parts;
  parts.gram = MatrixXd::Zero(k, k);
  for (Index i = 0; i < n; ++i) {
    if (weights(i) <= 0.0) continue;
    ++used;
    parts.gram.noalias() += weights(i) * X.row(i).transpose() * X.row(i);
    auto [it, fresh] = scores.try_emplace(clusters[static_cast<std::size_t>(i)], VectorXd::Zero(k));
    it->second.noalias() += (weights(i) * residuals(i)) * X.row(i).transpose();
  }
  parts.clusters = static_cast<int>(scores.size());
  if (parts.clusters < 2) throw DegenerateDesignError("cluster-robust SE needs at least 2 clusters");
  if (used <= k) throw DegenerateDesignError("cluster-robust SE needs more observations than coefficients");
  parts.meat = MatrixXd::Zero(k, k);
  for (const auto& [g, s] : scores) parts.meat.noalias() += s * s.transpose();
  const double G = parts.clusters;
  parts.factor = G / (G - 1.0) * static_cast<double>(used - 1) / static_cast<double>(used - k);
  return parts;
}

MatrixXd cluster_robust_vcov(const MatrixXd& X, const VectorXd& residuals, const VectorXd& weights,
                             const std::vector<int>& clusters) {
  const auto parts = sandwich_parts(X, residuals, weights, clusters);
  Eigen::ColPivHouseholderQR<MatrixXd> qr(parts.gram);
  qr.setThreshold(numerics::kRankThreshold);
  if (qr.rank() < parts.gram.cols()) throw DegenerateDesignError("cluster-robust SE: singular bread matrix");
  const MatrixXd bread = qr.inverse();
  MatrixXd v = parts.factor * bread * parts.meat * bread;
  return 0.5 * (v + v.transpose());
}

VectorXd cluster_robust_se(const MatrixXd& X, const VectorXd& residuals, const VectorXd& weights,
                           const std::vector<int>& clusters) {
  const MatrixXd v = cluster_robust_vcov(X, residuals, weights, clusters);
  return v.diagonal().cwiseMax(0.0).cwiseSqrt();
}

// ---------------------------------------------------------------------------
// Fitting
// ---------------------------------------------------------------------------

EstimateResult fit_design(const DesignMatrix& design, std::string family) {
  design.validate();
  if (design.k() == 0) throw DegenerateDesignError(family + ": design has no regressors");
  if (design.n() == 0) throw DegenerateDesignError(family + ": design has no observations");

  const auto demeaned = panel::two_way_demean(design, kDemeanTolerance);
  const DesignMatrix& t = demeaned.design;
  numerics::WlsSolution sol;
  try {
    sol = numerics::wls_solve({t.regressors, t.outcome, t.weights});
  } catch (const CollinearityError& e) {
    if (e.column() == 0)
      throw DegenerateDesignError(family + ": treatment has no variation left after absorbing fixed effects");
    throw CollinearityError(family + ": regressor '" + design.names[e.column()] + "' is collinear with earlier columns",
                            e.column());
  }

  EstimateResult r;
  r.family = std::move(family);
  r.names = design.names;
  r.coefficients = sol.coefficients;
  r.standard_errors = cluster_robust_se(t.regressors, sol.residuals, t.weights, t.clusters);
  r.n_obs = static_cast<std::size_t>(design.n());
  r.n_clusters = design.cluster_count();

  std::map<int, int> cluster_sizes;
  for (int c : design.clusters) ++cluster_sizes[c];
  if (std::any_of(cluster_sizes.begin(), cluster_sizes.end(), [](const auto& kv) { return kv.second == 1; }))
    r.warnings.push_back("some clusters contain a single observation");
  if ((r.standard_errors.array() <= 0.0).any()) r.warnings.push_back("zero standard error (perfect fit)");

  long absorbed = 0;
  for (int count : design.fe_counts()) absorbed += count;
  if (!design.fe_groups.empty()) absorbed -= static_cast<long>(design.fe_groups.size()) - 1;
  const double df = static_cast<double>(design.n()) - static_cast<double>(design.k()) - static_cast<double>(absorbed);
  const double wbar = t.weights.mean();
  const double ssr = (t.weights.array() * sol.residuals.array().square()).sum() / wbar;
  // Total sum of squares of the raw outcome: the full model's R2 (residuals coincide by FWL).
  const double ybar = (design.weights.array() * design.outcome.array()).sum() / design.weights.sum();
  const double sst = (design.weights.array() * (design.outcome.array() - ybar).square()).sum() / wbar;
  if (df > 0.0) {
    r.rmse = std::sqrt(ssr / df);
    r.r2_adjusted = sst > 0.0 ? 1.0 - (ssr / df) / (sst / (static_cast<double>(design.n()) - 1.0))
                              : std::numeric_limits<double>::quiet_NaN();
  } else {
    r.rmse = std::numeric_limits<double>::quiet_NaN();
    r.r2_adjusted = std::numeric_limits<double>::quiet_NaN();
    r.warnings.push_back("no residual degrees of freedom after absorbing fixed effects");
  }
  r.metadata["demeaning"] = "unweighted";
  r.metadata["absorbed_df"] = std::to_string(absorbed);
  r.metadata["demean_iterations"] = std::to_string(demeaned.iterations);
  r.metadata["fixed_effects"] = design.fe_names.empty() ? "" : design.fe_names[0] + "+" + design.fe_names.back();
  return r;
}

TrimResult trim_weights(const VectorXd& weights, double q) {
  if (weights.size() == 0) throw DomainError("trim: empty weight vector");
  TrimResult t;
  t.threshold = panel::quantile_nearest_rank(std::vector<double>(weights.data(), weights.data() + weights.size()), q);
  t.excluded.resize(static_cast<std::size_t>(weights.size()));
  for (Index i = 0; i < weights.size(); ++i) {
    t.excluded[static_cast<std::size_t>(i)] = weights(i) > t.threshold;
    t.count += t.excluded[static_cast<std::size_t>(i)] ? 1 : 0;
  }
  return t;
}

VectorXd propensity_weights(const Panel& panel, const DesignMatrix& design, const EstimationSpec& spec,
                            PropensityDiagnostics* diagnostics) {
  std::map<std::string, std::size_t> first_row;
  for (std::size_t r : design.rows) {
    const auto& o = panel.observations[r];
    auto [it, fresh] = first_row.try_emplace(o.worker_id, r);
    if (!fresh && o.year < panel.observations[it->second].year) it->second = r;
  }
  std::vector<std::size_t> rows;
  rows.reserve(first_row.size());
  for (const auto& [id, r] : first_row) rows.push_back(r);

  const auto block = panel::covariate_block(panel, rows, spec.propensity_covariates);
  MatrixXd X(static_cast<Index>(rows.size()), block.values.cols() + 1);
  X.col(0).setOnes();
  X.rightCols(block.values.cols()) = block.values;
  VectorXd z(static_cast<Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) z(static_cast<Index>(i)) = panel.treated(panel.observations[rows[i]]) ? 1.0 : 0.0;
  if (z.sum() == 0.0 || z.sum() == static_cast<double>(z.size()))
    throw DegenerateDesignError("propensity: both treated and control workers are required");

  const auto fit = numerics::logit_fit(X, z);
  const VectorXd p = numerics::logit_predict(X, fit.coefficients);
  std::map<std::string, double> worker_weight;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto ii = static_cast<Index>(i);
    worker_weight[panel.observations[rows[i]].worker_id] = z(ii) == 1.0 ? 1.0 / p(ii) : 1.0 / (1.0 - p(ii));
  }
  VectorXd w(design.n());
  for (Index i = 0; i < design.n(); ++i)
    w(i) = worker_weight.at(panel.observations[design.rows[static_cast<std::size_t>(i)]].worker_id);

  if (diagnostics) {
    diagnostics->workers = rows.size();
    diagnostics->converged = fit.converged;
    diagnostics->iterations = fit.iterations;
    diagnostics->log_likelihood = fit.log_likelihood;
    diagnostics->covariates = {"intercept"};
    diagnostics->covariates.insert(diagnostics->covariates.end(), block.names.begin(), block.names.end());
    diagnostics->coefficients = fit.coefficients;
  }
  return w;
}

DesignMatrix subset_design(const DesignMatrix& design, const std::vector<bool>& keep) {
  if (keep.size() != static_cast<std::size_t>(design.n())) throw DomainError("subset_design: mask length differs");
  std::vector<Index> idx;
  for (std::size_t i = 0; i < keep.size(); ++i)
    if (keep[i]) idx.push_back(static_cast<Index>(i));
  const auto m = static_cast<Index>(idx.size());
  DesignMatrix out;
  out.names = design.names;
  out.fe_names = design.fe_names;
  out.outcome.resize(m);
  out.regressors.resize(m, design.k());
  out.weights.resize(m);
  std::vector<int> clusters(idx.size());
  std::vector<std::vector<int>> groups(design.fe_groups.size(), std::vector<int>(idx.size()));
  for (Index j = 0; j < m; ++j) {
    const Index i = idx[static_cast<std::size_t>(j)];
    const auto s = static_cast<std::size_t>(i);
    out.outcome(j) = design.outcome(i);
    out.regressors.row(j) = design.regressors.row(i);
    out.weights(j) = design.weights(i);
    out.rows.push_back(design.rows[s]);
    clusters[static_cast<std::size_t>(j)] = design.clusters[s];
    for (std::size_t d = 0; d < groups.size(); ++d) groups[d][static_cast<std::size_t>(j)] = design.fe_groups[d][s];
  }
  out.clusters = recode(clusters);
  for (auto& g : groups) out.fe_groups.push_back(recode(g));
  return out;
}

// ---------------------------------------------------------------------------
// Estimators
// ---------------------------------------------------------------------------

EstimateResult twfe_did(const Panel& panel, const EstimationSpec& spec) {
  EstimationSpec s = spec;
  s.family = Family::Twfe;
  const DesignMatrix d = panel::build_design(panel, s);
  require_both_groups(panel, d, "twfe");
  auto r = fit_design(d, "twfe");
  r.metadata["treatment"] = std::string(to_string(s.treatment));
  return r;
}

EstimateResult doubly_robust_did(const Panel& panel, const EstimationSpec& spec) {
  EstimationSpec s = spec;
  s.family = Family::DoublyRobust;
  const DesignMatrix d = panel::build_design(panel, s);
  require_both_groups(panel, d, "doubly_robust");
  auto r = fit_weighted(panel, d, s, "doubly_robust");
  r.metadata["treatment"] = std::string(to_string(s.treatment));
  return r;
}

EstimateResult event_study(const Panel& panel, const EstimationSpec& spec) {
  EstimationSpec s = spec;
  s.family = Family::EventStudy;
  const DesignMatrix d = panel::build_design(panel, s);
  require_both_groups(panel, d, "event_study");
  auto r = s.propensity_weighting ? fit_weighted(panel, d, s, "event_study") : fit_design(d, "event_study");
  fill_event_years(r);
  r.metadata["reference_year"] = std::to_string(s.reference_year);
  return r;
}

EstimateResult retention_lpm(const Panel& panel, const EstimationSpec& spec) {
  EstimationSpec s = spec;
  s.outcome = "retained";
  return linear_probability(panel, s);
}

EstimateResult pooled_ols_did(const Panel& panel, const EstimationSpec& spec) {
  EstimationSpec s = spec;
  s.family = Family::PooledOls;
  s.fixed_effects = FixedEffects::StateYear;
  s.cluster = ClusterLevel::State;
  const DesignMatrix d = panel::build_design(panel, s);
  require_both_groups(panel, d, "pooled_ols");
  if (d.cluster_count() < 2) throw DegenerateDesignError("pooled_ols: fewer than 2 state clusters");
  return fit_design(d, "pooled_ols");
}

EstimateResult estimate(const Panel& panel, const EstimationSpec& spec) {
  spec.validate();
  switch (spec.family) {
    case Family::Twfe:
      return spec.propensity_weighting ? doubly_robust_did(panel, spec) : twfe_did(panel, spec);
    case Family::DoublyRobust:
      return doubly_robust_did(panel, spec);
    case Family::EventStudy:
      return event_study(panel, spec);
    case Family::LinearProbability:
      return linear_probability(panel, spec);
    case Family::PooledOls:
      return pooled_ols_did(panel, spec);
  }
  throw DomainError("unknown estimator family");
}

std::string_view to_string(Dimension d) {
  switch (d) {
    case Dimension::Education:
      return "education";
    case Dimension::ExposedActivity:
      return "exposed_activity";
    case Dimension::ExposedOccupation:
      return "exposed_occupation";
    case Dimension::Mover:
      return "mover";
  }
  return "?";
}

Dimension parse_dimension(std::string_view s) {
  for (auto d : {Dimension::Education, Dimension::ExposedActivity, Dimension::ExposedOccupation, Dimension::Mover})
    if (to_string(d) == s) return d;
  throw DomainError("unknown heterogeneity dimension '" + std::string(s) +
                    "' (expected education, exposed_activity, exposed_occupation or mover)");
}

std::map<std::string, EstimateResult> heterogeneity_split(const Panel& panel, const EstimationSpec& spec,
                                                          Dimension dimension) {
  std::map<std::string, EstimateResult> out;
  if (dimension == Dimension::Mover) {
    EstimationSpec s = spec;
    s.outcome = "mover";
    s.propensity_weighting = spec.uses_propensity_weights();
    s.family = Family::LinearProbability;
    s.fixed_effects = FixedEffects::WorkerYear;
    out.emplace("mover", linear_probability(panel, s));
    return out;
  }

  std::vector<std::pair<std::string, std::function<bool(const panel::Observation&)>>> cohorts;
  if (dimension == Dimension::Education) {
    std::set<panel::Education> levels;
    for (const auto& o : panel.observations) levels.insert(o.education);
    for (auto e : levels)
      cohorts.emplace_back(std::string(panel::to_string(e)), [e](const panel::Observation& o) { return o.education == e; });
  } else {
    const bool activity = dimension == Dimension::ExposedActivity;
    for (bool flag : {false, true})
      cohorts.emplace_back(flag ? "exposed" : "unexposed", [activity, flag](const panel::Observation& o) {
        return (activity ? o.exposed_activity : o.exposed_occupation) == flag;
      });
  }
  for (const auto& [label, keep] : cohorts) {
    const Panel sub = filter_panel(panel, keep);
    if (sub.observations.empty()) throw DegenerateDesignError("heterogeneity: empty cohort '" + label + "'");
    try {
      out.emplace(label, estimate(sub, spec));
    } catch (const DegenerateDesignError& e) {
      throw DegenerateDesignError("heterogeneity cohort '" + label + "': " + e.what());
    }
  }
  return out;
}

std::string_view to_string(PlaceboMode m) { return m == PlaceboMode::InSpace ? "in_space" : "in_time"; }

PlaceboMode parse_placebo_mode(std::string_view s) {
  if (s == "in_space") return PlaceboMode::InSpace;
  if (s == "in_time") return PlaceboMode::InTime;
  throw DomainError("unknown placebo mode '" + std::string(s) + "' (expected in_space or in_time)");
}

std::vector<PlaceboEstimate> placebo_suite(const Panel& panel, const EstimationSpec& spec, PlaceboMode mode) {
  EstimationSpec s = spec;
  s.treatment = Treatment::Binary;
  if (s.family == Family::EventStudy) s.family = Family::Twfe;
  std::vector<PlaceboEstimate> out;

  if (mode == PlaceboMode::InSpace) {
    std::vector<std::string> controls;
    for (const auto& st : panel.states()) {
      if (st == panel.treated_state) continue;
      if (!spec.control_states.empty() &&
          std::find(spec.control_states.begin(), spec.control_states.end(), st) == spec.control_states.end())
        continue;
      controls.push_back(st);
    }
    if (controls.size() < 2) throw DegenerateDesignError("in_space placebo needs at least 2 control states");
    for (const auto& fake : controls) {
      Panel sub = filter_panel(panel, [&](const panel::Observation& o) {
        return std::find(controls.begin(), controls.end(), o.state) != controls.end();
      });
      sub.treated_state = fake;
      EstimationSpec ps = s;
      ps.control_states.clear();
      out.push_back({fake, estimate(sub, ps)});
    }
    return out;
  }

  std::vector<int> pre;
  for (int y : panel.years())
    if (y < panel.treatment_year) pre.push_back(y);
  if (pre.size() < 2) throw DegenerateDesignError("in_time placebo needs at least 2 pre-treatment years");
  for (std::size_t k = 1; k < pre.size(); ++k) {
    Panel sub = filter_panel(panel, [&](const panel::Observation& o) { return o.year < panel.treatment_year; });
    sub.treatment_year = pre[k];
    out.push_back({std::to_string(pre[k]), estimate(sub, s)});
  }
  return out;
}

}  // namespace borderlab::did

#pragma once

#include "borderlab/dgp.hpp"
#include "borderlab/did.hpp"
#include "borderlab/synth.hpp"

#include <json.hpp>

#include <map>
#include <string>
#include <vector>

namespace borderlab::cli {

using Json = nlohmann::ordered_json;
using TruthMap = std::map<std::string, double>;

/// "*", "**", "***" at p < 0.1, 0.05, 0.01.
std::string stars(double p_value);

Json estimate_json(const did::EstimateResult& r, const TruthMap* truth = nullptr);
/// Regression-table column: coefficients with stars, SEs in parentheses, FE rows,
/// fit statistics; Truth and Bias columns when truth is supplied.
std::string estimate_table(const did::EstimateResult& r, const EstimationSpec& spec, const TruthMap* truth = nullptr);
/// One row per coefficient: term,coef,se,p_value,stars[,truth,bias].
std::string estimate_csv(const did::EstimateResult& r, const TruthMap* truth = nullptr);
/// year,coef,se[,truth] rows; the reference year is left out.
std::string event_study_csv(const did::EstimateResult& r, const TruthMap* truth = nullptr);

/// Ground-truth values matching coefficient names of `r` under `spec`. A
/// non-empty `cohort` (a GroundTruth::cohort_effects key) sets the treatment truth.
TruthMap truth_for(const did::EstimateResult& r, const EstimationSpec& spec, const dgp::GroundTruth& truth,
                   const std::string& cohort = {});

Json truth_json(const dgp::GroundTruth& t);
dgp::GroundTruth truth_from_json(const Json& j);

std::string summary_table(const std::vector<dgp::SummaryRow>& rows, const std::string& treated_state);
std::string summary_csv(const std::vector<dgp::SummaryRow>& rows);

Json scm_json(const synth::ScmSolution& s);
/// SDID weights plus the synthetic path: weighted donors shifted by the
/// time-weighted pre-period gap.
Json sdid_json(const synth::SdidSolution& s, const synth::AggregatePanel& agg);
std::string path_csv(const std::vector<int>& years, const Eigen::VectorXd& treated, const Eigen::VectorXd& synthetic);

Json placebo_json(const std::vector<did::PlaceboEstimate>& estimates, std::string_view mode);

}  // namespace borderlab::cli

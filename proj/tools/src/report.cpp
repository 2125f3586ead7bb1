#include "borderlab/cli/report.hpp"

#include "borderlab/error.hpp"
#include "borderlab/panel.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

namespace borderlab::cli {

namespace {

std::string fixed(double v, int digits = 4) {
  if (!std::isfinite(v)) return "NA";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string grouped(std::size_t n) {
  std::string s = std::to_string(n);
  for (int i = static_cast<int>(s.size()) - 3; i > 0; i -= 3) s.insert(static_cast<std::size_t>(i), ",");
  return s;
}

std::string label(const std::string& name) {
  if (name == "treat") return "Treat: Binary";
  if (name == "treat_vz_ratio_x100") return "Treat: VZ Ratio x 100";
  if (name.size() > 8 && name.rfind("_x_exposed_activity") == name.size() - 19) return "Treat x Immigrant Activities";
  if (name.size() > 8 && name.rfind("_x_exposed_occupation") == name.size() - 21) return "Treat x Immigrant Occupations";
  if (name.rfind("year_", 0) == 0) return "Year " + name.substr(5);
  return name;
}

std::string pad(const std::string& s, std::size_t width, bool right = false) {
  if (s.size() >= width) return s;
  return right ? std::string(width - s.size(), ' ') + s : s + std::string(width - s.size(), ' ');
}

std::string csv_double(double v) { return std::isfinite(v) ? panel::format_double(v) : ""; }

Json number(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

}  // namespace

std::string stars(double p) {
  if (p < 0.01) return "***";
  if (p < 0.05) return "**";
  if (p < 0.1) return "*";
  return "";
}

Json estimate_json(const did::EstimateResult& r, const TruthMap* truth) {
  Json j;
  j["family"] = r.family;
  Json coef = Json::object(), se = Json::object(), pv = Json::object();
  for (std::size_t i = 0; i < r.names.size(); ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    coef[r.names[i]] = number(r.coefficients(k));
    se[r.names[i]] = number(r.standard_errors(k));
    pv[r.names[i]] = number(r.p_value(r.names[i]));
  }
  j["coef"] = coef;
  j["se"] = se;
  j["n"] = r.n_obs;
  j["n_clusters"] = r.n_clusters;
  j["r2_adj"] = number(r.r2_adjusted);
  j["rmse"] = number(r.rmse);
  j["trimmed"] = r.trimmed;
  j["p_value"] = pv;
  if (!r.year_coefficients.empty()) {
    Json years = Json::object();
    for (const auto& [y, c] : r.year_coefficients)
      years[std::to_string(y)] = {{"coef", number(c)}, {"se", number(r.year_standard_errors.at(y))}};
    j["years"] = years;
  }
  if (r.propensity) {
    const auto& p = *r.propensity;
    Json pc = Json::object();
    for (std::size_t i = 0; i < p.covariates.size(); ++i) pc[p.covariates[i]] = number(p.coefficients(static_cast<Eigen::Index>(i)));
    j["propensity"] = {{"workers", p.workers},
                       {"converged", p.converged},
                       {"iterations", p.iterations},
                       {"log_likelihood", number(p.log_likelihood)},
                       {"weight_threshold", number(p.weight_threshold)},
                       {"coefficients", pc}};
  }
  if (truth && !truth->empty()) {
    Json t = Json::object(), b = Json::object();
    for (std::size_t i = 0; i < r.names.size(); ++i) {
      const auto it = truth->find(r.names[i]);
      if (it == truth->end()) continue;
      t[r.names[i]] = number(it->second);
      b[r.names[i]] = number(r.coefficients(static_cast<Eigen::Index>(i)) - it->second);
    }
    j["truth"] = t;
    j["bias"] = b;
  }
  j["warnings"] = r.warnings;
  Json meta = Json::object();
  for (const auto& [k, v] : r.metadata) meta[k] = v;
  meta["p_values"] = "normal approximation to cluster-robust t statistics";
  j["metadata"] = meta;
  return j;
}

std::string estimate_table(const did::EstimateResult& r, const EstimationSpec& spec, const TruthMap* truth) {
  const bool with_truth = truth && !truth->empty();
  constexpr std::size_t kLabel = 32;
  constexpr std::size_t kCol = 14;
  std::ostringstream os;
  os << pad("", kLabel) << pad("(1) " + r.family, kCol, true);
  if (with_truth) os << pad("Truth", kCol, true) << pad("Bias", kCol, true);
  os << '\n' << std::string(kLabel + kCol * (with_truth ? 3 : 1), '-') << '\n';
  for (std::size_t i = 0; i < r.names.size(); ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    const double c = r.coefficients(k);
    os << pad(label(r.names[i]), kLabel) << pad(fixed(c) + pad(stars(r.p_value(r.names[i])), 3), kCol, true);
    if (with_truth) {
      const auto it = truth->find(r.names[i]);
      if (it != truth->end())
        os << pad(fixed(it->second), kCol, true) << pad(fixed(c - it->second), kCol, true);
    }
    os << '\n' << pad("", kLabel) << pad("(" + fixed(r.standard_errors(k)) + ")   ", kCol, true) << '\n';
  }
  os << std::string(kLabel + kCol * (with_truth ? 3 : 1), '-') << '\n';
  const bool worker = spec.fixed_effects == FixedEffects::WorkerYear;
  os << pad(worker ? "Worker FE" : "State FE", kLabel) << pad("Yes   ", kCol, true) << '\n';
  os << pad("Year FE", kLabel) << pad("Yes   ", kCol, true) << '\n';
  os << pad("Propensity weights", kLabel) << pad(r.propensity ? "Yes   " : "No   ", kCol, true) << '\n';
  os << pad("R2 Adj.", kLabel) << pad(fixed(r.r2_adjusted, 3) + "   ", kCol, true) << '\n';
  os << pad("RMSE", kLabel) << pad(fixed(r.rmse, 3) + "   ", kCol, true) << '\n';
  os << pad("N", kLabel) << pad(grouped(r.n_obs) + "   ", kCol, true) << '\n';
  os << pad("N Clusters", kLabel) << pad(std::to_string(r.n_clusters) + "   ", kCol, true) << '\n';
  if (r.trimmed) os << pad("Trimmed", kLabel) << pad(grouped(r.trimmed) + "   ", kCol, true) << '\n';
  os << "Cluster-robust standard errors in parentheses (" << to_string(spec.cluster) << ").\n";
  os << "* p < 0.1, ** p < 0.05, *** p < 0.01\n";
  for (const auto& w : r.warnings) os << "warning: " << w << '\n';
  return os.str();
}

std::string estimate_csv(const did::EstimateResult& r, const TruthMap* truth) {
  const bool with_truth = truth && !truth->empty();
  std::ostringstream os;
  os << "term,coef,se,p_value,stars" << (with_truth ? ",truth,bias" : "") << '\n';
  for (std::size_t i = 0; i < r.names.size(); ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    const double p = r.p_value(r.names[i]);
    os << r.names[i] << ',' << csv_double(r.coefficients(k)) << ',' << csv_double(r.standard_errors(k)) << ','
       << csv_double(p) << ',' << stars(p);
    if (with_truth) {
      const auto it = truth->find(r.names[i]);
      if (it != truth->end())
        os << ',' << csv_double(it->second) << ',' << csv_double(r.coefficients(k) - it->second);
      else
        os << ",,";
    }
    os << '\n';
  }
  return os.str();
}

std::string event_study_csv(const did::EstimateResult& r, const TruthMap* truth) {
  const bool with_truth = truth && !truth->empty();
  std::ostringstream os;
  os << "year,coef,se,ci_low,ci_high" << (with_truth ? ",truth" : "") << '\n';
  for (const auto& [y, c] : r.year_coefficients) {
    const double s = r.year_standard_errors.at(y);
    os << y << ',' << csv_double(c) << ',' << csv_double(s) << ',' << csv_double(c - 1.96 * s) << ','
       << csv_double(c + 1.96 * s);
    if (with_truth) {
      const auto it = truth->find("year_" + std::to_string(y));
      os << ',' << (it != truth->end() ? csv_double(it->second) : "");
    }
    os << '\n';
  }
  return os.str();
}

TruthMap truth_for(const did::EstimateResult& r, const EstimationSpec& spec, const dgp::GroundTruth& truth,
                   const std::string& cohort) {
  TruthMap out;
  auto cohort_value = [&](const std::string& key) -> std::optional<double> {
    const auto it = truth.cohort_effects.find(key);
    if (it == truth.cohort_effects.end()) return std::nullopt;
    return it->second;
  };
  for (const auto& name : r.names) {
    if (name.rfind("year_", 0) == 0) {
      const int y = std::stoi(name.substr(5));
      double pre = 0.0;
      const auto ref = truth.att_by_year.find(spec.reference_year);
      if (ref != truth.att_by_year.end()) pre = ref->second;
      const auto it = truth.att_by_year.find(y);
      if (it != truth.att_by_year.end()) out[name] = it->second - pre;
      continue;
    }
    if (name == "treat") {
      if (!cohort.empty()) {
        if (auto v = cohort_value(cohort)) out[name] = *v;
      } else if (spec.outcome == "retained") {
        out[name] = truth.retention_effect;
      } else if (spec.outcome == "mover") {
        out[name] = truth.mover_effect;
      } else if (spec.sector == Sector::Informal) {
        if (spec.interaction == Interaction::ExposedActivity) {
          if (auto v = cohort_value("informal:unexposed_activity")) out[name] = *v;
        }
      } else {
        out[name] = truth.overall_att;
      }
      continue;
    }
    if (name == "treat_x_exposed_activity" && spec.sector == Sector::Informal) {
      const auto a = cohort_value("informal:exposed_activity");
      const auto b = cohort_value("informal:unexposed_activity");
      if (a && b) out[name] = *a - *b;
    }
  }
  return out;
}

Json truth_json(const dgp::GroundTruth& t) {
  Json j;
  Json att = Json::object();
  for (const auto& [y, v] : t.att_by_year) att[std::to_string(y)] = v;
  j["att_by_year"] = att;
  Json cohorts = Json::object();
  for (const auto& [k, v] : t.cohort_effects) cohorts[k] = v;
  j["cohort_effects"] = cohorts;
  j["seed"] = t.seed;
  j["overall_att"] = t.overall_att;
  j["mover_effect"] = t.mover_effect;
  j["retention_effect"] = t.retention_effect;
  Json mult = Json::object();
  for (const auto& [k, v] : t.log_multipliers) mult[k] = v;
  j["log_multipliers"] = mult;
  Json exposure = Json::object();
  for (const auto& [key, v] : t.exposure) exposure[key.first][std::to_string(key.second)] = v;
  j["exposure"] = exposure;
  return j;
}

dgp::GroundTruth truth_from_json(const Json& j) {
  dgp::GroundTruth t;
  try {
    for (const auto& [y, v] : j.at("att_by_year").items()) t.att_by_year[std::stoi(y)] = v.get<double>();
    for (const auto& [k, v] : j.at("cohort_effects").items()) t.cohort_effects[k] = v.get<double>();
    t.seed = j.at("seed").get<std::uint64_t>();
    t.overall_att = j.value("overall_att", 0.0);
    t.mover_effect = j.value("mover_effect", 0.0);
    t.retention_effect = j.value("retention_effect", 0.0);
    if (j.contains("log_multipliers"))
      for (const auto& [k, v] : j.at("log_multipliers").items()) t.log_multipliers[k] = v.get<double>();
    if (j.contains("exposure"))
      for (const auto& [m, years] : j.at("exposure").items())
        for (const auto& [y, v] : years.items()) t.exposure[{m, std::stoi(y)}] = v.get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("ground-truth JSON: ") + e.what());
  }
  return t;
}

std::string summary_table(const std::vector<dgp::SummaryRow>& rows, const std::string& treated_state) {
  std::ostringstream os;
  constexpr std::size_t kLabel = 26;
  constexpr std::size_t kCol = 16;
  os << pad("", kLabel);
  for (const auto& r : rows) os << pad(r.group == "treated" ? "Treated (" + treated_state + ")" : "Control", kCol, true);
  os << '\n' << std::string(kLabel + kCol * rows.size(), '-') << '\n';
  auto line = [&](const std::string& name, auto value) {
    os << pad(name, kLabel);
    for (const auto& r : rows) os << pad(value(r), kCol, true);
    os << '\n';
  };
  line("Mean monthly wage", [](const dgp::SummaryRow& r) { return fixed(r.mean_wage, 2); });
  line("Female", [](const dgp::SummaryRow& r) { return fixed(r.female_share, 3); });
  line("Less than high school", [](const dgp::SummaryRow& r) { return fixed(r.education_shares[0], 3); });
  line("High school", [](const dgp::SummaryRow& r) { return fixed(r.education_shares[1], 3); });
  line("College", [](const dgp::SummaryRow& r) { return fixed(r.education_shares[2], 3); });
  line("Age", [](const dgp::SummaryRow& r) { return fixed(r.mean_age, 2); });
  line("Tenure (months)", [](const dgp::SummaryRow& r) { return fixed(r.mean_tenure, 2); });
  line("Weekly hours", [](const dgp::SummaryRow& r) { return fixed(r.mean_hours, 2); });
  line("Workers", [](const dgp::SummaryRow& r) { return grouped(r.workers); });
  line("Observations", [](const dgp::SummaryRow& r) { return grouped(r.observations); });
  return os.str();
}

std::string summary_csv(const std::vector<dgp::SummaryRow>& rows) {
  std::ostringstream os;
  os << "group,workers,observations,mean_wage,female_share,less_than_hs,high_school,college,mean_age,mean_tenure,"
        "mean_hours\n";
  for (const auto& r : rows)
    os << r.group << ',' << r.workers << ',' << r.observations << ',' << csv_double(r.mean_wage) << ','
       << csv_double(r.female_share) << ',' << csv_double(r.education_shares[0]) << ','
       << csv_double(r.education_shares[1]) << ',' << csv_double(r.education_shares[2]) << ','
       << csv_double(r.mean_age) << ',' << csv_double(r.mean_tenure) << ',' << csv_double(r.mean_hours) << '\n';
  return os.str();
}

Json scm_json(const synth::ScmSolution& s) {
  Json j;
  Json w = Json::object();
  for (std::size_t i = 0; i < s.donors.size(); ++i) w[s.donors[i]] = s.weights(static_cast<Eigen::Index>(i));
  j["weights"] = w;
  j["mspe"] = s.mspe;
  j["effect"] = s.effect;
  Json path = Json::array();
  for (std::size_t t = 0; t < s.years.size(); ++t) {
    const auto k = static_cast<Eigen::Index>(t);
    path.push_back({s.years[t], s.treated_path(k), s.synthetic_path(k)});
  }
  j["path"] = path;
  return j;
}

Json sdid_json(const synth::SdidSolution& s, const synth::AggregatePanel& agg) {
  const auto t0 = static_cast<Eigen::Index>(agg.pre_periods());
  const auto donors = agg.donor_indices();
  Eigen::VectorXd synthetic = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(agg.years.size()));
  for (std::size_t j = 0; j < donors.size(); ++j)
    synthetic += s.unit_weights(static_cast<Eigen::Index>(j)) * agg.outcome.row(static_cast<Eigen::Index>(donors[j])).transpose();
  const Eigen::VectorXd treated = agg.outcome.row(static_cast<Eigen::Index>(agg.treated_index())).transpose();
  const double shift = (treated.head(t0) - synthetic.head(t0)).dot(s.time_weights);
  synthetic.array() += shift;
  const double mspe = (treated.head(t0) - synthetic.head(t0)).squaredNorm() / static_cast<double>(t0);

  Json j;
  Json w = Json::object();
  for (std::size_t i = 0; i < s.donors.size(); ++i) w[s.donors[i]] = s.unit_weights(static_cast<Eigen::Index>(i));
  j["weights"] = w;
  Json tw = Json::object();
  for (std::size_t i = 0; i < s.pre_years.size(); ++i)
    tw[std::to_string(s.pre_years[i])] = s.time_weights(static_cast<Eigen::Index>(i));
  j["time_weights"] = tw;
  j["mspe"] = mspe;
  j["effect"] = s.estimate;
  Json path = Json::array();
  for (std::size_t t = 0; t < agg.years.size(); ++t) {
    const auto k = static_cast<Eigen::Index>(t);
    path.push_back({agg.years[t], treated(k), synthetic(k)});
  }
  j["path"] = path;
  j["ridge"] = s.ridge;
  j["method"] = s.method;
  return j;
}

std::string path_csv(const std::vector<int>& years, const Eigen::VectorXd& treated, const Eigen::VectorXd& synthetic) {
  std::ostringstream os;
  os << "year,treated,synthetic,gap\n";
  for (std::size_t t = 0; t < years.size(); ++t) {
    const auto k = static_cast<Eigen::Index>(t);
    os << years[t] << ',' << csv_double(treated(k)) << ',' << csv_double(synthetic(k)) << ','
       << csv_double(treated(k) - synthetic(k)) << '\n';
  }
  return os.str();
}

Json placebo_json(const std::vector<did::PlaceboEstimate>& estimates, std::string_view mode) {
  Json list = Json::array();
  for (const auto& e : estimates)
    list.push_back({{"label", e.label},
                    {"coef", number(e.result.treatment_coef())},
                    {"se", number(e.result.treatment_se())},
                    {"p_value", number(e.result.p_value(e.result.names.front()))},
                    {"n", e.result.n_obs}});
  return {{"mode", mode}, {"estimates", list}};
}

}  // namespace borderlab::cli

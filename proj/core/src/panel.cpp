#include "borderlab/panel.hpp"

#include "borderlab/error.hpp"
#include "borderlab/parallel.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>
#include <unordered_map>

namespace borderlab::panel {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

std::string_view to_string(Education e) {
  switch (e) {
    case Education::LessThanHighSchool:
      return "less_than_hs";
    case Education::HighSchool:
      return "high_school";
    case Education::College:
      return "college";
  }
  return "?";
}

Education parse_education(std::string_view s) {
  if (s == "less_than_hs" || s == "0") return Education::LessThanHighSchool;
  if (s == "high_school" || s == "1") return Education::HighSchool;
  if (s == "college" || s == "2") return Education::College;
  throw DomainError("unknown education level '" + std::string(s) + "'");
}

// ---------------------------------------------------------------------------
// Panel
// ---------------------------------------------------------------------------

double Panel::ratio(const std::string& municipality, int year) const {
  const auto it = vz_ratio.find({municipality, year});
  return it == vz_ratio.end() ? 0.0 : it->second;
}

std::vector<int> Panel::years() const {
  std::set<int> ys;
  for (const auto& o : observations) ys.insert(o.year);
  return {ys.begin(), ys.end()};
}

std::vector<std::string> Panel::states() const {
  std::set<std::string> ss;
  for (const auto& o : observations) ss.insert(o.state);
  return {ss.begin(), ss.end()};
}

bool Panel::has_informal() const {
  return std::any_of(observations.begin(), observations.end(), [](const Observation& o) { return o.informal; });
}

void Panel::validate() const {
  std::set<std::pair<std::string_view, int>> keys;
  for (const auto& o : observations) {
    if (!keys.emplace(o.worker_id, o.year).second)
      throw DomainError("duplicate worker-year key (" + o.worker_id + ", " + std::to_string(o.year) + ")");
  }
  const auto ys = years();
  for (std::size_t i = 1; i < ys.size(); ++i)
    if (ys[i] != ys[i - 1] + 1)
      throw DomainError("panel years are not contiguous: gap between " + std::to_string(ys[i - 1]) + " and " +
                        std::to_string(ys[i]));
  std::unordered_map<std::string, std::string> municipality_state;
  for (const auto& o : observations) municipality_state.emplace(o.municipality, o.state);
  for (const auto& [key, value] : vz_ratio) {
    if (!(value >= 0.0 && value <= 1.0))
      throw DomainError("vz_ratio for (" + key.first + ", " + std::to_string(key.second) + ") outside [0, 1]");
    const auto it = municipality_state.find(key.first);
    if (it != municipality_state.end() && it->second != treated_state && key.second < treatment_year && value != 0.0)
      throw DomainError("vz_ratio must be zero before the treatment year in control municipality " + key.first);
  }
}

void Panel::sort_canonical() {
  std::stable_sort(observations.begin(), observations.end(), [](const Observation& a, const Observation& b) {
    return std::tie(a.worker_id, a.year) < std::tie(b.worker_id, b.year);
  });
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

namespace {

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

double parse_double(std::string_view s, std::string_view column, std::size_t line) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty())
    throw ParseError("cannot parse " + std::string(column) + " value '" + std::string(s) + "'", line);
  return v;
}

int parse_int(std::string_view s, std::string_view column, std::size_t line) {
  int v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty())
    throw ParseError("cannot parse " + std::string(column) + " value '" + std::string(s) + "'", line);
  return v;
}

enum class Extra { AgeSq, TenureSq, Informal };

}  // namespace

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) throw Error("format_double: conversion failed");
  return std::string(buf, ptr);
}

std::map<RatioKey, double> load_ratio_csv(std::istream& in) {
  std::map<RatioKey, double> out;
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw ParseError("ratio csv: empty input", 1);
  ++line_no;
  strip_cr(line);
  if (line != kRatioHeader) throw ParseError("ratio csv: header must be '" + std::string(kRatioHeader) + "'", 1);
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (line.empty()) continue;
    const auto f = split_commas(line);
    if (f.size() != 3) throw ParseError("ratio csv: expected 3 fields", line_no);
    const int year = parse_int(f[1], "year", line_no);
    const double r = parse_double(f[2], "ratio", line_no);
    if (!(r >= 0.0 && r <= 1.0)) throw DomainError("ratio csv: ratio outside [0, 1] at line " + std::to_string(line_no));
    if (!out.emplace(RatioKey{std::string(f[0]), year}, r).second)
      throw DomainError("ratio csv: duplicate (" + std::string(f[0]) + ", " + std::to_string(year) + ")");
  }
  return out;
}

LoadResult load_csv(std::istream& in, const LoadOptions& options, std::istream* ratio_csv) {
  LoadResult result;
  result.panel.treated_state = options.treated_state;
  result.panel.treatment_year = options.treatment_year;

  std::string line;
  if (!std::getline(in, line)) throw ParseError("panel csv: empty input", 1);
  strip_cr(line);
  if (line.compare(0, kPanelHeader.size(), kPanelHeader) != 0 ||
      (line.size() > kPanelHeader.size() && line[kPanelHeader.size()] != ','))
    throw ParseError("panel csv: header must start with '" + std::string(kPanelHeader) + "'", 1);
  std::vector<Extra> extras;
  if (line.size() > kPanelHeader.size()) {
    for (auto name : split_commas(std::string_view(line).substr(kPanelHeader.size() + 1))) {
      if (name == "age_sq")
        extras.push_back(Extra::AgeSq);
      else if (name == "tenure_sq")
        extras.push_back(Extra::TenureSq);
      else if (name == "informal")
        extras.push_back(Extra::Informal);
      else
        throw ParseError("panel csv: unknown column '" + std::string(name) + "'", 1);
    }
  }
  constexpr std::size_t kBase = 16;
  const std::size_t expected = kBase + extras.size();

  std::set<std::pair<std::string, int>> keys;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (line.empty()) continue;
    const auto f = split_commas(line);
    if (f.size() != expected)
      throw ParseError("panel csv: expected " + std::to_string(expected) + " fields, found " + std::to_string(f.size()),
                       line_no);
    Observation o;
    o.worker_id = std::string(f[0]);
    o.year = parse_int(f[1], "year", line_no);
    o.state = std::string(f[2]);
    o.municipality = std::string(f[3]);
    o.monthly_wage = parse_double(f[4], "monthly_wage", line_no);
    o.weekly_hours = parse_double(f[5], "weekly_hours", line_no);
    o.retained = parse_int(f[6], "retained", line_no);
    o.occupation_code = std::string(f[7]);
    o.activity_code = std::string(f[8]);
    const int exp_occ = parse_int(f[9], "exposed_occupation", line_no);
    const int exp_act = parse_int(f[10], "exposed_activity", line_no);
    const int female = parse_int(f[11], "female", line_no);
    o.race = parse_int(f[12], "race", line_no);
    o.age = parse_double(f[13], "age", line_no);
    o.tenure = parse_double(f[14], "tenure", line_no);

    std::string reason;
    auto reject_if = [&](bool bad, std::string why) {
      if (bad && reason.empty()) reason = std::move(why);
    };
    try {
      o.education = parse_education(f[15]);
    } catch (const DomainError& e) {
      reason = e.what();
    }
    int informal = 0;
    for (std::size_t j = 0; j < extras.size(); ++j) {
      const auto field = f[kBase + j];
      switch (extras[j]) {
        case Extra::AgeSq: {
          const double v = parse_double(field, "age_sq", line_no);
          reject_if(std::abs(v - o.age * o.age) > 1e-9 * std::max(1.0, o.age * o.age), "age_sq != age^2");
          break;
        }
        case Extra::TenureSq: {
          const double v = parse_double(field, "tenure_sq", line_no);
          reject_if(std::abs(v - o.tenure * o.tenure) > 1e-9 * std::max(1.0, o.tenure * o.tenure),
                    "tenure_sq != tenure^2");
          break;
        }
        case Extra::Informal:
          informal = parse_int(field, "informal", line_no);
          break;
      }
    }
    reject_if(o.worker_id.empty(), "empty worker_id");
    reject_if(!std::isfinite(o.monthly_wage) || o.monthly_wage < 0.0, "monthly_wage must be finite and >= 0");
    reject_if(!std::isfinite(o.weekly_hours) || o.weekly_hours < 0.0, "weekly_hours must be finite and >= 0");
    reject_if(o.retained != 0 && o.retained != 1, "retained must be 0/1");
    reject_if((exp_occ != 0 && exp_occ != 1) || (exp_act != 0 && exp_act != 1) || (female != 0 && female != 1) ||
                  (informal != 0 && informal != 1),
              "flag columns must be 0/1");
    reject_if(o.race < 0 || o.race >= kRaceCategories, "race code out of range");
    reject_if(!(std::isfinite(o.age) && o.age > 0.0), "age must be > 0");
    reject_if(!(std::isfinite(o.tenure) && o.tenure >= 0.0), "tenure must be >= 0");
    if (!reason.empty()) {
      result.rejected.push_back({line_no, reason});
      continue;
    }
    o.exposed_occupation = exp_occ == 1;
    o.exposed_activity = exp_act == 1;
    o.female = female == 1;
    o.informal = informal == 1;
    if (!keys.emplace(o.worker_id, o.year).second)
      throw DomainError("duplicate worker-year key (" + o.worker_id + ", " + std::to_string(o.year) + ") at line " +
                        std::to_string(line_no));
    result.panel.observations.push_back(std::move(o));
  }
  if (ratio_csv) result.panel.vz_ratio = load_ratio_csv(*ratio_csv);
  result.panel.validate();
  return result;
}

LoadResult load_csv(const std::filesystem::path& panel_csv, const LoadOptions& options,
                    const std::optional<std::filesystem::path>& ratio_csv) {
  std::ifstream in(panel_csv);
  if (!in) throw Error("cannot open panel csv " + panel_csv.string());
  if (!ratio_csv) return load_csv(in, options, nullptr);
  std::ifstream rin(*ratio_csv);
  if (!rin) throw Error("cannot open ratio csv " + ratio_csv->string());
  return load_csv(in, options, &rin);
}

void write_csv(const Panel& panel, std::ostream& out) {
  const bool informal = panel.has_informal();
  out << kPanelHeader << (informal ? ",informal" : "") << '\n';
  for (const auto& o : panel.observations) {
    out << o.worker_id << ',' << o.year << ',' << o.state << ',' << o.municipality << ',' << format_double(o.monthly_wage)
        << ',' << format_double(o.weekly_hours) << ',' << o.retained << ',' << o.occupation_code << ','
        << o.activity_code << ',' << int(o.exposed_occupation) << ',' << int(o.exposed_activity) << ','
        << int(o.female) << ',' << o.race << ',' << format_double(o.age) << ',' << format_double(o.tenure) << ','
        << to_string(o.education);
    if (informal) out << ',' << int(o.informal);
    out << '\n';
  }
}

void write_ratio_csv(const Panel& panel, std::ostream& out) {
  out << kRatioHeader << '\n';
  for (const auto& [key, value] : panel.vz_ratio)
    out << key.first << ',' << key.second << ',' << format_double(value) << '\n';
}

// ---------------------------------------------------------------------------
// Sample rules
// ---------------------------------------------------------------------------

double quantile_nearest_rank(std::vector<double> values, double p) {
  if (values.empty()) throw DomainError("quantile of an empty sample");
  if (!(p > 0.0 && p <= 1.0)) throw DomainError("quantile level must lie in (0, 1]");
  const auto n = values.size();
  auto rank = static_cast<std::size_t>(std::ceil(p * static_cast<double>(n) - 1e-9));
  rank = std::clamp<std::size_t>(rank, 1, n);
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(rank - 1), values.end());
  return values[rank - 1];
}

SampleRulesResult apply_sample_rules(const Panel& panel, const SampleRules& rules) {
  if (panel.observations.empty()) throw DomainError("sample rules: empty panel");
  if (!(rules.lower_quantile > 0.0 && rules.lower_quantile < rules.upper_quantile && rules.upper_quantile <= 1.0))
    throw DomainError("sample rules: need 0 < lower < upper <= 1");

  SampleRulesResult out;
  out.panel = panel;
  out.panel.observations.clear();
  std::vector<const Observation*> positive;
  for (const auto& o : panel.observations) {
    if (std::isfinite(o.monthly_wage) && o.monthly_wage > 0.0)
      positive.push_back(&o);
    else
      ++out.dropped_nonpositive;
  }
  if (positive.empty()) throw DomainError("sample rules: every row has a nonpositive wage");

  WageBand band;
  const bool reuse = panel.wage_band && panel.wage_band->lower_quantile == rules.lower_quantile &&
                     panel.wage_band->upper_quantile == rules.upper_quantile &&
                     panel.wage_band->winsorized == rules.winsorize;
  if (reuse) {
    band = *panel.wage_band;
  } else {
    std::vector<double> wages;
    wages.reserve(positive.size());
    for (const auto* o : positive) wages.push_back(o->monthly_wage);
    band.lower_quantile = rules.lower_quantile;
    band.upper_quantile = rules.upper_quantile;
    band.lower_wage = quantile_nearest_rank(wages, rules.lower_quantile);
    band.upper_wage = quantile_nearest_rank(wages, rules.upper_quantile);
    band.winsorized = rules.winsorize;
  }

  for (const auto* o : positive) {
    Observation copy = *o;
    if (copy.monthly_wage < band.lower_wage) {
      if (!rules.winsorize) {
        ++out.dropped_lower;
        continue;
      }
      copy.monthly_wage = band.lower_wage;
      ++out.winsorized;
    } else if (copy.monthly_wage > band.upper_wage) {
      if (!rules.winsorize) {
        ++out.dropped_upper;
        continue;
      }
      copy.monthly_wage = band.upper_wage;
      ++out.winsorized;
    }
    out.panel.observations.push_back(std::move(copy));
  }
  if (out.panel.observations.empty()) throw DomainError("sample rules removed every row");
  out.panel.wage_band = band;
  return out;
}

// ---------------------------------------------------------------------------
// Design matrices
// ---------------------------------------------------------------------------

int DesignMatrix::cluster_count() const {
  return clusters.empty() ? 0 : *std::max_element(clusters.begin(), clusters.end()) + 1;
}

std::vector<int> DesignMatrix::fe_counts() const {
  std::vector<int> out;
  for (const auto& g : fe_groups) out.push_back(g.empty() ? 0 : *std::max_element(g.begin(), g.end()) + 1);
  return out;
}

void DesignMatrix::validate() const {
  const auto n_rows = static_cast<std::size_t>(outcome.size());
  if (static_cast<std::size_t>(regressors.rows()) != n_rows || static_cast<std::size_t>(weights.size()) != n_rows ||
      clusters.size() != n_rows || rows.size() != n_rows)
    throw DomainError("design: column lengths differ");
  for (const auto& g : fe_groups)
    if (g.size() != n_rows) throw DomainError("design: fixed-effect labels length differs");
  if (names.size() != static_cast<std::size_t>(regressors.cols())) throw DomainError("design: names/columns mismatch");
  if ((weights.array() < 0.0).any()) throw DomainError("design: negative weight");
}

namespace {

// Dense 0..G-1 codes in sorted label order.
template <typename Label>
std::vector<int> encode(const std::vector<Label>& labels) {
  std::vector<Label> sorted(labels);
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  std::vector<int> codes(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i)
    codes[i] = static_cast<int>(std::lower_bound(sorted.begin(), sorted.end(), labels[i]) - sorted.begin());
  return codes;
}

bool keep_row(const Panel& panel, const Observation& o, const EstimationSpec& spec) {
  if (spec.sector == Sector::Formal && o.informal) return false;
  if (spec.sector == Sector::Informal && !o.informal) return false;
  if (!spec.control_states.empty() && o.state != panel.treated_state &&
      std::find(spec.control_states.begin(), spec.control_states.end(), o.state) == spec.control_states.end())
    return false;
  return true;
}

}  // namespace

MoverFlags mover_flags(const Panel& panel) {
  const std::size_t n = panel.observations.size();
  MoverFlags flags{std::vector<double>(n, 0.0), std::vector<bool>(n, false)};
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& x = panel.observations[a];
    const auto& y = panel.observations[b];
    return std::tie(x.worker_id, x.year) < std::tie(y.worker_id, y.year);
  });
  for (std::size_t pos = 0; pos < n;) {
    std::size_t end = pos;
    const auto& id = panel.observations[order[pos]].worker_id;
    while (end < n && panel.observations[order[end]].worker_id == id) ++end;
    const bool starts_exposed = panel.observations[order[pos]].exposed_occupation;
    for (std::size_t r = pos + 1; r < end; ++r) {
      const auto& prev = panel.observations[order[r - 1]];
      const auto& cur = panel.observations[order[r]];
      flags.mover[order[r]] = (prev.exposed_occupation && !cur.exposed_occupation) ? 1.0 : 0.0;
      flags.at_risk[order[r]] = starts_exposed;
    }
    pos = end;
  }
  return flags;
}

CovariateBlock covariate_block(const Panel& panel, const std::vector<std::size_t>& rows,
                               const std::vector<std::string>& covariates) {
  std::vector<VectorXd> cols;
  std::vector<std::string> names;
  const auto n = static_cast<Index>(rows.size());
  auto add = [&](std::string name, auto&& value_of) {
    VectorXd c(n);
    for (Index i = 0; i < n; ++i) c(i) = value_of(panel.observations[rows[static_cast<std::size_t>(i)]]);
    cols.push_back(std::move(c));
    names.push_back(std::move(name));
  };
  for (const auto& cov : covariates) {
    if (cov == "female") {
      add(cov, [](const Observation& o) { return o.female ? 1.0 : 0.0; });
    } else if (cov == "race") {
      for (int r = 1; r < kRaceCategories; ++r)
        add("race_" + std::to_string(r), [r](const Observation& o) { return o.race == r ? 1.0 : 0.0; });
    } else if (cov == "age") {
      add(cov, [](const Observation& o) { return o.age; });
    } else if (cov == "age_sq") {
      add(cov, [](const Observation& o) { return o.age_sq(); });
    } else if (cov == "tenure") {
      add(cov, [](const Observation& o) { return o.tenure; });
    } else if (cov == "tenure_sq") {
      add(cov, [](const Observation& o) { return o.tenure_sq(); });
    } else if (cov == "education") {
      add("education_high_school", [](const Observation& o) { return o.education == Education::HighSchool ? 1.0 : 0.0; });
      add("education_college", [](const Observation& o) { return o.education == Education::College ? 1.0 : 0.0; });
    } else if (cov == "exposed_activity") {
      add(cov, [](const Observation& o) { return o.exposed_activity ? 1.0 : 0.0; });
    } else if (cov == "exposed_occupation") {
      add(cov, [](const Observation& o) { return o.exposed_occupation ? 1.0 : 0.0; });
    } else if (cov == "informal") {
      add(cov, [](const Observation& o) { return o.informal ? 1.0 : 0.0; });
    } else {
      throw DomainError("unknown covariate column '" + cov + "'");
    }
  }
  CovariateBlock block;
  std::vector<std::size_t> keep;
  for (std::size_t j = 0; j < cols.size(); ++j) {
    const auto& c = cols[j];
    if (n > 0 && (c.array() != c(0)).any()) keep.push_back(j);
  }
  block.values.resize(n, static_cast<Index>(keep.size()));
  for (std::size_t j = 0; j < keep.size(); ++j) {
    block.values.col(static_cast<Index>(j)) = cols[keep[j]];
    block.names.push_back(names[keep[j]]);
  }
  return block;
}

DesignMatrix build_design(const Panel& panel, const EstimationSpec& spec) {
  spec.validate();
  const bool mover = spec.outcome == "mover";
  MoverFlags flags;
  if (mover) flags = mover_flags(panel);

  DesignMatrix d;
  for (std::size_t i = 0; i < panel.observations.size(); ++i) {
    const auto& o = panel.observations[i];
    if (!keep_row(panel, o, spec)) continue;
    if (mover && !flags.at_risk[i]) continue;
    d.rows.push_back(i);
  }
  if (d.rows.empty()) throw DegenerateDesignError("design: no observations match the specification");
  const auto treated_rows = std::count_if(d.rows.begin(), d.rows.end(),
                                          [&](std::size_t i) { return panel.treated(panel.observations[i]); });
  if (treated_rows == 0) throw DegenerateDesignError("design: no treated-state observations match the specification");
  if (treated_rows == static_cast<std::ptrdiff_t>(d.rows.size()))
    throw DegenerateDesignError("design: no control observations match the specification");
  const auto n = static_cast<Index>(d.rows.size());
  auto obs = [&](Index i) -> const Observation& { return panel.observations[d.rows[static_cast<std::size_t>(i)]]; };

  d.outcome.resize(n);
  for (Index i = 0; i < n; ++i) {
    const auto& o = obs(i);
    if (spec.outcome == "log_wage") {
      if (!(o.monthly_wage > 0.0))
        throw DomainError("design: nonpositive wage for (" + o.worker_id + ", " + std::to_string(o.year) +
                          "); apply the sample rules first");
      d.outcome(i) = o.log_wage();
    } else if (spec.outcome == "retained") {
      d.outcome(i) = o.retained;
    } else {
      d.outcome(i) = flags.mover[d.rows[static_cast<std::size_t>(i)]];
    }
  }

  std::vector<VectorXd> cols;
  auto push = [&](std::string name, VectorXd c) {
    d.names.push_back(std::move(name));
    cols.push_back(std::move(c));
  };

  VectorXd treat(n);
  for (Index i = 0; i < n; ++i) {
    const auto& o = obs(i);
    if (spec.treatment == Treatment::Binary)
      treat(i) = (panel.treated(o) && panel.post(o)) ? 1.0 : 0.0;
    else
      treat(i) = 100.0 * panel.ratio(o.municipality, o.year);
  }
  const std::string treat_name = spec.treatment == Treatment::Binary ? "treat" : "treat_vz_ratio_x100";

  if (spec.family == Family::EventStudy) {
    std::set<int> years;
    for (Index i = 0; i < n; ++i) years.insert(obs(i).year);
    if (!years.count(spec.reference_year))
      throw DomainError("design: reference year " + std::to_string(spec.reference_year) + " not in the sample");
    for (int t : years) {
      if (t == spec.reference_year) continue;
      VectorXd c(n);
      for (Index i = 0; i < n; ++i) c(i) = (panel.treated(obs(i)) && obs(i).year == t) ? 1.0 : 0.0;
      push("year_" + std::to_string(t), std::move(c));
    }
  } else {
    push(treat_name, treat);
  }

  if (spec.interaction != Interaction::None) {
    const bool activity = spec.interaction == Interaction::ExposedActivity;
    const std::string flag = activity ? "exposed_activity" : "exposed_occupation";
    VectorXd exposure(n);
    for (Index i = 0; i < n; ++i) exposure(i) = (activity ? obs(i).exposed_activity : obs(i).exposed_occupation) ? 1.0 : 0.0;
    if (spec.family == Family::EventStudy) throw DomainError("design: interactions are not available for event studies");
    if (spec.fixed_effects == FixedEffects::StateYear) push(flag, exposure);
    push(treat_name + "_x_" + flag, treat.cwiseProduct(exposure));
  }

  if (spec.family == Family::PooledOls) {
    const auto block = covariate_block(panel, d.rows, spec.covariates);
    for (Index j = 0; j < block.values.cols(); ++j) push(block.names[static_cast<std::size_t>(j)], block.values.col(j));
  }

  d.regressors.resize(n, static_cast<Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) d.regressors.col(static_cast<Index>(j)) = cols[j];
  d.weights = VectorXd::Ones(n);

  std::vector<std::string> cluster_labels(static_cast<std::size_t>(n));
  std::vector<std::string> unit_labels(static_cast<std::size_t>(n));
  std::vector<int> year_labels(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    const auto& o = obs(i);
    const auto s = static_cast<std::size_t>(i);
    cluster_labels[s] = spec.cluster == ClusterLevel::Municipality ? o.municipality : o.state;
    unit_labels[s] = spec.fixed_effects == FixedEffects::WorkerYear ? o.worker_id : o.state;
    year_labels[s] = o.year;
  }
  d.clusters = encode(cluster_labels);
  d.fe_groups = {encode(unit_labels), encode(year_labels)};
  d.fe_names = {spec.fixed_effects == FixedEffects::WorkerYear ? "worker" : "state", "year"};
  d.validate();
  return d;
}

// ---------------------------------------------------------------------------
// Alternating projections
// ---------------------------------------------------------------------------

MatrixXd demean_columns(const MatrixXd& columns, const std::vector<std::vector<int>>& groups, const VectorXd& weights,
                        double tol, int max_iter, int* iterations, double* max_group_mean) {
  const Index n = columns.rows();
  for (const auto& g : groups)
    if (static_cast<Index>(g.size()) != n) throw DomainError("demean: group labels length differs");
  if (weights.size() != n) throw DomainError("demean: weights length differs");

  std::vector<VectorXd> group_weight;
  for (const auto& g : groups) {
    const int count = g.empty() ? 0 : *std::max_element(g.begin(), g.end()) + 1;
    VectorXd wsum = VectorXd::Zero(count);
    for (Index i = 0; i < n; ++i) wsum(g[static_cast<std::size_t>(i)]) += weights(i);
    group_weight.push_back(std::move(wsum));
  }

  MatrixXd out = columns;
  const auto k = static_cast<std::size_t>(columns.cols());
  std::vector<int> col_iters(k, 0);
  std::vector<double> col_max(k, 0.0);
  std::vector<int> failed(k, 0);

  auto group_means = [&](const VectorXd& v, std::size_t d) {
    const auto& g = groups[d];
    VectorXd sums = VectorXd::Zero(group_weight[d].size());
    for (Index i = 0; i < n; ++i) sums(g[static_cast<std::size_t>(i)]) += weights(i) * v(i);
    for (Index j = 0; j < sums.size(); ++j) sums(j) = group_weight[d](j) > 0.0 ? sums(j) / group_weight[d](j) : 0.0;
    return sums;
  };

  parallel_for(k, [&](std::size_t c) {
    VectorXd v = out.col(static_cast<Index>(c));
    if (groups.empty()) return;
    int it = 0;
    double worst = 0.0;
    for (it = 1; it <= max_iter; ++it) {
      for (std::size_t d = 0; d < groups.size(); ++d) {
        const VectorXd means = group_means(v, d);
        const auto& g = groups[d];
        for (Index i = 0; i < n; ++i) v(i) -= means(g[static_cast<std::size_t>(i)]);
      }
      worst = 0.0;
      for (std::size_t d = 0; d + 1 < groups.size(); ++d) worst = std::max(worst, group_means(v, d).lpNorm<Eigen::Infinity>());
      if (worst < tol) break;
    }
    if (it > max_iter) failed[c] = 1;
    col_iters[c] = std::min(it, max_iter);
    col_max[c] = worst;
    out.col(static_cast<Index>(c)) = v;
  });

  for (std::size_t c = 0; c < k; ++c)
    if (failed[c])
      throw ConvergenceError("demean: column " + std::to_string(c) + " did not converge after " +
                             std::to_string(max_iter) + " sweeps (max group mean " + std::to_string(col_max[c]) + ")");
  if (iterations) *iterations = k ? *std::max_element(col_iters.begin(), col_iters.end()) : 0;
  if (max_group_mean) *max_group_mean = k ? *std::max_element(col_max.begin(), col_max.end()) : 0.0;
  return out;
}

DemeanResult two_way_demean(const DesignMatrix& design, double tol, int max_iter) {
  design.validate();
  MatrixXd stacked(design.n(), design.k() + 1);
  stacked.col(0) = design.outcome;
  stacked.rightCols(design.k()) = design.regressors;
  DemeanResult r;
  const MatrixXd demeaned =
      demean_columns(stacked, design.fe_groups, design.weights, tol, max_iter, &r.iterations, &r.max_group_mean);
  r.design = design;
  r.design.outcome = demeaned.col(0);
  r.design.regressors = demeaned.rightCols(design.k());
  return r;
}

}  // namespace borderlab::panel

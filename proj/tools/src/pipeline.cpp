#include "borderlab/cli/pipeline.hpp"

#include "borderlab/cli/hash.hpp"
#include "borderlab/cli/report.hpp"
#include "borderlab/did.hpp"
#include "borderlab/error.hpp"
#include "borderlab/synth.hpp"

#include <Eigen/Core>

#include <cmath>
#include <fstream>
#include <limits>
#include <functional>
#include <optional>
#include <ostream>
#include <sstream>

namespace borderlab::cli {

namespace fs = std::filesystem;

dgp::Simulation simulate_from_config(const config::Config& cfg) {
  const auto dgp_cfg = config::dgp_config(cfg);
  if (auto shock = config::immigration_shock(cfg))
    return dgp::generate_shock_consistent(dgp_cfg, config::economy_params(cfg), *shock);
  return dgp::generate(dgp_cfg);
}

ArtifactWriter::ArtifactWriter(fs::path dir) : dir_(std::move(dir)) {
  std::error_code ec;
  fs::create_directories(dir_, ec);
  if (ec) throw Error("cannot create output directory " + dir_.string() + ": " + ec.message());
}

void ArtifactWriter::write(const std::string& name, const std::string& content) {
  const fs::path path = dir_ / name;
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << content;
  out.close();
  if (!out) throw Error("write failed for " + path.string());
  files_.emplace_back(name, sha256_hex(content));
}

namespace {

struct ComparisonRow {
  std::string stage;
  std::string term;
  double estimate = 0.0;
  double se = 0.0;
  std::optional<double> truth;
};

std::string dump(const Json& j) { return j.dump(2) + "\n"; }

std::string fmt(double v) { return std::isfinite(v) ? panel::format_double(v) : ""; }

class Pipeline {
 public:
  Pipeline(const config::Config& cfg, ArtifactWriter& writer) : cfg_(cfg), w_(writer) {}

  void run_stage(std::string_view name) {
    if (name == "simulate") return simulate();
    if (name == "main_did") return main_did();
    if (name == "retention") return retention();
    if (name == "education_heterogeneity") return heterogeneity(did::Dimension::Education, "education_heterogeneity");
    if (name == "exposure_heterogeneity") return exposure();
    if (name == "mover") return mover();
    if (name == "informal_pooled") return informal();
    if (name == "event_study") return event_study();
    if (name == "placebo") return placebo();
    if (name == "scm") return scm();
    if (name == "sdid") return sdid();
    throw Error("unknown stage " + std::string(name));
  }

  std::string comparison_csv() const {
    std::ostringstream os;
    os << "stage,term,estimate,se,truth,bias\n";
    for (const auto& r : rows_) {
      os << r.stage << ',' << r.term << ',' << fmt(r.estimate) << ',' << fmt(r.se) << ',';
      if (r.truth) os << fmt(*r.truth) << ',' << fmt(r.estimate - *r.truth);
      else os << ',';
      os << '\n';
    }
    return os.str();
  }

 private:
  void record(const std::string& stage, const did::EstimateResult& r, const TruthMap& truth,
              const std::string& prefix = {}) {
    for (std::size_t i = 0; i < r.names.size(); ++i) {
      ComparisonRow row{stage, prefix + r.names[i], r.coefficients(static_cast<Eigen::Index>(i)),
                        r.standard_errors(static_cast<Eigen::Index>(i)), std::nullopt};
      if (const auto it = truth.find(r.names[i]); it != truth.end()) row.truth = it->second;
      rows_.push_back(std::move(row));
    }
  }

  void simulate() {
    sim_ = simulate_from_config(cfg_);
    spec_ = config::estimation_spec(cfg_);
    const auto sample = config::sample_options(cfg_);
    {
      std::ostringstream p, r;
      panel::write_csv(sim_.panel, p);
      panel::write_ratio_csv(sim_.panel, r);
      w_.write("panel.csv", p.str());
      w_.write("vz_ratio.csv", r.str());
    }
    w_.write("truth.json", dump(truth_json(sim_.truth)));
    const auto summary = dgp::summary_statistics(sim_.panel);
    w_.write("summary.csv", summary_csv(summary));
    w_.write("summary.txt", summary_table(summary, sim_.panel.treated_state));
    sample_ = sample.enabled ? panel::apply_sample_rules(sim_.panel, sample.rules).panel : sim_.panel;
  }

  void main_did() {
    Json j = Json::object();
    std::string table;
    for (const auto treatment : {Treatment::Binary, Treatment::Continuous}) {
      auto spec = spec_;
      spec.treatment = treatment;
      if (spec.family == Family::EventStudy) spec.family = Family::Twfe;
      const auto r = did::estimate(sample_, spec);
      const auto truth = truth_for(r, spec, sim_.truth);
      const std::string key(to_string(treatment));
      j[key] = estimate_json(r, &truth);
      table += estimate_table(r, spec, &truth) + "\n";
      record("main_did:" + key, r, truth);
    }
    w_.write("main_did.json", dump(j));
    w_.write("main_did.txt", table);
  }

  void retention() {
    auto spec = spec_;
    spec.outcome = "retained";
    const auto r = did::retention_lpm(sample_, spec);
    const auto truth = truth_for(r, spec, sim_.truth);
    record("retention", r, truth);
    w_.write("retention.json", dump(estimate_json(r, &truth)));
  }

  void heterogeneity(did::Dimension dim, const std::string& stage) {
    auto spec = spec_;
    if (spec.family == Family::EventStudy) spec.family = Family::Twfe;
    const auto split = did::heterogeneity_split(sample_, spec, dim);
    Json j = Json::object();
    for (const auto& [label, r] : split) {
      std::string cohort;
      switch (dim) {
        case did::Dimension::Education: cohort = "education:" + label; break;
        case did::Dimension::ExposedActivity: cohort = std::string("exposed_activity:") + (label == "exposed" ? "1" : "0"); break;
        case did::Dimension::ExposedOccupation: cohort = std::string("exposed_occupation:") + (label == "exposed" ? "1" : "0"); break;
        case did::Dimension::Mover: break;
      }
      auto tspec = spec;
      if (dim == did::Dimension::Mover) tspec.outcome = "mover";
      const auto truth = truth_for(r, tspec, sim_.truth, cohort);
      record(stage, r, truth, label + ":");
      j[label] = estimate_json(r, &truth);
    }
    w_.write(stage + ".json", dump(j));
  }

  void exposure() {
    auto spec = spec_;
    if (spec.family == Family::EventStudy) spec.family = Family::Twfe;
    Json j = Json::object();
    for (const auto dim : {did::Dimension::ExposedActivity, did::Dimension::ExposedOccupation}) {
      const std::string prefix(did::to_string(dim));
      const auto split = did::heterogeneity_split(sample_, spec, dim);
      for (const auto& [label, r] : split) {
        const std::string cohort = prefix + ":" + (label == "exposed" ? "1" : "0");
        const auto truth = truth_for(r, spec, sim_.truth, cohort);
        record("exposure_heterogeneity", r, truth, prefix + ":" + label + ":");
        j[prefix][label] = estimate_json(r, &truth);
      }
    }
    w_.write("exposure_heterogeneity.json", dump(j));
  }

  void mover() { heterogeneity(did::Dimension::Mover, "mover"); }

  void informal() {
    if (!sim_.panel.has_informal()) {
      w_.write("informal_pooled.json", dump(Json{{"skipped", "no informal observations"}}));
      return;
    }
    auto spec = EstimationSpec::informal_pooled(Interaction::ExposedActivity);
    spec.covariates = spec_.covariates;
    const auto r = did::pooled_ols_did(sample_, spec);
    const auto truth = truth_for(r, spec, sim_.truth);
    record("informal_pooled", r, truth);
    w_.write("informal_pooled.json", dump(estimate_json(r, &truth)));
    w_.write("informal_pooled.txt", estimate_table(r, spec, &truth));
  }

  void event_study() {
    auto spec = spec_;
    spec.family = Family::EventStudy;
    spec.treatment = Treatment::Binary;
    const auto r = did::event_study(sample_, spec);
    const auto truth = truth_for(r, spec, sim_.truth);
    record("event_study", r, truth);
    w_.write("event_study.csv", event_study_csv(r, &truth));
    w_.write("event_study.json", dump(estimate_json(r, &truth)));
  }

  void placebo() {
    Json j = Json::object();
    for (const auto mode : {did::PlaceboMode::InSpace, did::PlaceboMode::InTime}) {
      const std::string key(did::to_string(mode));
      if (mode == did::PlaceboMode::InSpace && sample_.states().size() < 3) {
        j[key] = {{"skipped", "needs at least two control states"}};
        continue;
      }
      const auto estimates = did::placebo_suite(sample_, spec_, mode);
      for (const auto& e : estimates) {
        rows_.push_back({"placebo:" + key, e.label, e.result.treatment_coef(), e.result.treatment_se(), 0.0});
      }
      j[key] = placebo_json(estimates, key);
    }
    w_.write("placebo.json", dump(j));
  }

  void scm() {
    const auto agg = synth::aggregate_panel(sample_);
    const auto s = synth::scm_fit(agg);
    Json j = scm_json(s);
    if (agg.donor_indices().size() >= 3) {
      const auto p = synth::scm_placebo(agg);
      Json effects = Json::object();
      for (std::size_t i = 0; i < p.units.size(); ++i) effects[p.units[i]] = p.effects(static_cast<Eigen::Index>(i));
      j["placebo"] = {{"effects", effects}, {"treated_rank", p.treated_rank}};
    }
    rows_.push_back({"scm", "effect", s.effect, std::numeric_limits<double>::quiet_NaN(), sim_.truth.overall_att});
    w_.write("scm.json", dump(j));
    w_.write("scm_path.csv", path_csv(s.years, s.treated_path, s.synthetic_path));
  }

  void sdid() {
    const auto agg = synth::aggregate_panel(sample_);
    const auto s = synth::sdid_fit(agg, config::scm_options(cfg_).ridge);
    const Json j = sdid_json(s, agg);
    rows_.push_back({"sdid", "effect", s.estimate, std::numeric_limits<double>::quiet_NaN(), sim_.truth.overall_att});
    w_.write("sdid.json", dump(j));
    Eigen::VectorXd treated(static_cast<Eigen::Index>(agg.years.size())), synthetic(treated.size());
    for (std::size_t t = 0; t < agg.years.size(); ++t) {
      treated(static_cast<Eigen::Index>(t)) = j["path"][t][1].get<double>();
      synthetic(static_cast<Eigen::Index>(t)) = j["path"][t][2].get<double>();
    }
    w_.write("sdid_path.csv", path_csv(agg.years, treated, synthetic));
  }

  const config::Config& cfg_;
  ArtifactWriter& w_;
  dgp::Simulation sim_;
  panel::Panel sample_;
  EstimationSpec spec_;
  std::vector<ComparisonRow> rows_;
};

}  // namespace

PipelineResult run_pipeline(const config::Config& cfg, const fs::path& out_dir, std::ostream* log) {
  const std::uint64_t seed = config::dgp_config(cfg).seed;
  ArtifactWriter writer(out_dir);
  Pipeline pipeline(cfg, writer);
  PipelineResult result;
  result.ok = true;
  for (const auto stage : kStages) {
    StageRecord rec{std::string(stage), "skipped", {}, {}};
    if (result.ok) {
      const std::size_t before = writer.files().size();
      try {
        pipeline.run_stage(stage);
        rec.status = "ok";
      } catch (const std::exception& e) {
        rec.status = "failed";
        rec.detail = e.what();
        result.ok = false;
      }
      for (std::size_t i = before; i < writer.files().size(); ++i) rec.outputs.push_back(writer.files()[i].first);
      if (log) *log << "stage " << stage << ": " << rec.status << (rec.detail.empty() ? "" : " (" + rec.detail + ")") << '\n';
    }
    result.stages.push_back(std::move(rec));
  }
  if (result.ok) writer.write("truth_vs_estimate.csv", pipeline.comparison_csv());

  Json manifest;
  manifest["tool"] = "borderlab";
  manifest["versions"] = {{"borderlab", kVersion},
                          {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) +
                                        "." + std::to_string(EIGEN_MINOR_VERSION)}};
  manifest["seed"] = seed;
  manifest["status"] = result.ok ? "ok" : "failed";
  Json stages = Json::array();
  for (const auto& s : result.stages) {
    Json st = {{"name", s.name}, {"status", s.status}, {"outputs", s.outputs}};
    if (!s.detail.empty()) st["error"] = s.detail;
    stages.push_back(st);
  }
  manifest["stages"] = stages;
  Json files = Json::object();
  for (const auto& [name, hash] : writer.files()) files[name] = {{"sha256", hash}};
  manifest["files"] = files;

  result.manifest = out_dir / "manifest.json";
  std::ofstream out(result.manifest, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + result.manifest.string());
  out << manifest.dump(2) << '\n';
  return result;
}

}  // namespace borderlab::cli

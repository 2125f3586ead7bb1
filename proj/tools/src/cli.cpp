#include "borderlab/cli/cli.hpp"

#include "borderlab/cli/pipeline.hpp"
#include "borderlab/cli/report.hpp"
#include "borderlab/config.hpp"
#include "borderlab/did.hpp"
#include "borderlab/error.hpp"
#include "borderlab/parallel.hpp"
#include "borderlab/synth.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>

namespace borderlab::cli {

namespace fs = std::filesystem;

namespace {

struct UsageError : Error {
  using Error::Error;
};

struct Flags {
  std::string config;
  std::uint64_t seed = 0;
  std::string out;
  std::string format;
  int threads = 0;
  std::string panel;
  std::string ratio;
  std::string truth;
  std::string mode;
  bool has_seed = false, has_out = false, has_format = false, has_threads = false;
  bool has_panel = false, has_ratio = false, has_truth = false, has_mode = false;
};

struct Context {
  config::Config cfg;
  fs::path out_dir;
  bool explicit_out = false;
  std::string format;
  std::optional<std::string> panel, ratio, truth;
  std::string mode;
};

Context resolve(const Flags& f, const std::string& default_format) {
  Context ctx;
  if (!f.config.empty()) ctx.cfg = config::Config::load(f.config);
  config::check_known_keys(ctx.cfg);
  if (f.has_seed) ctx.cfg.set("dgp.seed", std::to_string(f.seed));
  const auto run = config::run_options(ctx.cfg);

  if (f.has_out) {
    ctx.out_dir = f.out;
    ctx.explicit_out = true;
  } else if (run.out) {
    ctx.out_dir = *run.out;
    ctx.explicit_out = true;
  } else if (const char* env = std::getenv("BORDERLAB_OUT"); env && *env) {
    ctx.out_dir = env;
    ctx.explicit_out = true;
  } else {
    ctx.out_dir = "borderlab_out";
  }

  ctx.format = f.has_format ? f.format : run.format.value_or(default_format);
  if (ctx.format != "json" && ctx.format != "csv" && ctx.format != "table")
    throw UsageError("--format must be json, csv or table, got '" + ctx.format + "'");

  const int threads = f.has_threads ? f.threads : run.threads.value_or(0);
  if (threads < 0) throw UsageError("--threads must be >= 0");
  if (threads > 0) set_max_threads(static_cast<std::size_t>(threads));

  ctx.panel = f.has_panel ? std::optional(f.panel) : run.panel;
  ctx.ratio = f.has_ratio ? std::optional(f.ratio) : run.ratio;
  ctx.truth = f.has_truth ? std::optional(f.truth) : run.truth;
  ctx.mode = f.has_mode ? f.mode : ctx.cfg.get_string("estimate.placebo_mode", "in_space");
  return ctx;
}

panel::Panel load_panel(const Context& ctx, std::ostream& err) {
  if (!ctx.panel) throw UsageError("a panel CSV is required (--panel or run.panel)");
  const auto dgp_cfg = config::dgp_config(ctx.cfg);
  panel::LoadOptions opts;
  opts.treated_state = dgp_cfg.treated_state;
  opts.treatment_year = dgp_cfg.treatment_year;
  std::optional<fs::path> ratio;
  if (ctx.ratio) {
    ratio = *ctx.ratio;
  } else if (const auto sibling = fs::path(*ctx.panel).parent_path() / "vz_ratio.csv"; fs::exists(sibling)) {
    ratio = sibling;
  }
  auto loaded = panel::load_csv(fs::path(*ctx.panel), opts, ratio);
  if (!loaded.rejected.empty())
    err << "warning: " << loaded.rejected.size() << " rows rejected (first at line " << loaded.rejected.front().line
        << ": " << loaded.rejected.front().reason << ")\n";
  const auto sample = config::sample_options(ctx.cfg);
  if (!sample.enabled) return std::move(loaded.panel);
  return panel::apply_sample_rules(loaded.panel, sample.rules).panel;
}

std::optional<dgp::GroundTruth> load_truth(const Context& ctx) {
  if (!ctx.truth) return std::nullopt;
  std::ifstream in(*ctx.truth);
  if (!in) throw Error("cannot read " + *ctx.truth);
  Json j;
  try {
    j = Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(*ctx.truth + ": " + e.what());
  }
  return truth_from_json(j);
}

void emit(const Context& ctx, std::ostream& out, const std::string& stem, const std::string& json,
          const std::string& csv, const std::string& table) {
  if (ctx.format == "json") out << json;
  else if (ctx.format == "csv") out << csv;
  else out << table;
  if (!ctx.explicit_out) return;
  ArtifactWriter w(ctx.out_dir);
  w.write(stem + ".json", json);
  w.write(stem + ".csv", csv);
  if (!table.empty()) w.write(stem + ".txt", table);
}

int cmd_simulate(const Context& ctx, std::ostream& out) {
  const auto sim = simulate_from_config(ctx.cfg);
  ArtifactWriter w(ctx.out_dir);
  std::ostringstream p, r;
  panel::write_csv(sim.panel, p);
  panel::write_ratio_csv(sim.panel, r);
  w.write("panel.csv", p.str());
  w.write("vz_ratio.csv", r.str());
  w.write("truth.json", truth_json(sim.truth).dump(2) + "\n");
  const auto rows = dgp::summary_statistics(sim.panel);
  if (ctx.format == "csv") {
    out << summary_csv(rows);
  } else if (ctx.format == "json") {
    Json j = Json::array();
    for (const auto& s : rows)
      j.push_back({{"group", s.group}, {"workers", s.workers}, {"observations", s.observations},
                   {"mean_wage", s.mean_wage}, {"female_share", s.female_share},
                   {"education_shares", s.education_shares}, {"mean_age", s.mean_age},
                   {"mean_tenure", s.mean_tenure}, {"mean_hours", s.mean_hours}});
    out << j.dump(2) << '\n';
  } else {
    out << summary_table(rows, sim.panel.treated_state);
    out << "wrote panel.csv, vz_ratio.csv, truth.json to " << ctx.out_dir.string() << '\n';
  }
  return kExitOk;
}

int cmd_estimate(const Context& ctx, std::ostream& out, std::ostream& err, bool event_study) {
  auto spec = config::estimation_spec(ctx.cfg);
  const auto dim_key = event_study ? std::nullopt : ctx.cfg.get("estimate.dimension");
  const did::Dimension dimension = dim_key ? did::parse_dimension(*dim_key) : did::Dimension::Education;
  if (event_study) spec.family = Family::EventStudy;
  const auto panel = load_panel(ctx, err);
  const auto truth = load_truth(ctx);

  if (!dim_key) {
    const auto r = did::estimate(panel, spec);
    TruthMap tm;
    if (truth) tm = truth_for(r, spec, *truth);
    const std::string json = estimate_json(r, &tm).dump(2) + "\n";
    const std::string csv = event_study ? event_study_csv(r, &tm) : estimate_csv(r, &tm);
    emit(ctx, out, event_study ? "event_study" : "estimate", json, csv, estimate_table(r, spec, &tm));
    return kExitOk;
  }

  const auto split = did::heterogeneity_split(panel, spec, dimension);
  Json j = Json::object();
  std::string csv, table;
  const std::string prefix(did::to_string(dimension));
  for (const auto& [label, r] : split) {
    TruthMap tm;
    if (truth) {
      std::string cohort;
      auto tspec = spec;
      if (dimension == did::Dimension::Education) cohort = "education:" + label;
      else if (dimension == did::Dimension::Mover) tspec.outcome = "mover";
      else cohort = prefix + ":" + (label == "exposed" ? "1" : "0");
      tm = truth_for(r, tspec, *truth, cohort);
    }
    j[label] = estimate_json(r, &tm);
    std::istringstream rows(estimate_csv(r, &tm));
    std::string line;
    std::getline(rows, line);
    if (csv.empty()) csv = "cohort," + line + "\n";
    while (std::getline(rows, line)) csv += label + "," + line + "\n";
    table += "[" + label + "]\n" + estimate_table(r, spec, &tm) + "\n";
  }
  emit(ctx, out, "estimate", j.dump(2) + "\n", csv, table);
  return kExitOk;
}

std::string synth_table(const std::string& title, const std::vector<std::string>& donors, const Eigen::VectorXd& w,
                        double effect, double mspe) {
  std::ostringstream os;
  os << title << '\n';
  for (std::size_t i = 0; i < donors.size(); ++i)
    os << "  weight " << donors[i] << ": " << panel::format_double(w(static_cast<Eigen::Index>(i))) << '\n';
  os << "  effect: " << panel::format_double(effect) << "\n  pre-period MSPE: " << panel::format_double(mspe) << '\n';
  return os.str();
}

int cmd_scm(const Context& ctx, std::ostream& out, std::ostream& err) {
  const auto agg = synth::aggregate_panel(load_panel(ctx, err));
  const auto s = synth::scm_fit(agg);
  Json j = scm_json(s);
  if (agg.donor_indices().size() >= 3) {
    const auto p = synth::scm_placebo(agg);
    Json effects = Json::object();
    for (std::size_t i = 0; i < p.units.size(); ++i) effects[p.units[i]] = p.effects(static_cast<Eigen::Index>(i));
    j["placebo"] = {{"effects", effects}, {"treated_rank", p.treated_rank}};
  }
  emit(ctx, out, "scm", j.dump(2) + "\n", path_csv(s.years, s.treated_path, s.synthetic_path),
       synth_table("Synthetic control", s.donors, s.weights, s.effect, s.mspe));
  return kExitOk;
}

int cmd_sdid(const Context& ctx, std::ostream& out, std::ostream& err) {
  const auto agg = synth::aggregate_panel(load_panel(ctx, err));
  const auto s = synth::sdid_fit(agg, config::scm_options(ctx.cfg).ridge);
  const Json j = sdid_json(s, agg);
  Eigen::VectorXd treated(static_cast<Eigen::Index>(agg.years.size())), synthetic(treated.size());
  for (std::size_t t = 0; t < agg.years.size(); ++t) {
    treated(static_cast<Eigen::Index>(t)) = j["path"][t][1].get<double>();
    synthetic(static_cast<Eigen::Index>(t)) = j["path"][t][2].get<double>();
  }
  emit(ctx, out, "sdid", j.dump(2) + "\n", path_csv(agg.years, treated, synthetic),
       synth_table("Synthetic difference-in-differences", s.donors, s.unit_weights, s.estimate,
                   j["mspe"].get<double>()));
  return kExitOk;
}

int cmd_placebo(const Context& ctx, std::ostream& out, std::ostream& err) {
  const auto mode = did::parse_placebo_mode(ctx.mode);
  const auto spec = config::estimation_spec(ctx.cfg);
  const auto estimates = did::placebo_suite(load_panel(ctx, err), spec, mode);
  std::ostringstream csv, table;
  csv << "label,coef,se,p_value\n";
  table << "Placebo (" << did::to_string(mode) << ")\n";
  for (const auto& e : estimates) {
    const double p = e.result.p_value(e.result.names.front());
    csv << e.label << ',' << panel::format_double(e.result.treatment_coef()) << ','
        << panel::format_double(e.result.treatment_se()) << ',' << panel::format_double(p) << '\n';
    table << "  " << e.label << ": " << panel::format_double(e.result.treatment_coef()) << stars(p) << " ("
          << panel::format_double(e.result.treatment_se()) << ")\n";
  }
  emit(ctx, out, "placebo", placebo_json(estimates, did::to_string(mode)).dump(2) + "\n", csv.str(), table.str());
  return kExitOk;
}

int cmd_pipeline(const Context& ctx, std::ostream& out) {
  const auto result = run_pipeline(ctx.cfg, ctx.out_dir, &out);
  out << "manifest: " << result.manifest.string() << '\n';
  return result.ok ? kExitOk : kExitFailure;
}

void add_common(CLI::App* sub, Flags& f, bool inputs, bool mode) {
  sub->add_option("--config", f.config, "Sectioned key=value config file")->check(CLI::ExistingFile);
  sub->add_option_function<std::uint64_t>("--seed", [&f](std::uint64_t v) { f.seed = v; f.has_seed = true; },
                                          "Master seed");
  sub->add_option_function<std::string>("--out", [&f](const std::string& v) { f.out = v; f.has_out = true; },
                                        "Output directory");
  sub->add_option_function<std::string>("--format", [&f](const std::string& v) { f.format = v; f.has_format = true; },
                                        "json | csv | table");
  sub->add_option_function<int>("--threads", [&f](int v) { f.threads = v; f.has_threads = true; },
                                "Worker thread cap");
  if (inputs) {
    sub->add_option_function<std::string>("--panel", [&f](const std::string& v) { f.panel = v; f.has_panel = true; },
                                          "Worker-year panel CSV");
    sub->add_option_function<std::string>("--ratio", [&f](const std::string& v) { f.ratio = v; f.has_ratio = true; },
                                          "Municipality-year exposure CSV");
    sub->add_option_function<std::string>("--truth", [&f](const std::string& v) { f.truth = v; f.has_truth = true; },
                                          "Ground-truth JSON written by simulate");
  }
  if (mode)
    sub->add_option_function<std::string>("--mode", [&f](const std::string& v) { f.mode = v; f.has_mode = true; },
                                          "in_space | in_time");
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"borderlab: simulation and estimation toolkit for local labor-market shocks", "borderlab"};
  app.require_subcommand(1);
  Flags flags;
  auto* simulate = app.add_subcommand("simulate", "Generate a synthetic panel with ground truth");
  auto* estimate = app.add_subcommand("estimate", "Difference-in-differences estimate");
  auto* event = app.add_subcommand("event-study", "Per-year event-study coefficients");
  auto* scm = app.add_subcommand("scm", "Synthetic control weights and path");
  auto* sdid = app.add_subcommand("sdid", "Synthetic difference-in-differences");
  auto* placebo = app.add_subcommand("placebo", "Placebo suite (in space or in time)");
  auto* pipeline = app.add_subcommand("pipeline", "Run every stage into one output directory");
  add_common(simulate, flags, false, false);
  add_common(estimate, flags, true, false);
  add_common(event, flags, true, false);
  add_common(scm, flags, true, false);
  add_common(sdid, flags, true, false);
  add_common(placebo, flags, true, true);
  add_common(pipeline, flags, false, false);

  try {
    app.parse(std::vector<std::string>(args.rbegin(), args.rend()));
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  Context ctx;
  try {
    std::string default_format = "table";
    if (event->parsed()) default_format = "csv";
    if (scm->parsed() || sdid->parsed() || placebo->parsed() || pipeline->parsed()) default_format = "json";
    ctx = resolve(flags, default_format);
    config::dgp_config(ctx.cfg);
    config::estimation_spec(ctx.cfg);
    config::sample_options(ctx.cfg);
    if (placebo->parsed()) did::parse_placebo_mode(ctx.mode);
  } catch (const std::exception& e) {
    err << "config error: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    if (simulate->parsed()) return cmd_simulate(ctx, out);
    if (estimate->parsed()) return cmd_estimate(ctx, out, err, false);
    if (event->parsed()) return cmd_estimate(ctx, out, err, true);
    if (scm->parsed()) return cmd_scm(ctx, out, err);
    if (sdid->parsed()) return cmd_sdid(ctx, out, err);
    if (placebo->parsed()) return cmd_placebo(ctx, out, err);
    if (pipeline->parsed()) return cmd_pipeline(ctx, out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace borderlab::cli

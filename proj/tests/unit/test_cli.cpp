#include "borderlab/cli/cli.hpp"
#include "borderlab/cli/hash.hpp"
#include "borderlab/cli/report.hpp"

#include <doctest.h>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>

namespace fs = std::filesystem;
using borderlab::cli::run;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("borderlab_test_" + name)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

int call(std::vector<std::string> args, std::string* out = nullptr, std::string* err = nullptr) {
  std::ostringstream o, e;
  const int code = run(args, o, e);
  if (out) *out = o.str();
  if (err) *err = e.str();
  return code;
}

const char* kSmall =
    "[dgp]\n"
    "n_workers_treated = 40\n"
    "n_workers_control = 60\n"
    "treated_municipalities = 4\n"
    "control_states = AP:3:0.1, AC:4:-0.1, AM:3\n";

}  // namespace

TEST_CASE("sha256 known vectors") {
  CHECK(borderlab::cli::sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CHECK(borderlab::cli::sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST_CASE("star thresholds") {
  using borderlab::cli::stars;
  CHECK(stars(0.2) == "");
  CHECK(stars(0.09) == "*");
  CHECK(stars(0.04) == "**");
  CHECK(stars(0.009) == "***");
}

TEST_CASE("simulate writes three deterministic files") {
  TempDir tmp("simulate");
  write(tmp.path / "cfg.ini", kSmall);
  std::string out;
  REQUIRE(call({"simulate", "--config", (tmp.path / "cfg.ini").string(), "--out", (tmp.path / "a").string()}, &out) == 0);
  REQUIRE(call({"simulate", "--config", (tmp.path / "cfg.ini").string(), "--out", (tmp.path / "b").string()}) == 0);
  CHECK(out.find("Mean monthly wage") != std::string::npos);
  std::size_t files = 0;
  for (const auto& entry : fs::directory_iterator(tmp.path / "a")) {
    ++files;
    CHECK(slurp(entry.path()) == slurp(tmp.path / "b" / entry.path().filename()));
  }
  CHECK(files == 3);
  CHECK(fs::exists(tmp.path / "a" / "panel.csv"));
  CHECK(fs::exists(tmp.path / "a" / "vz_ratio.csv"));
  CHECK(fs::exists(tmp.path / "a" / "truth.json"));
}

TEST_CASE("invalid mixture is a config error naming the field") {
  TempDir tmp("badmix");
  write(tmp.path / "cfg.ini", "[dgp]\neducation_mix_treated = 0.9, 0.9, 0.1\n");
  std::string err;
  CHECK(call({"simulate", "--config", (tmp.path / "cfg.ini").string(), "--out", tmp.path.string()}, nullptr, &err) == 2);
  CHECK(err.find("education_mix_treated") != std::string::npos);
}

TEST_CASE("usage errors") {
  CHECK(call({}) == 2);
  CHECK(call({"frobnicate"}) == 2);
  CHECK(call({"estimate", "--format", "xml", "--panel", "x.csv"}) == 2);
  CHECK(call({"estimate"}) == 2);
  CHECK(call({"--help"}) == 0);
}

TEST_CASE("estimate table, csv and truth bias") {
  TempDir tmp("estimate");
  write(tmp.path / "cfg.ini", kSmall);
  const auto cfg = (tmp.path / "cfg.ini").string();
  REQUIRE(call({"simulate", "--config", cfg, "--out", tmp.path.string()}) == 0);
  const auto panel = (tmp.path / "panel.csv").string();
  const auto ratio = (tmp.path / "vz_ratio.csv").string();
  std::string table;
  REQUIRE(call({"estimate", "--config", cfg, "--panel", panel, "--ratio", ratio}, &table) == 0);
  CHECK(table.find("Treat: Binary") != std::string::npos);
  CHECK(table.find("Worker FE") != std::string::npos);
  CHECK(table.find("N Clusters") != std::string::npos);
  CHECK(table.find("* p < 0.1, ** p < 0.05, *** p < 0.01") != std::string::npos);

  std::string json;
  REQUIRE(call({"estimate", "--config", cfg, "--panel", panel, "--ratio", ratio, "--truth",
                (tmp.path / "truth.json").string(), "--format", "json"},
               &json) == 0);
  const auto j = nlohmann::json::parse(json);
  const auto truth = nlohmann::json::parse(slurp(tmp.path / "truth.json"));
  const double coef = j["coef"]["treat"].get<double>();
  const double t = truth["overall_att"].get<double>();
  CHECK(j["truth"]["treat"].get<double>() == t);
  CHECK(j["bias"]["treat"].get<double>() == doctest::Approx(coef - t).epsilon(1e-15));

  // vz_ratio.csv beside the panel is picked up without --ratio.
  write(tmp.path / "cont.ini", std::string(kSmall) + "[estimate]\ntreatment = continuous\n");
  std::string cont;
  CHECK(call({"estimate", "--config", (tmp.path / "cont.ini").string(), "--panel", panel}, &cont) == 0);
  CHECK(cont.find("Treat: VZ Ratio x 100") != std::string::npos);
}

TEST_CASE("event-study csv leaves a gap at the reference year") {
  TempDir tmp("event");
  write(tmp.path / "cfg.ini", kSmall);
  const auto cfg = (tmp.path / "cfg.ini").string();
  REQUIRE(call({"simulate", "--config", cfg, "--out", tmp.path.string()}) == 0);
  std::string csv;
  REQUIRE(call({"event-study", "--config", cfg, "--panel", (tmp.path / "panel.csv").string(), "--ratio",
                (tmp.path / "vz_ratio.csv").string()},
               &csv) == 0);
  CHECK(csv.rfind("year,coef,se", 0) == 0);
  CHECK(csv.find("\n2012,") != std::string::npos);
  CHECK(csv.find("\n2013,") == std::string::npos);
  CHECK(csv.find("\n2014,") != std::string::npos);
}

TEST_CASE("scm, sdid and placebo subcommands") {
  TempDir tmp("synth");
  write(tmp.path / "cfg.ini", kSmall);
  const auto cfg = (tmp.path / "cfg.ini").string();
  REQUIRE(call({"simulate", "--config", cfg, "--out", tmp.path.string()}) == 0);
  const auto panel = (tmp.path / "panel.csv").string();
  std::string out;
  REQUIRE(call({"scm", "--config", cfg, "--panel", panel}, &out) == 0);
  auto j = nlohmann::json::parse(out);
  CHECK(j["weights"].size() == 3);
  CHECK(j.contains("placebo"));
  REQUIRE(call({"sdid", "--config", cfg, "--panel", panel}, &out) == 0);
  j = nlohmann::json::parse(out);
  CHECK(j["time_weights"].size() == 6);
  REQUIRE(call({"placebo", "--config", cfg, "--panel", panel, "--mode", "in_time"}, &out) == 0);
  j = nlohmann::json::parse(out);
  CHECK(j["mode"] == "in_time");
  CHECK(j["estimates"].size() == 5);
  CHECK(call({"placebo", "--config", cfg, "--panel", panel, "--mode", "sideways"}) == 2);
}

TEST_CASE("estimator failures exit with 1") {
  TempDir tmp("fail");
  write(tmp.path / "cfg.ini", std::string(kSmall) + "[estimate]\ncontrol_states = ZZ\n");
  const auto cfg = (tmp.path / "cfg.ini").string();
  REQUIRE(call({"simulate", "--config", cfg, "--out", tmp.path.string()}) == 0);
  std::string err;
  CHECK(call({"estimate", "--config", cfg, "--panel", (tmp.path / "panel.csv").string()}, nullptr, &err) == 1);
  CHECK(err.find("error:") != std::string::npos);
  CHECK(call({"estimate", "--config", cfg, "--panel", (tmp.path / "missing.csv").string()}) == 1);
}

TEST_CASE("pipeline manifest lists stages and hashes") {
  TempDir tmp("pipeline");
  write(tmp.path / "cfg.ini",
        "[dgp]\nn_workers_treated = 300\nn_workers_control = 400\ntreated_municipalities = 6\n"
        "control_states = AP:5:0.1, AC:5:-0.1, AM:4\n");
  const auto out = tmp.path / "run";
  REQUIRE(call({"pipeline", "--config", (tmp.path / "cfg.ini").string(), "--out", out.string()}) == 0);
  const auto manifest = nlohmann::json::parse(slurp(out / "manifest.json"));
  CHECK(manifest["status"] == "ok");
  CHECK(manifest["stages"].size() == 11);
  for (const auto& s : manifest["stages"]) CHECK(s["status"] == "ok");
  std::size_t listed = 0;
  for (const auto& [name, entry] : manifest["files"].items()) {
    ++listed;
    CHECK(entry["sha256"] == borderlab::cli::sha256_file(out / name));
  }
  std::size_t on_disk = 0;
  for (const auto& e : fs::directory_iterator(out))
    if (e.path().filename() != "manifest.json") ++on_disk;
  CHECK(listed == on_disk);
  const auto table = slurp(out / "truth_vs_estimate.csv");
  CHECK(table.rfind("stage,term,estimate,se,truth,bias\n", 0) == 0);
  CHECK(table.find("main_did:binary,treat,") != std::string::npos);
}

TEST_CASE("pipeline stops at the first failing stage") {
  TempDir tmp("pipefail");
  write(tmp.path / "cfg.ini",
        "[dgp]\nn_workers_treated = 300\nn_workers_control = 300\ntreated_municipalities = 5\ncontrol_states = AP:5\n");
  const auto out = tmp.path / "run";
  std::string log;
  CHECK(call({"pipeline", "--config", (tmp.path / "cfg.ini").string(), "--out", out.string()}, &log) == 1);
  const auto manifest = nlohmann::json::parse(slurp(out / "manifest.json"));
  CHECK(manifest["status"] == "failed");
  const auto& stages = manifest["stages"];
  REQUIRE(stages.size() == 11);
  CHECK(stages[0]["status"] == "ok");
  CHECK(stages[9]["name"] == "scm");
  CHECK(stages[9]["status"] == "failed");
  CHECK(stages[10]["status"] == "skipped");
  CHECK(fs::exists(out / "panel.csv"));
}

TEST_CASE("BORDERLAB_OUT sets the output directory") {
  TempDir tmp("envout");
  write(tmp.path / "cfg.ini", kSmall);
  const auto target = tmp.path / "from_env";
  ::setenv("BORDERLAB_OUT", target.string().c_str(), 1);
  const int code = call({"simulate", "--config", (tmp.path / "cfg.ini").string(), "--format", "csv"});
  ::unsetenv("BORDERLAB_OUT");
  CHECK(code == 0);
  CHECK(fs::exists(target / "panel.csv"));
}

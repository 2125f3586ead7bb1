#pragma once

#include "borderlab/config.hpp"
#include "borderlab/dgp.hpp"

#include <array>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace borderlab::cli {

inline constexpr std::string_view kVersion = "0.3.0";

inline constexpr std::array<std::string_view, 11> kStages{
    "simulate",  "main_did",       "retention",   "education_heterogeneity", "exposure_heterogeneity", "mover",
    "informal_pooled", "event_study", "placebo", "scm", "sdid"};

/// Simulates from the [dgp] block; a [shock] block switches to the
/// shock-consistent generator.
dgp::Simulation simulate_from_config(const config::Config& cfg);

/// Writes files into one directory and remembers their content hashes.
class ArtifactWriter {
 public:
  explicit ArtifactWriter(std::filesystem::path dir);
  void write(const std::string& name, const std::string& content);
  const std::filesystem::path& dir() const { return dir_; }
  /// (file name, sha256) in write order.
  const std::vector<std::pair<std::string, std::string>>& files() const { return files_; }

 private:
  std::filesystem::path dir_;
  std::vector<std::pair<std::string, std::string>> files_;
};

struct StageRecord {
  std::string name;
  std::string status;  // ok | failed | skipped
  std::string detail;
  std::vector<std::string> outputs;
};

struct PipelineResult {
  bool ok = false;
  std::vector<StageRecord> stages;
  std::filesystem::path manifest;
};

/// Runs every stage in order, stopping at the first failure. manifest.json is
/// written either way.
PipelineResult run_pipeline(const config::Config& cfg, const std::filesystem::path& out_dir, std::ostream* log = nullptr);

}  // namespace borderlab::cli

#pragma once

#include "borderlab/dgp.hpp"
#include "borderlab/economy.hpp"
#include "borderlab/estimation_spec.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace borderlab::config {

/// Sectioned key/value settings. Keys are addressed as "section.key"; keys
/// outside any section keep their bare name.
class Config {
 public:
  static Config parse(std::istream& in);
  static Config parse_string(const std::string& text);
  static Config load(const std::filesystem::path& path);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  std::optional<std::string> get(const std::string& key) const;
  void set(const std::string& key, std::string value) { values_[key] = std::move(value); }
  const std::map<std::string, std::string>& values() const { return values_; }

  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  int get_int(const std::string& key, int fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<double> get_doubles(const std::string& key, const std::vector<double>& fallback) const;
  std::vector<std::string> get_strings(const std::string& key, const std::vector<std::string>& fallback) const;

 private:
  std::map<std::string, std::string> values_;
};

/// Rejects keys that no loader understands, naming the first one.
void check_known_keys(const Config& cfg);

dgp::DgpConfig dgp_config(const Config& cfg);
economy::EconomyParams economy_params(const Config& cfg);
/// Present when a [shock] section is given.
std::optional<economy::ImmigrationShock> immigration_shock(const Config& cfg);
economy::BorderTownParams border_town_params(const Config& cfg);
EstimationSpec estimation_spec(const Config& cfg);

struct ScmOptions {
  double ridge = 1e-6;
};
ScmOptions scm_options(const Config& cfg);

/// Wage sample rules applied before estimation (on by default).
struct SampleOptions {
  bool enabled = true;
  panel::SampleRules rules;
};
SampleOptions sample_options(const Config& cfg);

struct RunOptions {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::string> format;
  std::optional<int> threads;
  std::optional<std::string> panel;
  std::optional<std::string> ratio;
  std::optional<std::string> truth;
};
RunOptions run_options(const Config& cfg);

}  // namespace borderlab::config

#pragma once

#include "tiltlab/agent.hpp"
#include "tiltlab/mdt.hpp"
#include "tiltlab/scenario.hpp"

#include <filesystem>
#include <functional>
#include <map>
#include <string>

namespace tiltlab {

struct StressConfig {
  std::vector<Scalar> d_ranges{0.0, 0.25, 0.5, 1.0};
  int eval_episodes = 50;
  std::uint64_t first_eval_seed = 5000;
};

struct RunConfig {
  ScenarioConfig scenario;
  SynthesisParams dataset;
  int baseline_tilt = 1;  // tilt index of every simulated cell in the MDT campaign
  NetworkEnvConfig env;
  std::string cqi_table_path;  // empty: built-in table
  AgentConfig agent;
  StressConfig stress;
  std::string experiment = "train";
  std::vector<std::uint64_t> seeds{1};
  std::filesystem::path output_dir = "runs";
  int workers = 0;  // 0: hardware concurrency

  /// Throws ConfigError on any violated invariant.
  void validate() const;
};

inline constexpr const char* kEnvOverridePrefix = "TILTLAB_";

/// Applies `TILTLAB_A__B=value` as j["a"]["b"] = value. Values are parsed as JSON when possible,
/// otherwise kept as strings.
void apply_env_overrides(nlohmann::json& j, const std::map<std::string, std::string>& vars);
std::map<std::string, std::string> prefixed_environment(const char* prefix = kEnvOverridePrefix);

/// Relative file references (scenario_file, cqi_table) resolve against `base_dir`.
RunConfig parse_run_config(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path, const std::map<std::string, std::string>& overrides = {});

nlohmann::json resolved_json(const RunConfig& cfg);

/// FNV-1a 64 of the compact resolved config, as 16 hex digits.
std::string config_hash(const RunConfig& cfg);
std::string fnv1a_hex(std::string_view bytes);

/// "N" or "N..M" (inclusive).
std::vector<std::uint64_t> parse_seed_range(const std::string& text);

/// Grids, dataset and baseline built from a run config; environments share the immutable parts.
struct Lab {
  RunConfig config;
  std::shared_ptr<const RsrpGridSet> grids;
  std::shared_ptr<const MdtDataset> dataset;

  std::unique_ptr<NetworkEnv> make_env() const;
};

/// When `cache_dir` is non-empty, grids and dataset are read from it if present (keyed by a hash of
/// the inputs they depend on) and written there otherwise.
Lab build_lab(const RunConfig& cfg, const std::filesystem::path& cache_dir = {});

/// Runs fn(i) for i in [0, n) on at most `workers` threads.
void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn);

}  // namespace tiltlab

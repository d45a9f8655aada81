#include "tiltlab/run_config.hpp"

#include <atomic>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <thread>

extern char** environ;

namespace tiltlab {

namespace {

template <typename T>
void opt(const nlohmann::json& j, const char* key, T& field) {
  if (j.contains(key)) j.at(key).get_to(field);
}

std::string lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

nlohmann::json coverage_json(const CoverageCostParams& c) {
  return {{"full_band_low", c.full_band_low}, {"penalty_band_low", c.penalty_band_low},
          {"base", c.base},                   {"offset", c.offset},
          {"scale", c.scale},                 {"out_penalty", c.out_penalty},
          {"nl_threshold_dbm", c.nl_threshold_dbm}, {"il_threshold_db", c.il_threshold_db}};
}

void coverage_from(const nlohmann::json& j, CoverageCostParams& c) {
  opt(j, "full_band_low", c.full_band_low);
  opt(j, "penalty_band_low", c.penalty_band_low);
  opt(j, "base", c.base);
  opt(j, "offset", c.offset);
  opt(j, "scale", c.scale);
  opt(j, "out_penalty", c.out_penalty);
  opt(j, "nl_threshold_dbm", c.nl_threshold_dbm);
  opt(j, "il_threshold_db", c.il_threshold_db);
}

nlohmann::json bounds_json(const ObservationBounds& b) {
  return {{"rsrp_min", b.rsrp_min}, {"rsrp_max", b.rsrp_max}, {"sinr_min", b.sinr_min},
          {"sinr_max", b.sinr_max}, {"weight_percentile", b.weight_percentile}};
}

void bounds_from(const nlohmann::json& j, ObservationBounds& b) {
  opt(j, "rsrp_min", b.rsrp_min);
  opt(j, "rsrp_max", b.rsrp_max);
  opt(j, "sinr_min", b.sinr_min);
  opt(j, "sinr_max", b.sinr_max);
  opt(j, "weight_percentile", b.weight_percentile);
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  const std::filesystem::path path(p);
  return path.is_relative() && !base.empty() ? base / path : path;
}

}  // namespace

void RunConfig::validate() const {
  scenario.validate();
  env.scheduler.validate();
  if (baseline_tilt < 0 || baseline_tilt >= scenario.num_tilts()) throw ConfigError("baseline_tilt outside the tilt set");
  if (seeds.empty()) throw ConfigError("seeds must not be empty");
  if (agent.train_episodes < 1) throw ConfigError("agent.train_episodes must be positive");
  if (agent.eps_min < 0.0 || agent.eps_max > 1.0 || agent.eps_min > agent.eps_max)
    throw ConfigError("agent eps bounds must satisfy 0 <= eps_min <= eps_max <= 1");
  if (stress.eval_episodes < 1) throw ConfigError("stress.eval_episodes must be positive");
  for (Scalar d : stress.d_ranges)
    if (d < 0.0) throw ConfigError("stress.d_ranges must be non-negative");
  if (workers < 0) throw ConfigError("workers must be >= 0");
}

void apply_env_overrides(nlohmann::json& j, const std::map<std::string, std::string>& vars) {
  const std::string prefix = kEnvOverridePrefix;
  for (const auto& [name, value] : vars) {
    if (name.rfind(prefix, 0) != 0) continue;
    std::string rest = lower(name.substr(prefix.size()));
    nlohmann::json* node = &j;
    std::size_t pos;
    while ((pos = rest.find("__")) != std::string::npos) {
      node = &(*node)[rest.substr(0, pos)];
      rest = rest.substr(pos + 2);
    }
    nlohmann::json parsed = nlohmann::json::parse(value, nullptr, false);
    (*node)[rest] = parsed.is_discarded() ? nlohmann::json(value) : parsed;
  }
}

std::map<std::string, std::string> prefixed_environment(const char* prefix) {
  std::map<std::string, std::string> out;
  const std::string p = prefix;
  for (char** e = environ; e && *e; ++e) {
    const std::string kv = *e;
    const auto eq = kv.find('=');
    if (eq == std::string::npos || kv.rfind(p, 0) != 0) continue;
    out[kv.substr(0, eq)] = kv.substr(eq + 1);
  }
  return out;
}

std::vector<std::uint64_t> parse_seed_range(const std::string& text) {
  try {
    const auto dots = text.find("..");
    if (dots == std::string::npos) return {std::stoull(text)};
    const std::uint64_t lo = std::stoull(text.substr(0, dots));
    const std::uint64_t hi = std::stoull(text.substr(dots + 2));
    if (hi < lo) throw ConfigError("seed range " + text + " is empty");
    std::vector<std::uint64_t> out;
    for (std::uint64_t s = lo; s <= hi; ++s) out.push_back(s);
    return out;
  } catch (const std::logic_error&) {
    throw ConfigError("bad seed specification '" + text + "' (expected N or N..M)");
  }
}

RunConfig parse_run_config(const nlohmann::json& j, const std::filesystem::path& base_dir) {
  RunConfig c;
  try {
    if (j.contains("scenario_file")) {
      std::ifstream is(resolve(base_dir, j.at("scenario_file").get<std::string>()));
      if (!is) throw ConfigError("cannot open scenario_file " + j.at("scenario_file").get<std::string>());
      nlohmann::json::parse(is).get_to(c.scenario);
    }
    if (j.contains("scenario")) j.at("scenario").get_to(c.scenario);
    opt(j, "dataset", c.dataset);
    opt(j, "baseline_tilt", c.baseline_tilt);
    if (j.contains("env")) {
      const auto& e = j.at("env");
      if (e.contains("reward_mode")) {
        const auto m = e.at("reward_mode").get<std::string>();
        if (m == "case1") c.env.reward_mode = RewardMode::Case1;
        else if (m == "case2") c.env.reward_mode = RewardMode::Case2;
        else throw ConfigError("env.reward_mode must be case1 or case2");
      }
      opt(e, "scheduler", c.env.scheduler);
      if (e.contains("coverage")) coverage_from(e.at("coverage"), c.env.coverage);
      if (e.contains("bounds")) bounds_from(e.at("bounds"), c.env.bounds);
      e.get_to(c.env.options);
      if (e.contains("cqi_table")) {
        c.cqi_table_path = resolve(base_dir, e.at("cqi_table").get<std::string>()).string();
        std::ifstream is(c.cqi_table_path);
        if (!is) throw ConfigError("cannot open cqi_table " + c.cqi_table_path);
        c.env.cqi_table = CqiTable::from_csv(is);
      }
    }
    opt(j, "agent", c.agent);
    if (j.contains("stress")) {
      const auto& s = j.at("stress");
      opt(s, "d_ranges", c.stress.d_ranges);
      opt(s, "eval_episodes", c.stress.eval_episodes);
      opt(s, "first_eval_seed", c.stress.first_eval_seed);
    }
    opt(j, "experiment", c.experiment);
    if (j.contains("seeds")) {
      const auto& s = j.at("seeds");
      c.seeds = s.is_string() ? parse_seed_range(s.get<std::string>()) : s.get<std::vector<std::uint64_t>>();
    }
    if (j.contains("output_dir")) c.output_dir = j.at("output_dir").get<std::string>();
    opt(j, "workers", c.workers);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path, const std::map<std::string, std::string>& overrides) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config " + path.string());
  nlohmann::json j = nlohmann::json::parse(is, nullptr, false);
  if (j.is_discarded()) throw ConfigError("config " + path.string() + " is not valid JSON");
  apply_env_overrides(j, overrides);
  return parse_run_config(j, path.parent_path());
}

nlohmann::json resolved_json(const RunConfig& c) {
  nlohmann::json env = c.env.options;
  env["reward_mode"] = c.env.reward_mode == RewardMode::Case1 ? "case1" : "case2";
  env["scheduler"] = c.env.scheduler;
  env["coverage"] = coverage_json(c.env.coverage);
  env["bounds"] = bounds_json(c.env.bounds);
  nlohmann::json cqi = nlohmann::json::array();
  for (const auto& r : c.env.cqi_table.rows()) cqi.push_back({r.cqi, r.sinr_threshold_db, r.spectral_efficiency});
  env["cqi_rows"] = cqi;
  return {{"scenario", c.scenario},
          {"dataset", c.dataset},
          {"baseline_tilt", c.baseline_tilt},
          {"env", env},
          {"agent", c.agent},
          {"stress",
           {{"d_ranges", c.stress.d_ranges},
            {"eval_episodes", c.stress.eval_episodes},
            {"first_eval_seed", c.stress.first_eval_seed}}},
          {"experiment", c.experiment},
          {"seeds", c.seeds}};
}

std::string fnv1a_hex(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string config_hash(const RunConfig& cfg) { return fnv1a_hex(resolved_json(cfg).dump()); }

std::unique_ptr<NetworkEnv> Lab::make_env() const {
  return std::make_unique<NetworkEnv>(grids, dataset, config.scenario.target_cells, config.env);
}

Lab build_lab(const RunConfig& cfg, const std::filesystem::path& cache_dir) {
  Lab lab;
  lab.config = cfg;
  const nlohmann::json scenario_json = cfg.scenario;
  const std::string grid_key = fnv1a_hex(scenario_json.dump());
  const std::string data_key =
      fnv1a_hex(nlohmann::json{{"s", scenario_json}, {"d", cfg.dataset}, {"b", cfg.baseline_tilt}}.dump());

  std::filesystem::path grid_file, pixel_file, kpi_file;
  if (!cache_dir.empty()) {
    std::filesystem::create_directories(cache_dir);
    grid_file = cache_dir / ("grids-" + grid_key + ".bin");
    pixel_file = cache_dir / ("mdt-" + data_key + ".jsonl");
    kpi_file = cache_dir / ("mdt-" + data_key + ".kpi.json");
  }

  if (!grid_file.empty() && std::filesystem::exists(grid_file)) {
    lab.grids = std::make_shared<const RsrpGridSet>(load_grids(grid_file, cfg.scenario));
  } else {
    auto g = std::make_shared<RsrpGridSet>(generate_grids(cfg.scenario));
    if (!grid_file.empty()) save_grids(grid_file, *g);
    lab.grids = std::move(g);
  }

  if (!pixel_file.empty() && std::filesystem::exists(pixel_file) && std::filesystem::exists(kpi_file)) {
    lab.dataset = std::make_shared<const MdtDataset>(read_dataset_jsonl(pixel_file, kpi_file));
  } else {
    const TiltAssignment baseline(lab.grids->num_cells(), cfg.baseline_tilt);
    auto d = std::make_shared<MdtDataset>(build_dataset(*lab.grids, baseline, cfg.dataset));
    if (!pixel_file.empty()) write_dataset_jsonl(pixel_file, kpi_file, *d);
    lab.dataset = std::move(d);
  }
  return lab;
}

void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn) {
  const std::size_t hw = std::max(1u, std::thread::hardware_concurrency());
  const std::size_t w = std::min<std::size_t>(n, workers > 0 ? static_cast<std::size_t>(workers) : hw);
  if (w <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::jthread> pool;
  for (std::size_t t = 0; t < w; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  pool.clear();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace tiltlab

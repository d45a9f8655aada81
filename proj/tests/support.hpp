#pragma once

#include "tiltlab/run_config.hpp"

#include <filesystem>

namespace tiltlab::testing {

/// One site, three sectors, 12x12 pixels; targets 0 and 1, boundary 2.
inline ScenarioConfig small_scenario(std::uint64_t seed = 3) {
  ScenarioConfig c;
  c.sites = {{300.0, 300.0}};
  c.target_cells = {0, 1};
  c.boundary_cells = {2};
  c.tilt_set_deg = {0.0, -6.0};
  c.grid_y = 12;
  c.grid_z = 12;
  c.seed = seed;
  return c;
}

inline SynthesisParams small_synthesis() {
  SynthesisParams p;
  p.n_calls = 4000;
  p.min_samples = 3;
  p.min_interferers = 1;
  return p;
}

struct SmallLab {
  std::shared_ptr<const RsrpGridSet> grids;
  std::shared_ptr<const MdtDataset> dataset;
  ScenarioConfig scenario;
};

inline SmallLab small_lab(std::uint64_t seed = 3) {
  SmallLab lab;
  lab.scenario = small_scenario(seed);
  auto grids = std::make_shared<RsrpGridSet>(generate_grids(lab.scenario));
  const TiltAssignment baseline(grids->num_cells(), 0);
  lab.dataset = std::make_shared<const MdtDataset>(build_dataset(*grids, baseline, small_synthesis()));
  lab.grids = std::move(grids);
  return lab;
}

inline std::unique_ptr<NetworkEnv> small_env(const SmallLab& lab, NetworkEnvConfig cfg = {}) {
  return std::make_unique<NetworkEnv>(lab.grids, lab.dataset, lab.scenario.target_cells, std::move(cfg));
}

inline std::filesystem::path temp_path(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "tiltlab-tests";
  std::filesystem::create_directories(dir);
  return dir / name;
}

}  // namespace tiltlab::testing

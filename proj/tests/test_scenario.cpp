#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "support.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

using namespace tiltlab;

TEST_CASE("path loss follows the log-distance law") {
  PathLossModel pl;
  CHECK(path_loss_db(pl, 1000.0) == doctest::Approx(128.1).epsilon(1e-12));
  CHECK(path_loss_db(pl, 2000.0) == doctest::Approx(128.1 + 37.6 * std::log10(2.0)).epsilon(1e-12));
  CHECK(path_loss_db(pl, 0.0) == path_loss_db(pl, pl.min_distance_m));
}

TEST_CASE("antenna pattern matches the parabolic main lobe") {
  AntennaPattern ant;
  auto vertical = [&](double el, double tilt) { return -std::min(12.0 * std::pow((el - tilt) / 10.0, 2), 20.0); };
  auto horizontal = [&](double az) { return -std::min(12.0 * std::pow(az / 65.0, 2), 20.0); };
  for (double el : {-1.0, -3.5, -9.0}) {
    for (double tilt : {0.0, -6.0}) {
      for (double az : {0.0, 30.0, -50.0, 170.0}) {
        const double expected = -std::min(-(vertical(el, tilt) + horizontal(az)), 20.0);
        CHECK(antenna_gain_db(ant, el, az, tilt) == doctest::Approx(expected).epsilon(1e-12));
      }
    }
  }
  CHECK(antenna_gain_db(ant, -6.0, 0.0, -6.0) == 0.0);
  CHECK(antenna_gain_db(ant, -6.0, 200.0, -6.0) == antenna_gain_db(ant, -6.0, -160.0, -6.0));
}

TEST_CASE("grid set shape and value bounds") {
  const ScenarioConfig cfg = testing::small_scenario();
  const RsrpGridSet g = generate_grids(cfg);
  CHECK(g.num_cells() == 3);
  CHECK(g.num_tilts() == 2);
  CHECK(g.cells() == std::vector<CellId>{0, 1, 2});
  for (int c = 0; c < g.num_cells(); ++c)
    for (int t = 0; t < g.num_tilts(); ++t) {
      CHECK(g.at(c, t).allFinite());
      CHECK(g.at(c, t).maxCoeff() <= cfg.tx_power_dbm);
    }
  CHECK(generate_grids(cfg) == g);
  CHECK_FALSE(generate_grids(testing::small_scenario(4)) == g);
}

TEST_CASE("distance-only grids are symmetric about the site") {
  ScenarioConfig cfg = testing::small_scenario();
  cfg.antenna.a_max_db = 0.0;
  cfg.shadowing_sigma_db = 0.0;
  const RsrpGridSet g = generate_grids(cfg);
  const Grid& a = g.at(0, 0);
  for (int y = 0; y < 12; ++y)
    for (int z = 0; z < 12; ++z) {
      CHECK(a(y, z) == a(11 - y, z));
      CHECK(a(y, z) == a(y, 11 - z));
      CHECK(a(y, z) == g.at(2, 1)(y, z));
    }
}

TEST_CASE("downtilt lowers the far-field rsrp along the boresight") {
  ScenarioConfig cfg = testing::small_scenario();
  cfg.sites = {{25.0, 300.0}};
  cfg.grid_z = 24;
  cfg.shadowing_sigma_db = 0.0;
  const RsrpGridSet g = generate_grids(cfg);
  const int y = 5;  // pixel centre row at 275 m, close to the boresight of sector 0 (east)
  for (int z = 12; z < 24; ++z) CHECK(g.at(0, 1)(y, z) < g.at(0, 0)(y, z));
}

TEST_CASE("clamped pixels are counted per site") {
  ScenarioConfig cfg = testing::small_scenario();
  cfg.sites = {{25.0, 25.0}};
  cfg.path_loss.min_distance_m = 40.0;
  CHECK(generate_grids(cfg).clamped_pixels == 1);
}

TEST_CASE("serving cell is the strongest, lowest id on ties") {
  RsrpGridSet g({0, 1, 2}, 1, 1, 2);
  g.at(0, 0) << -90.0, -80.0;
  g.at(1, 0) << -80.0, -80.0;
  g.at(2, 0) << -100.0, -95.0;
  const CellGrid s = serving_cell_map(g, {0, 0, 0});
  CHECK(s(0, 0) == 1);
  CHECK(s(0, 1) == 0);

  RsrpGridSet one({4}, 2, 3, 3);
  CHECK((serving_cell_map(one, {1}) == 0).all());
}

TEST_CASE("serving map is consistent under a permutation of the cells") {
  const RsrpGridSet g = generate_grids(testing::small_scenario());
  const std::vector<int> perm{2, 0, 1};
  RsrpGridSet h({0, 1, 2}, g.num_tilts(), g.rows(), g.cols());
  for (int c = 0; c < 3; ++c)
    for (int t = 0; t < g.num_tilts(); ++t) h.at(perm[c], t) = g.at(c, t);
  const TiltAssignment tg{1, 0, 1};
  TiltAssignment th(3);
  for (int c = 0; c < 3; ++c) th[perm[c]] = tg[c];
  const CellGrid a = serving_cell_map(g, tg);
  const CellGrid b = serving_cell_map(h, th);
  // Back-lobe attenuation saturates, so co-sited sectors can tie exactly; ties go to the lowest index.
  int unique = 0;
  for (int y = 0; y < g.rows(); ++y)
    for (int z = 0; z < g.cols(); ++z) {
      int best = 0;
      for (int c = 0; c < 3; ++c)
        if (g.at(c, tg[c])(y, z) == g.at(a(y, z), tg[a(y, z)])(y, z)) ++best;
      if (best > 1) continue;
      ++unique;
      CHECK(b(y, z) == perm[a(y, z)]);
    }
  CHECK(unique > g.rows() * g.cols() / 2);
}

TEST_CASE("grid cache round trip is bit exact") {
  const ScenarioConfig cfg = testing::small_scenario();
  const RsrpGridSet g = generate_grids(cfg);
  const auto path = testing::temp_path("grids.bin");
  save_grids(path, g);
  CHECK(load_grids(path, cfg) == g);

  ScenarioConfig other = cfg;
  other.grid_y = 10;
  CHECK_THROWS_AS(load_grids(path, other), ConfigError);

  std::ofstream(path, std::ios::binary) << "garbage";
  CHECK_THROWS_AS(load_grids(path, cfg), ConfigError);
}

TEST_CASE("scenario validation") {
  ScenarioConfig cfg = testing::small_scenario();
  CHECK_NOTHROW(cfg.validate());
  SUBCASE("overlapping targets and boundary") {
    cfg.boundary_cells = {1};
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
  }
  SUBCASE("duplicate tilts") {
    cfg.tilt_set_deg = {-2.0, -2.0};
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
  }
  SUBCASE("single tilt") {
    cfg.tilt_set_deg = {-2.0};
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
  }
  SUBCASE("unknown cell") {
    cfg.target_cells = {7};
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
  }
}

TEST_CASE("scenario json round trip") {
  const ScenarioConfig cfg = testing::small_scenario();
  const nlohmann::json j = cfg;
  const ScenarioConfig back = j.get<ScenarioConfig>();
  CHECK(nlohmann::json(back) == j);
}

#include "tiltlab/scenario.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <numbers>
#include <random>
#include <set>

namespace tiltlab {

namespace {

constexpr char kGridMagic[8] = {'T', 'L', 'R', 'S', 'R', 'P', 'G', 'D'};
constexpr std::uint32_t kGridVersion = 1;

Scalar wrap_degrees(Scalar deg) {
  deg = std::fmod(deg + 180.0, 360.0);
  if (deg < 0) deg += 360.0;
  return deg - 180.0;
}

Scalar rad_to_deg(Scalar r) { return r * 180.0 / std::numbers::pi; }

}  // namespace

std::vector<CellId> ScenarioConfig::simulated_cells() const {
  std::vector<CellId> cells = target_cells;
  cells.insert(cells.end(), boundary_cells.begin(), boundary_cells.end());
  std::sort(cells.begin(), cells.end());
  return cells;
}

void ScenarioConfig::validate() const {
  if (sites.empty()) throw ConfigError("scenario: no sites");
  if (sectors_per_site < 1) throw ConfigError("scenario: sectors_per_site must be >= 1");
  if (static_cast<int>(azimuths_deg.size()) != sectors_per_site)
    throw ConfigError("scenario: need one azimuth per sector");
  if (target_cells.empty()) throw ConfigError("scenario: at least one target cell required");
  if (tilt_set_deg.size() < 2) throw ConfigError("scenario: at least two tilts required");
  std::set<Scalar> tilts(tilt_set_deg.begin(), tilt_set_deg.end());
  if (tilts.size() != tilt_set_deg.size()) throw ConfigError("scenario: tilt values must be distinct");
  if (grid_y < 1 || grid_z < 1 || pixel_size_m <= 0) throw ConfigError("scenario: bad grid");
  std::set<CellId> seen;
  for (CellId c : simulated_cells()) {
    if (c < 0 || c >= num_cells_total())
      throw ConfigError("scenario: cell id " + std::to_string(c) + " out of range");
    if (!seen.insert(c).second)
      throw ConfigError("scenario: cell " + std::to_string(c) + " listed twice (targets and boundary must be disjoint)");
  }
  if (shadowing_sigma_db < 0) throw ConfigError("scenario: negative shadowing sigma");
  if (path_loss.d0_m <= 0 || path_loss.min_distance_m <= 0) throw ConfigError("scenario: bad path-loss distances");
}

RsrpGridSet::RsrpGridSet(std::vector<CellId> cells, int num_tilts, int rows, int cols)
    : cells_(std::move(cells)), num_tilts_(num_tilts), rows_(rows), cols_(cols) {
  grids_.assign(cells_.size() * num_tilts_, Grid::Zero(rows, cols));
}

int RsrpGridSet::index_of(CellId id) const {
  auto it = std::find(cells_.begin(), cells_.end(), id);
  return it == cells_.end() ? -1 : static_cast<int>(it - cells_.begin());
}

bool operator==(const RsrpGridSet& a, const RsrpGridSet& b) {
  if (a.cells_ != b.cells_ || a.num_tilts_ != b.num_tilts_ || a.rows_ != b.rows_ || a.cols_ != b.cols_)
    return false;
  for (std::size_t i = 0; i < a.grids_.size(); ++i) {
    if (std::memcmp(a.grids_[i].data(), b.grids_[i].data(), sizeof(Scalar) * a.grids_[i].size()) != 0)
      return false;
  }
  return true;
}

Scalar antenna_gain_db(const AntennaPattern& ant, Scalar elevation_deg, Scalar azimuth_offset_deg,
                       Scalar tilt_deg) {
  const Scalar dv = (elevation_deg - tilt_deg) / ant.theta3db_deg;
  const Scalar dh = wrap_degrees(azimuth_offset_deg) / ant.phi3db_deg;
  const Scalar vertical = -std::min(12.0 * dv * dv, ant.a_max_db);
  const Scalar horizontal = -std::min(12.0 * dh * dh, ant.a_max_db);
  return -std::min(-(vertical + horizontal), ant.a_max_db);
}

Scalar path_loss_db(const PathLossModel& pl, Scalar distance_m) {
  const Scalar d = std::max(distance_m, pl.min_distance_m);
  return pl.pl0_db + 10.0 * pl.exponent * std::log10(d / pl.d0_m);
}

RsrpGridSet generate_grids(const ScenarioConfig& cfg) {
  cfg.validate();
  const int rows = cfg.grid_y;
  const int cols = cfg.grid_z;
  const int num_sites = static_cast<int>(cfg.sites.size());

  // Frozen shadowing per (site, pixel), shared by every sector and tilt of a site.
  std::vector<Grid> shadowing(num_sites, Grid::Zero(rows, cols));
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<Scalar> gauss(0.0, 1.0);
  for (auto& s : shadowing) {
    for (Index i = 0; i < s.size(); ++i) s.data()[i] = cfg.shadowing_sigma_db * gauss(rng);
  }

  RsrpGridSet out(cfg.simulated_cells(), cfg.num_tilts(), rows, cols);
  for (int ci = 0; ci < out.num_cells(); ++ci) {
    const CellId id = out.cells()[ci];
    const int site = id / cfg.sectors_per_site;
    const Scalar azimuth = cfg.azimuths_deg[id % cfg.sectors_per_site];
    const Site& s = cfg.sites[site];
    for (int t = 0; t < cfg.num_tilts(); ++t) {
      Grid& g = out.at(ci, t);
      for (int y = 0; y < rows; ++y) {
        for (int z = 0; z < cols; ++z) {
          const Scalar px = (z + 0.5) * cfg.pixel_size_m;
          const Scalar py = (y + 0.5) * cfg.pixel_size_m;
          const Scalar dx = px - s.x;
          const Scalar dy = py - s.y;
          const Scalar d = std::hypot(dx, dy);
          const Scalar d_eff = std::max(d, cfg.path_loss.min_distance_m);
          const Scalar elevation = -rad_to_deg(std::atan2(cfg.antenna.height_m, d_eff));
          const Scalar bearing = rad_to_deg(std::atan2(dy, dx));
          const Scalar gain = antenna_gain_db(cfg.antenna, elevation, bearing - azimuth, cfg.tilt_set_deg[t]);
          const Scalar rsrp = cfg.tx_power_dbm - path_loss_db(cfg.path_loss, d) + gain + shadowing[site](y, z);
          g(y, z) = std::min(rsrp, cfg.tx_power_dbm);
        }
      }
    }
  }
  std::size_t clamped = 0;
  for (const Site& s : cfg.sites) {
    for (int y = 0; y < rows; ++y) {
      for (int z = 0; z < cols; ++z) {
        const Scalar d = std::hypot((z + 0.5) * cfg.pixel_size_m - s.x, (y + 0.5) * cfg.pixel_size_m - s.y);
        if (d < cfg.path_loss.min_distance_m) ++clamped;
      }
    }
  }
  out.clamped_pixels = clamped;
  return out;
}

CellGrid serving_cell_map(const RsrpGridSet& grids, const TiltAssignment& tilts) {
  if (static_cast<int>(tilts.size()) != grids.num_cells())
    throw ConfigError("serving_cell_map: tilt assignment size mismatch");
  CellGrid server = CellGrid::Zero(grids.rows(), grids.cols());
  Grid best = grids.at(0, tilts[0]);
  for (int ci = 1; ci < grids.num_cells(); ++ci) {
    const Grid& g = grids.at(ci, tilts[ci]);
    for (Index i = 0; i < g.size(); ++i) {
      // Strict comparison keeps the lowest index (and id) on ties.
      if (g.data()[i] > best.data()[i]) {
        best.data()[i] = g.data()[i];
        server.data()[i] = ci;
      }
    }
  }
  return server;
}

void save_grids(const std::filesystem::path& path, const RsrpGridSet& grids) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ConfigError("cannot write grid cache " + path.string());
  os.write(kGridMagic, sizeof(kGridMagic));
  const std::uint32_t header[5] = {kGridVersion, static_cast<std::uint32_t>(grids.num_cells()),
                                   static_cast<std::uint32_t>(grids.num_tilts()),
                                   static_cast<std::uint32_t>(grids.rows()),
                                   static_cast<std::uint32_t>(grids.cols())};
  os.write(reinterpret_cast<const char*>(header), sizeof(header));
  for (int c = 0; c < grids.num_cells(); ++c)
    for (int t = 0; t < grids.num_tilts(); ++t)
      os.write(reinterpret_cast<const char*>(grids.at(c, t).data()),
               static_cast<std::streamsize>(sizeof(Scalar) * grids.at(c, t).size()));
}

RsrpGridSet load_grids(const std::filesystem::path& path, const ScenarioConfig& cfg) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot read grid cache " + path.string());
  char magic[8];
  std::uint32_t header[5];
  is.read(magic, sizeof(magic));
  is.read(reinterpret_cast<char*>(header), sizeof(header));
  if (!is || std::memcmp(magic, kGridMagic, sizeof(magic)) != 0) throw ConfigError("grid cache: bad magic");
  if (header[0] != kGridVersion) throw ConfigError("grid cache: unsupported version");
  const auto cells = cfg.simulated_cells();
  if (header[1] != cells.size() || header[2] != static_cast<std::uint32_t>(cfg.num_tilts()) ||
      header[3] != static_cast<std::uint32_t>(cfg.grid_y) || header[4] != static_cast<std::uint32_t>(cfg.grid_z))
    throw ConfigError("grid cache: dimensions do not match the scenario");
  RsrpGridSet out(cells, cfg.num_tilts(), cfg.grid_y, cfg.grid_z);
  for (int c = 0; c < out.num_cells(); ++c)
    for (int t = 0; t < out.num_tilts(); ++t)
      is.read(reinterpret_cast<char*>(out.at(c, t).data()),
              static_cast<std::streamsize>(sizeof(Scalar) * out.at(c, t).size()));
  if (!is) throw ConfigError("grid cache: truncated");
  return out;
}

void to_json(nlohmann::json& j, const ScenarioConfig& cfg) {
  nlohmann::json sites = nlohmann::json::array();
  for (const auto& s : cfg.sites) sites.push_back({s.x, s.y});
  j = {{"sites", sites},
       {"sectors_per_site", cfg.sectors_per_site},
       {"azimuths_deg", cfg.azimuths_deg},
       {"target_cells", cfg.target_cells},
       {"boundary_cells", cfg.boundary_cells},
       {"tilt_set_deg", cfg.tilt_set_deg},
       {"grid_y", cfg.grid_y},
       {"grid_z", cfg.grid_z},
       {"pixel_size_m", cfg.pixel_size_m},
       {"tx_power_dbm", cfg.tx_power_dbm},
       {"carrier_mhz", cfg.carrier_mhz},
       {"shadowing_sigma_db", cfg.shadowing_sigma_db},
       {"seed", cfg.seed},
       {"path_loss",
        {{"pl0_db", cfg.path_loss.pl0_db},
         {"d0_m", cfg.path_loss.d0_m},
         {"exponent", cfg.path_loss.exponent},
         {"min_distance_m", cfg.path_loss.min_distance_m}}},
       {"antenna",
        {{"a_max_db", cfg.antenna.a_max_db},
         {"theta3db_deg", cfg.antenna.theta3db_deg},
         {"phi3db_deg", cfg.antenna.phi3db_deg},
         {"height_m", cfg.antenna.height_m}}}};
}

void from_json(const nlohmann::json& j, ScenarioConfig& cfg) {
  if (j.contains("sites")) {
    cfg.sites.clear();
    for (const auto& s : j.at("sites")) cfg.sites.push_back({s.at(0).get<Scalar>(), s.at(1).get<Scalar>()});
  }
  auto opt = [&](const char* key, auto& field) {
    if (j.contains(key)) j.at(key).get_to(field);
  };
  opt("sectors_per_site", cfg.sectors_per_site);
  opt("azimuths_deg", cfg.azimuths_deg);
  opt("target_cells", cfg.target_cells);
  opt("boundary_cells", cfg.boundary_cells);
  opt("tilt_set_deg", cfg.tilt_set_deg);
  opt("grid_y", cfg.grid_y);
  opt("grid_z", cfg.grid_z);
  opt("pixel_size_m", cfg.pixel_size_m);
  opt("tx_power_dbm", cfg.tx_power_dbm);
  opt("carrier_mhz", cfg.carrier_mhz);
  opt("shadowing_sigma_db", cfg.shadowing_sigma_db);
  opt("seed", cfg.seed);
  if (j.contains("path_loss")) {
    const auto& p = j.at("path_loss");
    if (p.contains("pl0_db")) p.at("pl0_db").get_to(cfg.path_loss.pl0_db);
    if (p.contains("d0_m")) p.at("d0_m").get_to(cfg.path_loss.d0_m);
    if (p.contains("exponent")) p.at("exponent").get_to(cfg.path_loss.exponent);
    if (p.contains("min_distance_m")) p.at("min_distance_m").get_to(cfg.path_loss.min_distance_m);
  }
  if (j.contains("antenna")) {
    const auto& a = j.at("antenna");
    if (a.contains("a_max_db")) a.at("a_max_db").get_to(cfg.antenna.a_max_db);
    if (a.contains("theta3db_deg")) a.at("theta3db_deg").get_to(cfg.antenna.theta3db_deg);
    if (a.contains("phi3db_deg")) a.at("phi3db_deg").get_to(cfg.antenna.phi3db_deg);
    if (a.contains("height_m")) a.at("height_m").get_to(cfg.antenna.height_m);
  }
}

}  // namespace tiltlab

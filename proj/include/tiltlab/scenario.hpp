#pragma once

#include "tiltlab/types.hpp"

#include "json.hpp"

#include <filesystem>
#include <vector>

namespace tiltlab {

struct Site {
  Scalar x = 0.0;  // meters, east
  Scalar y = 0.0;  // meters, north
};

struct PathLossModel {
  Scalar pl0_db = 128.1;
  Scalar d0_m = 1000.0;
  Scalar exponent = 3.76;
  Scalar min_distance_m = 10.0;
};

struct AntennaPattern {
  Scalar a_max_db = 20.0;
  Scalar theta3db_deg = 10.0;  // vertical
  Scalar phi3db_deg = 65.0;    // horizontal
  Scalar height_m = 30.0;
};

/// Synthetic deployment. Cell id of sector `s` at site `k` is `k * sectors_per_site + s`.
struct ScenarioConfig {
  std::vector<Site> sites;
  int sectors_per_site = 3;
  std::vector<Scalar> azimuths_deg{0.0, 120.0, 240.0};
  std::vector<CellId> target_cells;
  std::vector<CellId> boundary_cells;
  std::vector<Scalar> tilt_set_deg{0.0, -2.0, -4.0, -6.0, -8.0};
  int grid_y = 24;
  int grid_z = 24;
  Scalar pixel_size_m = 50.0;
  Scalar tx_power_dbm = 30.0;  // EIRP per resource element
  Scalar carrier_mhz = 1800.0;
  Scalar shadowing_sigma_db = 6.0;
  std::uint64_t seed = 1;
  PathLossModel path_loss;
  AntennaPattern antenna;

  int num_targets() const { return static_cast<int>(target_cells.size()); }
  int num_tilts() const { return static_cast<int>(tilt_set_deg.size()); }
  int num_cells_total() const { return static_cast<int>(sites.size()) * sectors_per_site; }

  /// Target and boundary cells, ascending by id.
  std::vector<CellId> simulated_cells() const;

  /// Throws ConfigError on any violated invariant.
  void validate() const;
};

/// Simulated RSRP (dBm per RE) for every (simulated cell, tilt index) pair.
/// Cells are stored ascending by id, so cell index order equals id order.
class RsrpGridSet {
 public:
  RsrpGridSet() = default;
  RsrpGridSet(std::vector<CellId> cells, int num_tilts, int rows, int cols);

  int num_cells() const { return static_cast<int>(cells_.size()); }
  int num_tilts() const { return num_tilts_; }
  int rows() const { return rows_; }
  int cols() const { return cols_; }
  const std::vector<CellId>& cells() const { return cells_; }

  /// Position of `id` in cells(), or -1.
  int index_of(CellId id) const;

  const Grid& at(int cell_index, int tilt) const { return grids_[slot(cell_index, tilt)]; }
  Grid& at(int cell_index, int tilt) { return grids_[slot(cell_index, tilt)]; }

  /// Pixels whose horizontal distance to a site was clamped to the minimum distance.
  std::size_t clamped_pixels = 0;

  friend bool operator==(const RsrpGridSet& a, const RsrpGridSet& b);

 private:
  std::size_t slot(int cell_index, int tilt) const {
    return static_cast<std::size_t>(cell_index) * num_tilts_ + tilt;
  }

  std::vector<CellId> cells_;
  int num_tilts_ = 0;
  int rows_ = 0;
  int cols_ = 0;
  std::vector<Grid> grids_;
};

/// Tilt index per simulated cell, in RsrpGridSet cell order.
using TiltAssignment = std::vector<int>;

/// Combined sector pattern attenuation in dB (<= 0).
Scalar antenna_gain_db(const AntennaPattern& ant, Scalar elevation_deg, Scalar azimuth_offset_deg,
                       Scalar tilt_deg);

Scalar path_loss_db(const PathLossModel& pl, Scalar distance_m);

RsrpGridSet generate_grids(const ScenarioConfig& cfg);

/// Max-RSRP server per pixel (cell index into `grids.cells()`); ties go to the lowest id.
CellGrid serving_cell_map(const RsrpGridSet& grids, const TiltAssignment& tilts);

/// Flat binary cache: magic, version, C, P, Y, Z, then row-major float64 grids by (cell, tilt).
void save_grids(const std::filesystem::path& path, const RsrpGridSet& grids);
RsrpGridSet load_grids(const std::filesystem::path& path, const ScenarioConfig& cfg);

void to_json(nlohmann::json& j, const ScenarioConfig& cfg);
void from_json(const nlohmann::json& j, ScenarioConfig& cfg);

}  // namespace tiltlab

#pragma once

#include "tiltlab/scenario.hpp"

#include <filesystem>
#include <span>
#include <utility>
#include <vector>

namespace tiltlab {

enum class SinrMode { RsrpBased, RsrqBased };

/// One periodic measurement report of an RRC-connected UE.
struct MdtReport {
  int y = 0;
  int z = 0;
  std::uint64_t call_id = 0;
  int serving_cell = 0;  // cell index into RsrpGridSet::cells()
  Scalar pcell_rsrp = 0.0;
  std::vector<std::pair<int, Scalar>> ncell_rsrp;  // (cell index, dBm), at most 8, strongest first
  Scalar pcell_rsrq = 0.0;                          // dB
};

struct CellKpis {
  std::vector<Scalar> act_ues;   // average active UEs per TTI, per cell index
  std::vector<Scalar> load_rho;  // PRB occupancy in [0, 1]
};

/// Spatial traffic hot spot: pixels within `radius_px` of (y, z) get `intensity` x the background rate.
struct HotSpot {
  Scalar y = 0.0;
  Scalar z = 0.0;
  Scalar radius_px = 0.0;
  Scalar intensity = 1.0;
};

struct SynthesisParams {
  std::size_t n_calls = 20000;
  Scalar mean_reports_per_call = 4.0;
  Scalar sigma_meas_db = 2.0;
  std::vector<HotSpot> hotspots;
  Scalar ncell_detect_dbm = -124.0;
  int max_ncells = 8;
  Scalar total_act_ues = 40.0;
  Scalar base_load = 0.3;
  Scalar load_per_ue = 0.05;
  std::uint64_t traffic_seed = 7;
  int min_samples = 5;
  int min_interferers = 3;
  SinrMode sinr_mode = SinrMode::RsrpBased;
};

/// Reports plus the cell KPIs of the same measurement window.
struct MdtCampaign {
  int rows = 0;
  int cols = 0;
  TiltAssignment baseline;
  std::vector<MdtReport> reports;
  CellKpis kpis;
};

struct Pixel {
  int y = 0;
  int z = 0;
  Scalar rsrp = 0.0;    // dBm
  Scalar sinr = 0.0;    // dB
  Scalar weight = 0.0;
  Scalar lambda = 0.0;  // distinct call ids
  int serving_cell = 0;
  Scalar delta_r = 0.0;
  Scalar delta_s = 0.0;
  Scalar act_ue_share = 0.0;  // fraction of the serving cell's active UEs
};

struct MdtDataset {
  int rows = 0;
  int cols = 0;
  std::vector<Pixel> pixels;
  CellKpis kpis;
  TiltAssignment baseline_tilts;
  Scalar discarded_fraction = 0.0;
};

/// Per-pixel relative call intensity (background 1).
Grid traffic_intensity(int rows, int cols, std::span<const HotSpot> hotspots);

MdtCampaign synthesize_reports(const RsrpGridSet& grids, const TiltAssignment& baseline,
                               const SynthesisParams& params);

/// Throws ConfigError when no pixel survives the relevance rules.
MdtDataset pixelize(const MdtCampaign& campaign, int min_samples, int min_interferers = 3,
                    SinrMode mode = SinrMode::RsrpBased);

/// SINR in dB from serving and interfering RSRPs (dBm) plus the RE noise floor.
Scalar sinr_rsrp_based(Scalar pcell_rsrp_dbm, std::span<const Scalar> interferers_dbm);

/// Linear SINR from linear RSRQ and serving-cell load; throws on a non-positive denominator.
Scalar sinr_rsrq_based(Scalar rsrq_linear, Scalar rho);

/// Linear RSRQ that maps back to `sinr_linear` through sinr_rsrq_based at load `rho`.
Scalar rsrq_from_sinr(Scalar sinr_linear, Scalar rho);

/// Fills delta_r / delta_s against the simulated baseline.
MdtDataset compute_deltas(MdtDataset dataset, const RsrpGridSet& grids);

/// Draws weight ~ Poisson(lambda) per pixel and refreshes act_ue_share.
MdtDataset sample_weights(MdtDataset dataset, std::uint64_t rng_seed);

/// Recomputes act_ue_share from the current weights and serving cells.
void refresh_ue_shares(MdtDataset& dataset);

/// Full pipeline: synthesize, pixelize, compute deltas, initial weights = lambda.
MdtDataset build_dataset(const RsrpGridSet& grids, const TiltAssignment& baseline, const SynthesisParams& params);

void write_dataset_jsonl(const std::filesystem::path& pixels_path, const std::filesystem::path& kpi_path,
                         const MdtDataset& dataset);
MdtDataset read_dataset_jsonl(const std::filesystem::path& pixels_path, const std::filesystem::path& kpi_path);

void to_json(nlohmann::json& j, const SynthesisParams& p);
void from_json(const nlohmann::json& j, SynthesisParams& p);

}  // namespace tiltlab

#pragma once

#include "tiltlab/mdt.hpp"

#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace tiltlab {

struct CqiRow {
  int cqi = 0;
  Scalar sinr_threshold_db = 0.0;
  std::string modulation;
  Scalar code_rate = 0.0;
  Scalar spectral_efficiency = 0.0;  // bits/s/Hz
};

struct CqiLookup {
  int cqi = 0;
  Scalar spectral_efficiency = 0.0;
};

/// Empirical SINR -> CQI -> spectral efficiency law (rows for CQI 1..15).
class CqiTable {
 public:
  CqiTable() : CqiTable(standard()) {}
  explicit CqiTable(std::vector<CqiRow> rows);

  static CqiTable standard();

  /// Reads the `CQI,SINR,Modulation,Code rate,Spectral Efficiency` layout (`-6.4 dB` style thresholds,
  /// `-` placeholders in the CQI 0 row).
  static CqiTable from_csv(std::istream& is);
  void to_csv(std::ostream& os) const;

  const std::vector<CqiRow>& rows() const { return rows_; }

  /// Highest CQI whose threshold is <= sinr; below the first threshold the UE is in outage (CQI 0).
  CqiLookup lookup(Scalar sinr_db) const;

 private:
  std::vector<CqiRow> rows_;
};

inline CqiLookup cqi_from_sinr(Scalar sinr_db, const CqiTable& table) { return table.lookup(sinr_db); }

enum class SchedulerKind { RoundRobin, Fair };

struct SchedulerConfig {
  SchedulerKind kind = SchedulerKind::RoundRobin;
  Scalar n_prb_tot = 100.0;
  Scalar thr = 10.0;
  /// One multiplier per class, best channel first; beta.back()/beta.front() == M under the proportional rule.
  std::vector<Scalar> beta{1.0, 2.0, 3.0};

  int num_classes() const { return static_cast<int>(beta.size()); }
  Scalar usable_prbs() const { return n_prb_tot - thr; }
  void validate() const;
};

struct CoverageCostParams {
  Scalar full_band_low = 99.5;
  Scalar penalty_band_low = 98.0;
  Scalar base = 4.6;
  Scalar offset = 101.1;
  Scalar scale = 11.2;
  Scalar out_penalty = 10.0;
  Scalar nl_threshold_dbm = -125.0;
  Scalar il_threshold_db = -6.4;
};

/// Pixel quantities the reward needs; `ues` is the pixel's share of active UEs in absolute units.
struct PixelState {
  Scalar rsrp = 0.0;
  Scalar sinr = 0.0;
  Scalar weight = 0.0;
  int serving_cell = 0;
  Scalar ues = 0.0;
};

struct CellLoad {
  Scalar n_ue = 0.0;
  Scalar throughput = 0.0;  // bits/s
};

/// Weighted mean efficiency; nullopt when the cell carries no weight.
std::optional<Scalar> cell_spectral_efficiency(std::span<const Scalar> weights, std::span<const Scalar> efficiencies);

/// PRBs per UE for each class (round robin: the same share repeated for every class entry given).
std::vector<Scalar> prbs_per_ue(const SchedulerConfig& cfg, std::span<const Scalar> class_counts);

inline Scalar cell_user_throughput(Scalar eta, Scalar n_prb) { return eta * n_prb * 180000.0; }

/// UE-weighted mean of per-cell user throughput; throws when there is no traffic.
Scalar cluster_throughput(std::span<const CellLoad> per_cell);

/// Percentage (0..100) of weight carried by pixels that are neither noise- nor interference-limited.
Scalar coverage_fraction(std::span<const PixelState> pixels, const CoverageCostParams& params);

Scalar coverage_cost(Scalar a_cov, const CoverageCostParams& params = {});

/// Fair-scheduler class of a CQI: CQI range split into M equal bands, best CQIs in class 0.
int fair_class(int cqi, int num_classes);

struct RewardBreakdown {
  Scalar throughput_mbps = 0.0;
  Scalar coverage_pct = 0.0;
  Scalar coverage_cost = 0.0;
  Scalar reward = 0.0;
  int excluded_cells = 0;
};

RewardBreakdown reward_case1(std::span<const PixelState> pixels, int num_cells, const SchedulerConfig& sched,
                             const CqiTable& table, const CoverageCostParams& params);
Scalar reward_case2(std::span<const PixelState> pixels);

/// Dataset views: per-pixel UEs are act_ue_share x the serving cell's act_UEs.
std::vector<PixelState> pixel_states(const MdtDataset& dataset);
RewardBreakdown reward_case1(const MdtDataset& dataset, const SchedulerConfig& sched, const CqiTable& table,
                             const CoverageCostParams& params);
Scalar reward_case2(const MdtDataset& dataset);

void to_json(nlohmann::json& j, const SchedulerConfig& s);
void from_json(const nlohmann::json& j, SchedulerConfig& s);

}  // namespace tiltlab

#pragma once

#include "tiltlab/reward.hpp"

#include <functional>
#include <iosfwd>
#include <memory>
#include <random>

namespace tiltlab {

/// Re-tilt one target cell. Flat id `cell * P + tilt` enumerates [0, P*C).
struct Action {
  int cell = 0;
  int tilt = 0;

  int flat(int num_tilts) const { return cell * num_tilts + tilt; }
  static Action from_flat(int id, int num_tilts) { return {id / num_tilts, id % num_tilts}; }
  friend bool operator==(const Action&, const Action&) = default;
};

inline constexpr int kImageChannels = 3;

/// Normalized RSRP / WEIGHT / SINR planes (channel-major, row-major inside a plane) plus episode history.
struct Observation {
  int rows = 0;
  int cols = 0;
  Eigen::ArrayXf image;
  std::vector<std::uint8_t> history;

  enum Channel { Rsrp = 0, Weight = 1, Sinr = 2 };

  Eigen::Map<const GridT<float>> channel(Channel c) const {
    return {image.data() + static_cast<Index>(c) * rows * cols, rows, cols};
  }
  friend bool operator==(const Observation&, const Observation&);
};

struct StepInfo {
  Scalar quality = 0.0;  // reward function of the state reached
  Scalar coverage_pct = 0.0;
  Scalar throughput_mbps = 0.0;
  bool repeat_violation = false;
};

struct StepResult {
  Observation observation;
  Scalar reward = 0.0;
  bool done = false;
  StepInfo info;
};

enum class RewardForm {
  Gain,     // quality(s') - quality(s): episode return = terminal quality - baseline quality
  Absolute  // quality(s')
};

struct EnvOptions {
  Scalar repeat_penalty = -5.0;
  RewardForm reward_form = RewardForm::Gain;
};

/// Fixed-length episodic tree MDP: C decisions, each re-tilting one target cell.
class TiltEnvironment {
 public:
  TiltEnvironment(int num_cells, int num_tilts, EnvOptions options);
  virtual ~TiltEnvironment() = default;

  int num_cells() const { return num_cells_; }
  int num_tilts() const { return num_tilts_; }
  int num_actions() const { return num_cells_ * num_tilts_; }
  virtual int image_rows() const = 0;
  virtual int image_cols() const = 0;

  int episode_step() const { return step_; }
  bool done() const { return step_ >= num_cells_; }
  const std::vector<std::uint8_t>& history() const { return history_; }
  /// Current tilt index of each target cell.
  const std::vector<int>& target_tilts() const { return target_tilts_; }
  const EnvOptions& options() const { return options_; }
  /// Reward function of the current state.
  Scalar quality() const { return quality_; }

  Observation reset(std::uint64_t seed);
  StepResult step(Action action);
  StepResult step(int flat_action) { return step(Action::from_flat(flat_action, num_tilts_)); }
  Observation observe() const;

  /// Snapshot for side-effect-free lookahead.
  virtual std::unique_ptr<TiltEnvironment> clone() const = 0;

  /// Streams one JSON object per step when non-null.
  void set_trace(std::ostream* os) { trace_ = os; }

 protected:
  struct StateEval {
    Scalar quality = 0.0;
    Scalar coverage_pct = 0.0;
    Scalar throughput_mbps = 0.0;
  };

  virtual void on_reset(std::uint64_t seed) = 0;
  virtual void apply_tilt(int cell, int tilt) = 0;
  virtual StateEval evaluate() const = 0;
  virtual void render_image(Eigen::Ref<Eigen::ArrayXf> image) const = 0;

  /// Re-evaluate the current state without advancing the episode (after exogenous changes at step 0).
  void refresh_quality();
  std::vector<int> target_tilts_;

 private:
  int num_cells_;
  int num_tilts_;
  EnvOptions options_;
  int step_ = 0;
  Scalar quality_ = 0.0;
  std::vector<std::uint8_t> history_;
  std::vector<std::uint8_t> touched_;
  std::ostream* trace_ = nullptr;
};

enum class RewardMode { Case1, Case2 };

struct ObservationBounds {
  Scalar rsrp_min = -140.0;
  Scalar rsrp_max = -60.0;
  Scalar sinr_min = -10.0;
  Scalar sinr_max = 25.0;
  Scalar weight_percentile = 0.99;
};

struct NetworkEnvConfig {
  RewardMode reward_mode = RewardMode::Case1;
  SchedulerConfig scheduler;
  CqiTable cqi_table = CqiTable::standard();
  CoverageCostParams coverage;
  ObservationBounds bounds;
  EnvOptions options;
};

/// Maps a value into [0, 1] after clamping to [lo, hi].
inline Scalar normalize_bounded(Scalar v, Scalar lo, Scalar hi) {
  return (std::clamp(v, lo, hi) - lo) / (hi - lo);
}

/// Simulated network: synthetic MDT' = SIM + delta on top of the simulated RSRP grids.
class NetworkEnv final : public TiltEnvironment {
 public:
  /// `target_cells` are cell ids of the optimized cells in action order.
  NetworkEnv(std::shared_ptr<const RsrpGridSet> grids, std::shared_ptr<const MdtDataset> dataset,
             std::vector<CellId> target_cells, NetworkEnvConfig config);

  int image_rows() const override { return grids_->rows(); }
  int image_cols() const override { return grids_->cols(); }
  std::unique_ptr<TiltEnvironment> clone() const override;

  /// Shift every weight by U[-d/2, d/2] and min-max normalize to [0, 1]. Only valid at episode step 0.
  void perturb_weights(Scalar d_range);

  const TiltAssignment& tilts() const { return tilts_; }
  const std::vector<Scalar>& weights() const { return weights_; }
  const std::vector<int>& pixel_servers() const { return server_; }
  const std::vector<Scalar>& mdt_rsrp() const { return mdt_rsrp_; }
  const std::vector<Scalar>& mdt_sinr() const { return mdt_sinr_; }
  const std::vector<Scalar>& sim_rsrp() const { return sim_rsrp_; }
  const std::vector<Scalar>& sim_sinr() const { return sim_sinr_; }
  const MdtDataset& dataset() const { return *dataset_; }
  const RsrpGridSet& grids() const { return *grids_; }
  /// Active UEs per cell index after reselection.
  std::vector<Scalar> cell_act_ues() const;
  Scalar weight_scale() const { return w_max_; }
  const NetworkEnvConfig& config() const { return config_; }
  std::vector<PixelState> pixel_states() const;

 protected:
  void on_reset(std::uint64_t seed) override;
  void apply_tilt(int cell, int tilt) override;
  StateEval evaluate() const override;
  void render_image(Eigen::Ref<Eigen::ArrayXf> image) const override;

 private:
  void recompute_pixels();
  void redistribute_ues();

  std::shared_ptr<const RsrpGridSet> grids_;
  std::shared_ptr<const MdtDataset> dataset_;
  std::vector<int> target_index_;  // action cell -> grid cell index
  NetworkEnvConfig config_;
  int n_grid_cells_ = 0;
  std::size_t n_pixels_ = 0;
  std::shared_ptr<const std::vector<Scalar>> rsrp_db_;   // [(cell * P + tilt) * N + pixel]
  std::shared_ptr<const std::vector<Scalar>> rsrp_lin_;  // same layout, mW

  TiltAssignment tilts_;
  std::vector<Scalar> weights_;
  std::vector<Scalar> ues_;
  std::vector<int> server_;
  std::vector<Scalar> sim_rsrp_, sim_sinr_, mdt_rsrp_, mdt_sinr_;
  Scalar w_max_ = 1.0;
  std::mt19937_64 rng_;
};

/// Environment whose state quality is an arbitrary function of the target tilts; used for crafted
/// control and deceptive instances. Image channels are constant zeros.
class ScoredTiltEnv final : public TiltEnvironment {
 public:
  using Scorer = std::function<Scalar(const std::vector<int>& tilts)>;

  ScoredTiltEnv(int num_cells, int num_tilts, std::vector<int> baseline, Scorer scorer, EnvOptions options = {},
                int image_size = 5);

  int image_rows() const override { return image_size_; }
  int image_cols() const override { return image_size_; }
  std::unique_ptr<TiltEnvironment> clone() const override { return std::make_unique<ScoredTiltEnv>(*this); }

 protected:
  void on_reset(std::uint64_t) override { target_tilts_ = baseline_; }
  void apply_tilt(int, int) override {}
  StateEval evaluate() const override { return {scorer_(target_tilts_), 0.0, 0.0}; }
  void render_image(Eigen::Ref<Eigen::ArrayXf> image) const override { image.setZero(); }

 private:
  std::vector<int> baseline_;
  Scorer scorer_;
  int image_size_;
};

void to_json(nlohmann::json& j, const EnvOptions& o);
void from_json(const nlohmann::json& j, EnvOptions& o);

}  // namespace tiltlab

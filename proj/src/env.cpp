#include "tiltlab/env.hpp"

#include <algorithm>
#include <cstring>
#include <ostream>

namespace tiltlab {

namespace {
const Scalar kNoiseMw = db_to_linear(kNoiseFloorDbm);
}

bool operator==(const Observation& a, const Observation& b) {
  return a.rows == b.rows && a.cols == b.cols && a.history == b.history && a.image.size() == b.image.size() &&
         std::memcmp(a.image.data(), b.image.data(), sizeof(float) * a.image.size()) == 0;
}

TiltEnvironment::TiltEnvironment(int num_cells, int num_tilts, EnvOptions options)
    : target_tilts_(num_cells, 0),
      num_cells_(num_cells),
      num_tilts_(num_tilts),
      options_(options),
      history_(static_cast<std::size_t>(num_cells) * num_tilts, 0),
      touched_(num_cells, 0) {
  if (num_cells < 1 || num_tilts < 1) throw ConfigError("environment needs at least one cell and one tilt");
}

Observation TiltEnvironment::reset(std::uint64_t seed) {
  step_ = 0;
  std::fill(history_.begin(), history_.end(), 0);
  std::fill(touched_.begin(), touched_.end(), 0);
  on_reset(seed);
  quality_ = evaluate().quality;
  return observe();
}

void TiltEnvironment::refresh_quality() {
  if (step_ != 0) throw ConfigError("state can only be re-based before the first step of an episode");
  quality_ = evaluate().quality;
}

Observation TiltEnvironment::observe() const {
  Observation obs;
  obs.rows = image_rows();
  obs.cols = image_cols();
  obs.image.resize(static_cast<Index>(kImageChannels) * obs.rows * obs.cols);
  render_image(obs.image);
  obs.history = history_;
  return obs;
}

StepResult TiltEnvironment::step(Action action) {
  if (done()) throw ConfigError("step() called after the episode finished");
  if (action.cell < 0 || action.cell >= num_cells_ || action.tilt < 0 || action.tilt >= num_tilts_)
    throw ConfigError("action out of range");
  const bool repeat = touched_[action.cell] != 0;
  target_tilts_[action.cell] = action.tilt;
  apply_tilt(action.cell, action.tilt);
  const StateEval eval = evaluate();

  StepResult out;
  out.reward = options_.reward_form == RewardForm::Gain ? eval.quality - quality_ : eval.quality;
  if (repeat) out.reward += options_.repeat_penalty;
  quality_ = eval.quality;
  touched_[action.cell] = 1;
  history_[action.flat(num_tilts_)] = 1;
  ++step_;
  out.done = done();
  out.info = {eval.quality, eval.coverage_pct, eval.throughput_mbps, repeat};
  out.observation = observe();
  if (trace_) {
    const nlohmann::json j = {{"step", step_},
                              {"cell", action.cell},
                              {"tilt", action.tilt},
                              {"reward", out.reward},
                              {"quality", eval.quality},
                              {"coverage_pct", eval.coverage_pct},
                              {"throughput_mbps", eval.throughput_mbps},
                              {"repeat_violation", repeat}};
    *trace_ << j.dump() << '\n';
  }
  return out;
}

NetworkEnv::NetworkEnv(std::shared_ptr<const RsrpGridSet> grids, std::shared_ptr<const MdtDataset> dataset,
                       std::vector<CellId> target_cells, NetworkEnvConfig config)
    : TiltEnvironment(static_cast<int>(target_cells.size()), grids->num_tilts(), config.options),
      grids_(std::move(grids)),
      dataset_(std::move(dataset)),
      config_(std::move(config)) {
  config_.scheduler.validate();
  n_grid_cells_ = grids_->num_cells();
  if (static_cast<int>(dataset_->baseline_tilts.size()) != n_grid_cells_)
    throw ConfigError("NetworkEnv: dataset baseline does not match grids");
  for (CellId id : target_cells) {
    const int idx = grids_->index_of(id);
    if (idx < 0) throw ConfigError("NetworkEnv: target cell " + std::to_string(id) + " has no grids");
    target_index_.push_back(idx);
  }
  n_pixels_ = dataset_->pixels.size();
  const int P = grids_->num_tilts();
  auto db = std::make_shared<std::vector<Scalar>>(static_cast<std::size_t>(n_grid_cells_) * P * n_pixels_);
  auto lin = std::make_shared<std::vector<Scalar>>(db->size());
  for (int c = 0; c < n_grid_cells_; ++c) {
    for (int t = 0; t < P; ++t) {
      const Grid& g = grids_->at(c, t);
      const std::size_t base = (static_cast<std::size_t>(c) * P + t) * n_pixels_;
      for (std::size_t i = 0; i < n_pixels_; ++i) {
        const Pixel& px = dataset_->pixels[i];
        (*db)[base + i] = g(px.y, px.z);
        (*lin)[base + i] = db_to_linear(g(px.y, px.z));
      }
    }
  }
  rsrp_db_ = std::move(db);
  rsrp_lin_ = std::move(lin);
  server_.assign(n_pixels_, 0);
  sim_rsrp_.assign(n_pixels_, 0.0);
  sim_sinr_ = mdt_rsrp_ = mdt_sinr_ = weights_ = ues_ = sim_rsrp_;
  tilts_ = dataset_->baseline_tilts;
}

std::unique_ptr<TiltEnvironment> NetworkEnv::clone() const {
  auto copy = std::make_unique<NetworkEnv>(*this);
  copy->set_trace(nullptr);
  return copy;
}

void NetworkEnv::on_reset(std::uint64_t seed) {
  tilts_ = dataset_->baseline_tilts;
  for (int c = 0; c < num_cells(); ++c) target_tilts_[c] = tilts_[target_index_[c]];
  rng_.seed(seed);
  const MdtDataset sampled = sample_weights(*dataset_, rng_());
  for (std::size_t i = 0; i < n_pixels_; ++i) weights_[i] = sampled.pixels[i].weight;
  redistribute_ues();
  recompute_pixels();
}

void NetworkEnv::redistribute_ues() {
  Scalar n_tot = 0.0;
  for (Scalar a : dataset_->kpis.act_ues) n_tot += a;
  Scalar w_tot = 0.0;
  for (Scalar w : weights_) w_tot += w;
  for (std::size_t i = 0; i < n_pixels_; ++i) ues_[i] = w_tot > 0.0 ? n_tot * weights_[i] / w_tot : 0.0;

  std::vector<Scalar> sorted = weights_;
  std::sort(sorted.begin(), sorted.end());
  if (sorted.empty()) {
    w_max_ = 1.0;
    return;
  }
  // Nearest-rank percentile.
  const auto rank = static_cast<std::size_t>(std::ceil(config_.bounds.weight_percentile * sorted.size()));
  w_max_ = sorted[std::clamp<std::size_t>(rank, 1, sorted.size()) - 1];
  if (!(w_max_ > 0.0)) w_max_ = sorted.back() > 0.0 ? sorted.back() : 1.0;
}

void NetworkEnv::apply_tilt(int cell, int tilt) {
  tilts_[target_index_[cell]] = tilt;
  recompute_pixels();
}

void NetworkEnv::recompute_pixels() {
  const int P = grids_->num_tilts();
  const auto& db = *rsrp_db_;
  const auto& lin = *rsrp_lin_;
  for (std::size_t i = 0; i < n_pixels_; ++i) {
    int best = 0;
    Scalar best_db = db[static_cast<std::size_t>(tilts_[0]) * n_pixels_ + i];
    for (int c = 1; c < n_grid_cells_; ++c) {
      const Scalar v = db[(static_cast<std::size_t>(c) * P + tilts_[c]) * n_pixels_ + i];
      if (v > best_db) {
        best_db = v;
        best = c;
      }
    }
    // Same accumulation order as sinr_rsrp_based over the other cells.
    Scalar denom = kNoiseMw;
    for (int c = 0; c < n_grid_cells_; ++c) {
      if (c == best) continue;
      denom += lin[(static_cast<std::size_t>(c) * P + tilts_[c]) * n_pixels_ + i];
    }
    const Pixel& px = dataset_->pixels[i];
    server_[i] = best;
    sim_rsrp_[i] = best_db;
    sim_sinr_[i] = best_db - linear_to_db(denom);
    mdt_rsrp_[i] = sim_rsrp_[i] + px.delta_r;
    mdt_sinr_[i] = sim_sinr_[i] + px.delta_s;
  }
}

std::vector<PixelState> NetworkEnv::pixel_states() const {
  std::vector<PixelState> out(n_pixels_);
  for (std::size_t i = 0; i < n_pixels_; ++i) out[i] = {mdt_rsrp_[i], mdt_sinr_[i], weights_[i], server_[i], ues_[i]};
  return out;
}

std::vector<Scalar> NetworkEnv::cell_act_ues() const {
  std::vector<Scalar> out(n_grid_cells_, 0.0);
  for (std::size_t i = 0; i < n_pixels_; ++i) out[server_[i]] += ues_[i];
  return out;
}

TiltEnvironment::StateEval NetworkEnv::evaluate() const {
  const auto states = pixel_states();
  if (config_.reward_mode == RewardMode::Case2) {
    return {reward_case2(states), coverage_fraction(states, config_.coverage), 0.0};
  }
  const auto r = reward_case1(states, n_grid_cells_, config_.scheduler, config_.cqi_table, config_.coverage);
  return {r.reward, r.coverage_pct, r.throughput_mbps};
}

void NetworkEnv::render_image(Eigen::Ref<Eigen::ArrayXf> image) const {
  image.setZero();
  const Index plane = static_cast<Index>(grids_->rows()) * grids_->cols();
  const auto& b = config_.bounds;
  for (std::size_t i = 0; i < n_pixels_; ++i) {
    const Pixel& px = dataset_->pixels[i];
    const Index at = static_cast<Index>(px.y) * grids_->cols() + px.z;
    image[Observation::Rsrp * plane + at] = static_cast<float>(normalize_bounded(mdt_rsrp_[i], b.rsrp_min, b.rsrp_max));
    image[Observation::Weight * plane + at] = static_cast<float>(normalize_bounded(weights_[i], 0.0, w_max_));
    image[Observation::Sinr * plane + at] = static_cast<float>(normalize_bounded(mdt_sinr_[i], b.sinr_min, b.sinr_max));
  }
}

void NetworkEnv::perturb_weights(Scalar d_range) {
  if (d_range < 0.0) throw ConfigError("perturb_weights: d_range must be non-negative");
  if (episode_step() != 0) throw ConfigError("perturb_weights: only allowed before the first step");
  auto minmax_normalize = [](std::vector<Scalar>& w) {
    const auto [lo, hi] = std::minmax_element(w.begin(), w.end());
    const Scalar low = *lo;
    const Scalar span = *hi - *lo;
    for (auto& v : w) v = span > 0.0 ? (v - low) / span : 1.0;
  };
  minmax_normalize(weights_);
  std::uniform_real_distribution<Scalar> shift(-d_range / 2.0, d_range / 2.0);
  if (d_range > 0.0)
    for (auto& w : weights_) w += shift(rng_);
  minmax_normalize(weights_);
  redistribute_ues();
  refresh_quality();
}

ScoredTiltEnv::ScoredTiltEnv(int num_cells, int num_tilts, std::vector<int> baseline, Scorer scorer,
                             EnvOptions options, int image_size)
    : TiltEnvironment(num_cells, num_tilts, options),
      baseline_(std::move(baseline)),
      scorer_(std::move(scorer)),
      image_size_(image_size) {
  if (static_cast<int>(baseline_.size()) != num_cells) throw ConfigError("ScoredTiltEnv: baseline size mismatch");
  target_tilts_ = baseline_;
}

void to_json(nlohmann::json& j, const EnvOptions& o) {
  j = {{"repeat_penalty", o.repeat_penalty}, {"reward_form", o.reward_form == RewardForm::Gain ? "gain" : "absolute"}};
}

void from_json(const nlohmann::json& j, EnvOptions& o) {
  if (j.contains("repeat_penalty")) j.at("repeat_penalty").get_to(o.repeat_penalty);
  if (j.contains("reward_form")) {
    const auto f = j.at("reward_form").get<std::string>();
    if (f == "gain") o.reward_form = RewardForm::Gain;
    else if (f == "absolute") o.reward_form = RewardForm::Absolute;
    else throw ConfigError("reward_form must be gain or absolute");
  }
}

}  // namespace tiltlab

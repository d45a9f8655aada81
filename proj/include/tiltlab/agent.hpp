#pragma once

#include "tiltlab/env.hpp"
#include "tiltlab/nn.hpp"

#include <functional>
#include <memory>
#include <random>

namespace tiltlab {

using QNet = nn::QNetwork<float>;
using Rng = std::mt19937_64;

/// Probability that a uniformly random episode never re-tilts a cell: (C-1)!/C^(C-1).
Scalar episode_success_probability(int num_cells);

/// Constrained-action probability for episode step `step` (1-based) so that the per-step
/// compliance probability is p_target^(1/(C-1)) at every depth.
Scalar eta_for_step(int step, int num_cells, Scalar p_target);

struct EtaSchedule {
  std::vector<Scalar> eta;  // index = step - 1

  static EtaSchedule balanced(int num_cells, Scalar p_target);
  static EtaSchedule zeros(int num_cells) { return {std::vector<Scalar>(num_cells, 0.0)}; }
  Scalar at(int step) const { return eta.at(step - 1); }
};

/// eps_d(t) = eps_min + (eps_max - eps_min) * exp(-t / tau_d), tau_d = tau0 * (1 + kappa * (d - 1)).
struct EpsSchedule {
  Scalar eps_max = 1.0;
  Scalar eps_min = 0.05;
  Scalar tau0 = 1.0;
  Scalar kappa = 0.35;

  Scalar tau(int depth) const { return tau0 * (1.0 + kappa * (depth - 1)); }
  Scalar at(int depth, Scalar episode) const {
    return eps_min + (eps_max - eps_min) * std::exp(-episode / tau(depth));
  }
};

/// Lowest-index argmax.
int greedy_action(std::span<const double> q_values);

/// Flat ids whose cell has no history bit set.
std::vector<int> compliant_actions(std::span<const std::uint8_t> history, int num_tilts);

/// Depth-wise eps-eta-greedy: greedy with probability 1 - eps; otherwise a constraint-compliant
/// random action with probability eta, else a uniformly random action.
int select_action(std::span<const double> q_values, std::span<const std::uint8_t> history, int num_tilts,
                  Scalar eps, Scalar eta, Rng& rng);

/// Whether an action sequence re-tilts no cell.
bool is_compliant(std::span<const int> flat_actions, int num_tilts);

struct Transition {
  std::shared_ptr<const Observation> obs;
  int action = 0;
  Scalar reward = 0.0;
  std::shared_ptr<const Observation> next_obs;
  bool done = false;
};

class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);

  void add(Transition t);
  std::size_t size() const { return storage_.size(); }
  std::size_t capacity() const { return capacity_; }
  const Transition& at(std::size_t i) const { return storage_.at(i); }

  /// Uniform indices, distinct within one batch.
  std::vector<std::size_t> sample_indices(std::size_t batch, Rng& rng) const;

 private:
  std::size_t capacity_;
  std::size_t next_ = 0;
  std::vector<Transition> storage_;
};

enum class Exploration { DepthWiseEpsEta, EpsGreedy };

struct AgentConfig {
  Scalar gamma = 1.0;
  int batch_size = 256;
  int target_update_every = 1500;
  int train_episodes = 66000;
  int warmup_transitions = 5000;
  int train_every = 1;
  std::size_t replay_capacity = 200000;
  nn::RmspropConfig optimizer;
  int conv_filters = 8;
  std::vector<int> image_dense{128, 64, 32};
  std::vector<int> head{64};
  Exploration exploration = Exploration::DepthWiseEpsEta;
  Scalar eps_max = 1.0;
  Scalar eps_min = 0.05;
  Scalar tau0_fraction = 0.15;
  Scalar kappa = 0.35;
  Scalar p_target = 0.5;
  int eval_every_steps = 1000;
  std::vector<std::uint64_t> eval_seeds{1000, 1001, 1002, 1003, 1004, 1005, 1006, 1007, 1008, 1009};
  std::uint64_t seed = 1;

  EpsSchedule eps_schedule() const;
  EtaSchedule eta_schedule(int num_cells) const;
};

nn::QNetworkSpec network_spec(const TiltEnvironment& env, const AgentConfig& cfg);

/// Observations -> network batch.
nn::Batch<float> make_batch(std::span<const Observation* const> observations);
std::vector<double> q_values(const QNet& net, const Observation& obs);

struct EpisodeEval {
  std::uint64_t seed = 0;
  Scalar total = 0.0;
  std::vector<Scalar> step_rewards;
  std::vector<int> actions;
};

using ResetHook = std::function<void(TiltEnvironment&)>;

/// Greedy rollouts on private clones of `env`, one per seed. `after_reset` runs on each clone
/// right after its reset (e.g. to perturb weights).
std::vector<EpisodeEval> evaluate_greedy(const TiltEnvironment& env, const QNet& net,
                                         std::span<const std::uint64_t> seeds, const ResetHook& after_reset = {});

struct EpisodeRecord {
  int episode = 0;
  Scalar reward = 0.0;
  Scalar mean_loss = 0.0;  // NaN when no gradient step happened
  bool compliant = false;
  std::vector<Scalar> eps;  // per depth at this episode
};

struct EvalRecord {
  int episode = 0;
  long env_steps = 0;
  Scalar mean_reward = 0.0;
  std::vector<Scalar> rewards;
};

struct TrainStepView {
  long training_step = 0;
  const QNet& online;
  const QNet& target;
};

struct TrainOptions {
  /// Invoked after every gradient step (and target sync).
  std::function<void(const TrainStepView&)> on_train_step;
  /// Invoked after every periodic evaluation; return false to stop training early.
  std::function<bool(const EvalRecord&)> on_eval;
  /// Where to dump parameters if training hits a numerical failure.
  std::filesystem::path abort_checkpoint;
};

struct TrainResult {
  QNet online;
  std::vector<EpisodeRecord> episodes;
  std::vector<EvalRecord> evals;
  long training_steps = 0;
  std::vector<long> target_syncs;  // training steps at which the target network was refreshed
};

/// Fixed-Q-target DQN with uniform replay.
TrainResult train(TiltEnvironment& env, const AgentConfig& cfg, const TrainOptions& options = {});

/// Seed for the environment reset of training episode `episode`.
std::uint64_t episode_seed(std::uint64_t run_seed, std::uint64_t episode);

void to_json(nlohmann::json& j, const AgentConfig& c);
void from_json(const nlohmann::json& j, AgentConfig& c);

}  // namespace tiltlab

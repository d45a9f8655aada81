#include "tiltlab/agent.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <unordered_set>

namespace tiltlab {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

Scalar episode_success_probability(int num_cells) {
  if (num_cells < 1) throw ConfigError("episode_success_probability: C must be >= 1");
  Scalar p = 1.0;
  for (int i = 0; i < num_cells; ++i) p *= 1.0 - static_cast<Scalar>(i) / num_cells;
  return p;
}

Scalar eta_for_step(int step, int num_cells, Scalar p_target) {
  if (step < 1 || step > num_cells) throw ConfigError("eta_for_step: step outside [1, C]");
  if (!(p_target > 0.0 && p_target < 1.0)) throw ConfigError("eta_for_step: p_target must lie in (0, 1)");
  if (step == 1) return 0.0;
  const Scalar per_step = std::pow(p_target, 1.0 / (num_cells - 1));
  const Scalar unconstrained = static_cast<Scalar>(num_cells - step + 1) / num_cells;
  return std::clamp((per_step - unconstrained) / (1.0 - unconstrained), 0.0, 1.0);
}

EtaSchedule EtaSchedule::balanced(int num_cells, Scalar p_target) {
  EtaSchedule s;
  for (int step = 1; step <= num_cells; ++step) s.eta.push_back(eta_for_step(step, num_cells, p_target));
  return s;
}

int greedy_action(std::span<const double> q_values) {
  return static_cast<int>(std::max_element(q_values.begin(), q_values.end()) - q_values.begin());
}

std::vector<int> compliant_actions(std::span<const std::uint8_t> history, int num_tilts) {
  const int n_cells = static_cast<int>(history.size()) / num_tilts;
  std::vector<int> out;
  for (int c = 0; c < n_cells; ++c) {
    const auto block = history.subspan(static_cast<std::size_t>(c) * num_tilts, num_tilts);
    if (std::none_of(block.begin(), block.end(), [](std::uint8_t b) { return b != 0; }))
      for (int t = 0; t < num_tilts; ++t) out.push_back(c * num_tilts + t);
  }
  return out;
}

int select_action(std::span<const double> q_values, std::span<const std::uint8_t> history, int num_tilts,
                  Scalar eps, Scalar eta, Rng& rng) {
  std::uniform_real_distribution<Scalar> unit(0.0, 1.0);
  const Scalar i = unit(rng);
  const Scalar j = unit(rng);
  if (i >= eps) return greedy_action(q_values);
  const int n = static_cast<int>(q_values.size());
  if (j < eta) {
    const auto allowed = compliant_actions(history, num_tilts);
    if (!allowed.empty())
      return allowed[std::uniform_int_distribution<std::size_t>(0, allowed.size() - 1)(rng)];
  }
  return std::uniform_int_distribution<int>(0, n - 1)(rng);
}

bool is_compliant(std::span<const int> flat_actions, int num_tilts) {
  std::unordered_set<int> cells;
  for (int a : flat_actions)
    if (!cells.insert(a / num_tilts).second) return false;
  return true;
}

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw ConfigError("replay buffer capacity must be positive");
}

void ReplayBuffer::add(Transition t) {
  if (storage_.size() < capacity_) {
    storage_.push_back(std::move(t));
  } else {
    storage_[next_] = std::move(t);
  }
  next_ = (next_ + 1) % capacity_;
}

std::vector<std::size_t> ReplayBuffer::sample_indices(std::size_t batch, Rng& rng) const {
  if (batch > storage_.size()) throw ConfigError("replay buffer holds fewer transitions than the batch size");
  std::vector<std::size_t> out;
  out.reserve(batch);
  std::unordered_set<std::size_t> seen;
  std::uniform_int_distribution<std::size_t> pick(0, storage_.size() - 1);
  while (out.size() < batch) {
    const std::size_t i = pick(rng);
    if (seen.insert(i).second) out.push_back(i);
  }
  return out;
}

EpsSchedule AgentConfig::eps_schedule() const {
  EpsSchedule s;
  s.eps_max = eps_max;
  s.eps_min = eps_min;
  s.tau0 = std::max<Scalar>(tau0_fraction * train_episodes, 1e-9);
  s.kappa = exploration == Exploration::DepthWiseEpsEta ? kappa : 0.0;
  return s;
}

EtaSchedule AgentConfig::eta_schedule(int num_cells) const {
  if (exploration == Exploration::EpsGreedy) return EtaSchedule::zeros(num_cells);
  return EtaSchedule::balanced(num_cells, p_target);
}

nn::QNetworkSpec network_spec(const TiltEnvironment& env, const AgentConfig& cfg) {
  nn::QNetworkSpec spec;
  spec.in_channels = kImageChannels;
  spec.rows = env.image_rows();
  spec.cols = env.image_cols();
  spec.conv_filters = cfg.conv_filters;
  spec.image_dense = cfg.image_dense;
  spec.history_width = env.num_actions();
  spec.head = cfg.head;
  spec.outputs = env.num_actions();
  return spec;
}

nn::Batch<float> make_batch(std::span<const Observation* const> observations) {
  nn::Batch<float> b;
  if (observations.empty()) return b;
  const Index img = observations.front()->image.size();
  const Index hist = static_cast<Index>(observations.front()->history.size());
  b.images.resize(static_cast<Index>(observations.size()), img);
  b.history.resize(static_cast<Index>(observations.size()), hist);
  for (Index r = 0; r < b.images.rows(); ++r) {
    const Observation& o = *observations[r];
    b.images.row(r) = o.image.matrix().transpose();
    for (Index k = 0; k < hist; ++k) b.history(r, k) = o.history[k];
  }
  return b;
}

std::vector<double> q_values(const QNet& net, const Observation& obs) {
  const Observation* one[] = {&obs};
  const auto q = net.forward(make_batch(one));
  return std::vector<double>(q.data(), q.data() + q.size());
}

std::vector<EpisodeEval> evaluate_greedy(const TiltEnvironment& env, const QNet& net,
                                         std::span<const std::uint64_t> seeds, const ResetHook& after_reset) {
  std::vector<EpisodeEval> out;
  out.reserve(seeds.size());
  for (std::uint64_t seed : seeds) {
    auto e = env.clone();
    EpisodeEval ev;
    ev.seed = seed;
    Observation obs = e->reset(seed);
    if (after_reset) {
      after_reset(*e);
      obs = e->observe();
    }
    while (!e->done()) {
      const auto q = q_values(net, obs);
      const int a = greedy_action(q);
      auto res = e->step(a);
      ev.actions.push_back(a);
      ev.step_rewards.push_back(res.reward);
      ev.total += res.reward;
      obs = std::move(res.observation);
    }
    out.push_back(std::move(ev));
  }
  return out;
}

std::uint64_t episode_seed(std::uint64_t run_seed, std::uint64_t episode) {
  return splitmix64(splitmix64(run_seed) ^ (episode * 0x2545f4914f6cdd1dULL + 1));
}

TrainResult train(TiltEnvironment& env, const AgentConfig& cfg, const TrainOptions& options) {
  if (cfg.batch_size < 1 || cfg.target_update_every < 1 || cfg.train_every < 1)
    throw ConfigError("agent: batch_size, target_update_every and train_every must be positive");
  const int C = env.num_cells();
  const int P = env.num_tilts();
  TrainResult result;
  result.online = QNet(network_spec(env, cfg));
  result.online.initialize(splitmix64(cfg.seed ^ 0x51ed270b27a4c3d5ULL));
  QNet target = result.online;
  QNet& online = result.online;
  nn::Rmsprop<float> optimizer(cfg.optimizer, online.params());
  nn::ParameterSet<float> grads = nn::zeros_like(online.params());
  ReplayBuffer buffer(cfg.replay_capacity);
  Rng rng(splitmix64(cfg.seed));
  const EpsSchedule eps = cfg.eps_schedule();
  const EtaSchedule eta = cfg.eta_schedule(C);
  const std::size_t warmup = std::max<std::size_t>(cfg.warmup_transitions, cfg.batch_size);

  std::vector<const Observation*> obs_ptrs(cfg.batch_size), next_ptrs(cfg.batch_size);
  std::vector<int> actions(cfg.batch_size);
  std::vector<float> targets(cfg.batch_size);
  long env_steps = 0;
  bool stop = false;

  auto gradient_step = [&]() {
    const auto idx = buffer.sample_indices(cfg.batch_size, rng);
    for (int b = 0; b < cfg.batch_size; ++b) {
      const Transition& t = buffer.at(idx[b]);
      obs_ptrs[b] = t.obs.get();
      next_ptrs[b] = t.next_obs.get();
      actions[b] = t.action;
    }
    const auto next_q = target.forward(make_batch(next_ptrs));
    for (int b = 0; b < cfg.batch_size; ++b) {
      const Transition& t = buffer.at(idx[b]);
      targets[b] = static_cast<float>(t.done ? t.reward : t.reward + cfg.gamma * next_q.row(b).maxCoeff());
    }
    const float loss = online.loss_and_gradients(make_batch(obs_ptrs), actions, targets, grads);
    if (!std::isfinite(loss)) throw NumericalError("non-finite loss at training step " + std::to_string(result.training_steps));
    optimizer.apply(online.params(), grads);
    if (!nn::all_finite(online.params()))
      throw NumericalError("non-finite parameters at training step " + std::to_string(result.training_steps));
    ++result.training_steps;
    if (result.training_steps % cfg.target_update_every == 0) {
      target.params() = online.params();
      result.target_syncs.push_back(result.training_steps);
    }
    if (options.on_train_step) options.on_train_step({result.training_steps, online, target});
    return loss;
  };

  try {
    for (int ep = 0; ep < cfg.train_episodes && !stop; ++ep) {
      auto obs = std::make_shared<const Observation>(env.reset(episode_seed(cfg.seed, ep)));
      EpisodeRecord rec;
      rec.episode = ep;
      for (int d = 1; d <= C; ++d) rec.eps.push_back(eps.at(d, ep));
      Scalar loss_sum = 0.0;
      int loss_count = 0;
      std::vector<int> taken;
      for (int d = 1; d <= C; ++d) {
        const auto q = q_values(online, *obs);
        const int a = select_action(q, obs->history, P, eps.at(d, ep), eta.at(d), rng);
        auto res = env.step(a);
        auto next = std::make_shared<const Observation>(std::move(res.observation));
        buffer.add({obs, a, res.reward, next, res.done});
        rec.reward += res.reward;
        taken.push_back(a);
        obs = std::move(next);
        ++env_steps;
        if (buffer.size() >= warmup && env_steps % cfg.train_every == 0) {
          loss_sum += gradient_step();
          ++loss_count;
        }
        if (cfg.eval_every_steps > 0 && env_steps % cfg.eval_every_steps == 0) {
          EvalRecord ev;
          ev.episode = ep;
          ev.env_steps = env_steps;
          for (const auto& e : evaluate_greedy(env, online, cfg.eval_seeds)) ev.rewards.push_back(e.total);
          ev.mean_reward = ev.rewards.empty() ? 0.0
                                              : std::accumulate(ev.rewards.begin(), ev.rewards.end(), 0.0) /
                                                    static_cast<Scalar>(ev.rewards.size());
          result.evals.push_back(ev);
          if (options.on_eval && !options.on_eval(ev)) stop = true;
        }
      }
      rec.mean_loss = loss_count ? loss_sum / loss_count : std::numeric_limits<Scalar>::quiet_NaN();
      rec.compliant = is_compliant(taken, P);
      result.episodes.push_back(std::move(rec));
    }
  } catch (const NumericalError&) {
    if (!options.abort_checkpoint.empty()) nn::save_checkpoint(options.abort_checkpoint, online.params());
    throw;
  }
  return result;
}

void to_json(nlohmann::json& j, const AgentConfig& c) {
  j = {{"gamma", c.gamma},
       {"batch_size", c.batch_size},
       {"target_update_every", c.target_update_every},
       {"train_episodes", c.train_episodes},
       {"warmup_transitions", c.warmup_transitions},
       {"train_every", c.train_every},
       {"replay_capacity", c.replay_capacity},
       {"learning_rate", c.optimizer.learning_rate},
       {"rmsprop_rho", c.optimizer.rho},
       {"momentum", c.optimizer.momentum},
       {"rmsprop_epsilon", c.optimizer.epsilon},
       {"conv_filters", c.conv_filters},
       {"image_dense", c.image_dense},
       {"head", c.head},
       {"exploration", c.exploration == Exploration::DepthWiseEpsEta ? "dw_eps_eta" : "eps_greedy"},
       {"eps_max", c.eps_max},
       {"eps_min", c.eps_min},
       {"tau0_fraction", c.tau0_fraction},
       {"kappa", c.kappa},
       {"p_target", c.p_target},
       {"eval_every_steps", c.eval_every_steps},
       {"eval_seeds", c.eval_seeds},
       {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, AgentConfig& c) {
  auto opt = [&](const char* key, auto& field) {
    if (j.contains(key)) j.at(key).get_to(field);
  };
  opt("gamma", c.gamma);
  opt("batch_size", c.batch_size);
  opt("target_update_every", c.target_update_every);
  opt("train_episodes", c.train_episodes);
  opt("warmup_transitions", c.warmup_transitions);
  opt("train_every", c.train_every);
  opt("replay_capacity", c.replay_capacity);
  opt("learning_rate", c.optimizer.learning_rate);
  opt("rmsprop_rho", c.optimizer.rho);
  opt("momentum", c.optimizer.momentum);
  opt("rmsprop_epsilon", c.optimizer.epsilon);
  opt("conv_filters", c.conv_filters);
  opt("image_dense", c.image_dense);
  opt("head", c.head);
  opt("eps_max", c.eps_max);
  opt("eps_min", c.eps_min);
  opt("tau0_fraction", c.tau0_fraction);
  opt("kappa", c.kappa);
  opt("p_target", c.p_target);
  opt("eval_every_steps", c.eval_every_steps);
  opt("eval_seeds", c.eval_seeds);
  opt("seed", c.seed);
  if (j.contains("exploration")) {
    const auto e = j.at("exploration").get<std::string>();
    if (e == "dw_eps_eta") c.exploration = Exploration::DepthWiseEpsEta;
    else if (e == "eps_greedy") c.exploration = Exploration::EpsGreedy;
    else throw ConfigError("agent.exploration must be dw_eps_eta or eps_greedy");
  }
}

}  // namespace tiltlab

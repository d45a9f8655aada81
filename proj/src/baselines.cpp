#include "tiltlab/baselines.hpp"

#include <cmath>
#include <random>
#include <sstream>

namespace tiltlab {

namespace {

void require_fresh(const TiltEnvironment& env, const char* who) {
  if (env.episode_step() != 0) throw ConfigError(std::string(who) + ": environment must be at episode step 0");
}

void commit(TiltEnvironment& env, int action, SearchResult& out) {
  const auto res = env.step(action);
  out.actions.push_back(action);
  out.step_rewards.push_back(res.reward);
  out.episode_reward += res.reward;
}

}  // namespace

SearchResult best_first_search(TiltEnvironment& env) {
  require_fresh(env, "best_first_search");
  SearchResult out;
  while (!env.done()) {
    int best = 0;
    Scalar best_reward = -std::numeric_limits<Scalar>::infinity();
    for (int a = 0; a < env.num_actions(); ++a) {
      auto probe = env.clone();
      const Scalar r = probe->step(a).reward;
      ++out.nodes_expanded;
      if (r > best_reward) {
        best_reward = r;
        best = a;
      }
    }
    commit(env, best, out);
  }
  out.terminal_tilts = env.target_tilts();
  return out;
}

SearchResult brute_force_optimum(const TiltEnvironment& env) {
  require_fresh(env, "brute_force_optimum");
  const int C = env.num_cells();
  const int P = env.num_tilts();
  const double size = std::pow(static_cast<double>(P), C);
  if (size > kBruteForceLimit) {
    std::ostringstream msg;
    msg << "brute_force_optimum: " << P << "^" << C << " = " << size << " assignments exceeds the limit of "
        << kBruteForceLimit;
    throw ConfigError(msg.str());
  }
  SearchResult best;
  best.episode_reward = -std::numeric_limits<Scalar>::infinity();
  std::vector<int> tilts(C, 0);
  const long total = static_cast<long>(size);
  for (long k = 0; k < total; ++k) {
    long rest = k;
    for (int c = C - 1; c >= 0; --c) {
      tilts[c] = static_cast<int>(rest % P);
      rest /= P;
    }
    std::vector<int> actions(C);
    for (int c = 0; c < C; ++c) actions[c] = c * P + tilts[c];
    SearchResult r = replay_actions(env, actions);
    if (r.episode_reward > best.episode_reward) best = std::move(r);
  }
  best.nodes_expanded = total;
  return best;
}

SearchResult random_policy(TiltEnvironment& env, std::uint64_t seed) {
  require_fresh(env, "random_policy");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> pick(0, env.num_actions() - 1);
  SearchResult out;
  while (!env.done()) commit(env, pick(rng), out);
  out.terminal_tilts = env.target_tilts();
  return out;
}

SearchResult replay_actions(const TiltEnvironment& env, std::span<const int> actions) {
  auto e = env.clone();
  SearchResult out;
  for (int a : actions) commit(*e, a, out);
  out.terminal_tilts = e->target_tilts();
  return out;
}

}  // namespace tiltlab

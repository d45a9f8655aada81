#pragma once

#include "tiltlab/env.hpp"

#include <cstdint>

namespace tiltlab {

struct SearchResult {
  std::vector<int> actions;  // flat ids, one per episode step
  std::vector<int> terminal_tilts;
  std::vector<Scalar> step_rewards;
  Scalar episode_reward = 0.0;
  long nodes_expanded = 0;
};

/// Greedy one-step lookahead: at each step probe all P*C actions on clones and commit the best
/// immediate reward (ties go to the lowest flat id). `env` must be at episode step 0 and is
/// advanced along the committed path.
SearchResult best_first_search(TiltEnvironment& env);

inline constexpr double kBruteForceLimit = 1e5;

/// Enumerates every terminal tilt assignment of the target cells, each reached by re-tilting
/// cells 0..C-1 in order. `env` must be at step 0 and is left untouched.
SearchResult brute_force_optimum(const TiltEnvironment& env);

/// Uniformly random actions for C steps; `env` must be at step 0 and is advanced.
SearchResult random_policy(TiltEnvironment& env, std::uint64_t seed);

/// Replays a flat action sequence on a clone; useful to check that probing left no trace.
SearchResult replay_actions(const TiltEnvironment& env, std::span<const int> actions);

}  // namespace tiltlab

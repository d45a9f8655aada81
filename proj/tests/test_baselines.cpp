#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "crafted.hpp"
#include "support.hpp"
#include "tiltlab/baselines.hpp"

#include <cmath>

using namespace tiltlab;

TEST_CASE("greedy lookahead is optimal when cells contribute independently") {
  auto env = testing::additive_env();
  env.reset(0);
  const auto oracle = brute_force_optimum(env);
  const auto bfs = best_first_search(env);
  CHECK(oracle.episode_reward == doctest::Approx(1.5 + 0.75 + 2.0).epsilon(1e-12));
  CHECK(std::abs(bfs.episode_reward - oracle.episode_reward) <= 1e-12);
  CHECK(bfs.terminal_tilts == oracle.terminal_tilts);
  CHECK(bfs.nodes_expanded == 3 * 3 * 3);
  CHECK(oracle.nodes_expanded == 27);
}

TEST_CASE("greedy lookahead falls into the deceptive trap") {
  auto env = testing::deceptive_env();
  env.reset(0);
  const auto oracle = brute_force_optimum(env);
  CHECK(oracle.episode_reward == 10.0);
  CHECK(oracle.terminal_tilts == std::vector<int>{2, 1});
  const auto bfs = best_first_search(env);
  CHECK(bfs.actions.front() == Action{1, 2}.flat(3));
  CHECK(bfs.episode_reward == 5.0);
  CHECK(bfs.episode_reward < oracle.episode_reward);
  CHECK(bfs.nodes_expanded == 2 * 3 * 2);
  CHECK(env.done());
}

TEST_CASE("oracle enumerates every assignment and leaves the environment alone") {
  const auto lab = testing::small_lab();
  auto env = testing::small_env(lab);
  env->reset(7);
  const double q0 = env->quality();
  const auto oracle = brute_force_optimum(*env);
  CHECK(oracle.nodes_expanded == 4);
  CHECK(env->episode_step() == 0);
  CHECK(env->quality() == q0);

  double best = -1e300;
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b) {
      auto e = env->clone();
      e->step(Action{0, a});
      best = std::max(best, e->step(Action{1, b}).info.quality - q0);
    }
  CHECK(oracle.episode_reward == doctest::Approx(best).epsilon(1e-12));

  const auto replay = replay_actions(*env, oracle.actions);
  CHECK(replay.episode_reward == oracle.episode_reward);
  CHECK(replay.step_rewards == oracle.step_rewards);
}

TEST_CASE("oracle refuses oversized enumerations") {
  ScoredTiltEnv big(11, 3, std::vector<int>(11, 0), [](const std::vector<int>&) { return 0.0; });
  big.reset(0);
  CHECK_THROWS_AS(brute_force_optimum(big), ConfigError);
}

TEST_CASE("probing leaves no trace on the committed path") {
  const auto lab = testing::small_lab();
  auto env = testing::small_env(lab);
  env->reset(9);
  auto fresh = env->clone();
  const auto bfs = best_first_search(*env);
  const auto replay = replay_actions(*fresh, bfs.actions);
  CHECK(replay.step_rewards == bfs.step_rewards);
  CHECK(replay.terminal_tilts == bfs.terminal_tilts);
  CHECK(env->target_tilts() == bfs.terminal_tilts);
  auto again = fresh->clone();
  CHECK_THROWS_AS(best_first_search(*env), ConfigError);
  CHECK(best_first_search(*again).actions == bfs.actions);
}

TEST_CASE("oracle dominates greedy lookahead which beats random on average") {
  const auto lab = testing::small_lab();
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    auto env = testing::small_env(lab);
    env->reset(seed);
    const auto oracle = brute_force_optimum(*env);
    auto g = env->clone();
    const auto bfs = best_first_search(*g);
    CHECK(oracle.episode_reward >= bfs.episode_reward - 1e-12);
    double mean = 0.0;
    for (std::uint64_t r = 0; r < 200; ++r) {
      auto e = env->clone();
      mean += random_policy(*e, r).episode_reward / 200.0;
    }
    CHECK(bfs.episode_reward >= mean);
  }
}

TEST_CASE("random policy") {
  auto env = testing::additive_env();
  env.reset(0);
  auto a = env.clone();
  auto b = env.clone();
  CHECK(random_policy(*a, 4).actions == random_policy(*b, 4).actions);

  ScoredTiltEnv four(4, 2, std::vector<int>(4, 0), [](const std::vector<int>&) { return 0.0; });
  const int n = 30000;
  int compliant = 0;
  for (int i = 0; i < n; ++i) {
    four.reset(0);
    const auto r = random_policy(four, static_cast<std::uint64_t>(i));
    compliant += r.episode_reward == 0.0;
  }
  const double p = 0.09375;
  CHECK(std::abs(static_cast<double>(compliant) / n - p) < 3.0 * std::sqrt(p * (1 - p) / n));
}

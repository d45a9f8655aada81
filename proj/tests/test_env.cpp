#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "support.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

using namespace tiltlab;

TEST_CASE("bounded normalization") {
  CHECK(normalize_bounded(-140.0, -140.0, -60.0) == 0.0);
  CHECK(normalize_bounded(-60.0, -140.0, -60.0) == 1.0);
  CHECK(normalize_bounded(-100.0, -140.0, -60.0) == 0.5);
  CHECK(normalize_bounded(-20.0, -140.0, -60.0) == 1.0);
  CHECK(normalize_bounded(-200.0, -140.0, -60.0) == 0.0);
}

TEST_CASE("flat action ids") {
  for (int id = 0; id < 12; ++id) CHECK(Action::from_flat(id, 3).flat(3) == id);
  CHECK(Action::from_flat(7, 3) == Action{2, 1});
}

TEST_CASE("reset") {
  const auto lab = testing::small_lab();
  auto env = testing::small_env(lab);
  const Observation a = env->reset(5);
  const Observation b = env->reset(5);
  CHECK(a == b);
  CHECK(std::all_of(a.history.begin(), a.history.end(), [](auto v) { return v == 0; }));
  CHECK(a.history.size() == 4);
  CHECK(a.image.size() == 3 * 12 * 12);
  CHECK(a.image.minCoeff() >= 0.0f);
  CHECK(a.image.maxCoeff() <= 1.0f);
  CHECK(env->target_tilts() == std::vector<int>{0, 0});

  const Observation c = env->reset(6);
  CHECK((a.channel(Observation::Rsrp) == c.channel(Observation::Rsrp)).all());
  CHECK_FALSE((a.channel(Observation::Weight) == c.channel(Observation::Weight)).all());
}

TEST_CASE("weight channel uses the 99th percentile scale") {
  const auto lab = testing::small_lab();
  auto env = testing::small_env(lab);
  const Observation o = env->reset(2);
  std::vector<double> w = env->weights();
  std::sort(w.begin(), w.end());
  const double expected = w[static_cast<std::size_t>(std::ceil(0.99 * w.size())) - 1];
  CHECK(env->weight_scale() == expected);
  const auto& px = env->dataset().pixels;
  for (std::size_t i = 0; i < px.size(); ++i) {
    const float v = o.channel(Observation::Weight)(px[i].y, px[i].z);
    CHECK(v == static_cast<float>(std::min(env->weights()[i] / expected, 1.0)));
  }
}

TEST_CASE("ue redistribution follows the weights") {
  const auto lab = testing::small_lab();
  auto env = testing::small_env(lab);
  env->reset(4);
  const auto ues = env->cell_act_ues();
  const double total = std::accumulate(ues.begin(), ues.end(), 0.0);
  const auto& k = env->dataset().kpis.act_ues;
  CHECK(total == doctest::Approx(std::accumulate(k.begin(), k.end(), 0.0)).epsilon(1e-12));
  const double w_tot = std::accumulate(env->weights().begin(), env->weights().end(), 0.0);
  const auto states = env->pixel_states();
  for (std::size_t i = 0; i < states.size(); ++i)
    CHECK(states[i].ues == doctest::Approx(total * env->weights()[i] / w_tot).epsilon(1e-12));
}

TEST_CASE("baseline tilt of an untouched cell reproduces the reset observation") {
  const auto lab = testing::small_lab();
  auto env = testing::small_env(lab);
  const Observation first = env->reset(8);
  const StepResult r = env->step(Action{1, 0});
  CHECK((r.observation.image == first.image).all());
  CHECK(r.reward == 0.0);
  CHECK(r.observation.history[2] == 1);
}

TEST_CASE("step recomputes servers and sinr from the grids") {
  const auto lab = testing::small_lab();
  auto env = testing::small_env(lab);
  env->reset(1);
  env->step(Action{0, 1});
  const TiltAssignment tilts{1, 0, 0};
  CHECK(env->tilts() == tilts);
  const auto& g = *lab.grids;
  const auto& px = env->dataset().pixels;
  for (std::size_t i = 0; i < px.size(); ++i) {
    int server = 0;
    for (int c = 1; c < 3; ++c)
      if (g.at(c, tilts[c])(px[i].y, px[i].z) > g.at(server, tilts[server])(px[i].y, px[i].z)) server = c;
    std::vector<double> others;
    for (int c = 0; c < 3; ++c)
      if (c != server) others.push_back(g.at(c, tilts[c])(px[i].y, px[i].z));
    CHECK(env->pixel_servers()[i] == server);
    CHECK(env->sim_sinr()[i] == doctest::Approx(sinr_rsrp_based(g.at(server, tilts[server])(px[i].y, px[i].z), others)));
    CHECK(env->mdt_rsrp()[i] == env->sim_rsrp()[i] + px[i].delta_r);
  }
}

TEST_CASE("only pixels involving the re-tilted cell change") {
  const auto lab = testing::small_lab();
  auto env = testing::small_env(lab);
  env->reset(1);
  const auto before_server = env->pixel_servers();
  const auto before_rsrp = env->mdt_rsrp();
  env->step(Action{1, 1});
  for (std::size_t i = 0; i < before_server.size(); ++i) {
    if (before_server[i] != 1 && env->pixel_servers()[i] != 1) CHECK(env->mdt_rsrp()[i] == before_rsrp[i]);
  }
}

TEST_CASE("repeat penalty") {
  const auto lab = testing::small_lab();
  auto env = testing::small_env(lab);
  env->reset(3);
  env->step(Action{0, 0});
  const double quality = env->quality();
  auto fresh = env->clone();
  const StepResult repeat = env->step(Action{0, 1});
  CHECK(repeat.info.repeat_violation);

  // Same transition from an equivalent state where cell 0 was never touched.
  auto other = testing::small_env(lab);
  other->reset(3);
  other->step(Action{1, 0});
  CHECK(other->quality() == quality);
  const StepResult plain = other->step(Action{0, 1});
  CHECK_FALSE(plain.info.repeat_violation);
  CHECK(repeat.reward == doctest::Approx(plain.reward - 5.0).epsilon(1e-12));
  CHECK(fresh->episode_step() == 1);
}

TEST_CASE("episode bookkeeping") {
  const auto lab = testing::small_lab();
  auto env = testing::small_env(lab);
  env->reset(3);
  CHECK_THROWS_AS(env->step(Action{2, 0}), ConfigError);
  CHECK_THROWS_AS(env->step(Action{0, 2}), ConfigError);
  double total = 0.0;
  const double start = env->quality();
  total += env->step(1).reward;
  const StepResult last = env->step(2);
  total += last.reward;
  CHECK(last.done);
  CHECK(total == doctest::Approx(env->quality() - start).epsilon(1e-12));
  CHECK_THROWS_AS(env->step(0), ConfigError);
}

TEST_CASE("absolute reward form") {
  const auto lab = testing::small_lab();
  NetworkEnvConfig cfg;
  cfg.options.reward_form = RewardForm::Absolute;
  auto env = testing::small_env(lab, cfg);
  env->reset(3);
  const StepResult r = env->step(Action{0, 1});
  CHECK(r.reward == r.info.quality);
}

TEST_CASE("case 2 reward is the weighted rsrp plus sinr") {
  const auto lab = testing::small_lab();
  NetworkEnvConfig cfg;
  cfg.reward_mode = RewardMode::Case2;
  auto env = testing::small_env(lab, cfg);
  env->reset(3);
  double acc = 0.0, w = 0.0;
  for (std::size_t i = 0; i < env->weights().size(); ++i) {
    acc += env->weights()[i] * (env->mdt_rsrp()[i] + env->mdt_sinr()[i]);
    w += env->weights()[i];
  }
  CHECK(env->quality() == doctest::Approx(acc / w).epsilon(1e-12));
}

TEST_CASE("clones are independent snapshots") {
  const auto lab = testing::small_lab();
  auto env = testing::small_env(lab);
  env->reset(3);
  env->step(Action{0, 1});
  auto copy = env->clone();
  const StepResult a = copy->step(Action{1, 1});
  CHECK(env->episode_step() == 1);
  CHECK(env->target_tilts() == std::vector<int>{1, 0});
  const StepResult b = env->step(Action{1, 1});
  CHECK(a.reward == b.reward);
  CHECK(a.observation == b.observation);
}

TEST_CASE("weight perturbation") {
  const auto lab = testing::small_lab();
  auto env = testing::small_env(lab);
  env->reset(3);
  auto norm = env->weights();
  const auto [lo, hi] = std::minmax_element(norm.begin(), norm.end());
  const double low = *lo, span = *hi - *lo;
  for (auto& v : norm) v = (v - low) / span;

  env->perturb_weights(0.0);
  CHECK(env->weights() == norm);

  env->reset(3);
  env->perturb_weights(0.5);
  const auto& w = env->weights();
  CHECK(*std::min_element(w.begin(), w.end()) == 0.0);
  CHECK(*std::max_element(w.begin(), w.end()) == 1.0);

  env->step(0);
  CHECK_THROWS_AS(env->perturb_weights(0.1), ConfigError);
}

TEST_CASE("trace streams one json object per step") {
  const auto lab = testing::small_lab();
  auto env = testing::small_env(lab);
  std::ostringstream os;
  env->set_trace(&os);
  env->reset(3);
  env->step(0);
  env->step(3);
  std::istringstream is(os.str());
  std::string line;
  int n = 0;
  while (std::getline(is, line)) {
    const auto j = nlohmann::json::parse(line);
    CHECK(j.contains("reward"));
    ++n;
  }
  CHECK(n == 2);
}

TEST_CASE("scored environment") {
  ScoredTiltEnv env(2, 3, {0, 0}, [](const std::vector<int>& t) { return 1.0 * t[0] + 2.0 * t[1]; });
  env.reset(0);
  CHECK(env.quality() == 0.0);
  CHECK(env.step(Action{1, 2}).reward == 4.0);
  const StepResult r = env.step(Action{1, 1});
  CHECK(r.reward == -2.0 - 5.0);
  CHECK(r.done);
  CHECK(r.observation.image.size() == 75);
  CHECK((r.observation.image == 0.0f).all());
}

// tiltlab: scenario generation, MDT synthesis, DQN training and baselines from one run config.

#include "tiltlab/metrics.hpp"
#include "tiltlab/run_config.hpp"

#include "CLI11.hpp"

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <mutex>
#include <numeric>

using namespace tiltlab;

namespace {

struct Options {
  std::string config;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string seeds;
  std::string out;
  std::string cache;
  std::string checkpoint;
  int workers = -1;
  int cells = 0;
  bool verbose = false;
};

struct Context {
  RunConfig cfg;
  std::string hash;
  std::filesystem::path out;
  Options opt;
};

Context make_context(const Options& opt, const std::string& experiment) {
  Context ctx;
  ctx.opt = opt;
  if (opt.config.empty()) throw ConfigError("--config is required");
  ctx.cfg = load_run_config(opt.config, prefixed_environment());
  ctx.cfg.experiment = experiment;
  if (!opt.seeds.empty()) ctx.cfg.seeds = parse_seed_range(opt.seeds);
  if (opt.seed_set) {
    ctx.cfg.seeds = {opt.seed};
    ctx.cfg.agent.seed = opt.seed;
  }
  if (!opt.out.empty()) ctx.cfg.output_dir = opt.out;
  if (opt.workers >= 0) ctx.cfg.workers = opt.workers;
  ctx.cfg.validate();
  ctx.hash = config_hash(ctx.cfg);
  ctx.out = ctx.cfg.output_dir;
  std::filesystem::create_directories(ctx.out);
  nlohmann::json resolved = resolved_json(ctx.cfg);
  resolved["config_hash"] = ctx.hash;
  std::ofstream(ctx.out / (experiment + "-config.json")) << resolved.dump(2) << '\n';
  return ctx;
}

Lab make_lab(const Context& ctx) { return build_lab(ctx.cfg, ctx.opt.cache); }

std::string run_id(const Context& ctx, std::uint64_t seed) {
  return ctx.cfg.experiment + "-s" + std::to_string(seed) + "-" + ctx.hash;
}

void write_summary(const Context& ctx, nlohmann::json summary) {
  summary["config_hash"] = ctx.hash;
  summary["experiment"] = ctx.cfg.experiment;
  std::ofstream(ctx.out / (ctx.cfg.experiment + "-summary.json")) << summary.dump(2) << '\n';
  std::cout << summary.dump(2) << '\n';
}

QNet load_network(const TiltEnvironment& env, const RunConfig& cfg, const std::filesystem::path& path) {
  QNet net(network_spec(env, cfg.agent));
  auto params = nn::load_checkpoint<float>(path);
  if (params.size() != net.params().size()) throw ConfigError("checkpoint does not match the configured network");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].name != net.params()[i].name || params[i].value.rows() != net.params()[i].value.rows() ||
        params[i].value.cols() != net.params()[i].value.cols())
      throw ConfigError("checkpoint tensor " + params[i].name + " does not match the configured network");
  }
  net.params() = std::move(params);
  return net;
}

Scalar mean_of(const std::vector<Scalar>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<Scalar>(v.size());
}

Scalar variance_of(const std::vector<Scalar>& v) {
  const Scalar m = mean_of(v);
  Scalar s = 0.0;
  for (Scalar x : v) s += (x - m) * (x - m);
  return v.size() > 1 ? s / static_cast<Scalar>(v.size() - 1) : 0.0;
}

int cmd_generate(const Options& opt) {
  Context ctx = make_context(opt, "generate");
  const RsrpGridSet grids = generate_grids(ctx.cfg.scenario);
  const auto path = ctx.out / ("grids-" + ctx.hash + ".bin");
  save_grids(path, grids);
  write_summary(ctx, {{"grids", path.string()},
                      {"cells", grids.cells()},
                      {"tilts", grids.num_tilts()},
                      {"rows", grids.rows()},
                      {"cols", grids.cols()},
                      {"clamped_pixels", grids.clamped_pixels}});
  return 0;
}

int cmd_synthesize(const Options& opt) {
  Context ctx = make_context(opt, "synthesize");
  const Lab lab = make_lab(ctx);
  const auto pixels = ctx.out / ("mdt-" + ctx.hash + ".jsonl");
  const auto kpis = ctx.out / ("mdt-" + ctx.hash + ".kpi.json");
  write_dataset_jsonl(pixels, kpis, *lab.dataset);
  write_summary(ctx, {{"pixels_file", pixels.string()},
                      {"kpi_file", kpis.string()},
                      {"retained_pixels", lab.dataset->pixels.size()},
                      {"discarded_fraction", lab.dataset->discarded_fraction}});
  return 0;
}

int cmd_train(const Options& opt) {
  Context ctx = make_context(opt, "train");
  const Lab lab = make_lab(ctx);
  const auto& seeds = ctx.cfg.seeds;
  std::vector<nlohmann::json> per_seed(seeds.size());
  std::mutex log_mutex;
  parallel_for(seeds.size(), ctx.cfg.workers, [&](std::size_t i) {
    auto env = lab.make_env();
    AgentConfig ac = ctx.cfg.agent;
    ac.seed = seeds[i];
    const auto ckpt = ctx.out / ("checkpoint-s" + std::to_string(seeds[i]) + "-" + ctx.hash + ".bin");
    TrainOptions to;
    to.abort_checkpoint = ckpt;
    if (ctx.opt.verbose) {
      to.on_eval = [&, seed = seeds[i]](const EvalRecord& ev) {
        std::lock_guard lock(log_mutex);
        std::cerr << "seed " << seed << " episode " << ev.episode << " eval mean " << ev.mean_reward << '\n';
        return true;
      };
    }
    TrainResult r;
    try {
      r = train(*env, ac, to);
    } catch (const NumericalError& e) {
      throw NumericalError(std::string(e.what()) + "; parameters dumped to " + ckpt.string());
    }
    nn::save_checkpoint(ckpt, r.online.params());
    MetricsCsv csv(ctx.out / ("train-s" + std::to_string(seeds[i]) + "-" + ctx.hash + ".csv"), run_id(ctx, seeds[i]));
    write_training_log(csv, r);
    const auto final_eval = evaluate_greedy(*env, r.online, ac.eval_seeds);
    std::vector<Scalar> rewards;
    for (const auto& e : final_eval) {
      write_episode_eval(csv, "final", static_cast<long>(e.seed), e);
      rewards.push_back(e.total);
    }
    per_seed[i] = {{"seed", seeds[i]},
                   {"checkpoint", ckpt.string()},
                   {"training_steps", r.training_steps},
                   {"target_syncs", r.target_syncs.size()},
                   {"final_eval_rewards", rewards},
                   {"final_eval_mean", mean_of(rewards)}};
  });
  write_summary(ctx, {{"runs", per_seed}});
  return 0;
}

int cmd_eval(const Options& opt) {
  Context ctx = make_context(opt, "eval");
  if (opt.checkpoint.empty()) throw ConfigError("eval needs --checkpoint");
  const Lab lab = make_lab(ctx);
  auto env = lab.make_env();
  const QNet net = load_network(*env, ctx.cfg, opt.checkpoint);
  std::ofstream trace;
  if (opt.verbose) {
    trace.open(ctx.out / ("eval-trace-" + ctx.hash + ".jsonl"));
    env->set_trace(&trace);
  }
  MetricsCsv csv(ctx.out / ("eval-" + ctx.hash + ".csv"), run_id(ctx, ctx.cfg.agent.seed));
  std::vector<Scalar> rewards;
  for (const auto& e : evaluate_greedy(*env, net, ctx.cfg.seeds)) {
    write_episode_eval(csv, "eval", static_cast<long>(e.seed), e);
    rewards.push_back(e.total);
  }
  write_summary(ctx, {{"rewards", rewards}, {"mean", mean_of(rewards)}});
  return 0;
}

template <typename Search>
int cmd_search(const Options& opt, const std::string& name, Search search) {
  Context ctx = make_context(opt, name);
  const Lab lab = make_lab(ctx);
  const auto& seeds = ctx.cfg.seeds;
  std::vector<SearchResult> results(seeds.size());
  parallel_for(seeds.size(), ctx.cfg.workers, [&](std::size_t i) {
    auto env = lab.make_env();
    std::ofstream trace;
    if (ctx.opt.verbose) {
      trace.open(ctx.out / (name + "-trace-s" + std::to_string(seeds[i]) + "-" + ctx.hash + ".jsonl"));
      env->set_trace(&trace);
    }
    env->reset(seeds[i]);
    results[i] = search(*env, seeds[i]);
  });
  MetricsCsv csv(ctx.out / (name + "-" + ctx.hash + ".csv"), name + "-" + ctx.hash);
  nlohmann::json runs = nlohmann::json::array();
  std::vector<Scalar> rewards;
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    write_search(csv, name, static_cast<long>(seeds[i]), results[i]);
    rewards.push_back(results[i].episode_reward);
    runs.push_back({{"seed", seeds[i]},
                    {"episode_reward", results[i].episode_reward},
                    {"actions", results[i].actions},
                    {"terminal_tilts", results[i].terminal_tilts},
                    {"nodes_expanded", results[i].nodes_expanded}});
  }
  write_summary(ctx, {{"runs", runs}, {"mean", mean_of(rewards)}});
  return 0;
}

int cmd_stress(const Options& opt) {
  Context ctx = make_context(opt, "stress");
  const Lab lab = make_lab(ctx);
  auto env = lab.make_env();
  QNet net;
  if (!opt.checkpoint.empty()) {
    net = load_network(*env, ctx.cfg, opt.checkpoint);
  } else {
    AgentConfig ac = ctx.cfg.agent;
    ac.seed = ctx.cfg.seeds.front();
    net = train(*env, ac).online;
  }
  const auto& st = ctx.cfg.stress;
  std::vector<std::uint64_t> eval_seeds(st.eval_episodes);
  std::iota(eval_seeds.begin(), eval_seeds.end(), st.first_eval_seed);
  MetricsCsv csv(ctx.out / ("stress-" + ctx.hash + ".csv"), run_id(ctx, ctx.cfg.seeds.front()));
  nlohmann::json levels = nlohmann::json::array();
  for (std::size_t k = 0; k < st.d_ranges.size(); ++k) {
    const Scalar d = st.d_ranges[k];
    const auto evals = evaluate_greedy(*env, net, eval_seeds,
                                       [d](TiltEnvironment& e) { static_cast<NetworkEnv&>(e).perturb_weights(d); });
    std::vector<Scalar> rewards;
    for (const auto& e : evals) {
      rewards.push_back(e.total);
      csv.row("stress", static_cast<long>(e.seed), static_cast<int>(k), "episode_reward", e.total);
    }
    csv.row("stress", -1, static_cast<int>(k), "d_range", d);
    levels.push_back({{"d_range", d}, {"mean", mean_of(rewards)}, {"variance", variance_of(rewards)}});
  }
  write_summary(ctx, {{"levels", levels}});
  return 0;
}

int cmd_tables(const Options& opt) {
  int C = opt.cells;
  CqiTable table;
  Scalar p_target = 0.5;
  if (!opt.config.empty()) {
    const RunConfig cfg = load_run_config(opt.config, prefixed_environment());
    if (C == 0) C = cfg.scenario.num_targets();
    table = cfg.env.cqi_table;
    p_target = cfg.agent.p_target;
  }
  if (C == 0) C = 9;
  std::cout << "CQI lookup\n";
  table.to_csv(std::cout);
  std::cout << "\neta schedule (C=" << C << ", p=" << p_target << ")\nstep,eta\n";
  std::cout << std::fixed << std::setprecision(3);
  if (C > 1) {
    const auto eta = EtaSchedule::balanced(C, p_target);
    for (int s = 1; s <= C; ++s) std::cout << s << ',' << eta.at(s) << '\n';
  }
  const Scalar p = episode_success_probability(C);
  std::cout << std::setprecision(9) << "\nuniform-random compliant episode probability (C=" << C << ")\n"
            << "probability," << p << "\ninverse," << std::setprecision(3) << 1.0 / p << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MDT-driven antenna tilt optimization lab"};
  app.require_subcommand(1);
  Options opt;
  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", opt.config, "run config (JSON)");
    sub->add_option("--seed", opt.seed, "single seed")->each([&](const std::string&) { opt.seed_set = true; });
    sub->add_option("--seeds", opt.seeds, "seed range N..M");
    sub->add_option("--out", opt.out, "output directory");
    sub->add_option("--cache", opt.cache, "reuse/write grids and MDT dataset in this directory");
    sub->add_option("--workers", opt.workers, "worker threads for per-seed loops (0 = all cores)");
    sub->add_flag("--verbose", opt.verbose, "stream per-step JSON-lines traces");
  };
  std::map<std::string, std::function<int()>> handlers;
  auto add = [&](const std::string& name, const std::string& help, std::function<int()> fn) {
    auto* sub = app.add_subcommand(name, help);
    common(sub);
    handlers[name] = std::move(fn);
    return sub;
  };
  add("generate", "generate simulated RSRP grids", [&] { return cmd_generate(opt); });
  add("synthesize", "synthesize the MDT dataset", [&] { return cmd_synthesize(opt); });
  add("train", "train the DQN agent, one run per seed", [&] { return cmd_train(opt); });
  add("eval", "greedy evaluation of a checkpoint on the seeds", [&] { return cmd_eval(opt); })
      ->add_option("--checkpoint", opt.checkpoint, "network checkpoint");
  add("bfs", "best-first search per seed", [&] {
    return cmd_search(opt, "bfs", [](TiltEnvironment& env, std::uint64_t) { return best_first_search(env); });
  });
  add("oracle", "brute-force optimum per seed", [&] {
    return cmd_search(opt, "oracle", [](TiltEnvironment& env, std::uint64_t) { return brute_force_optimum(env); });
  });
  add("random", "uniform random policy per seed", [&] {
    return cmd_search(opt, "random", [](TiltEnvironment& env, std::uint64_t s) { return random_policy(env, s); });
  });
  add("stress", "reward spread under weight perturbation", [&] { return cmd_stress(opt); })
      ->add_option("--checkpoint", opt.checkpoint, "network checkpoint (trains one when omitted)");
  add("tables", "print the CQI table, eta schedule and compliant-episode probability", [&] { return cmd_tables(opt); })
      ->add_option("--cells", opt.cells, "number of target cells C");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }
  try {
    for (auto* sub : app.get_subcommands()) return handlers.at(sub->get_name())();
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

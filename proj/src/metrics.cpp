#include "tiltlab/metrics.hpp"

#include <cmath>
#include <cstdio>

namespace tiltlab {

MetricsCsv::MetricsCsv(const std::filesystem::path& path, std::string run_id) : run_id_(std::move(run_id)) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  os_.open(path);
  if (!os_) throw ConfigError("cannot write metrics file " + path.string());
  os_ << "run_id,phase,episode,step,metric,value\n";
}

std::string format_value(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void MetricsCsv::row(std::string_view phase, long episode, int step, std::string_view metric, double value) {
  os_ << run_id_ << ',' << phase << ',' << episode << ',' << step << ',' << metric << ',' << format_value(value)
      << '\n';
}

void write_training_log(MetricsCsv& csv, const TrainResult& result) {
  for (const auto& e : result.episodes) {
    csv.row("train", e.episode, 0, "episode_reward", e.reward);
    csv.row("train", e.episode, 0, "loss", e.mean_loss);
    csv.row("train", e.episode, 0, "compliant", e.compliant ? 1.0 : 0.0);
    for (std::size_t d = 0; d < e.eps.size(); ++d) csv.row("train", e.episode, static_cast<int>(d + 1), "eps", e.eps[d]);
  }
  for (const auto& ev : result.evals) {
    csv.row("eval", ev.episode, 0, "mean_reward", ev.mean_reward);
    csv.row("eval", ev.episode, 0, "env_steps", static_cast<double>(ev.env_steps));
    for (std::size_t i = 0; i < ev.rewards.size(); ++i)
      csv.row("eval", ev.episode, static_cast<int>(i), "seed_reward", ev.rewards[i]);
  }
}

void write_search(MetricsCsv& csv, std::string_view phase, long episode, const SearchResult& r) {
  for (std::size_t s = 0; s < r.step_rewards.size(); ++s) {
    csv.row(phase, episode, static_cast<int>(s + 1), "step_reward", r.step_rewards[s]);
    csv.row(phase, episode, static_cast<int>(s + 1), "action", r.actions[s]);
  }
  csv.row(phase, episode, 0, "episode_reward", r.episode_reward);
  csv.row(phase, episode, 0, "nodes_expanded", static_cast<double>(r.nodes_expanded));
}

void write_episode_eval(MetricsCsv& csv, std::string_view phase, long episode, const EpisodeEval& e) {
  for (std::size_t s = 0; s < e.step_rewards.size(); ++s) {
    csv.row(phase, episode, static_cast<int>(s + 1), "step_reward", e.step_rewards[s]);
    csv.row(phase, episode, static_cast<int>(s + 1), "action", e.actions[s]);
  }
  csv.row(phase, episode, 0, "episode_reward", e.total);
}

}  // namespace tiltlab

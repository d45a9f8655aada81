#pragma once

#include "tiltlab/agent.hpp"
#include "tiltlab/baselines.hpp"

#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>

namespace tiltlab {

/// Long-format metrics: run_id,phase,episode,step,metric,value. Values print with 17 significant
/// digits so identical runs give byte-identical files.
class MetricsCsv {
 public:
  MetricsCsv(const std::filesystem::path& path, std::string run_id);

  void row(std::string_view phase, long episode, int step, std::string_view metric, double value);
  void flush() { os_.flush(); }

 private:
  std::ofstream os_;
  std::string run_id_;
};

std::string format_value(double v);

/// Per-episode reward, loss and per-depth eps, then the periodic evaluations.
void write_training_log(MetricsCsv& csv, const TrainResult& result);

/// Per-step and episode rewards of one search/policy rollout; `episode` labels the reset seed.
void write_search(MetricsCsv& csv, std::string_view phase, long episode, const SearchResult& r);
void write_episode_eval(MetricsCsv& csv, std::string_view phase, long episode, const EpisodeEval& e);

}  // namespace tiltlab

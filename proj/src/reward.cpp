#include "tiltlab/reward.hpp"

#include <algorithm>
#include <cstdio>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

namespace tiltlab {

namespace {

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  const auto e = s.find_last_not_of(" \t\r\n");
  return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(trim(cell));
  return out;
}

std::string format_threshold(Scalar v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.1f dB", v);
  return buf;
}

}  // namespace

CqiTable::CqiTable(std::vector<CqiRow> rows) : rows_(std::move(rows)) {
  if (rows_.empty()) throw ConfigError("CQI table is empty");
  for (std::size_t i = 1; i < rows_.size(); ++i) {
    if (!(rows_[i].sinr_threshold_db > rows_[i - 1].sinr_threshold_db) ||
        !(rows_[i].spectral_efficiency > rows_[i - 1].spectral_efficiency))
      throw ConfigError("CQI table thresholds and efficiencies must be strictly increasing");
  }
}

CqiTable CqiTable::standard() {
  return CqiTable({{1, -6.4, "QPSK", 0.076, 0.1524},    {2, -4.8, "QPSK", 0.19, 0.377},
                   {3, -3.4, "QPSK", 0.44, 0.877},      {4, -2.2, "16-QAM", 0.37, 1.4764},
                   {5, -1.2, "16-QAM", 0.48, 1.914},    {6, -0.1, "16-QAM", 0.60, 2.4064},
                   {7, 0.9, "64-QAM", 0.46, 2.7306},    {8, 2.1, "64-QAM", 0.55, 3.3222},
                   {9, 3.3, "64-QAM", 0.65, 3.9024},    {10, 4.8, "64-QAM", 0.75, 4.5234},
                   {11, 6.5, "64-QAM", 0.85, 5.115},    {12, 8.5, "256-QAM", 0.69, 5.5544},
                   {13, 10.9, "256-QAM", 0.78, 6.2264}, {14, 13.8, "256-QAM", 0.86, 6.9072},
                   {15, 17.1, "256-QAM", 0.93, 7.4064}});
}

CqiTable CqiTable::from_csv(std::istream& is) {
  std::string line;
  std::vector<CqiRow> rows;
  bool header = true;
  while (std::getline(is, line)) {
    if (trim(line).empty()) continue;
    if (header) {
      header = false;
      continue;
    }
    const auto f = split_csv(line);
    if (f.size() != 5) throw ConfigError("CQI csv: expected 5 columns in '" + line + "'");
    if (f[1] == "-") continue;  // outage row
    CqiRow r;
    try {
      r.cqi = std::stoi(f[0]);
      r.sinr_threshold_db = std::stod(f[1]);  // stops at " dB"
      r.modulation = f[2];
      r.code_rate = std::stod(f[3]);
      r.spectral_efficiency = std::stod(f[4]);
    } catch (const std::exception&) {
      throw ConfigError("CQI csv: unparsable row '" + line + "'");
    }
    rows.push_back(r);
  }
  return CqiTable(std::move(rows));
}

void CqiTable::to_csv(std::ostream& os) const {
  os << "CQI,SINR,Modulation,Code rate,Spectral Efficiency\n";
  os << "0,-,-,-,-\n";
  for (const auto& r : rows_) {
    char buf[128];
    std::snprintf(buf, sizeof(buf), "%d,%s,%s,%g,%g\n", r.cqi, format_threshold(r.sinr_threshold_db).c_str(),
                  r.modulation.c_str(), r.code_rate, r.spectral_efficiency);
    os << buf;
  }
}

CqiLookup CqiTable::lookup(Scalar sinr_db) const {
  auto it = std::upper_bound(rows_.begin(), rows_.end(), sinr_db,
                             [](Scalar v, const CqiRow& r) { return v < r.sinr_threshold_db; });
  if (it == rows_.begin()) return {0, 0.0};
  --it;
  return {it->cqi, it->spectral_efficiency};
}

void SchedulerConfig::validate() const {
  if (!(thr < n_prb_tot)) throw ConfigError("scheduler: thr must be below n_prb_tot");
  if (beta.empty()) throw ConfigError("scheduler: at least one fair class required");
  for (std::size_t i = 1; i < beta.size(); ++i)
    if (!(beta[i] > beta[i - 1])) throw ConfigError("scheduler: beta must be strictly increasing");
}

std::optional<Scalar> cell_spectral_efficiency(std::span<const Scalar> weights, std::span<const Scalar> efficiencies) {
  Scalar wsum = 0.0;
  Scalar acc = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    wsum += weights[i];
    acc += weights[i] * efficiencies[i];
  }
  if (!(wsum > 0.0)) return std::nullopt;
  return acc / wsum;
}

std::vector<Scalar> prbs_per_ue(const SchedulerConfig& cfg, std::span<const Scalar> class_counts) {
  const Scalar total = std::accumulate(class_counts.begin(), class_counts.end(), 0.0);
  const Scalar usable = cfg.usable_prbs();
  if (!(total > 0.0)) return std::vector<Scalar>(std::max<std::size_t>(class_counts.size(), 1), usable);  // idle cell
  if (cfg.kind == SchedulerKind::RoundRobin) return std::vector<Scalar>(class_counts.size(), usable / total);
  if (class_counts.size() != cfg.beta.size()) throw ConfigError("prbs_per_ue: one count per fair class required");
  Scalar denom = 0.0;
  for (std::size_t i = 0; i < class_counts.size(); ++i) denom += cfg.beta[i] * class_counts[i];
  std::vector<Scalar> out(class_counts.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = cfg.beta[i] * usable / denom;
  return out;
}

Scalar cluster_throughput(std::span<const CellLoad> per_cell) {
  Scalar n_tot = 0.0;
  Scalar acc = 0.0;
  for (const auto& c : per_cell) {
    n_tot += c.n_ue;
    acc += c.n_ue * c.throughput;
  }
  if (!(n_tot > 0.0)) throw ConfigError("cluster_throughput: no active UEs");
  return acc / n_tot;
}

Scalar coverage_fraction(std::span<const PixelState> pixels, const CoverageCostParams& params) {
  Scalar total = 0.0;
  Scalar covered = 0.0;
  for (const auto& p : pixels) {
    total += p.weight;
    const bool outage = p.rsrp < params.nl_threshold_dbm || p.sinr < params.il_threshold_db;
    if (!outage) covered += p.weight;
  }
  if (!(total > 0.0)) throw ConfigError("coverage_fraction: total weight is zero");
  return covered / total * 100.0;
}

Scalar coverage_cost(Scalar a_cov, const CoverageCostParams& params) {
  if (a_cov >= params.full_band_low && a_cov <= 100.0) return 0.0;
  if (a_cov >= params.penalty_band_low && a_cov < params.full_band_low) {
    const Scalar g = std::pow(params.base, a_cov - params.offset);
    return (1.0 - g) / (params.scale * g);
  }
  return params.out_penalty;
}

int fair_class(int cqi, int num_classes) {
  if (cqi <= 0) return num_classes - 1;
  const int band = (cqi - 1) * num_classes / 15;  // 0 = lowest CQIs
  return num_classes - 1 - std::min(band, num_classes - 1);
}

RewardBreakdown reward_case1(std::span<const PixelState> pixels, int num_cells, const SchedulerConfig& sched,
                             const CqiTable& table, const CoverageCostParams& params) {
  const int m = sched.kind == SchedulerKind::Fair ? sched.num_classes() : 1;
  std::vector<Scalar> wsum(num_cells, 0.0), weta(num_cells, 0.0), ues(num_cells, 0.0);
  std::vector<Scalar> class_ues(static_cast<std::size_t>(num_cells) * m, 0.0);
  std::vector<Scalar> class_ue_eta(static_cast<std::size_t>(num_cells) * m, 0.0);
  for (const auto& p : pixels) {
    const auto q = table.lookup(p.sinr);
    const int c = p.serving_cell;
    wsum[c] += p.weight;
    weta[c] += p.weight * q.spectral_efficiency;
    ues[c] += p.ues;
    const int k = sched.kind == SchedulerKind::Fair ? fair_class(q.cqi, m) : 0;
    class_ues[c * m + k] += p.ues;
    class_ue_eta[c * m + k] += p.ues * q.spectral_efficiency;
  }

  RewardBreakdown out;
  std::vector<CellLoad> loads;
  for (int c = 0; c < num_cells; ++c) {
    if (!(wsum[c] > 0.0) || !(ues[c] > 0.0)) {
      if (wsum[c] > 0.0 || ues[c] > 0.0) ++out.excluded_cells;
      continue;
    }
    Scalar u = 0.0;
    if (sched.kind == SchedulerKind::RoundRobin) {
      const Scalar eta = weta[c] / wsum[c];
      const Scalar n_prb = sched.usable_prbs() / ues[c];
      u = cell_user_throughput(eta, n_prb);
    } else {
      const std::span<const Scalar> counts(class_ues.data() + c * m, m);
      const auto prb = prbs_per_ue(sched, counts);
      for (int k = 0; k < m; ++k) u += cell_user_throughput(class_ue_eta[c * m + k], prb[k]);
      u /= ues[c];
    }
    loads.push_back({ues[c], u});
  }
  out.throughput_mbps = cluster_throughput(loads) / 1e6;
  out.coverage_pct = coverage_fraction(pixels, params);
  out.coverage_cost = coverage_cost(out.coverage_pct, params);
  out.reward = out.throughput_mbps - out.coverage_cost;
  return out;
}

Scalar reward_case2(std::span<const PixelState> pixels) {
  Scalar total = 0.0;
  Scalar acc = 0.0;
  for (const auto& p : pixels) {
    total += p.weight;
    acc += p.weight * (p.rsrp + p.sinr);
  }
  if (!(total > 0.0)) throw ConfigError("reward_case2: total weight is zero");
  return acc / total;
}

std::vector<PixelState> pixel_states(const MdtDataset& dataset) {
  std::vector<PixelState> out;
  out.reserve(dataset.pixels.size());
  for (const auto& p : dataset.pixels) {
    const Scalar cell_ues = dataset.kpis.act_ues.at(p.serving_cell);
    out.push_back({p.rsrp, p.sinr, p.weight, p.serving_cell, p.act_ue_share * cell_ues});
  }
  return out;
}

RewardBreakdown reward_case1(const MdtDataset& dataset, const SchedulerConfig& sched, const CqiTable& table,
                             const CoverageCostParams& params) {
  const auto states = pixel_states(dataset);
  return reward_case1(states, static_cast<int>(dataset.kpis.act_ues.size()), sched, table, params);
}

Scalar reward_case2(const MdtDataset& dataset) {
  const auto states = pixel_states(dataset);
  return reward_case2(states);
}

void to_json(nlohmann::json& j, const SchedulerConfig& s) {
  j = {{"kind", s.kind == SchedulerKind::RoundRobin ? "round_robin" : "fair"},
       {"n_prb_tot", s.n_prb_tot},
       {"thr", s.thr},
       {"beta", s.beta}};
}

void from_json(const nlohmann::json& j, SchedulerConfig& s) {
  if (j.contains("kind")) {
    const auto k = j.at("kind").get<std::string>();
    if (k == "round_robin") s.kind = SchedulerKind::RoundRobin;
    else if (k == "fair") s.kind = SchedulerKind::Fair;
    else throw ConfigError("scheduler.kind must be round_robin or fair");
  }
  if (j.contains("n_prb_tot")) j.at("n_prb_tot").get_to(s.n_prb_tot);
  if (j.contains("thr")) j.at("thr").get_to(s.thr);
  if (j.contains("beta")) j.at("beta").get_to(s.beta);
  s.validate();
}

}  // namespace tiltlab

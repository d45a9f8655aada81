#include "tiltlab/mdt.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <random>
#include <set>

namespace tiltlab {

namespace {

const Scalar kNoiseMw = db_to_linear(kNoiseFloorDbm);

Scalar linear_mean_db(std::span<const Scalar> values_db) {
  Scalar acc = 0.0;
  for (Scalar v : values_db) acc += db_to_linear(v);
  return linear_to_db(acc / static_cast<Scalar>(values_db.size()));
}

}  // namespace

Grid traffic_intensity(int rows, int cols, std::span<const HotSpot> hotspots) {
  Grid g = Grid::Ones(rows, cols);
  for (int y = 0; y < rows; ++y) {
    for (int z = 0; z < cols; ++z) {
      for (const auto& h : hotspots) {
        const Scalar r = std::hypot(y - h.y, z - h.z);
        if (r <= h.radius_px) g(y, z) = std::max(g(y, z), h.intensity);
      }
    }
  }
  return g;
}

Scalar sinr_rsrp_based(Scalar pcell_rsrp_dbm, std::span<const Scalar> interferers_dbm) {
  Scalar denom = kNoiseMw;
  for (Scalar i : interferers_dbm) denom += db_to_linear(i);
  return pcell_rsrp_dbm - linear_to_db(denom);
}

Scalar sinr_rsrq_based(Scalar rsrq_linear, Scalar rho) {
  if (rho < 0.0 || rho > 1.0) throw ConfigError("sinr_rsrq_based: load outside [0, 1]");
  if (!(rsrq_linear > 0.0)) throw ConfigError("sinr_rsrq_based: RSRQ must be positive");
  const Scalar denom = 1.0 - rho * rsrq_linear * 12.0;
  // Rounding (e.g. contracted multiply-adds) can leave a spurious positive residue at the pole.
  if (!(denom > 1e-12)) throw ConfigError("sinr_rsrq_based: RSRQ/load pair is physically inconsistent");
  return 12.0 * rsrq_linear / denom;
}

Scalar rsrq_from_sinr(Scalar sinr_linear, Scalar rho) { return sinr_linear / (12.0 * (1.0 + rho * sinr_linear)); }

MdtCampaign synthesize_reports(const RsrpGridSet& grids, const TiltAssignment& baseline,
                               const SynthesisParams& params) {
  if (static_cast<int>(baseline.size()) != grids.num_cells())
    throw ConfigError("synthesize_reports: baseline does not cover every simulated cell");
  MdtCampaign out;
  out.rows = grids.rows();
  out.cols = grids.cols();
  out.baseline = baseline;
  const int n_cells = grids.num_cells();
  out.kpis.act_ues.assign(n_cells, 0.0);
  out.kpis.load_rho.assign(n_cells, params.base_load);
  if (params.n_calls == 0) return out;

  std::mt19937_64 rng(params.traffic_seed);
  const Grid intensity = traffic_intensity(out.rows, out.cols, params.hotspots);
  std::discrete_distribution<int> where(intensity.data(), intensity.data() + intensity.size());
  const CellGrid server = serving_cell_map(grids, baseline);

  std::vector<int> call_pixel(params.n_calls);
  std::vector<Scalar> calls_per_cell(n_cells, 0.0);
  for (auto& p : call_pixel) {
    p = where(rng);
    calls_per_cell[server.data()[p]] += 1.0;
  }
  for (int c = 0; c < n_cells; ++c) {
    out.kpis.act_ues[c] = params.total_act_ues * calls_per_cell[c] / static_cast<Scalar>(params.n_calls);
    out.kpis.load_rho[c] = std::clamp(params.base_load + params.load_per_ue * out.kpis.act_ues[c], 0.0, 0.95);
  }

  std::geometric_distribution<int> extra_reports(1.0 / std::max<Scalar>(params.mean_reports_per_call, 1.0));
  std::normal_distribution<Scalar> noise(0.0, 1.0);
  std::vector<std::pair<int, Scalar>> measured;
  for (std::size_t call = 0; call < params.n_calls; ++call) {
    const int p = call_pixel[call];
    const int y = p / out.cols;
    const int z = p % out.cols;
    const int serving = server.data()[p];
    const int n_reports = 1 + extra_reports(rng);
    for (int r = 0; r < n_reports; ++r) {
      MdtReport rep;
      rep.y = y;
      rep.z = z;
      rep.call_id = call;
      rep.serving_cell = serving;
      rep.pcell_rsrp = grids.at(serving, baseline[serving])(y, z) + params.sigma_meas_db * noise(rng);
      measured.clear();
      Scalar interference = kNoiseMw;
      for (int c = 0; c < n_cells; ++c) {
        if (c == serving) continue;
        const Scalar v = grids.at(c, baseline[c])(y, z) + params.sigma_meas_db * noise(rng);
        interference += db_to_linear(v);
        if (v >= params.ncell_detect_dbm) measured.emplace_back(c, v);
      }
      std::sort(measured.begin(), measured.end(), [](const auto& a, const auto& b) {
        return a.second > b.second || (a.second == b.second && a.first < b.first);
      });
      if (static_cast<int>(measured.size()) > params.max_ncells) measured.resize(params.max_ncells);
      rep.ncell_rsrp = measured;
      const Scalar sinr = db_to_linear(rep.pcell_rsrp) / interference;
      rep.pcell_rsrq = linear_to_db(rsrq_from_sinr(sinr, out.kpis.load_rho[serving]));
      out.reports.push_back(std::move(rep));
    }
  }
  return out;
}

MdtDataset pixelize(const MdtCampaign& campaign, int min_samples, int min_interferers, SinrMode mode) {
  if (campaign.reports.empty()) throw ConfigError("pixelize: no reports");
  const int n_pix = campaign.rows * campaign.cols;
  std::vector<std::vector<const MdtReport*>> bins(n_pix);
  for (const auto& r : campaign.reports) {
    if (r.y < 0 || r.y >= campaign.rows || r.z < 0 || r.z >= campaign.cols)
      throw ConfigError("pixelize: report outside the pixel area");
    bins[r.y * campaign.cols + r.z].push_back(&r);
  }

  MdtDataset out;
  out.rows = campaign.rows;
  out.cols = campaign.cols;
  out.kpis = campaign.kpis;
  out.baseline_tilts = campaign.baseline;
  std::size_t occupied = 0;
  std::size_t discarded = 0;
  std::vector<Scalar> rsrp;
  std::vector<Scalar> interferers;
  for (int p = 0; p < n_pix; ++p) {
    const auto& bin = bins[p];
    if (bin.empty()) continue;
    ++occupied;
    const bool enough = static_cast<int>(bin.size()) >= min_samples;
    const bool interfered = std::any_of(bin.begin(), bin.end(), [&](const MdtReport* r) {
      return static_cast<int>(r->ncell_rsrp.size()) >= min_interferers;
    });
    if (!enough || !interfered) {
      ++discarded;
      continue;
    }
    Pixel px;
    px.y = p / campaign.cols;
    px.z = p % campaign.cols;

    rsrp.clear();
    Scalar sinr_acc = 0.0;
    std::set<std::uint64_t> calls;
    std::map<int, std::vector<Scalar>> by_server;
    for (const MdtReport* r : bin) {
      rsrp.push_back(r->pcell_rsrp);
      calls.insert(r->call_id);
      by_server[r->serving_cell].push_back(r->pcell_rsrp);
      if (mode == SinrMode::RsrpBased) {
        interferers.clear();
        for (const auto& [cell, v] : r->ncell_rsrp) interferers.push_back(v);
        sinr_acc += db_to_linear(sinr_rsrp_based(r->pcell_rsrp, interferers));
      } else {
        sinr_acc += sinr_rsrq_based(db_to_linear(r->pcell_rsrq), campaign.kpis.load_rho.at(r->serving_cell));
      }
    }
    px.rsrp = linear_mean_db(rsrp);
    px.sinr = linear_to_db(sinr_acc / static_cast<Scalar>(bin.size()));
    px.lambda = static_cast<Scalar>(calls.size());
    px.weight = px.lambda;

    // Modal serving cell; ties go to the strongest average RSRP.
    std::size_t best_count = 0;
    Scalar best_rsrp = -std::numeric_limits<Scalar>::infinity();
    for (const auto& [cell, values] : by_server) {
      const Scalar avg = linear_mean_db(values);
      if (values.size() > best_count || (values.size() == best_count && avg > best_rsrp)) {
        best_count = values.size();
        best_rsrp = avg;
        px.serving_cell = cell;
      }
    }
    out.pixels.push_back(px);
  }
  if (out.pixels.empty()) throw ConfigError("pixelize: every pixel was discarded; dataset unusable");
  out.discarded_fraction = static_cast<Scalar>(discarded) / static_cast<Scalar>(occupied);
  refresh_ue_shares(out);
  return out;
}

MdtDataset compute_deltas(MdtDataset dataset, const RsrpGridSet& grids) {
  if (static_cast<int>(dataset.baseline_tilts.size()) != grids.num_cells())
    throw ConfigError("compute_deltas: baseline does not match grids");
  const int n_cells = grids.num_cells();
  std::vector<Scalar> rsrp(n_cells);
  std::vector<Scalar> others;
  for (auto& px : dataset.pixels) {
    for (int c = 0; c < n_cells; ++c) rsrp[c] = grids.at(c, dataset.baseline_tilts[c])(px.y, px.z);
    const int server = static_cast<int>(std::max_element(rsrp.begin(), rsrp.end()) - rsrp.begin());
    others.clear();
    for (int c = 0; c < n_cells; ++c)
      if (c != server) others.push_back(rsrp[c]);
    const Scalar sim_sinr = sinr_rsrp_based(rsrp[server], others);
    px.delta_r = px.rsrp - rsrp[server];
    px.delta_s = px.sinr - sim_sinr;
  }
  return dataset;
}

void refresh_ue_shares(MdtDataset& dataset) {
  std::map<int, Scalar> cell_weight;
  for (const auto& px : dataset.pixels) cell_weight[px.serving_cell] += px.weight;
  for (auto& px : dataset.pixels) {
    const Scalar total = cell_weight[px.serving_cell];
    px.act_ue_share = total > 0.0 ? px.weight / total : 0.0;
  }
}

MdtDataset sample_weights(MdtDataset dataset, std::uint64_t rng_seed) {
  std::mt19937_64 rng(rng_seed);
  const bool any_positive = std::any_of(dataset.pixels.begin(), dataset.pixels.end(),
                                        [](const Pixel& p) { return p.lambda > 0.0; });
  for (int attempt = 0;; ++attempt) {
    Scalar total = 0.0;
    for (auto& px : dataset.pixels) {
      if (px.lambda < 0.0) throw ConfigError("sample_weights: negative lambda");
      px.weight = px.lambda > 0.0 ? static_cast<Scalar>(std::poisson_distribution<long long>(px.lambda)(rng)) : 0.0;
      total += px.weight;
    }
    // An all-zero draw is degenerate traffic; redraw unless it is forced.
    if (total > 0.0 || !any_positive || attempt > 1000) break;
  }
  refresh_ue_shares(dataset);
  return dataset;
}

MdtDataset build_dataset(const RsrpGridSet& grids, const TiltAssignment& baseline, const SynthesisParams& params) {
  const MdtCampaign campaign = synthesize_reports(grids, baseline, params);
  return compute_deltas(pixelize(campaign, params.min_samples, params.min_interferers, params.sinr_mode), grids);
}

void write_dataset_jsonl(const std::filesystem::path& pixels_path, const std::filesystem::path& kpi_path,
                         const MdtDataset& dataset) {
  std::ofstream os(pixels_path);
  if (!os) throw ConfigError("cannot write " + pixels_path.string());
  for (const auto& p : dataset.pixels) {
    const nlohmann::json j = {{"y", p.y},           {"z", p.z},
                              {"rsrp", p.rsrp},     {"sinr", p.sinr},
                              {"weight", p.weight}, {"lambda", p.lambda},
                              {"serving_cell", p.serving_cell}, {"delta_r", p.delta_r},
                              {"delta_s", p.delta_s}, {"act_ue_share", p.act_ue_share}};
    os << j.dump() << '\n';
  }
  std::ofstream ks(kpi_path);
  if (!ks) throw ConfigError("cannot write " + kpi_path.string());
  const nlohmann::json k = {{"rows", dataset.rows},
                            {"cols", dataset.cols},
                            {"act_ues", dataset.kpis.act_ues},
                            {"load_rho", dataset.kpis.load_rho},
                            {"baseline_tilts", dataset.baseline_tilts},
                            {"discarded_fraction", dataset.discarded_fraction}};
  ks << k.dump(2) << '\n';
}

MdtDataset read_dataset_jsonl(const std::filesystem::path& pixels_path, const std::filesystem::path& kpi_path) {
  std::ifstream ks(kpi_path);
  if (!ks) throw ConfigError("cannot read " + kpi_path.string());
  const auto k = nlohmann::json::parse(ks);
  MdtDataset d;
  k.at("rows").get_to(d.rows);
  k.at("cols").get_to(d.cols);
  k.at("act_ues").get_to(d.kpis.act_ues);
  k.at("load_rho").get_to(d.kpis.load_rho);
  k.at("baseline_tilts").get_to(d.baseline_tilts);
  k.at("discarded_fraction").get_to(d.discarded_fraction);
  std::ifstream is(pixels_path);
  if (!is) throw ConfigError("cannot read " + pixels_path.string());
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    Pixel p;
    j.at("y").get_to(p.y);
    j.at("z").get_to(p.z);
    j.at("rsrp").get_to(p.rsrp);
    j.at("sinr").get_to(p.sinr);
    j.at("weight").get_to(p.weight);
    j.at("lambda").get_to(p.lambda);
    j.at("serving_cell").get_to(p.serving_cell);
    j.at("delta_r").get_to(p.delta_r);
    j.at("delta_s").get_to(p.delta_s);
    j.at("act_ue_share").get_to(p.act_ue_share);
    d.pixels.push_back(p);
  }
  return d;
}

void to_json(nlohmann::json& j, const SynthesisParams& p) {
  nlohmann::json hs = nlohmann::json::array();
  for (const auto& h : p.hotspots) hs.push_back({{"y", h.y}, {"z", h.z}, {"radius_px", h.radius_px}, {"intensity", h.intensity}});
  j = {{"n_calls", p.n_calls},
       {"mean_reports_per_call", p.mean_reports_per_call},
       {"sigma_meas_db", p.sigma_meas_db},
       {"hotspots", hs},
       {"ncell_detect_dbm", p.ncell_detect_dbm},
       {"max_ncells", p.max_ncells},
       {"total_act_ues", p.total_act_ues},
       {"base_load", p.base_load},
       {"load_per_ue", p.load_per_ue},
       {"traffic_seed", p.traffic_seed},
       {"min_samples", p.min_samples},
       {"min_interferers", p.min_interferers},
       {"sinr_mode", p.sinr_mode == SinrMode::RsrpBased ? "rsrp" : "rsrq"}};
}

void from_json(const nlohmann::json& j, SynthesisParams& p) {
  auto opt = [&](const char* key, auto& field) {
    if (j.contains(key)) j.at(key).get_to(field);
  };
  opt("n_calls", p.n_calls);
  opt("mean_reports_per_call", p.mean_reports_per_call);
  opt("sigma_meas_db", p.sigma_meas_db);
  opt("ncell_detect_dbm", p.ncell_detect_dbm);
  opt("max_ncells", p.max_ncells);
  opt("total_act_ues", p.total_act_ues);
  opt("base_load", p.base_load);
  opt("load_per_ue", p.load_per_ue);
  opt("traffic_seed", p.traffic_seed);
  opt("min_samples", p.min_samples);
  opt("min_interferers", p.min_interferers);
  if (j.contains("hotspots")) {
    p.hotspots.clear();
    for (const auto& h : j.at("hotspots"))
      p.hotspots.push_back({h.at("y").get<Scalar>(), h.at("z").get<Scalar>(), h.at("radius_px").get<Scalar>(),
                            h.at("intensity").get<Scalar>()});
  }
  if (j.contains("sinr_mode")) {
    const auto mode = j.at("sinr_mode").get<std::string>();
    if (mode == "rsrp") p.sinr_mode = SinrMode::RsrpBased;
    else if (mode == "rsrq") p.sinr_mode = SinrMode::RsrqBased;
    else throw ConfigError("dataset.sinr_mode must be rsrp or rsrq");
  }
}

}  // namespace tiltlab

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "support.hpp"

#include <cmath>
#include <map>
#include <numeric>
#include <set>

using namespace tiltlab;

namespace {

MdtReport report(int y, int z, std::uint64_t call, int serving, double rsrp, int n_ncells = 3) {
  MdtReport r;
  r.y = y;
  r.z = z;
  r.call_id = call;
  r.serving_cell = serving;
  r.pcell_rsrp = rsrp;
  for (int k = 0; k < n_ncells; ++k) r.ncell_rsrp.emplace_back(k + 1, -110.0 - k);
  return r;
}

MdtCampaign campaign_of(std::vector<MdtReport> reports, int rows = 2, int cols = 2) {
  MdtCampaign c;
  c.rows = rows;
  c.cols = cols;
  c.baseline = {0, 0, 0, 0};
  c.kpis.act_ues = {1, 1, 1, 1};
  c.kpis.load_rho = {0.5, 0.5, 0.5, 0.5};
  c.reports = std::move(reports);
  return c;
}

}  // namespace

TEST_CASE("rsrp-based sinr") {
  CHECK(sinr_rsrp_based(-125.0, {}) == doctest::Approx(0.0).epsilon(1e-12));
  const std::vector<double> one{-95.0};
  const double expected = -95.0 - 10.0 * std::log10(std::pow(10.0, -9.5) + std::pow(10.0, -12.5));
  CHECK(sinr_rsrp_based(-95.0, one) == doctest::Approx(expected).epsilon(1e-12));
  CHECK(sinr_rsrp_based(-95.0, one) == doctest::Approx(-0.004).epsilon(1e-3));
  const std::vector<double> two{-100.0, -100.0};
  CHECK(sinr_rsrp_based(-90.0, two) == doctest::Approx(6.99).epsilon(1e-3));
}

TEST_CASE("rsrq-based sinr") {
  CHECK(sinr_rsrq_based(1.0 / 12.0, 0.0) == doctest::Approx(1.0));
  CHECK(sinr_rsrq_based(0.05, 0.5) == doctest::Approx(0.6 / 0.7));
  CHECK_THROWS_AS(sinr_rsrq_based(1.0 / 12.0, 1.0), ConfigError);
  CHECK_THROWS_AS(sinr_rsrq_based(0.0, 0.3), ConfigError);
  CHECK_THROWS_AS(sinr_rsrq_based(0.05, 1.5), ConfigError);
}

TEST_CASE("rsrq inversion is consistent with the rssi definition") {
  // RSRQ = N_PRB * RSRP / RSSI with RSSI per PRB = 12 (rho * S + I + N) and SINR = S / (I + N).
  for (double rho : {0.0, 0.3, 0.8}) {
    for (double s_db : {-6.0, 0.0, 13.0}) {
      const double s = 1.0;
      const double in = s / std::pow(10.0, s_db / 10.0);
      const double rsrq = s / (12.0 * (rho * s + in));
      CHECK(rsrq_from_sinr(s / in, rho) == doctest::Approx(rsrq).epsilon(1e-12));
      CHECK(sinr_rsrq_based(rsrq, rho) == doctest::Approx(s / in).epsilon(1e-12));
    }
  }
}

TEST_CASE("pixel rsrp is the linear mean in dB") {
  auto c = campaign_of({report(0, 0, 1, 0, -100.0), report(0, 0, 2, 0, -100.0), report(1, 1, 3, 0, -90.0),
                        report(1, 1, 4, 0, -100.0)});
  const MdtDataset d = pixelize(c, 2);
  REQUIRE(d.pixels.size() == 2);
  CHECK(d.pixels[0].rsrp == doctest::Approx(-100.0).epsilon(1e-12));
  CHECK(d.pixels[1].rsrp == doctest::Approx(10.0 * std::log10(5.5e-10)).epsilon(1e-12));
  CHECK(d.pixels[1].rsrp == doctest::Approx(-92.59).epsilon(1e-4));
}

TEST_CASE("relevance rules") {
  SUBCASE("too few samples") {
    auto c = campaign_of({report(0, 0, 1, 0, -90.0), report(0, 0, 1, 0, -90.0), report(1, 0, 2, 0, -90.0),
                          report(1, 0, 2, 0, -90.0), report(1, 0, 3, 0, -90.0)});
    const MdtDataset d = pixelize(c, 3);
    REQUIRE(d.pixels.size() == 1);
    CHECK(d.pixels[0].y == 1);
    CHECK(d.discarded_fraction == doctest::Approx(0.5));
    CHECK(d.pixels[0].lambda == 2.0);
    CHECK(d.pixels[0].weight == 2.0);
  }
  SUBCASE("no report with enough neighbours") {
    auto c = campaign_of({report(0, 0, 1, 0, -90.0, 2), report(0, 0, 2, 0, -90.0, 2), report(1, 1, 3, 0, -90.0, 3),
                          report(1, 1, 4, 0, -90.0, 0)});
    const MdtDataset d = pixelize(c, 2, 3);
    REQUIRE(d.pixels.size() == 1);
    CHECK(d.pixels[0].z == 1);
  }
  SUBCASE("everything discarded") {
    auto c = campaign_of({report(0, 0, 1, 0, -90.0)});
    CHECK_THROWS_AS(pixelize(c, 2), ConfigError);
  }
}

TEST_CASE("modal serving cell with strongest-average tie break") {
  auto c = campaign_of({report(0, 0, 1, 2, -95.0), report(0, 0, 2, 1, -90.0), report(0, 0, 3, 2, -99.0),
                        report(1, 1, 4, 1, -95.0), report(1, 1, 5, 3, -90.0)});
  const MdtDataset d = pixelize(c, 2);
  REQUIRE(d.pixels.size() == 2);
  CHECK(d.pixels[0].serving_cell == 2);
  CHECK(d.pixels[1].serving_cell == 3);
}

TEST_CASE("synthesized reports") {
  const auto scen = testing::small_scenario();
  const RsrpGridSet g = generate_grids(scen);
  const TiltAssignment base(3, 0);
  SynthesisParams p = testing::small_synthesis();

  SUBCASE("invariants") {
    const MdtCampaign c = synthesize_reports(g, base, p);
    CHECK(c.reports.size() >= p.n_calls);
    for (const auto& r : c.reports) {
      CHECK(r.ncell_rsrp.size() <= 8);
      CHECK(std::isfinite(r.pcell_rsrp));
      CHECK(std::isfinite(r.pcell_rsrq));
      for (std::size_t k = 0; k < r.ncell_rsrp.size(); ++k) {
        CHECK(r.ncell_rsrp[k].first != r.serving_cell);
        if (k > 0) CHECK(r.ncell_rsrp[k - 1].second >= r.ncell_rsrp[k].second);
      }
    }
    const double ues = std::accumulate(c.kpis.act_ues.begin(), c.kpis.act_ues.end(), 0.0);
    CHECK(ues == doctest::Approx(p.total_act_ues));
  }
  SUBCASE("no calls") {
    p.n_calls = 0;
    CHECK(synthesize_reports(g, base, p).reports.empty());
  }
  SUBCASE("noise-free reports reproduce the grid") {
    p.sigma_meas_db = 0.0;
    p.n_calls = 50;
    const MdtCampaign c = synthesize_reports(g, base, p);
    for (const auto& r : c.reports) CHECK(r.pcell_rsrp == g.at(r.serving_cell, 0)(r.y, r.z));
  }
  SUBCASE("uniform intensity spreads calls evenly") {
    p.n_calls = 14400;
    p.mean_reports_per_call = 1.0;
    const MdtCampaign c = synthesize_reports(g, base, p);
    std::vector<double> counts(144, 0.0);
    std::set<std::uint64_t> seen;
    for (const auto& r : c.reports)
      if (seen.insert(r.call_id).second) counts[r.y * 12 + r.z] += 1.0;
    const double expected = 100.0;
    double chi2 = 0.0;
    for (double k : counts) chi2 += (k - expected) * (k - expected) / expected;
    // 143 degrees of freedom: mean 143, sd ~17; 220 is beyond the 99.99th percentile.
    CHECK(chi2 < 220.0);
  }
}

TEST_CASE("hot spot scales the expected call count") {
  const RsrpGridSet g = generate_grids(testing::small_scenario());
  SynthesisParams p = testing::small_synthesis();
  p.hotspots = {{5.0, 5.0, 0.0, 10.0}};
  p.mean_reports_per_call = 1.0;
  p.n_calls = 15300;  // 143 background pixels + 10x one hot pixel -> 100 expected calls per background pixel
  double hot = 0.0, background = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    p.traffic_seed = seed;
    std::set<std::uint64_t> seen;
    for (const auto& r : synthesize_reports(g, TiltAssignment(3, 0), p).reports) {
      if (!seen.insert(r.call_id).second) continue;
      if (r.y == 5 && r.z == 5) hot += 1.0;
      else background += 1.0 / 143.0;
    }
  }
  CHECK(hot / background == doctest::Approx(10.0).epsilon(0.05));
}

TEST_CASE("deltas reconstruct the measured values") {
  const auto lab = testing::small_lab();
  const MdtDataset& d = *lab.dataset;
  const TiltAssignment base = d.baseline_tilts;
  const int n = lab.grids->num_cells();
  for (const Pixel& px : d.pixels) {
    int server = 0;
    for (int c = 1; c < n; ++c)
      if (lab.grids->at(c, base[c])(px.y, px.z) > lab.grids->at(server, base[server])(px.y, px.z)) server = c;
    const double sim_rsrp = lab.grids->at(server, base[server])(px.y, px.z);
    std::vector<double> interferers;
    for (int c = 0; c < n; ++c)
      if (c != server) interferers.push_back(lab.grids->at(c, base[c])(px.y, px.z));
    const double sim_sinr = sinr_rsrp_based(sim_rsrp, interferers);
    CHECK(sim_rsrp + px.delta_r == doctest::Approx(px.rsrp).epsilon(1e-12));
    CHECK(sim_sinr + px.delta_s == doctest::Approx(px.sinr).epsilon(1e-12));
  }
}

TEST_CASE("noise-free synthesis leaves no rsrp delta") {
  const auto scen = testing::small_scenario();
  const RsrpGridSet g = generate_grids(scen);
  SynthesisParams p = testing::small_synthesis();
  p.sigma_meas_db = 0.0;
  const MdtDataset d = build_dataset(g, TiltAssignment(3, 0), p);
  for (const Pixel& px : d.pixels) CHECK(std::abs(px.delta_r) < 1e-9);
}

TEST_CASE("weights are Poisson draws around lambda") {
  MdtDataset d;
  d.pixels.resize(2);
  d.pixels[0].lambda = 4.0;
  d.pixels[1].lambda = 0.0;
  double sum = 0.0, sq = 0.0;
  const int n = 100000;
  for (int k = 0; k < n; ++k) {
    const MdtDataset s = sample_weights(d, static_cast<std::uint64_t>(k));
    CHECK(s.pixels[1].weight == 0.0);
    sum += s.pixels[0].weight;
    sq += s.pixels[0].weight * s.pixels[0].weight;
  }
  const double mean = sum / n;
  const double var = sq / n - mean * mean;
  // The all-zero redraw conditions on weight > 0: E = 4 / (1 - e^-4).
  const double cond_mean = 4.0 / (1.0 - std::exp(-4.0));
  CHECK(mean == doctest::Approx(cond_mean).epsilon(0.05 / 4.0));
  const double cond_var = (4.0 + 16.0) / (1.0 - std::exp(-4.0)) - cond_mean * cond_mean;
  CHECK(var == doctest::Approx(cond_var).epsilon(0.05));
}

TEST_CASE("ue shares sum to one per cell") {
  const auto lab = testing::small_lab();
  const MdtDataset d = sample_weights(*lab.dataset, 9);
  std::map<int, double> total;
  for (const auto& px : d.pixels) total[px.serving_cell] += px.act_ue_share;
  for (const auto& [cell, t] : total) CHECK(t == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("dataset json-lines round trip") {
  const auto lab = testing::small_lab();
  const auto pix = testing::temp_path("mdt.jsonl");
  const auto kpi = testing::temp_path("mdt.kpi.json");
  write_dataset_jsonl(pix, kpi, *lab.dataset);
  const MdtDataset back = read_dataset_jsonl(pix, kpi);
  REQUIRE(back.pixels.size() == lab.dataset->pixels.size());
  for (std::size_t i = 0; i < back.pixels.size(); ++i) {
    CHECK(back.pixels[i].rsrp == lab.dataset->pixels[i].rsrp);
    CHECK(back.pixels[i].delta_s == lab.dataset->pixels[i].delta_s);
    CHECK(back.pixels[i].lambda == lab.dataset->pixels[i].lambda);
  }
  CHECK(back.kpis.load_rho == lab.dataset->kpis.load_rho);
  CHECK(back.baseline_tilts == lab.dataset->baseline_tilts);
}

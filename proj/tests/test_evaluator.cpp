#include <doctest.h>

#include <fstream>

#include "dualflood/errors.hpp"
#include "dualflood/evaluator.hpp"
#include "test_helpers.hpp"

using namespace dualflood;

namespace {

ModelConfig eval_model_config(const FloodGraph& g) {
  ModelConfig m;
  m.latent_dim = 8;
  m.gnn_layers = 2;
  m.mlp_layers = 2;
  m.features.history = 1;
  m.seed = 7;
  m.node_in_dim = m.features.node_feature_dim(static_cast<int>(g.static_node_features.cols()));
  m.edge_in_dim = m.features.edge_feature_dim(static_cast<int>(g.static_edge_features.cols()));
  return m;
}

}  // namespace

TEST_CASE("nse: degenerate anchors and hand cases") {
  Eigen::VectorXd t(2), p(2);
  t << 0.0, 2.0;
  p = t;
  CHECK(*nse(p, t) == doctest::Approx(1.0));
  p << 1.0, 1.0;  // the observation mean
  CHECK(*nse(p, t) == doctest::Approx(0.0));
  p << 0.0, 1.0;
  CHECK(*nse(p, t) == doctest::Approx(0.5));
  t << 3.0, 3.0;  // constant observations: undefined
  CHECK_FALSE(nse(p, t).has_value());
  CHECK_THROWS_AS(nse(Eigen::VectorXd::Zero(1), Eigen::VectorXd::Zero(1)), std::invalid_argument);
}

TEST_CASE("nse: invariant under adding a constant to both series") {
  dftest::Rng rng(4);
  const Eigen::VectorXd t = dftest::random_vector(20, rng);
  const Eigen::VectorXd p = dftest::random_vector(20, rng);
  const double a = *nse(p, t);
  const double b = *nse((p.array() + 13.5).matrix(), (t.array() + 13.5).matrix());
  CHECK(a == doctest::Approx(b).epsilon(1e-9));
}

TEST_CASE("csi: perfect, miss-all, and hand confusion counts") {
  Eigen::MatrixXd truth(2, 3), pred(2, 3);
  truth << 0.1, 0.0, 0.2, 0.0, 0.3, 0.0;
  pred = truth;
  CHECK(csi(pred, truth, 0.05) == 1.0);
  pred.setZero();
  CHECK(csi(pred, truth, 0.05) == 0.0);  // TP=0, FN>0
  // TP=2, FN=1, FP=1 -> 0.5
  truth << 0.1, 0.1, 0.1, 0.0, 0.0, 0.0;
  pred << 0.1, 0.1, 0.0, 0.1, 0.0, 0.0;
  CHECK(csi(pred, truth, 0.05) == doctest::Approx(0.5));
  // nothing flooded anywhere: defined as 1
  truth.setZero();
  pred.setZero();
  CHECK(csi(pred, truth, 0.05) == 1.0);
}

TEST_CASE("csi: random confusions match a counting oracle") {
  dftest::Rng rng(9);
  for (int trial = 0; trial < 25; ++trial) {
    Eigen::MatrixXd truth(4, 6), pred(4, 6);
    long tp = 0, fn = 0, fp = 0;
    for (int i = 0; i < truth.size(); ++i) {
      const bool t = rng.uniform() < 0.4;
      const bool p = rng.uniform() < 0.4;
      truth.data()[i] = t ? 1.0 : 0.0;
      pred.data()[i] = p ? 1.0 : 0.0;
      tp += (t && p);
      fn += (t && !p);
      fp += (!t && p);
    }
    const double expect = (tp + fn + fp) == 0 ? 1.0 : double(tp) / double(tp + fn + fp);
    CHECK(csi(pred, truth, 0.5) == doctest::Approx(expect));
  }
}

TEST_CASE("csi: invariant under a monotone transform with a transformed threshold") {
  dftest::Rng rng(14);
  Eigen::MatrixXd truth(5, 5), pred(5, 5);
  for (int i = 0; i < truth.size(); ++i) {
    truth.data()[i] = rng.uniform(0.0, 1.0);
    pred.data()[i] = rng.uniform(0.0, 1.0);
  }
  const double tau = 0.3;
  auto warp = [](const Eigen::MatrixXd& m) { return (m.array().exp() - 0.5).matrix().eval(); };
  const double a = csi(pred, truth, tau);
  const double b = csi(warp(pred), warp(truth), std::exp(tau) - 0.5);
  CHECK(a == b);
}

TEST_CASE("volume_to_depth: prism cells, clamping, interpolation oracle") {
  FloodGraph g = dftest::path_graph(2, 100.0);
  Eigen::MatrixXd v(1, 2);
  v << 50.0, -3.0;
  long clamped = 0;
  const Eigen::MatrixXd d = volume_to_depth(g, v, &clamped);
  CHECK(d(0, 0) == doctest::Approx(0.5));
  CHECK(d(0, 1) == 0.0);
  CHECK(clamped == 1);

  // richer curve vs a loop interpolation oracle
  g.depth_curves[0].volume = {0.0, 10.0, 40.0, 100.0};
  g.depth_curves[0].depth = {0.0, 0.4, 0.9, 1.2};
  dftest::Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const double vol = rng.uniform(0.0, 140.0);
    Eigen::MatrixXd vv(1, 2);
    vv << vol, 0.0;
    const double got = volume_to_depth(g, vv)(0, 0);
    // oracle: scan segments
    const auto& c = g.depth_curves[0];
    double expect;
    if (vol >= c.volume.back()) {
      const std::size_t n = c.volume.size();
      const double slope = (c.depth[n - 1] - c.depth[n - 2]) / (c.volume[n - 1] - c.volume[n - 2]);
      expect = c.depth[n - 1] + slope * (vol - c.volume[n - 1]);
    } else {
      std::size_t k = 1;
      while (c.volume[k] < vol) ++k;
      const double f = (vol - c.volume[k - 1]) / (c.volume[k] - c.volume[k - 1]);
      expect = c.depth[k - 1] + f * (c.depth[k] - c.depth[k - 1]);
    }
    CHECK(got == doctest::Approx(expect).epsilon(1e-10));
  }
}

TEST_CASE("volume_to_depth: monotone in volume") {
  auto [g, e] = dftest::small_case(31, 10, 12);
  dftest::Rng rng(5);
  Eigen::MatrixXd a(3, g.num_nodes), b(3, g.num_nodes);
  for (int i = 0; i < a.size(); ++i) {
    a.data()[i] = rng.uniform(0.0, 50.0);
    b.data()[i] = a.data()[i] + rng.uniform(0.0, 20.0);
  }
  const Eigen::MatrixXd da = volume_to_depth(g, a);
  const Eigen::MatrixXd db = volume_to_depth(g, b);
  CHECK(((db - da).array() >= -1e-12).all());
}

TEST_CASE("rollout: oracle stub reproduces ground truth, reports are perfect") {
  auto [g, e] = dftest::small_case(32, 10, 16);
  const RolloutResult rr = oracle_rollout(g, e, 1, e.num_steps - 2);
  CHECK((rr.node_volume - e.node_volume).cwiseAbs().maxCoeff() == 0.0);
  const MetricsReport rep = event_report(rr, e, g, {0.05, 0.3});
  CHECK(rep.volume.rmse == 0.0);
  CHECK(rep.flow.rmse == 0.0);
  CHECK(*rep.volume.nse == doctest::Approx(1.0));
  CHECK(rep.csi_by_threshold.at(0.05) == 1.0);
  CHECK(rep.csi_by_threshold.at(0.3) == 1.0);
  CHECK(rep.per_timestep_rmse.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("rollout: zero weights freeze the state under zero-mean target stats") {
  auto [g, e] = dftest::small_case(33, 9, 12);
  ModelConfig mc = eval_model_config(g);
  ModelState model = init_model(mc);
  for (auto* w : model.parameters()) w->setZero();
  NormStats stats = fit_normalizer(g, {e}, mc.features);
  stats.dv_mean = 0.0;  // zero-mean targets: zero weights give exactly zero deltas
  stats.dq_mean = 0.0;
  const RolloutResult rr = rollout(model, g, e, stats, 6);
  for (int t = mc.features.history; t <= mc.features.history + 6; ++t) {
    CHECK((rr.node_volume.row(t) - e.node_volume.row(mc.features.history)).cwiseAbs().maxCoeff() ==
          0.0);
  }
}

TEST_CASE("rollout: two steps equal two manual forward_step chains; reruns are bit-identical") {
  auto [g, e] = dftest::small_case(34, 9, 12);
  const ModelConfig mc = eval_model_config(g);
  const ModelState model = init_model(mc);
  const NormStats stats = fit_normalizer(g, {e}, mc.features);

  const RolloutResult rr = rollout(model, g, e, stats, 2);
  const RolloutResult rr2 = rollout(model, g, e, stats, 2);
  CHECK((rr.node_volume - rr2.node_volume).cwiseAbs().maxCoeff() == 0.0);
  CHECK((rr.edge_flow - rr2.edge_flow).cwiseAbs().maxCoeff() == 0.0);

  EventSeries chain = e;
  const int p = mc.features.history;
  for (int t = p; t < p + 2; ++t) {
    const Eigen::MatrixXd x = assemble_node_features(g, chain, t, mc.features);
    const Eigen::MatrixXd ef = assemble_edge_features(g, chain, t, mc.features);
    const StepOutput out = forward_step(model, g, x, ef, stats);
    chain.node_volume.row(t + 1) = chain.node_volume.row(t) + out.delta_volume.transpose();
    chain.edge_flow.row(t + 1) = chain.edge_flow.row(t) + out.delta_flow.transpose();
  }
  CHECK((rr.node_volume.row(p + 2) - chain.node_volume.row(p + 2)).cwiseAbs().maxCoeff() == 0.0);
  CHECK((rr.edge_flow.row(p + 2) - chain.edge_flow.row(p + 2)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("rollout: horizon must stay within the forcing") {
  auto [g, e] = dftest::small_case(35, 8, 10);
  const ModelConfig mc = eval_model_config(g);
  const ModelState model = init_model(mc);
  const NormStats stats = fit_normalizer(g, {e}, mc.features);
  CHECK_THROWS_AS(rollout(model, g, e, stats, e.num_steps), DataError);
}

TEST_CASE("event_report: rmse/mae relations and the max-depth oracle") {
  auto [g, e] = dftest::small_case(36, 10, 14);
  ModelConfig mc = eval_model_config(g);
  const ModelState model = init_model(mc);
  const NormStats stats = fit_normalizer(g, {e}, mc.features);
  const RolloutResult rr = rollout(model, g, e, stats, e.num_steps - 1 - mc.features.history);
  const MetricsReport rep = event_report(rr, e, g, {0.05});

  CHECK(rep.volume.mae <= rep.volume.rmse + 1e-12);
  CHECK(rep.flow.mae <= rep.flow.rmse + 1e-12);
  CHECK(rep.depth.mae <= rep.depth.rmse + 1e-12);
  if (rep.volume.nse) CHECK(*rep.volume.nse <= 1.0);

  // per-node maximum over timesteps, loop oracle
  for (int i = 0; i < g.num_nodes; ++i) {
    double m = 0.0;
    for (int t = 0; t < rr.depth.rows(); ++t) m = std::max(m, rr.depth(t, i));
    CHECK(rep.max_depth_pred[i] == doctest::Approx(m));
  }
}

TEST_CASE("write_report emits the documented files and float32-lossless CSV") {
  auto [g, e] = dftest::small_case(37, 10, 12);
  const RolloutResult rr = oracle_rollout(g, e, 1, e.num_steps - 2);
  MetricsReport rep = event_report(rr, e, g, {0.05, 0.3});
  dftest::TempDir dir("report");
  write_report(rep, g, dir.str());
  for (const char* name : {"metrics.json", "per_timestep_rmse.csv", "max_depth_map.csv",
                           "rmse_volume.png", "rmse_flow.png", "rmse_depth.png",
                           "max_depth_true.png", "max_depth_pred.png", "max_depth_diff.png"}) {
    CHECK(std::filesystem::exists(dir.path() / name));
  }
  // CSV round-trips float32 payloads exactly
  std::ifstream csv(dir.path() / "max_depth_map.csv");
  std::string header, line;
  std::getline(csv, header);
  int row = 0;
  while (std::getline(csv, line)) {
    const auto c1 = line.find(','), c2 = line.find(',', line.find(',') + 1);
    const float truth = std::strtof(line.substr(c1 + 1, c2 - c1 - 1).c_str(), nullptr);
    CHECK(truth == static_cast<float>(rep.max_depth_true[row]));
    ++row;
  }
  CHECK(row == g.num_nodes);

  // saved rollouts reload identically at float32 precision
  save_rollout(rr, (dir.path() / "ro").string(), {});
  const RolloutResult back = load_rollout((dir.path() / "ro").string());
  CHECK(back.start_step == rr.start_step);
  CHECK((back.node_volume.cast<float>() - rr.node_volume.cast<float>()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("aggregate_reports: mean and sample std match a loop oracle") {
  std::vector<MetricsReport> reports(3);
  reports[0].volume.rmse = 1.0;
  reports[1].volume.rmse = 2.0;
  reports[2].volume.rmse = 6.0;
  for (auto& r : reports) {
    r.volume.nse = 0.5;
    r.csi_by_threshold[0.05] = 0.9;
  }
  const AggregateMetrics agg = aggregate_reports(reports);
  const double mean = (1.0 + 2.0 + 6.0) / 3.0;
  const double var = ((1 - mean) * (1 - mean) + (2 - mean) * (2 - mean) + (6 - mean) * (6 - mean)) / 2.0;
  CHECK(agg.values.at("volume_rmse").first == doctest::Approx(mean).epsilon(1e-12));
  CHECK(agg.values.at("volume_rmse").second == doctest::Approx(std::sqrt(var)).epsilon(1e-12));
  CHECK(agg.values.at("csi_0.05").first == doctest::Approx(0.9));
}

#include "dualflood/evaluator.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "dualflood/binio.hpp"
#include "dualflood/errors.hpp"
#include "dualflood/plot.hpp"

namespace dualflood {

namespace fs = std::filesystem;
using io::json;

RolloutResult rollout(const ModelState& model, const FloodGraph& g, const EventSeries& e,
                      const NormStats& stats, int num_steps) {
  const int p = model.config.features.history;
  if (e.num_steps < p + 1) throw DataError("rollout: event too short for the history window");
  if (num_steps < 1) throw std::invalid_argument("rollout: num_steps must be >= 1");
  if (p + num_steps > e.num_steps - 1)
    throw DataError("rollout: horizon exceeds the supplied forcing");

  RolloutResult r;
  r.start_step = p;
  const int last = p + num_steps;
  r.node_volume = Eigen::MatrixXd::Zero(last + 1, g.num_nodes);
  r.edge_flow = Eigen::MatrixXd::Zero(last + 1, g.num_edges);
  r.node_volume.topRows(p + 1) = e.node_volume.topRows(p + 1);
  r.edge_flow.topRows(p + 1) = e.edge_flow.topRows(p + 1);

  // predicted states replace the ground-truth ones in the rolling window;
  // rainfall and boundary series stay ground truth throughout
  EventSeries window = e;

  const auto t0 = std::chrono::steady_clock::now();
  for (int t = p; t < last; ++t) {
    const Eigen::MatrixXd x = assemble_node_features(g, window, t, model.config.features);
    const Eigen::MatrixXd ef = assemble_edge_features(g, window, t, model.config.features);
    const StepOutput out = forward_step(model, g, x, ef, stats);
    r.node_volume.row(t + 1) = r.node_volume.row(t) + out.delta_volume.transpose();
    r.edge_flow.row(t + 1) = r.edge_flow.row(t) + out.delta_flow.transpose();
    window.node_volume.row(t + 1) = r.node_volume.row(t + 1);
    window.edge_flow.row(t + 1) = r.edge_flow.row(t + 1);
  }
  const auto t1 = std::chrono::steady_clock::now();
  r.inference_seconds = std::chrono::duration<double>(t1 - t0).count();

  r.depth = volume_to_depth(g, r.node_volume, &r.depth_clamped_cells);
  return r;
}

RolloutResult oracle_rollout(const FloodGraph& g, const EventSeries& e, int history,
                             int num_steps) {
  if (history + num_steps > e.num_steps - 1)
    throw DataError("oracle_rollout: horizon exceeds the event");
  RolloutResult r;
  r.start_step = history;
  const int last = history + num_steps;
  const auto t0 = std::chrono::steady_clock::now();
  r.node_volume = e.node_volume.topRows(last + 1);
  r.edge_flow = e.edge_flow.topRows(last + 1);
  const auto t1 = std::chrono::steady_clock::now();
  r.inference_seconds = std::chrono::duration<double>(t1 - t0).count();
  r.depth = volume_to_depth(g, r.node_volume, &r.depth_clamped_cells);
  return r;
}

std::optional<double> nse(const Eigen::VectorXd& pred, const Eigen::VectorXd& truth) {
  if (pred.size() != truth.size()) throw std::invalid_argument("nse: length mismatch");
  if (pred.size() < 2) throw std::invalid_argument("nse: need at least 2 samples");
  const double mean = truth.mean();
  const double sst = (truth.array() - mean).square().sum();
  if (sst == 0.0) return std::nullopt;
  const double sse = (truth - pred).squaredNorm();
  return 1.0 - sse / sst;
}

double csi(const Eigen::MatrixXd& pred_depth, const Eigen::MatrixXd& true_depth, double tau) {
  if (pred_depth.rows() != true_depth.rows() || pred_depth.cols() != true_depth.cols())
    throw std::invalid_argument("csi: shape mismatch");
  long tp = 0, fn = 0, fp = 0;
  for (Eigen::Index r = 0; r < pred_depth.rows(); ++r)
    for (Eigen::Index c = 0; c < pred_depth.cols(); ++c) {
      const bool p = pred_depth(r, c) >= tau;
      const bool t = true_depth(r, c) >= tau;
      tp += (p && t);
      fn += (!p && t);
      fp += (p && !t);
    }
  const long denom = tp + fn + fp;
  return denom == 0 ? 1.0 : static_cast<double>(tp) / static_cast<double>(denom);
}

Eigen::MatrixXd volume_to_depth(const FloodGraph& g, const Eigen::MatrixXd& volume,
                                long* clamped) {
  if (volume.cols() != g.num_nodes)
    throw std::invalid_argument("volume_to_depth: column count must equal num_nodes");
  Eigen::MatrixXd depth(volume.rows(), volume.cols());
  long clamps = 0;
  for (Eigen::Index t = 0; t < volume.rows(); ++t)
    for (int i = 0; i < g.num_nodes; ++i) {
      double v = volume(t, i);
      if (v < 0.0) {
        v = 0.0;
        ++clamps;
      }
      depth(t, i) = g.depth_curves[static_cast<std::size_t>(i)].eval(v);
    }
  if (clamped) *clamped += clamps;
  return depth;
}

namespace {

double rmse_block(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return std::sqrt((a - b).array().square().mean());
}

double mae_block(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return (a - b).array().abs().mean();
}

// per-column (series) NSE averaged over columns, constant columns excluded
VariableMetrics series_metrics(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& truth) {
  VariableMetrics m;
  m.rmse = rmse_block(pred, truth);
  m.mae = mae_block(pred, truth);
  double acc = 0.0;
  int used = 0;
  for (Eigen::Index c = 0; c < pred.cols(); ++c) {
    const auto val = nse(pred.col(c), truth.col(c));
    if (val.has_value()) {
      acc += *val;
      ++used;
    } else {
      ++m.nse_excluded;
    }
  }
  if (used > 0) m.nse = acc / used;
  return m;
}

json variable_json(const VariableMetrics& m) {
  json j = {{"rmse", m.rmse}, {"mae", m.mae}, {"nse_excluded_series", m.nse_excluded}};
  if (m.nse.has_value()) j["nse"] = *m.nse;
  else j["nse"] = nullptr;
  return j;
}

std::string fmt_f32(double v) {
  // %.9g round-trips float32 exactly
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", static_cast<double>(static_cast<float>(v)));
  return buf;
}

}  // namespace

json MetricsReport::to_json() const {
  json j;
  j["format_version"] = kReportFormatVersion;
  j["start_step"] = start_step;
  j["nse_aggregation"] = "per_series_mean";
  j["csi_aggregation"] = "pooled_cells";
  j["volume"] = variable_json(volume);
  j["flow"] = variable_json(flow);
  j["depth"] = variable_json(depth);
  json csi_j;
  for (const auto& [tau, score] : csi_by_threshold) {
    char key[32];
    std::snprintf(key, sizeof(key), "%g", tau);
    csi_j[key] = score;
  }
  j["csi"] = csi_j;
  j["inference_seconds"] = inference_seconds;
  return j;
}

MetricsReport event_report(const RolloutResult& result, const EventSeries& e, const FloodGraph& g,
                           const std::vector<double>& thresholds) {
  MetricsReport rep;
  rep.start_step = result.start_step;
  rep.inference_seconds = result.inference_seconds;

  const int first = result.start_step + 1;  // first predicted row
  const int rows = static_cast<int>(result.node_volume.rows()) - first;
  if (rows < 1) throw std::invalid_argument("event_report: rollout has no predicted steps");

  const Eigen::MatrixXd pv = result.node_volume.bottomRows(rows);
  const Eigen::MatrixXd tv = e.node_volume.middleRows(first, rows);
  const Eigen::MatrixXd pq = result.edge_flow.bottomRows(rows);
  const Eigen::MatrixXd tq = e.edge_flow.middleRows(first, rows);
  const Eigen::MatrixXd pd = result.depth.bottomRows(rows);
  long clamp_ignore = 0;
  const Eigen::MatrixXd td_full = volume_to_depth(g, e.node_volume, &clamp_ignore);
  const Eigen::MatrixXd td = td_full.middleRows(first, rows);

  rep.volume = series_metrics(pv, tv);
  rep.flow = series_metrics(pq, tq);
  rep.depth = series_metrics(pd, td);

  for (double tau : thresholds) rep.csi_by_threshold[tau] = csi(pd, td, tau);

  rep.per_timestep_rmse.resize(rows, 3);
  rep.per_timestep_index.resize(static_cast<std::size_t>(rows));
  for (int r = 0; r < rows; ++r) {
    rep.per_timestep_index[static_cast<std::size_t>(r)] = first + r;
    rep.per_timestep_rmse(r, 0) = rmse_block(pv.row(r), tv.row(r));
    rep.per_timestep_rmse(r, 1) = rmse_block(pq.row(r), tq.row(r));
    rep.per_timestep_rmse(r, 2) = rmse_block(pd.row(r), td.row(r));
  }

  const Eigen::MatrixXd td_span = td_full.topRows(result.depth.rows());
  rep.max_depth_true = td_span.colwise().maxCoeff().transpose();
  rep.max_depth_pred = result.depth.colwise().maxCoeff().transpose();
  return rep;
}

void write_report(const MetricsReport& report, const FloodGraph& g, const std::string& out_dir) {
  fs::create_directories(out_dir);
  const fs::path out(out_dir);
  io::write_json(out / "metrics.json", report.to_json());

  {
    std::ofstream f(out / "per_timestep_rmse.csv", std::ios::trunc);
    f << "step,rmse_volume_m3,rmse_flow_m3s,rmse_depth_m\n";
    for (Eigen::Index r = 0; r < report.per_timestep_rmse.rows(); ++r)
      f << report.per_timestep_index[static_cast<std::size_t>(r)] << ","
        << fmt_f32(report.per_timestep_rmse(r, 0)) << "," << fmt_f32(report.per_timestep_rmse(r, 1))
        << "," << fmt_f32(report.per_timestep_rmse(r, 2)) << "\n";
  }
  {
    std::ofstream f(out / "max_depth_map.csv", std::ios::trunc);
    f << "node,true_max_depth_m,pred_max_depth_m,diff_m\n";
    for (Eigen::Index i = 0; i < report.max_depth_true.size(); ++i)
      f << i << "," << fmt_f32(report.max_depth_true[i]) << "," << fmt_f32(report.max_depth_pred[i])
        << "," << fmt_f32(report.max_depth_pred[i] - report.max_depth_true[i]) << "\n";
  }

  const char* names[3] = {"rmse_volume.png", "rmse_flow.png", "rmse_depth.png"};
  for (int v = 0; v < 3; ++v) {
    std::vector<double> series(static_cast<std::size_t>(report.per_timestep_rmse.rows()));
    for (Eigen::Index r = 0; r < report.per_timestep_rmse.rows(); ++r)
      series[static_cast<std::size_t>(r)] = report.per_timestep_rmse(r, v);
    plot::write_png((out / names[v]).string(), plot::line_chart(series));
  }
  if (g.node_xy.size() > 0) {
    std::vector<double> x(g.node_xy.col(0).data(), g.node_xy.col(0).data() + g.num_nodes);
    std::vector<double> y(g.node_xy.col(1).data(), g.node_xy.col(1).data() + g.num_nodes);
    auto col = [](const Eigen::VectorXd& v) {
      return std::vector<double>(v.data(), v.data() + v.size());
    };
    plot::write_png((out / "max_depth_true.png").string(),
                    plot::scatter_map(x, y, col(report.max_depth_true)));
    plot::write_png((out / "max_depth_pred.png").string(),
                    plot::scatter_map(x, y, col(report.max_depth_pred)));
    plot::write_png((out / "max_depth_diff.png").string(),
                    plot::scatter_map(x, y, col(report.max_depth_pred - report.max_depth_true)));
  }
}

AggregateMetrics aggregate_reports(const std::vector<MetricsReport>& reports) {
  AggregateMetrics agg;
  agg.num_events = static_cast<int>(reports.size());
  std::map<std::string, std::vector<double>> samples;
  for (const auto& r : reports) {
    samples["volume_rmse"].push_back(r.volume.rmse);
    samples["volume_mae"].push_back(r.volume.mae);
    if (r.volume.nse) samples["volume_nse"].push_back(*r.volume.nse);
    samples["flow_rmse"].push_back(r.flow.rmse);
    samples["flow_mae"].push_back(r.flow.mae);
    if (r.flow.nse) samples["flow_nse"].push_back(*r.flow.nse);
    samples["depth_rmse"].push_back(r.depth.rmse);
    samples["depth_mae"].push_back(r.depth.mae);
    if (r.depth.nse) samples["depth_nse"].push_back(*r.depth.nse);
    for (const auto& [tau, score] : r.csi_by_threshold) {
      char key[48];
      std::snprintf(key, sizeof(key), "csi_%g", tau);
      samples[key].push_back(score);
    }
    samples["inference_seconds"].push_back(r.inference_seconds);
  }
  for (const auto& [name, xs] : samples) {
    const double n = static_cast<double>(xs.size());
    double mean = 0.0;
    for (double v : xs) mean += v;
    mean /= n;
    double var = 0.0;
    if (xs.size() >= 2) {
      for (double v : xs) var += (v - mean) * (v - mean);
      var /= (n - 1.0);
    }
    agg.values[name] = {mean, std::sqrt(var)};
  }
  return agg;
}

json AggregateMetrics::to_json() const {
  json j;
  j["format_version"] = kReportFormatVersion;
  j["num_events"] = num_events;
  json vals;
  for (const auto& [name, ms] : values) vals[name] = {{"mean", ms.first}, {"std", ms.second}};
  j["metrics"] = vals;
  return j;
}

void save_rollout(const RolloutResult& r, const std::string& path, const json& provenance) {
  fs::create_directories(path);
  io::ArrayWriter w{fs::path(path)};
  w.f32("node_volume", "node_volume.bin", r.node_volume);
  w.f32("edge_flow", "edge_flow.bin", r.edge_flow);
  w.f32("depth", "depth.bin", r.depth);
  json manifest;
  manifest["format_version"] = kReportFormatVersion;
  manifest["kind"] = "dualflood-rollout";
  manifest["start_step"] = r.start_step;
  manifest["inference_seconds"] = r.inference_seconds;
  manifest["depth_clamped_cells"] = r.depth_clamped_cells;
  if (!provenance.is_null() && !provenance.empty()) manifest["provenance"] = provenance;
  manifest["arrays"] = w.manifest_arrays();
  io::write_json(fs::path(path) / "manifest.json", manifest);
}

RolloutResult load_rollout(const std::string& path) {
  const fs::path root(path);
  const json manifest = io::read_json(root / "manifest.json");
  if (manifest.value("kind", "") != "dualflood-rollout")
    throw DataError("not a rollout directory: " + path);
  if (manifest.value("format_version", -1) != kReportFormatVersion)
    throw DataError("rollout manifest: unsupported format version");
  io::ArrayReader r(root, manifest.at("arrays"));
  RolloutResult out;
  out.start_step = manifest.at("start_step").get<int>();
  out.inference_seconds = manifest.value("inference_seconds", 0.0);
  out.depth_clamped_cells = manifest.value("depth_clamped_cells", 0L);
  out.node_volume = r.f32("node_volume", -1, -1);
  out.edge_flow = r.f32("edge_flow", out.node_volume.rows(), -1);
  out.depth = r.f32("depth", out.node_volume.rows(), out.node_volume.cols());
  return out;
}

}  // namespace dualflood

#include "dualflood/dataset.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "dualflood/binio.hpp"
#include "dualflood/errors.hpp"

namespace dualflood {

namespace fs = std::filesystem;
using io::json;

ColumnPlan ColumnPlan::nodes(int static_cols, const FeatureConfig& fc) {
  ColumnPlan plan;
  for (int c = 0; c < static_cols; ++c) plan.columns.push_back({Kind::Static, c});
  for (int off = -fc.history; off <= 0; ++off) {
    plan.columns.push_back({Kind::Volume, off});
    plan.columns.push_back({Kind::Rainfall, off});
    if (fc.include_inflow_bc) plan.columns.push_back({Kind::InflowBc, off});
    if (fc.include_outflow_bc) plan.columns.push_back({Kind::OutflowBc, off});
  }
  return plan;
}

ColumnPlan ColumnPlan::edges(int static_cols, const FeatureConfig& fc) {
  ColumnPlan plan;
  for (int c = 0; c < static_cols; ++c) plan.columns.push_back({Kind::Static, c});
  for (int off = -fc.history; off <= 0; ++off) plan.columns.push_back({Kind::Flow, off});
  return plan;
}

namespace {

void check_window_bounds(const EventSeries& e, int t, const FeatureConfig& fc) {
  if (t < fc.history)
    throw std::invalid_argument("feature window at t=" + std::to_string(t) +
                                " needs " + std::to_string(fc.history) +
                                " previous states (insufficient history)");
  if (t >= e.num_steps)
    throw std::invalid_argument("feature window t out of range");
}

}  // namespace

Eigen::MatrixXd assemble_node_features(const FloodGraph& g, const EventSeries& e, int t,
                                       const FeatureConfig& fc) {
  check_window_bounds(e, t, fc);
  const int static_cols = static_cast<int>(g.static_node_features.cols());
  const ColumnPlan plan = ColumnPlan::nodes(static_cols, fc);
  Eigen::MatrixXd x(g.num_nodes, static_cast<Eigen::Index>(plan.columns.size()));
  for (std::size_t c = 0; c < plan.columns.size(); ++c) {
    const auto& col = plan.columns[c];
    const int step = t + col.arg;
    switch (col.kind) {
      case ColumnPlan::Kind::Static:
        x.col(static_cast<Eigen::Index>(c)) = g.static_node_features.col(col.arg);
        break;
      case ColumnPlan::Kind::Volume:
        x.col(static_cast<Eigen::Index>(c)) = e.node_volume.row(step).transpose();
        break;
      case ColumnPlan::Kind::Rainfall:
        x.col(static_cast<Eigen::Index>(c)) = e.rainfall.row(step).transpose();
        break;
      case ColumnPlan::Kind::InflowBc:
        x.col(static_cast<Eigen::Index>(c)).setConstant(e.inflow_bc[step]);
        break;
      case ColumnPlan::Kind::OutflowBc:
        x.col(static_cast<Eigen::Index>(c)).setConstant(e.outflow_bc[step]);
        break;
      case ColumnPlan::Kind::Flow:
        throw std::logic_error("flow column in node plan");
    }
  }
  return x;
}

Eigen::MatrixXd assemble_edge_features(const FloodGraph& g, const EventSeries& e, int t,
                                       const FeatureConfig& fc) {
  check_window_bounds(e, t, fc);
  const int static_cols = static_cast<int>(g.static_edge_features.cols());
  const ColumnPlan plan = ColumnPlan::edges(static_cols, fc);
  Eigen::MatrixXd x(g.num_edges, static_cast<Eigen::Index>(plan.columns.size()));
  for (std::size_t c = 0; c < plan.columns.size(); ++c) {
    const auto& col = plan.columns[c];
    if (col.kind == ColumnPlan::Kind::Static)
      x.col(static_cast<Eigen::Index>(c)) = g.static_edge_features.col(col.arg);
    else
      x.col(static_cast<Eigen::Index>(c)) = e.edge_flow.row(t + col.arg).transpose();
  }
  return x;
}

NormStats NormStats::identity(int fv, int fe) {
  NormStats s;
  s.node_mean = Eigen::VectorXd::Zero(fv);
  s.node_std = Eigen::VectorXd::Ones(fv);
  s.edge_mean = Eigen::VectorXd::Zero(fe);
  s.edge_std = Eigen::VectorXd::Ones(fe);
  return s;
}

namespace {

// Two-pass per-column mean/std with the degenerate-variance floor.
void fit_columns(const std::vector<Eigen::MatrixXd>& blocks, Eigen::VectorXd* mean,
                 Eigen::VectorXd* std) {
  const Eigen::Index cols = blocks.front().cols();
  double count = 0.0;
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(cols);
  for (const auto& b : blocks) {
    sum += b.colwise().sum().transpose();
    count += static_cast<double>(b.rows());
  }
  *mean = sum / count;
  Eigen::VectorXd ss = Eigen::VectorXd::Zero(cols);
  for (const auto& b : blocks)
    ss += (b.rowwise() - mean->transpose()).array().square().colwise().sum().matrix().transpose();
  *std = (ss / count).array().sqrt().max(NormStats::kStdFloor).matrix();
}

void fit_scalar(const std::vector<Eigen::MatrixXd>& deltas, double* mean, double* std) {
  double count = 0.0, sum = 0.0;
  for (const auto& d : deltas) {
    sum += d.sum();
    count += static_cast<double>(d.size());
  }
  *mean = sum / count;
  double ss = 0.0;
  for (const auto& d : deltas) ss += (d.array() - *mean).square().sum();
  *std = std::max(std::sqrt(ss / count), NormStats::kStdFloor);
}

}  // namespace

NormStats fit_normalizer(const FloodGraph& g, const std::vector<EventSeries>& events,
                         const FeatureConfig& fc) {
  if (events.empty()) throw DataError("fit_normalizer: no training events");

  std::vector<Eigen::MatrixXd> node_windows, edge_windows, dv, dq;
  for (const auto& e : events) {
    // windows that have both full history and a next-step target
    for (int t = fc.history; t + 1 < e.num_steps; ++t) {
      node_windows.push_back(assemble_node_features(g, e, t, fc));
      edge_windows.push_back(assemble_edge_features(g, e, t, fc));
      dv.push_back(e.node_volume.row(t + 1) - e.node_volume.row(t));
      dq.push_back(e.edge_flow.row(t + 1) - e.edge_flow.row(t));
    }
  }
  if (node_windows.empty())
    throw DataError("fit_normalizer: events too short for history length " +
                    std::to_string(fc.history));

  NormStats s;
  fit_columns(node_windows, &s.node_mean, &s.node_std);
  fit_columns(edge_windows, &s.edge_mean, &s.edge_std);
  fit_scalar(dv, &s.dv_mean, &s.dv_std);
  fit_scalar(dq, &s.dq_mean, &s.dq_std);
  return s;
}

Eigen::MatrixXd normalize(const Eigen::MatrixXd& x, const Eigen::VectorXd& mean,
                          const Eigen::VectorXd& std) {
  if (x.cols() != mean.size() || x.cols() != std.size())
    throw std::invalid_argument("normalize: column count does not match statistics");
  return (x.rowwise() - mean.transpose()).array().rowwise() / std.transpose().array();
}

Eigen::MatrixXd denormalize(const Eigen::MatrixXd& x, const Eigen::VectorXd& mean,
                            const Eigen::VectorXd& std) {
  if (x.cols() != mean.size() || x.cols() != std.size())
    throw std::invalid_argument("denormalize: column count does not match statistics");
  return (x.array().rowwise() * std.transpose().array()).matrix().rowwise() + mean.transpose();
}

// ---- container -------------------------------------------------------------

namespace {

std::string event_dir(int i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "events/event_%04d", i);
  return buf;
}

std::vector<std::int32_t> to_i32(const std::vector<int>& v) {
  return std::vector<std::int32_t>(v.begin(), v.end());
}

std::vector<int> from_i32(const std::vector<std::int32_t>& v) {
  return std::vector<int>(v.begin(), v.end());
}

}  // namespace

void save_dataset(const FloodGraph& g, const std::vector<EventSeries>& events,
                  const std::string& path, const json& provenance) {
  const auto report = validate_graph(g);
  if (!report.ok()) throw DataError("save_dataset: invalid graph: " + report.violations.front());
  if (events.empty()) throw DataError("save_dataset: no events");

  fs::create_directories(path);
  io::ArrayWriter w{fs::path(path)};

  // graph
  std::vector<std::int32_t> coo;
  coo.reserve(static_cast<std::size_t>(g.num_edges) * 2);
  for (int k = 0; k < g.num_edges; ++k) coo.push_back(g.edge_src[k]);
  for (int k = 0; k < g.num_edges; ++k) coo.push_back(g.edge_dst[k]);
  w.i32("graph/edges", "graph/edges.bin", coo, {2, g.num_edges});
  w.f32("graph/static_node_features", "graph/static_node_features.bin", g.static_node_features);
  w.f32("graph/static_edge_features", "graph/static_edge_features.bin", g.static_edge_features);
  w.i32("graph/inflow_nodes", "graph/inflow_nodes.bin", to_i32(g.inflow_nodes),
        {1, static_cast<std::int64_t>(g.inflow_nodes.size())});
  w.i32("graph/outflow_nodes", "graph/outflow_nodes.bin", to_i32(g.outflow_nodes),
        {1, static_cast<std::int64_t>(g.outflow_nodes.size())});

  // depth curves, padded to a common breakpoint count
  std::size_t max_pts = 0;
  for (const auto& c : g.depth_curves) max_pts = std::max(max_pts, c.volume.size());
  Eigen::MatrixXd cv(g.num_nodes, static_cast<Eigen::Index>(max_pts));
  Eigen::MatrixXd cd(g.num_nodes, static_cast<Eigen::Index>(max_pts));
  for (int i = 0; i < g.num_nodes; ++i) {
    const auto& c = g.depth_curves[i];
    for (std::size_t k = 0; k < max_pts; ++k) {
      const std::size_t kk = std::min(k, c.volume.size() - 1);  // repeat last breakpoint as padding
      cv(i, static_cast<Eigen::Index>(k)) = c.volume[kk];
      cd(i, static_cast<Eigen::Index>(k)) = c.depth[kk];
    }
  }
  w.f32("graph/depth_curve_volume", "graph/depth_curve_volume.bin", cv);
  w.f32("graph/depth_curve_depth", "graph/depth_curve_depth.bin", cd);
  if (g.node_xy.size() > 0) w.f32("graph/node_xy", "graph/node_xy.bin", g.node_xy);

  // events
  const int steps = events.front().num_steps;
  for (std::size_t i = 0; i < events.size(); ++i) {
    const auto& e = events[i];
    if (e.num_steps != steps) throw DataError("save_dataset: events disagree on num_steps");
    const std::string d = event_dir(static_cast<int>(i));
    w.f32(d + "/node_volume", d + "/node_volume.bin", e.node_volume);
    w.f32(d + "/edge_flow", d + "/edge_flow.bin", e.edge_flow);
    w.f32(d + "/rainfall", d + "/rainfall.bin", e.rainfall);
    w.f32(d + "/inflow_bc", d + "/inflow_bc.bin", e.inflow_bc.transpose());
    w.f32(d + "/outflow_bc", d + "/outflow_bc.bin", e.outflow_bc.transpose());
  }

  json manifest;
  manifest["format_version"] = kDatasetFormatVersion;
  manifest["kind"] = "dualflood-dataset";
  manifest["num_nodes"] = g.num_nodes;
  manifest["num_edges"] = g.num_edges;
  manifest["num_events"] = events.size();
  manifest["num_steps"] = steps;
  manifest["dt_seconds"] = events.front().dt;
  manifest["node_feature_schema"] = g.node_feature_names;
  manifest["edge_feature_schema"] = g.edge_feature_names;
  manifest["units"] = {{"node_volume", "m3"},
                       {"edge_flow", "m3/s"},
                       {"rainfall", "m3/step"},
                       {"inflow_bc", "m3/s"},
                       {"outflow_bc", "m3/s"},
                       {"static_node_features", {"m2", "m"}},
                       {"static_edge_features", {"m", "m", "m"}}};
  if (!provenance.is_null() && !provenance.empty()) manifest["generator"] = provenance;
  manifest["arrays"] = w.manifest_arrays();
  io::write_json(fs::path(path) / "manifest.json", manifest);
}

Dataset load_dataset(const std::string& path) {
  const fs::path root(path);
  const json manifest = io::read_json(root / "manifest.json");

  if (!manifest.contains("format_version") || !manifest["format_version"].is_number_integer())
    throw DataError("dataset manifest: missing format_version");
  const int version = manifest["format_version"].get<int>();
  if (version != kDatasetFormatVersion)
    throw DataError("dataset manifest: unsupported format version " + std::to_string(version));
  if (manifest.value("kind", "") != "dualflood-dataset")
    throw DataError("dataset manifest: not a dualflood dataset");

  Dataset ds;
  ds.manifest = manifest;
  FloodGraph& g = ds.graph;
  g.num_nodes = manifest.at("num_nodes").get<int>();
  g.num_edges = manifest.at("num_edges").get<int>();
  const int num_events = manifest.at("num_events").get<int>();
  const int steps = manifest.at("num_steps").get<int>();
  const double dt = manifest.at("dt_seconds").get<double>();

  io::ArrayReader r(root, manifest.at("arrays"));

  const auto coo = r.i32("graph/edges", 2, g.num_edges);
  g.edge_src.assign(coo.begin(), coo.begin() + g.num_edges);
  g.edge_dst.assign(coo.begin() + g.num_edges, coo.end());
  g.static_node_features = r.f32("graph/static_node_features", g.num_nodes, -1);
  g.static_edge_features = r.f32("graph/static_edge_features", g.num_edges, -1);
  g.inflow_nodes = from_i32(r.i32("graph/inflow_nodes", 1, -1));
  g.outflow_nodes = from_i32(r.i32("graph/outflow_nodes", 1, -1));
  g.node_feature_names = manifest.value("node_feature_schema", std::vector<std::string>{});
  g.edge_feature_names = manifest.value("edge_feature_schema", std::vector<std::string>{});

  const Eigen::MatrixXd cv = r.f32("graph/depth_curve_volume", g.num_nodes, -1);
  const Eigen::MatrixXd cd = r.f32("graph/depth_curve_depth", g.num_nodes, -1);
  if (cv.cols() != cd.cols()) throw DataError("depth curve arrays disagree on breakpoint count");
  g.depth_curves.resize(static_cast<std::size_t>(g.num_nodes));
  for (int i = 0; i < g.num_nodes; ++i) {
    auto& c = g.depth_curves[static_cast<std::size_t>(i)];
    for (Eigen::Index k = 0; k < cv.cols(); ++k) {
      // padding repeats the final breakpoint; drop the repeats
      if (k > 0 && cv(i, k) == cv(i, k - 1) && cd(i, k) == cd(i, k - 1)) continue;
      c.volume.push_back(cv(i, k));
      c.depth.push_back(cd(i, k));
    }
  }
  if (r.has("graph/node_xy")) g.node_xy = r.f32("graph/node_xy", g.num_nodes, 2);

  const auto report = validate_graph(g);
  if (!report.ok()) throw DataError("load_dataset: invalid graph: " + report.violations.front());

  ds.events.resize(static_cast<std::size_t>(num_events));
  for (int i = 0; i < num_events; ++i) {
    const std::string d = event_dir(i);
    EventSeries& e = ds.events[static_cast<std::size_t>(i)];
    e.num_steps = steps;
    e.dt = dt;
    e.node_volume = r.f32(d + "/node_volume", steps, g.num_nodes);
    e.edge_flow = r.f32(d + "/edge_flow", steps, g.num_edges);
    e.rainfall = r.f32(d + "/rainfall", steps, g.num_nodes);
    e.inflow_bc = r.f32(d + "/inflow_bc", 1, steps).transpose();
    e.outflow_bc = r.f32(d + "/outflow_bc", 1, steps).transpose();
    if (!e.node_volume.allFinite() || !e.edge_flow.allFinite() || !e.rainfall.allFinite())
      throw DataError("load_dataset: non-finite values in event " + std::to_string(i));
  }
  return ds;
}

}  // namespace dualflood

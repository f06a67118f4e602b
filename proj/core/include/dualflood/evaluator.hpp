#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dualflood/dataset.hpp"
#include "dualflood/model.hpp"

namespace dualflood {

inline constexpr int kReportFormatVersion = 1;

/// Predicted trajectories for one event. Rows 0..start_step are the supplied
/// initial condition; later rows come from chained model steps with
/// ground-truth boundary forcing injected at every step.
struct RolloutResult {
  int start_step = 0;           // first predicted row is start_step + 1
  Eigen::MatrixXd node_volume;  // (T+1) x N, m^3
  Eigen::MatrixXd edge_flow;    // (T+1) x E, m^3/s
  Eigen::MatrixXd depth;        // (T+1) x N, m
  double inference_seconds = 0; // rollout loop only, no I/O
  long depth_clamped_cells = 0; // negative predicted volumes clamped for depth
};

/// Autoregressive inference over `num_steps` model steps starting after the
/// history window. Throws when the event cannot supply the initial history
/// or the forcing does not cover the horizon.
RolloutResult rollout(const ModelState& model, const FloodGraph& g, const EventSeries& e,
                      const NormStats& stats, int num_steps);

/// Stub that replays the ground-truth trajectories; exercises the reporting
/// pipeline without a trained model.
RolloutResult oracle_rollout(const FloodGraph& g, const EventSeries& e, int history,
                             int num_steps);

/// 1 - SSE/SST about the observation mean. Returns nullopt when the
/// observations are constant (SST = 0). Series must have >= 2 entries.
std::optional<double> nse(const Eigen::VectorXd& pred, const Eigen::VectorXd& truth);

/// Critical success index at depth threshold tau over all cells of the two
/// matrices. An empty confusion (no flooding anywhere, none predicted)
/// counts as a perfect 1.
double csi(const Eigen::MatrixXd& pred_depth, const Eigen::MatrixXd& true_depth, double tau);

/// Per-node depth-curve evaluation; negative volumes are clamped to zero and
/// counted into *clamped when given.
Eigen::MatrixXd volume_to_depth(const FloodGraph& g, const Eigen::MatrixXd& volume,
                                long* clamped = nullptr);

struct VariableMetrics {
  double rmse = 0;
  double mae = 0;
  std::optional<double> nse;  // mean of per-series NSE, constant series excluded
  int nse_excluded = 0;       // number of constant series left out
};

struct MetricsReport {
  VariableMetrics volume, flow, depth;
  std::map<double, double> csi_by_threshold;
  Eigen::MatrixXd per_timestep_rmse;   // rows: predicted steps; cols: volume, flow, depth
  std::vector<int> per_timestep_index; // absolute step of each row
  Eigen::VectorXd max_depth_true, max_depth_pred;  // per node, over all steps
  double inference_seconds = 0;
  int start_step = 0;

  nlohmann::ordered_json to_json() const;
};

/// Metrics over the predicted span of a rollout. NSE aggregates per node
/// (volume, depth) / per edge (flow); CSI pools node-step cells.
MetricsReport event_report(const RolloutResult& result, const EventSeries& e, const FloodGraph& g,
                           const std::vector<double>& thresholds);

/// Writes metrics.json, per_timestep_rmse.csv, max_depth_map.csv and PNG
/// charts (plus scatter maps when node coordinates exist) into out_dir.
void write_report(const MetricsReport& report, const FloodGraph& g, const std::string& out_dir);

struct AggregateMetrics {
  // metric name -> (mean, sample std across events; 0 when n < 2)
  std::map<std::string, std::pair<double, double>> values;
  int num_events = 0;

  nlohmann::ordered_json to_json() const;
};

AggregateMetrics aggregate_reports(const std::vector<MetricsReport>& reports);

// rollout dump format shared by the rollout/report CLI commands
void save_rollout(const RolloutResult& r, const std::string& path,
                  const nlohmann::ordered_json& provenance);
RolloutResult load_rollout(const std::string& path);

}  // namespace dualflood

#pragma once

#include <Eigen/Core>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "dualflood/flood_graph.hpp"

namespace dualflood {

/// One flood event: T+1 states plus the forcing applied over each step.
///
/// Conventions: rainfall[t] is the volume (m^3) added to each node during
/// step t -> t+1; inflow_bc[t] / outflow_bc[t] are the boundary rates (m^3/s)
/// active during that step; edge_flow[t+1] is the signed flow that moved
/// water between states t and t+1 (edge_flow[0] is the initial condition).
struct EventSeries {
  int num_steps = 0;  // number of states, T+1
  double dt = 0.0;    // seconds

  Eigen::MatrixXd node_volume;  // (T+1) x N, m^3
  Eigen::MatrixXd edge_flow;    // (T+1) x E, m^3/s, signed
  Eigen::MatrixXd rainfall;     // (T+1) x N, m^3 per step
  Eigen::VectorXd inflow_bc;    // T+1, m^3/s
  Eigen::VectorXd outflow_bc;   // T+1, m^3/s
};

/// Shape of the per-step dynamic feature blocks and the history window.
struct FeatureConfig {
  int history = 2;  // p: number of previous states appended to the current one
  // The boundary series are broadcast to every node as global channels.
  // Both are dropped by the no-inflow-feature ablation.
  bool include_inflow_bc = true;
  bool include_outflow_bc = true;

  int dynamic_node_cols() const {
    return 2 + (include_inflow_bc ? 1 : 0) + (include_outflow_bc ? 1 : 0);
  }
  static constexpr int dynamic_edge_cols() { return 1; }

  int node_feature_dim(int static_cols) const {
    return static_cols + (history + 1) * dynamic_node_cols();
  }
  int edge_feature_dim(int static_cols) const {
    return static_cols + (history + 1) * dynamic_edge_cols();
  }
};

/// Enumerates the columns of an assembled window in their fixed order:
/// all static columns first, then one dynamic block per step from t-p to t.
/// Node blocks are [volume, rainfall, inflow_bc, outflow_bc] (boundary
/// channels only when enabled); edge blocks are [flow]. Both the plain
/// assembly below and the differentiable assembly in the trainer iterate
/// this plan, so the layout cannot drift between them.
struct ColumnPlan {
  enum class Kind { Static, Volume, Rainfall, InflowBc, OutflowBc, Flow };
  struct Column {
    Kind kind;
    int arg;  // static column index, or step offset in [-p, 0]
  };
  std::vector<Column> columns;

  static ColumnPlan nodes(int static_cols, const FeatureConfig& fc);
  static ColumnPlan edges(int static_cols, const FeatureConfig& fc);
};

/// X^t: static node features followed by the dynamic blocks for steps
/// t-p ... t. Throws std::invalid_argument when t < p or t is out of range.
Eigen::MatrixXd assemble_node_features(const FloodGraph& g, const EventSeries& e, int t,
                                       const FeatureConfig& fc);
/// E^t: edge analogue of the above.
Eigen::MatrixXd assemble_edge_features(const FloodGraph& g, const EventSeries& e, int t,
                                       const FeatureConfig& fc);

/// Per-column z-score statistics for inputs plus scalar statistics for the
/// one-step prediction targets. Fit on training events only.
struct NormStats {
  Eigen::VectorXd node_mean, node_std;  // length f_v
  Eigen::VectorXd edge_mean, edge_std;  // length f_e
  double dv_mean = 0.0, dv_std = 1.0;   // volume deltas, m^3
  double dq_mean = 0.0, dq_std = 1.0;   // flow deltas, m^3/s

  static constexpr double kStdFloor = 1e-8;

  /// Pass-through stats (mean 0, std 1) for the given feature widths.
  static NormStats identity(int fv, int fe);
};

NormStats fit_normalizer(const FloodGraph& g, const std::vector<EventSeries>& events,
                         const FeatureConfig& fc);

Eigen::MatrixXd normalize(const Eigen::MatrixXd& x, const Eigen::VectorXd& mean,
                          const Eigen::VectorXd& std);
Eigen::MatrixXd denormalize(const Eigen::MatrixXd& x, const Eigen::VectorXd& mean,
                            const Eigen::VectorXd& std);

// ---- dataset container ----------------------------------------------------
//
// A dataset is a directory: manifest.json plus one binary file per array
// (float32 little-endian row-major payloads, int32 index arrays). The
// manifest records the format version, counts, dt, feature schemas, units,
// per-array shape/dtype/filename and generator provenance.

inline constexpr int kDatasetFormatVersion = 1;

struct Dataset {
  FloodGraph graph;
  std::vector<EventSeries> events;
  nlohmann::ordered_json manifest;
};

void save_dataset(const FloodGraph& g, const std::vector<EventSeries>& events,
                  const std::string& path,
                  const nlohmann::ordered_json& provenance = nlohmann::ordered_json());

Dataset load_dataset(const std::string& path);

}  // namespace dualflood

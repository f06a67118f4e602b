#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

#include "dualflood/tape.hpp"

namespace dualflood {

/// Monotone piecewise-linear volume (m^3) -> water depth (m) map for one
/// cell. Breakpoints are ascending in volume, start at (0, 0), and the final
/// segment's slope extends beyond the last breakpoint.
struct DepthCurve {
  std::vector<double> volume;
  std::vector<double> depth;

  double eval(double v) const;
};

/// Static catchment topology and geometry. Immutable after construction;
/// every operation on it is pure, so instances can be shared across threads.
struct FloodGraph {
  int num_nodes = 0;
  int num_edges = 0;

  // Directed edge list (COO): edge k runs edge_src[k] -> edge_dst[k].
  std::vector<int> edge_src;
  std::vector<int> edge_dst;

  // Columns: cell area (m^2), bed elevation (m). Schema in *_feature_names.
  Eigen::MatrixXd static_node_features;
  // Columns: face length (m), centroid distance (m), elevation difference (m).
  Eigen::MatrixXd static_edge_features;
  std::vector<std::string> node_feature_names;
  std::vector<std::string> edge_feature_names;

  std::vector<int> inflow_nodes;
  std::vector<int> outflow_nodes;

  std::vector<DepthCurve> depth_curves;  // one per node

  // Optional planar node coordinates (N x 2); empty when unknown. Used only
  // for map-style report plots.
  Eigen::MatrixXd node_xy;

  double cell_area(int i) const { return static_node_features(i, 0); }
  double bed_elevation(int i) const { return static_node_features(i, 1); }
};

struct ValidationReport {
  std::vector<std::string> violations;
  bool ok() const { return violations.empty(); }
};

/// Checks every structural invariant of a FloodGraph. Violations come back
/// as data; nothing throws.
ValidationReport validate_graph(const FloodGraph& g);

struct NodeFluxes {
  Eigen::VectorXd inflow;   // m^3/s, >= 0
  Eigen::VectorXd outflow;  // m^3/s, >= 0
};

/// Splits signed edge flows into per-node inflow/outflow totals.
///
/// Each directed edge contributes twice, once per traversal direction, with
/// weight relu(q) forward and relu(-q) backward; summing the weights of
/// arrivals gives inflow and of departures gives outflow. Throws DataError on
/// non-finite flow.
NodeFluxes compute_node_fluxes(const FloodGraph& g, const Eigen::VectorXd& edge_flow);

/// Tape form of the same decomposition; edge_flow is an |E| x 1 Var and the
/// local mass-balance loss backpropagates through it.
void compute_node_fluxes(ad::Tape& tape, const FloodGraph& g, ad::Var edge_flow,
                         ad::Var* inflow, ad::Var* outflow);

}  // namespace dualflood

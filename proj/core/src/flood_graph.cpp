#include "dualflood/flood_graph.hpp"

#include <cmath>
#include <set>
#include <sstream>

#include "dualflood/errors.hpp"

namespace dualflood {

double DepthCurve::eval(double v) const {
  if (v <= 0.0 || volume.empty()) return 0.0;
  // interior segments
  for (std::size_t k = 1; k < volume.size(); ++k) {
    if (v <= volume[k]) {
      const double dv = volume[k] - volume[k - 1];
      if (dv <= 0.0) return depth[k];
      const double f = (v - volume[k - 1]) / dv;
      return depth[k - 1] + f * (depth[k] - depth[k - 1]);
    }
  }
  // extrapolate with the final slope
  const std::size_t n = volume.size();
  if (n == 1) return depth[0];
  const double dv = volume[n - 1] - volume[n - 2];
  const double slope = dv > 0.0 ? (depth[n - 1] - depth[n - 2]) / dv : 0.0;
  return depth[n - 1] + slope * (v - volume[n - 1]);
}

ValidationReport validate_graph(const FloodGraph& g) {
  ValidationReport report;
  auto fail = [&report](const std::string& msg) { report.violations.push_back(msg); };

  if (g.num_nodes <= 0) fail("num_nodes must be positive");
  if (g.num_edges != static_cast<int>(g.edge_src.size()) ||
      g.num_edges != static_cast<int>(g.edge_dst.size()))
    fail("edge list length does not match num_edges");

  std::set<std::pair<int, int>> seen;
  const int n_pairs = static_cast<int>(std::min(g.edge_src.size(), g.edge_dst.size()));
  for (int k = 0; k < n_pairs; ++k) {
    const int s = g.edge_src[k], d = g.edge_dst[k];
    if (s < 0 || s >= g.num_nodes || d < 0 || d >= g.num_nodes) {
      std::ostringstream os;
      os << "edge " << k << " (" << s << "," << d << "): endpoint out of range";
      fail(os.str());
      continue;
    }
    if (s == d) {
      std::ostringstream os;
      os << "self-loop at node " << s;
      fail(os.str());
    }
    if (!seen.insert({s, d}).second) {
      std::ostringstream os;
      os << "duplicate directed edge (" << s << "," << d << ")";
      fail(os.str());
    }
  }

  if (g.static_node_features.rows() != g.num_nodes)
    fail("static_node_features row count does not match num_nodes");
  if (g.static_edge_features.rows() != g.num_edges)
    fail("static_edge_features row count does not match num_edges");

  if (g.inflow_nodes.empty()) fail("inflow_nodes is empty");
  if (g.outflow_nodes.empty()) fail("outflow_nodes is empty");
  std::set<int> in_set(g.inflow_nodes.begin(), g.inflow_nodes.end());
  for (int i : g.outflow_nodes)
    if (in_set.count(i)) {
      std::ostringstream os;
      os << "node " << i << " is both inflow and outflow";
      fail(os.str());
    }
  for (int i : g.inflow_nodes)
    if (i < 0 || i >= g.num_nodes) fail("inflow node index out of range");
  for (int i : g.outflow_nodes)
    if (i < 0 || i >= g.num_nodes) fail("outflow node index out of range");

  if (g.static_node_features.rows() == g.num_nodes && g.static_node_features.cols() >= 1) {
    for (int i = 0; i < g.num_nodes; ++i)
      if (!(g.static_node_features(i, 0) > 0.0)) {
        std::ostringstream os;
        os << "cell area at node " << i << " is not strictly positive";
        fail(os.str());
      }
  }

  if (static_cast<int>(g.depth_curves.size()) != g.num_nodes) {
    fail("depth_curves size does not match num_nodes");
  } else {
    for (int i = 0; i < g.num_nodes; ++i) {
      const auto& c = g.depth_curves[i];
      std::ostringstream os;
      os << "depth curve at node " << i;
      if (c.volume.size() != c.depth.size() || c.volume.empty()) {
        fail(os.str() + ": breakpoint arrays empty or mismatched");
        continue;
      }
      if (c.volume[0] != 0.0 || c.depth[0] != 0.0) fail(os.str() + ": does not map 0 to 0");
      for (std::size_t k = 1; k < c.volume.size(); ++k) {
        if (c.volume[k] < c.volume[k - 1]) fail(os.str() + ": volume breakpoints decrease");
        if (c.depth[k] < c.depth[k - 1]) fail(os.str() + ": depth values decrease");
      }
    }
  }

  if (g.node_xy.size() > 0 && (g.node_xy.rows() != g.num_nodes || g.node_xy.cols() != 2))
    fail("node_xy must be N x 2 when present");

  return report;
}

NodeFluxes compute_node_fluxes(const FloodGraph& g, const Eigen::VectorXd& edge_flow) {
  if (edge_flow.size() != g.num_edges)
    throw std::invalid_argument("compute_node_fluxes: edge_flow length must equal num_edges");
  if (!edge_flow.allFinite()) throw DataError("compute_node_fluxes: non-finite edge flow");

  NodeFluxes f;
  f.inflow = Eigen::VectorXd::Zero(g.num_nodes);
  f.outflow = Eigen::VectorXd::Zero(g.num_nodes);
  for (int k = 0; k < g.num_edges; ++k) {
    const double q = edge_flow[k];
    const double fwd = q > 0.0 ? q : 0.0;   // along orientation: src -> dst
    const double bwd = q < 0.0 ? -q : 0.0;  // reversed copy: dst -> src
    f.inflow[g.edge_dst[k]] += fwd;
    f.outflow[g.edge_src[k]] += fwd;
    f.inflow[g.edge_src[k]] += bwd;
    f.outflow[g.edge_dst[k]] += bwd;
  }
  return f;
}

void compute_node_fluxes(ad::Tape& tape, const FloodGraph& g, ad::Var edge_flow,
                         ad::Var* inflow, ad::Var* outflow) {
  const auto& q = tape.value(edge_flow);
  if (q.rows() != g.num_edges || q.cols() != 1)
    throw std::invalid_argument("compute_node_fluxes: edge_flow must be |E| x 1");
  if (!q.allFinite()) throw DataError("compute_node_fluxes: non-finite edge flow");

  const ad::Var fwd = tape.relu(edge_flow);            // weight of the oriented copy
  const ad::Var bwd = tape.relu(tape.neg(edge_flow));  // weight of the reversed copy
  const ad::Var in_fwd = tape.scatter_add_rows(fwd, g.edge_dst, g.num_nodes);
  const ad::Var in_bwd = tape.scatter_add_rows(bwd, g.edge_src, g.num_nodes);
  const ad::Var out_fwd = tape.scatter_add_rows(fwd, g.edge_src, g.num_nodes);
  const ad::Var out_bwd = tape.scatter_add_rows(bwd, g.edge_dst, g.num_nodes);
  *inflow = tape.add(in_fwd, in_bwd);
  *outflow = tape.add(out_fwd, out_bwd);
}

}  // namespace dualflood

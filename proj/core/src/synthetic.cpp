#include "dualflood/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "dualflood/errors.hpp"
#include "dualflood/losses.hpp"
#include "dualflood/rng.hpp"

namespace dualflood {

namespace {

struct UnionFind {
  std::vector<int> parent;
  explicit UnionFind(int n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  int find(int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  bool unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    parent[b] = a;
    return true;
  }
};

struct Candidate {
  double dist;
  int a, b;  // a < b
  bool operator<(const Candidate& o) const {
    if (dist != o.dist) return dist < o.dist;
    if (a != o.a) return a < o.a;
    return b < o.b;
  }
};

// Undirected k-nearest-neighbour candidate set over the point cloud.
std::vector<Candidate> knn_candidates(const Eigen::MatrixXd& xy, int k) {
  const int n = static_cast<int>(xy.rows());
  std::set<std::pair<int, int>> seen;
  std::vector<Candidate> out;
  std::vector<std::pair<double, int>> dists(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j)
      dists[static_cast<std::size_t>(j)] = {(xy.row(i) - xy.row(j)).norm(), j};
    std::sort(dists.begin(), dists.end());
    for (int m = 1; m <= k && m < n; ++m) {  // m=0 is the point itself
      const int j = dists[static_cast<std::size_t>(m)].second;
      const auto key = std::minmax(i, j);
      if (seen.insert({key.first, key.second}).second)
        out.push_back({dists[static_cast<std::size_t>(m)].first, key.first, key.second});
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

FloodGraph generate_catchment(const CatchmentSpec& spec) {
  if (spec.num_nodes < 4) throw ConfigError("generate_catchment: need at least 4 nodes");
  if (spec.target_num_edges < spec.num_nodes - 1)
    throw ConfigError("generate_catchment: target_num_edges below spanning requirement");
  if (spec.num_inflow < 1 || spec.num_outflow < 1)
    throw ConfigError("generate_catchment: need at least one inflow and one outflow node");
  const long max_undirected = static_cast<long>(spec.num_nodes) * (spec.num_nodes - 1) / 2;
  if (spec.target_num_edges > max_undirected)
    throw ConfigError("generate_catchment: target_num_edges exceeds complete graph");

  Rng rng(spec.seed);
  const int n = spec.num_nodes;

  Eigen::MatrixXd xy(n, 2);
  for (int i = 0; i < n; ++i) {
    xy(i, 0) = rng.uniform(0.0, spec.extent_m);
    xy(i, 1) = rng.uniform(0.0, spec.extent_m);
  }

  // Elevation: tilt toward x=0, a few smooth bumps, and a carved channel band
  // along the domain midline so drainage concentrates.
  const int n_bumps = 8;
  Eigen::MatrixXd bumps(n_bumps, 4);  // cx, cy, amplitude, width
  for (int b = 0; b < n_bumps; ++b) {
    bumps(b, 0) = rng.uniform(0.0, spec.extent_m);
    bumps(b, 1) = rng.uniform(0.0, spec.extent_m);
    bumps(b, 2) = rng.uniform(-0.1, 0.1) * spec.relief_m;
    bumps(b, 3) = rng.uniform(0.15, 0.35) * spec.extent_m;
  }
  const double channel_halfwidth = std::max(1e-9, 0.5 * spec.channel_fraction * spec.extent_m);
  Eigen::VectorXd elev(n);
  for (int i = 0; i < n; ++i) {
    double e = spec.relief_m * (xy(i, 0) / spec.extent_m);
    for (int b = 0; b < n_bumps; ++b) {
      const double dx = xy(i, 0) - bumps(b, 0);
      const double dy = xy(i, 1) - bumps(b, 1);
      e += bumps(b, 2) * std::exp(-(dx * dx + dy * dy) / (2.0 * bumps(b, 3) * bumps(b, 3)));
    }
    const double dyc = (xy(i, 1) - 0.5 * spec.extent_m) / channel_halfwidth;
    e -= 0.3 * spec.relief_m * std::exp(-dyc * dyc);
    elev[i] = e;
  }

  // Candidate edges: k-nearest neighbours, escalating k until the connected
  // selection can reach the target count.
  std::vector<Candidate> cand;
  int k = std::max(3, static_cast<int>(std::ceil(2.6 * spec.target_num_edges / n)));
  for (;; k = std::min(2 * k, n - 1)) {
    cand = knn_candidates(xy, k);
    if (static_cast<int>(cand.size()) >= spec.target_num_edges || k >= n - 1) break;
  }

  // Spanning tree first (Kruskal over candidates, then bridge any remaining
  // components through their globally closest node pair), then the shortest
  // leftover candidates up to the target.
  UnionFind uf(n);
  std::set<std::pair<int, int>> chosen;
  for (const auto& c : cand) {
    if (uf.unite(c.a, c.b)) chosen.insert({c.a, c.b});
  }
  for (;;) {
    int root0 = uf.find(0);
    bool connected = true;
    Candidate best{std::numeric_limits<double>::infinity(), -1, -1};
    for (int i = 0; i < n; ++i)
      if (uf.find(i) != root0) {
        connected = false;
        for (int j = 0; j < n; ++j)
          if (uf.find(j) == root0) {
            const double d = (xy.row(i) - xy.row(j)).norm();
            const auto key = std::minmax(i, j);
            if (d < best.dist) best = {d, key.first, key.second};
          }
      }
    if (connected) break;
    uf.unite(best.a, best.b);
    chosen.insert({best.a, best.b});
  }
  for (const auto& c : cand) {
    if (static_cast<int>(chosen.size()) >= spec.target_num_edges) break;
    chosen.insert({c.a, c.b});
  }

  FloodGraph g;
  g.num_nodes = n;
  g.num_edges = static_cast<int>(chosen.size());
  g.node_xy = xy;

  g.static_node_features.resize(n, 2);
  g.node_feature_names = {"cell_area_m2", "bed_elevation_m"};
  const double mean_area = spec.extent_m * spec.extent_m / n;
  for (int i = 0; i < n; ++i) {
    const double jitter = std::clamp(std::exp(0.25 * rng.normal()), 0.4, 2.5);
    g.static_node_features(i, 0) = mean_area * jitter;
    g.static_node_features(i, 1) = elev[i];
  }

  g.edge_feature_names = {"face_length_m", "centroid_distance_m", "elevation_diff_m"};
  g.static_edge_features.resize(g.num_edges, 3);
  int kk = 0;
  for (const auto& [a, b] : chosen) {
    // orient downhill: higher endpoint is the source; ties fall to lower index
    int src = a, dst = b;
    if (elev[b] > elev[a]) std::swap(src, dst);
    g.edge_src.push_back(src);
    g.edge_dst.push_back(dst);
    const double dist = (xy.row(src) - xy.row(dst)).norm();
    g.static_edge_features(kk, 0) = 0.5 * dist * rng.uniform(0.8, 1.2);
    g.static_edge_features(kk, 1) = dist;
    g.static_edge_features(kk, 2) = elev[src] - elev[dst];
    ++kk;
  }

  // boundary designations: highest nodes feed, lowest nodes drain
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (elev[a] != elev[b]) return elev[a] < elev[b];
    return a < b;
  });
  for (int i = 0; i < spec.num_outflow; ++i) g.outflow_nodes.push_back(order[static_cast<std::size_t>(i)]);
  for (int i = 0; i < spec.num_inflow; ++i)
    g.inflow_nodes.push_back(order[static_cast<std::size_t>(n - 1 - i)]);

  // prism cells: depth = volume / area
  g.depth_curves.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    g.depth_curves[static_cast<std::size_t>(i)].volume = {0.0, g.static_node_features(i, 0)};
    g.depth_curves[static_cast<std::size_t>(i)].depth = {0.0, 1.0};
  }
  return g;
}

namespace {

double inflow_hydrograph(const HydrographSpec& h, int t) {
  const double t_peak = std::max(1.0, h.peak_time_frac * (h.num_steps - 1));
  const double x = t / t_peak;
  const double a = h.pulse_shape;
  return h.base_inflow_m3s + h.peak_inflow_m3s * std::pow(x, a) * std::exp(a * (1.0 - x));
}

}  // namespace

EventSeries generate_event(const FloodGraph& g, const HydrographSpec& spec) {
  if (spec.num_steps < 2) throw ConfigError("generate_event: need at least 2 steps");
  if (spec.dt_s <= 0) throw ConfigError("generate_event: dt must be positive");
  if (spec.peak_inflow_m3s < 0 || spec.base_inflow_m3s < 0 || spec.rain_peak_m_per_step < 0)
    throw ConfigError("generate_event: magnitudes must be non-negative");
  if (spec.drain_fraction < 0 || spec.drain_fraction >= 1)
    throw ConfigError("generate_event: drain_fraction must lie in [0, 1)");
  if (spec.max_release_fraction <= 0 || spec.max_release_fraction > 1)
    throw ConfigError("generate_event: max_release_fraction must lie in (0, 1]");

  Rng rng(spec.seed);
  const int n = g.num_nodes;
  const int ne = g.num_edges;
  const int T = spec.num_steps - 1;
  const double dt = spec.dt_s;

  EventSeries e;
  e.num_steps = spec.num_steps;
  e.dt = dt;
  e.node_volume = Eigen::MatrixXd::Zero(spec.num_steps, n);
  e.edge_flow = Eigen::MatrixXd::Zero(spec.num_steps, ne);
  e.rainfall = Eigen::MatrixXd::Zero(spec.num_steps, n);
  e.inflow_bc = Eigen::VectorXd::Zero(spec.num_steps);
  e.outflow_bc = Eigen::VectorXd::Zero(spec.num_steps);

  // spatial rain weights: smooth positive field with mean 1
  Eigen::VectorXd rain_weight = Eigen::VectorXd::Ones(n);
  if (g.node_xy.size() > 0) {
    const double extent = g.node_xy.maxCoeff() - g.node_xy.minCoeff();
    const int cells = 4;
    Eigen::MatrixXd bump(cells, 3);
    for (int b = 0; b < cells; ++b) {
      bump(b, 0) = rng.uniform(g.node_xy.col(0).minCoeff(), g.node_xy.col(0).maxCoeff());
      bump(b, 1) = rng.uniform(g.node_xy.col(1).minCoeff(), g.node_xy.col(1).maxCoeff());
      bump(b, 2) = rng.uniform(0.3, 1.0);
    }
    const double width = std::max(1e-9, 0.3 * extent);
    for (int i = 0; i < n; ++i) {
      double wsum = 0.25;
      for (int b = 0; b < cells; ++b) {
        const double dx = g.node_xy(i, 0) - bump(b, 0);
        const double dy = g.node_xy(i, 1) - bump(b, 1);
        wsum += bump(b, 2) * std::exp(-(dx * dx + dy * dy) / (2.0 * width * width));
      }
      rain_weight[i] = wsum;
    }
    rain_weight *= n / rain_weight.sum();
  } else {
    for (int i = 0; i < n; ++i) rain_weight[i] = rng.uniform(0.5, 1.5);
    rain_weight *= n / rain_weight.sum();
  }

  const double rain_peak_step = spec.rain_peak_frac * T;
  const double rain_sigma = std::max(1e-9, spec.rain_sigma_frac * T);
  for (int t = 0; t < T; ++t) {  // rainfall[T] stays zero: no step follows the last state
    const double profile = std::exp(-0.5 * std::pow((t - rain_peak_step) / rain_sigma, 2.0));
    for (int i = 0; i < n; ++i)
      e.rainfall(t, i) = spec.rain_peak_m_per_step * profile * rain_weight[i] * g.cell_area(i);
  }

  Eigen::VectorXd v = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd depth(n), head(n), desired(ne), scale_by_node(n), q(ne);

  for (int t = 0; t < T; ++t) {
    for (int i = 0; i < n; ++i) {
      depth[i] = g.depth_curves[static_cast<std::size_t>(i)].eval(v[i]);
      head[i] = g.bed_elevation(i) + depth[i];
    }

    // head-difference release law; the wetted upstream depth gates the flow
    for (int kk = 0; kk < ne; ++kk) {
      const int s = g.edge_src[kk], d = g.edge_dst[kk];
      const double dh = head[s] - head[d];
      const int up = dh >= 0.0 ? s : d;
      const double face = g.static_edge_features(kk, 0);
      const double dist = std::max(1e-9, g.static_edge_features(kk, 1));
      desired[kk] = spec.routing_velocity_m_s * face * depth[up] * dh / dist;
    }

    // cap total release per node: edge flows may spend at most
    // max_release_fraction of what remains after the drain claims its share
    Eigen::VectorXd demand = Eigen::VectorXd::Zero(n);
    for (int kk = 0; kk < ne; ++kk) {
      const int leaves = desired[kk] >= 0.0 ? g.edge_src[kk] : g.edge_dst[kk];
      demand[leaves] += std::abs(desired[kk]);
    }
    for (int i = 0; i < n; ++i) {
      double budget = v[i];
      if (std::find(g.outflow_nodes.begin(), g.outflow_nodes.end(), i) != g.outflow_nodes.end())
        budget *= 1.0 - spec.drain_fraction;
      budget *= spec.max_release_fraction / dt;
      scale_by_node[i] = demand[i] * dt > 0.0 ? std::min(1.0, budget / demand[i]) : 1.0;
    }
    for (int kk = 0; kk < ne; ++kk) {
      const int leaves = desired[kk] >= 0.0 ? g.edge_src[kk] : g.edge_dst[kk];
      q[kk] = desired[kk] * scale_by_node[leaves];
    }
    e.edge_flow.row(t + 1) = q.transpose();

    // boundary forcing active over this step
    const double q_in = inflow_hydrograph(spec, t);
    double q_out = 0.0;
    for (int i : g.outflow_nodes) q_out += spec.drain_fraction * v[i] / dt;
    e.inflow_bc[t] = q_in;
    e.outflow_bc[t] = q_out;

    // advance the state with exactly the operators the balance losses use,
    // so their residuals vanish bit-for-bit
    const NodeFluxes f = compute_node_fluxes(g, q);
    const Eigen::VectorXd b = boundary_flux(g, v, q_in, q_out);
    for (int i = 0; i < n; ++i) {
      v[i] = v[i] + (f.inflow[i] - f.outflow[i] + b[i]) * dt + e.rainfall(t, i);
      if (v[i] < 0.0) {
        if (v[i] < -1e-6) throw std::logic_error("generate_event: negative volume despite capping");
        v[i] = 0.0;  // scrub float underflow at fully drained nodes
      }
    }
    e.node_volume.row(t + 1) = v.transpose();
  }

  // trailing forcing entries describe the state after the last step
  e.inflow_bc[T] = inflow_hydrograph(spec, T);
  double tail_out = 0.0;
  for (int i : g.outflow_nodes) tail_out += spec.drain_fraction * v[i] / dt;
  e.outflow_bc[T] = tail_out;
  return e;
}

ConservationReport conservation_report(const FloodGraph& g, const EventSeries& e) {
  ConservationReport r;
  r.peak_volume = e.node_volume.maxCoeff();
  double local_sum = 0.0, global_sum = 0.0;
  long local_count = 0;
  const int T = e.num_steps - 1;
  for (int t = 0; t < T; ++t) {
    const Eigen::VectorXd v_t = e.node_volume.row(t).transpose();
    const Eigen::VectorXd v_t1 = e.node_volume.row(t + 1).transpose();
    const Eigen::VectorXd q_t1 = e.edge_flow.row(t + 1).transpose();
    const Eigen::VectorXd rain = e.rainfall.row(t).transpose();

    const NodeFluxes f = compute_node_fluxes(g, q_t1);
    const Eigen::VectorXd b = boundary_flux(g, v_t, e.inflow_bc[t], e.outflow_bc[t]);
    for (int i = 0; i < g.num_nodes; ++i) {
      const double resid =
          std::abs(v_t1[i] - v_t[i] - ((f.inflow[i] - f.outflow[i] + b[i]) * e.dt + rain[i]));
      r.max_local_abs = std::max(r.max_local_abs, resid);
      local_sum += resid;
      ++local_count;
    }
    const double global_resid = std::abs(
        (v_t1 - v_t).sum() - ((e.inflow_bc[t] - e.outflow_bc[t]) * e.dt + rain.sum()));
    r.max_global_abs = std::max(r.max_global_abs, global_resid);
    global_sum += global_resid;
  }
  if (local_count > 0) r.mean_local_abs = local_sum / static_cast<double>(local_count);
  if (T > 0) r.mean_global_abs = global_sum / static_cast<double>(T);
  const double scale = std::max(1.0, r.peak_volume);
  r.max_local_rel = r.max_local_abs / scale;
  r.max_global_rel = r.max_global_abs / scale;
  return r;
}

}  // namespace dualflood

#include "dualflood/losses.hpp"

#include <cmath>

#include "dualflood/errors.hpp"

namespace dualflood {

void LossWeights::validate() const {
  if (node < 0 || edge < 0 || global_mass < 0 || local_mass < 0)
    throw ConfigError("loss weights must be non-negative");
}

Eigen::VectorXd boundary_flux(const FloodGraph& g, const Eigen::VectorXd& volume_t, double q_in,
                              double q_out, const std::vector<double>* inflow_split) {
  Eigen::VectorXd b = Eigen::VectorXd::Zero(g.num_nodes);
  const std::size_t n_in = g.inflow_nodes.size();
  for (std::size_t k = 0; k < n_in; ++k) {
    const double w = inflow_split ? (*inflow_split)[k] : 1.0 / static_cast<double>(n_in);
    b[g.inflow_nodes[k]] += q_in * w;
  }
  double total_out_volume = 0.0;
  for (int i : g.outflow_nodes) total_out_volume += volume_t[i];
  for (int i : g.outflow_nodes) {
    const double share = total_out_volume > 0.0 ? volume_t[i] / total_out_volume
                                                : 1.0 / static_cast<double>(g.outflow_nodes.size());
    b[i] -= q_out * share;
  }
  return b;
}

PredictionLoss prediction_loss(const Eigen::VectorXd& pred_dv, const Eigen::VectorXd& pred_dq,
                               const Eigen::VectorXd& truth_dv, const Eigen::VectorXd& truth_dq,
                               const LossWeights& w) {
  if (pred_dv.size() != truth_dv.size() || pred_dq.size() != truth_dq.size())
    throw std::invalid_argument("prediction_loss: length mismatch");
  PredictionLoss out;
  out.node = (pred_dv - truth_dv).squaredNorm() / static_cast<double>(pred_dv.size());
  out.edge = (pred_dq - truth_dq).squaredNorm() / static_cast<double>(pred_dq.size());
  out.pred = w.node * out.node + w.edge * out.edge;
  return out;
}

double global_mass_loss(const Eigen::VectorXd& dv, double q_in, double q_out,
                        const Eigen::VectorXd& rain, double dt) {
  if (!dv.allFinite() || !std::isfinite(q_in) || !std::isfinite(q_out) || !rain.allFinite())
    throw DataError("global_mass_loss: non-finite input");
  return std::abs(dv.sum() - ((q_in - q_out) * dt + rain.sum()));
}

namespace {

Eigen::VectorXd local_residuals(const FloodGraph& g, const Eigen::VectorXd& v_t,
                                const Eigen::VectorXd& v_t1, const Eigen::VectorXd& q_t1,
                                const Eigen::VectorXd& rain, double q_in, double q_out, double dt,
                                const LossOptions& opt) {
  const NodeFluxes f = compute_node_fluxes(g, q_t1);
  Eigen::VectorXd net = f.inflow - f.outflow;
  if (opt.boundary == BoundaryMode::GhostFlux) net += boundary_flux(g, v_t, q_in, q_out);
  return v_t1 - v_t - (net * dt + rain);
}

// 0/1 row mask; zero on boundary nodes in exclusion mode.
Eigen::VectorXd node_mask(const FloodGraph& g, const LossOptions& opt) {
  Eigen::VectorXd m = Eigen::VectorXd::Ones(g.num_nodes);
  if (opt.boundary == BoundaryMode::ExcludeNodes) {
    for (int i : g.inflow_nodes) m[i] = 0.0;
    for (int i : g.outflow_nodes) m[i] = 0.0;
  }
  return m;
}

}  // namespace

double local_mass_loss(const FloodGraph& g, const Eigen::VectorXd& v_t,
                       const Eigen::VectorXd& v_t1, const Eigen::VectorXd& q_t1,
                       const Eigen::VectorXd& rain, double q_in, double q_out, double dt,
                       const LossOptions& opt) {
  if (!v_t.allFinite() || !v_t1.allFinite() || !rain.allFinite() || !std::isfinite(q_in) ||
      !std::isfinite(q_out))
    throw DataError("local_mass_loss: non-finite input");
  const Eigen::VectorXd r = local_residuals(g, v_t, v_t1, q_t1, rain, q_in, q_out, dt, opt);
  const Eigen::VectorXd mask = node_mask(g, opt);
  const double s = (r.cwiseAbs().cwiseProduct(mask)).sum();
  if (!opt.local_per_node_mean) return s;
  const double n = mask.sum();
  return n > 0.0 ? s / n : 0.0;
}

LossBreakdown total_loss(const Eigen::VectorXd& pred_dv_hat, const Eigen::VectorXd& pred_dq_hat,
                         const Eigen::VectorXd& truth_dv_hat, const Eigen::VectorXd& truth_dq_hat,
                         const FloodGraph& g, const Eigen::VectorXd& v_t,
                         const Eigen::VectorXd& v_t1, const Eigen::VectorXd& q_t1,
                         const Eigen::VectorXd& rain, double q_in, double q_out, double dt,
                         const LossWeights& w, const LossOptions& opt) {
  LossBreakdown b;
  const PredictionLoss p = prediction_loss(pred_dv_hat, pred_dq_hat, truth_dv_hat, truth_dq_hat, w);
  b.node = p.node;
  b.edge = p.edge;
  b.pred = p.pred;
  b.global_mass = global_mass_loss(v_t1 - v_t, q_in, q_out, rain, dt);
  b.local_mass = local_mass_loss(g, v_t, v_t1, q_t1, rain, q_in, q_out, dt, opt);
  b.physics = w.global_mass * b.global_mass + w.local_mass * b.local_mass;
  b.total = b.pred + b.physics;
  return b;
}

double rollout_loss(const std::vector<LossBreakdown>& steps) {
  if (steps.empty()) throw std::invalid_argument("rollout_loss: empty step list");
  double s = 0.0;
  for (const auto& b : steps) s += b.total;
  return s / static_cast<double>(steps.size());
}

StepLossVars step_loss(ad::Tape& t, const FloodGraph& g, ad::Var pred_dv_hat, ad::Var pred_dq_hat,
                       const Eigen::VectorXd& truth_dv_hat, const Eigen::VectorXd& truth_dq_hat,
                       ad::Var v_t, ad::Var v_t1, ad::Var q_t1, const Eigen::VectorXd& rain,
                       double q_in, double q_out, double dt, const LossWeights& w,
                       const LossOptions& opt) {
  StepLossVars out;

  // prediction terms, normalized space
  out.node = t.mean_sq(t.sub(pred_dv_hat, t.constant(truth_dv_hat)));
  out.edge = t.mean_sq(t.sub(pred_dq_hat, t.constant(truth_dq_hat)));

  // global balance, physical units; forcing is data
  ad::Var dv = t.sub(v_t1, v_t);
  const double forcing = (q_in - q_out) * dt + rain.sum();
  out.global_mass = t.abs(t.sub(t.sum(dv), t.constant(ad::Matrix::Constant(1, 1, forcing))));

  // local balance; boundary shares computed from the current state values
  ad::Var in_flux, out_flux;
  compute_node_fluxes(t, g, q_t1, &in_flux, &out_flux);
  ad::Var net = t.sub(in_flux, out_flux);
  if (opt.boundary == BoundaryMode::GhostFlux)
    net = t.add(net, t.constant(boundary_flux(g, t.value(v_t), q_in, q_out)));
  ad::Var resid = t.sub(dv, t.add(t.scale(net, dt), t.constant(rain)));
  const Eigen::VectorXd mask = node_mask(g, opt);
  ad::Var masked = t.mul_elem(t.abs(resid), t.constant(mask));
  out.local_mass = t.sum(masked);
  if (opt.local_per_node_mean) {
    const double n = mask.sum();
    out.local_mass = t.scale(out.local_mass, n > 0.0 ? 1.0 / n : 0.0);
  }

  ad::Var pred = t.add(t.scale(out.node, w.node), t.scale(out.edge, w.edge));
  ad::Var physics = t.add(t.scale(out.global_mass, w.global_mass), t.scale(out.local_mass, w.local_mass));
  out.total = t.add(pred, physics);

  out.values.node = t.value(out.node)(0, 0);
  out.values.edge = t.value(out.edge)(0, 0);
  out.values.pred = t.value(pred)(0, 0);
  out.values.global_mass = t.value(out.global_mass)(0, 0);
  out.values.local_mass = t.value(out.local_mass)(0, 0);
  out.values.physics = t.value(physics)(0, 0);
  out.values.total = t.value(out.total)(0, 0);
  return out;
}

}  // namespace dualflood

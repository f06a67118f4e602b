#pragma once

#include <Eigen/Core>
#include <vector>

#include "dualflood/dataset.hpp"
#include "dualflood/flood_graph.hpp"
#include "dualflood/tape.hpp"

namespace dualflood {

/// Coefficients of the composite training objective.
struct LossWeights {
  double node = 1.0;         // volume-delta MSE
  double edge = 1.0;         // flow-delta MSE
  double global_mass = 1e-3; // catchment-level balance residual
  double local_mass = 1e-3;  // per-node balance residual

  // Ablation presets; node/edge weights keep their current values.
  LossWeights with_physics_none() const { LossWeights w = *this; w.global_mass = 0; w.local_mass = 0; return w; }
  LossWeights with_global_only() const { LossWeights w = *this; w.local_mass = 0; return w; }
  LossWeights with_local_only() const { LossWeights w = *this; w.global_mass = 0; return w; }

  void validate() const;  // ConfigError on negative weights
};

/// How boundary nodes enter the per-node balance. Ghost flux credits them
/// with their share of the boundary exchange; exclusion drops them from the
/// sum entirely.
enum class BoundaryMode { GhostFlux, ExcludeNodes };

struct LossOptions {
  BoundaryMode boundary = BoundaryMode::GhostFlux;
  bool local_per_node_mean = false;  // default: sum over nodes
};

struct LossBreakdown {
  double node = 0;         // raw MSE
  double edge = 0;         // raw MSE
  double pred = 0;         // node*λ1 + edge*λ2
  double global_mass = 0;  // raw residual
  double local_mass = 0;   // raw residual
  double physics = 0;      // global*λ3 + local*λ4
  double total = 0;        // pred + physics
};

/// External boundary exchange rate per node (m^3/s): inflow nodes receive
/// their split of q_in (uniform by default), outflow nodes give up a share
/// of q_out proportional to their current volume (uniform when all are dry),
/// matching the volume-proportional drain of the synthetic generator. All
/// other entries are zero. Treated as data: it carries no gradient.
Eigen::VectorXd boundary_flux(const FloodGraph& g, const Eigen::VectorXd& volume_t, double q_in,
                              double q_out, const std::vector<double>* inflow_split = nullptr);

// ---- plain (value-only) forms ----------------------------------------------
// Losses over deltas are evaluated in normalized target space; the two mass
// balances are dimensional statements and take physical units.

/// Returns (node MSE, edge MSE, weighted prediction loss).
struct PredictionLoss { double node, edge, pred; };
PredictionLoss prediction_loss(const Eigen::VectorXd& pred_dv, const Eigen::VectorXd& pred_dq,
                               const Eigen::VectorXd& truth_dv, const Eigen::VectorXd& truth_dq,
                               const LossWeights& w);

/// | sum(dv) - ((q_in - q_out) * dt + sum(rain)) |
double global_mass_loss(const Eigen::VectorXd& dv, double q_in, double q_out,
                        const Eigen::VectorXd& rain, double dt);

/// sum_i | dv_i - ((inflow_i - outflow_i + b_i) * dt + rain_i) | with fluxes
/// decomposed from the signed edge flows at the updated step.
double local_mass_loss(const FloodGraph& g, const Eigen::VectorXd& v_t,
                       const Eigen::VectorXd& v_t1, const Eigen::VectorXd& q_t1,
                       const Eigen::VectorXd& rain, double q_in, double q_out, double dt,
                       const LossOptions& opt = {});

/// Full per-step composite. Normalized deltas feed the prediction terms;
/// states/flows in physical units feed the balance terms.
LossBreakdown total_loss(const Eigen::VectorXd& pred_dv_hat, const Eigen::VectorXd& pred_dq_hat,
                         const Eigen::VectorXd& truth_dv_hat, const Eigen::VectorXd& truth_dq_hat,
                         const FloodGraph& g, const Eigen::VectorXd& v_t,
                         const Eigen::VectorXd& v_t1, const Eigen::VectorXd& q_t1,
                         const Eigen::VectorXd& rain, double q_in, double q_out, double dt,
                         const LossWeights& w, const LossOptions& opt = {});

/// Arithmetic mean of per-step totals. Throws on an empty list.
double rollout_loss(const std::vector<LossBreakdown>& steps);

// ---- tape forms (training path) ---------------------------------------------

struct StepLossVars {
  ad::Var node, edge, global_mass, local_mass, total;
  LossBreakdown values;
};

StepLossVars step_loss(ad::Tape& tape, const FloodGraph& g, ad::Var pred_dv_hat,
                       ad::Var pred_dq_hat, const Eigen::VectorXd& truth_dv_hat,
                       const Eigen::VectorXd& truth_dq_hat, ad::Var v_t, ad::Var v_t1,
                       ad::Var q_t1, const Eigen::VectorXd& rain, double q_in, double q_out,
                       double dt, const LossWeights& w, const LossOptions& opt = {});

}  // namespace dualflood

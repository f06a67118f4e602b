#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <nlohmann/json.hpp>
#include <utility>
#include <vector>

#include "dualflood/dataset.hpp"
#include "dualflood/flood_graph.hpp"
#include "dualflood/tape.hpp"

namespace dualflood {

struct ModelConfig {
  int latent_dim = 64;  // d
  int gnn_layers = 2;   // message passing rounds
  int mlp_layers = 2;   // weight matrices per MLP
  FeatureConfig features;
  int node_in_dim = -1;  // f_v, resolved against the graph schema
  int edge_in_dim = -1;  // f_e

  // Residual edge update stabilizes rollouts; the overwrite form replaces
  // the edge embedding with the message outright.
  bool edge_update_residual = true;
  // When set, nodes also aggregate messages along their outgoing edges.
  bool bidirectional_neighborhood = false;

  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::ordered_json to_json() const;
  static ModelConfig from_json(const nlohmann::ordered_json& j);
};

/// Bias-free MLP: x -> relu(x W_0) ... W_{L-1}, no activation on the last
/// layer. Weights are stored (in x out) and applied on the right of row-major
/// batches. Zero input maps to zero output for any weights.
struct Mlp {
  std::vector<Eigen::MatrixXd> weights;
};

struct ModelState {
  ModelConfig config;
  Mlp node_encoder, edge_encoder;
  std::vector<Mlp> message_mlp, update_mlp;  // one per processor layer
  Mlp node_decoder, edge_decoder;

  long parameter_count() const;
  /// Flat view over every weight matrix in a fixed order (encoders,
  /// per-layer message/update, decoders). Optimizer state and checkpoint
  /// blobs follow this order.
  std::vector<Eigen::MatrixXd*> parameters();
  std::vector<const Eigen::MatrixXd*> parameters() const;
};

/// Seeded fan-in-scaled uniform initialization: entries of a (in x out)
/// matrix drawn from U(-1/sqrt(in), 1/sqrt(in)).
ModelState init_model(const ModelConfig& config);

// ---- tape-side network -------------------------------------------------------

struct TapeMlp {
  std::vector<ad::Var> weights;
};

struct TapeModel {
  const ModelConfig* config = nullptr;
  TapeMlp node_encoder, edge_encoder;
  std::vector<TapeMlp> message_mlp, update_mlp;
  TapeMlp node_decoder, edge_decoder;
};

/// Copies the weights onto a tape. With requires_grad the leaves accumulate
/// gradients in ModelState::parameters() order.
TapeModel load_on_tape(ad::Tape& tape, const ModelState& state, bool requires_grad);

/// Flat weight handles in the same order as ModelState::parameters().
std::vector<ad::Var> tape_parameters(const TapeModel& m);

ad::Var mlp_forward(ad::Tape& tape, const TapeMlp& mlp, ad::Var x);

/// Separate encoders for node and edge inputs (already normalized).
std::pair<ad::Var, ad::Var> encode(ad::Tape& tape, const TapeModel& m, ad::Var x, ad::Var e);

/// One shared-message round: per directed edge j->i the message is
/// MLP([h_i | h_j | e_ij]); nodes add the MLP of their aggregated incoming
/// messages (residual), edges take the message (residual or overwrite).
std::pair<ad::Var, ad::Var> process_layer(ad::Tape& tape, const TapeModel& m, int layer,
                                          ad::Var h, ad::Var eps, const FloodGraph& g);

/// Dual decoders back to the (normalized) delta targets, |V|x1 and |E|x1.
std::pair<ad::Var, ad::Var> decode(ad::Tape& tape, const TapeModel& m, ad::Var h, ad::Var eps);

struct StepVars {
  ad::Var dv_hat, dq_hat;  // normalized deltas
  ad::Var dv, dq;          // physical units (m^3, m^3/s)
};

/// Full step on raw feature windows: normalize inputs, encode, run the
/// processor stack, decode, denormalize the deltas.
StepVars forward_step(ad::Tape& tape, const TapeModel& m, const FloodGraph& g, ad::Var x_raw,
                      ad::Var e_raw, const NormStats& stats);

struct StepOutput {
  Eigen::VectorXd delta_volume;      // m^3
  Eigen::VectorXd delta_flow;        // m^3/s
  Eigen::VectorXd delta_volume_hat;  // normalized target space
  Eigen::VectorXd delta_flow_hat;
};

/// Value-only convenience wrapper over the tape step.
StepOutput forward_step(const ModelState& state, const FloodGraph& g, const Eigen::MatrixXd& x_raw,
                        const Eigen::MatrixXd& e_raw, const NormStats& stats);

}  // namespace dualflood

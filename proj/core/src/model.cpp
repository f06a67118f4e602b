#include "dualflood/model.hpp"

#include <cmath>

#include "dualflood/errors.hpp"
#include "dualflood/rng.hpp"

namespace dualflood {

using nlohmann::ordered_json;

void ModelConfig::validate() const {
  if (latent_dim < 1) throw ConfigError("model: latent_dim must be >= 1");
  if (gnn_layers < 1) throw ConfigError("model: gnn_layers must be >= 1");
  if (mlp_layers < 1) throw ConfigError("model: mlp_layers must be >= 1");
  if (features.history < 0) throw ConfigError("model: history must be >= 0");
  if (node_in_dim < 1 || edge_in_dim < 1)
    throw ConfigError("model: input dims not resolved against a dataset");
}

ordered_json ModelConfig::to_json() const {
  return {{"latent_dim", latent_dim},
          {"gnn_layers", gnn_layers},
          {"mlp_layers", mlp_layers},
          {"history", features.history},
          {"include_inflow_bc", features.include_inflow_bc},
          {"include_outflow_bc", features.include_outflow_bc},
          {"node_in_dim", node_in_dim},
          {"edge_in_dim", edge_in_dim},
          {"edge_update_residual", edge_update_residual},
          {"bidirectional_neighborhood", bidirectional_neighborhood},
          {"seed", seed}};
}

ModelConfig ModelConfig::from_json(const ordered_json& j) {
  ModelConfig c;
  c.latent_dim = j.value("latent_dim", c.latent_dim);
  c.gnn_layers = j.value("gnn_layers", c.gnn_layers);
  c.mlp_layers = j.value("mlp_layers", c.mlp_layers);
  c.features.history = j.value("history", c.features.history);
  c.features.include_inflow_bc = j.value("include_inflow_bc", c.features.include_inflow_bc);
  c.features.include_outflow_bc = j.value("include_outflow_bc", c.features.include_outflow_bc);
  c.node_in_dim = j.value("node_in_dim", c.node_in_dim);
  c.edge_in_dim = j.value("edge_in_dim", c.edge_in_dim);
  c.edge_update_residual = j.value("edge_update_residual", c.edge_update_residual);
  c.bidirectional_neighborhood = j.value("bidirectional_neighborhood", c.bidirectional_neighborhood);
  c.seed = j.value("seed", c.seed);
  return c;
}

namespace {

// layer widths for one MLP: in -> d -> ... -> out, mlp_layers matrices
std::vector<std::pair<int, int>> mlp_dims(int in, int out, int hidden, int layers) {
  std::vector<std::pair<int, int>> dims;
  if (layers == 1) {
    dims.push_back({in, out});
    return dims;
  }
  dims.push_back({in, hidden});
  for (int l = 1; l < layers - 1; ++l) dims.push_back({hidden, hidden});
  dims.push_back({hidden, out});
  return dims;
}

Mlp make_mlp(int in, int out, int hidden, int layers, Rng& rng) {
  Mlp mlp;
  for (const auto& [r, c] : mlp_dims(in, out, hidden, layers)) {
    Eigen::MatrixXd w(r, c);
    const double bound = 1.0 / std::sqrt(static_cast<double>(r));
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j) w(i, j) = rng.uniform(-bound, bound);
    mlp.weights.push_back(std::move(w));
  }
  return mlp;
}

}  // namespace

ModelState init_model(const ModelConfig& config) {
  config.validate();
  Rng rng(config.seed);
  ModelState s;
  s.config = config;
  const int d = config.latent_dim;
  const int L = config.mlp_layers;
  s.node_encoder = make_mlp(config.node_in_dim, d, d, L, rng);
  s.edge_encoder = make_mlp(config.edge_in_dim, d, d, L, rng);
  for (int l = 0; l < config.gnn_layers; ++l) {
    s.message_mlp.push_back(make_mlp(3 * d, d, d, L, rng));
    s.update_mlp.push_back(make_mlp(d, d, d, L, rng));
  }
  s.node_decoder = make_mlp(d, 1, d, L, rng);
  s.edge_decoder = make_mlp(d, 1, d, L, rng);
  return s;
}

std::vector<Eigen::MatrixXd*> ModelState::parameters() {
  std::vector<Eigen::MatrixXd*> p;
  auto push = [&p](Mlp& m) {
    for (auto& w : m.weights) p.push_back(&w);
  };
  push(node_encoder);
  push(edge_encoder);
  for (std::size_t l = 0; l < message_mlp.size(); ++l) {
    push(message_mlp[l]);
    push(update_mlp[l]);
  }
  push(node_decoder);
  push(edge_decoder);
  return p;
}

std::vector<const Eigen::MatrixXd*> ModelState::parameters() const {
  std::vector<const Eigen::MatrixXd*> p;
  for (auto* w : const_cast<ModelState*>(this)->parameters()) p.push_back(w);
  return p;
}

long ModelState::parameter_count() const {
  long n = 0;
  for (const auto* w : parameters()) n += static_cast<long>(w->size());
  return n;
}

TapeModel load_on_tape(ad::Tape& tape, const ModelState& state, bool requires_grad) {
  TapeModel m;
  m.config = &state.config;
  auto lift = [&](const Mlp& src) {
    TapeMlp out;
    for (const auto& w : src.weights)
      out.weights.push_back(requires_grad ? tape.leaf(w) : tape.constant(w));
    return out;
  };
  m.node_encoder = lift(state.node_encoder);
  m.edge_encoder = lift(state.edge_encoder);
  for (std::size_t l = 0; l < state.message_mlp.size(); ++l) {
    m.message_mlp.push_back(lift(state.message_mlp[l]));
    m.update_mlp.push_back(lift(state.update_mlp[l]));
  }
  m.node_decoder = lift(state.node_decoder);
  m.edge_decoder = lift(state.edge_decoder);
  return m;
}

std::vector<ad::Var> tape_parameters(const TapeModel& m) {
  std::vector<ad::Var> p;
  auto push = [&p](const TapeMlp& mlp) {
    for (ad::Var w : mlp.weights) p.push_back(w);
  };
  push(m.node_encoder);
  push(m.edge_encoder);
  for (std::size_t l = 0; l < m.message_mlp.size(); ++l) {
    push(m.message_mlp[l]);
    push(m.update_mlp[l]);
  }
  push(m.node_decoder);
  push(m.edge_decoder);
  return p;
}

ad::Var mlp_forward(ad::Tape& tape, const TapeMlp& mlp, ad::Var x) {
  ad::Var h = x;
  for (std::size_t l = 0; l < mlp.weights.size(); ++l) {
    h = tape.matmul(h, mlp.weights[l]);
    if (l + 1 < mlp.weights.size()) h = tape.relu(h);
  }
  return h;
}

std::pair<ad::Var, ad::Var> encode(ad::Tape& tape, const TapeModel& m, ad::Var x, ad::Var e) {
  return {mlp_forward(tape, m.node_encoder, x), mlp_forward(tape, m.edge_encoder, e)};
}

std::pair<ad::Var, ad::Var> process_layer(ad::Tape& tape, const TapeModel& m, int layer,
                                          ad::Var h, ad::Var eps, const FloodGraph& g) {
  // message per directed edge j->i: MLP([h_i | h_j | e_ij])
  ad::Var h_dst = tape.gather_rows(h, g.edge_dst);
  ad::Var h_src = tape.gather_rows(h, g.edge_src);
  ad::Var msg = mlp_forward(tape, m.message_mlp[static_cast<std::size_t>(layer)],
                            tape.concat_cols({h_dst, h_src, eps}));

  ad::Var agg = tape.scatter_add_rows(msg, g.edge_dst, g.num_nodes);
  if (m.config->bidirectional_neighborhood) {
    // the reverse-direction message, aggregated at the source side
    ad::Var rev = mlp_forward(tape, m.message_mlp[static_cast<std::size_t>(layer)],
                              tape.concat_cols({h_src, h_dst, eps}));
    agg = tape.add(agg, tape.scatter_add_rows(rev, g.edge_src, g.num_nodes));
  }

  ad::Var h_next = tape.add(h, mlp_forward(tape, m.update_mlp[static_cast<std::size_t>(layer)], agg));
  ad::Var e_next = m.config->edge_update_residual ? tape.add(eps, msg) : msg;
  return {h_next, e_next};
}

std::pair<ad::Var, ad::Var> decode(ad::Tape& tape, const TapeModel& m, ad::Var h, ad::Var eps) {
  return {mlp_forward(tape, m.node_decoder, h), mlp_forward(tape, m.edge_decoder, eps)};
}

StepVars forward_step(ad::Tape& tape, const TapeModel& m, const FloodGraph& g, ad::Var x_raw,
                      ad::Var e_raw, const NormStats& stats) {
  const auto& x = tape.value(x_raw);
  const auto& e = tape.value(e_raw);
  if (x.cols() != stats.node_mean.size() || e.cols() != stats.edge_mean.size())
    throw std::invalid_argument("forward_step: window width does not match normalizer");

  ad::Var xn = tape.affine_cols(x_raw, stats.node_std.cwiseInverse(),
                                (-stats.node_mean.array() / stats.node_std.array()).matrix());
  ad::Var en = tape.affine_cols(e_raw, stats.edge_std.cwiseInverse(),
                                (-stats.edge_mean.array() / stats.edge_std.array()).matrix());

  auto [h, eps] = encode(tape, m, xn, en);
  for (int l = 0; l < m.config->gnn_layers; ++l) std::tie(h, eps) = process_layer(tape, m, l, h, eps, g);
  auto [dv_hat, dq_hat] = decode(tape, m, h, eps);

  StepVars out;
  out.dv_hat = dv_hat;
  out.dq_hat = dq_hat;
  out.dv = tape.affine_cols(dv_hat, Eigen::VectorXd::Constant(1, stats.dv_std),
                            Eigen::VectorXd::Constant(1, stats.dv_mean));
  out.dq = tape.affine_cols(dq_hat, Eigen::VectorXd::Constant(1, stats.dq_std),
                            Eigen::VectorXd::Constant(1, stats.dq_mean));
  return out;
}

StepOutput forward_step(const ModelState& state, const FloodGraph& g, const Eigen::MatrixXd& x_raw,
                        const Eigen::MatrixXd& e_raw, const NormStats& stats) {
  ad::Tape tape;
  const TapeModel m = load_on_tape(tape, state, /*requires_grad=*/false);
  const StepVars v = forward_step(tape, m, g, tape.constant(x_raw), tape.constant(e_raw), stats);
  StepOutput out;
  out.delta_volume = tape.value(v.dv).col(0);
  out.delta_flow = tape.value(v.dq).col(0);
  out.delta_volume_hat = tape.value(v.dv_hat).col(0);
  out.delta_flow_hat = tape.value(v.dq_hat).col(0);
  return out;
}

}  // namespace dualflood

// Microbenchmarks for the hot paths: flux decomposition, one model step,
// the differentiable rollout, and event generation at reference scale.

#include <benchmark/benchmark.h>

#include "dualflood/losses.hpp"
#include "dualflood/model.hpp"
#include "dualflood/rng.hpp"
#include "dualflood/synthetic.hpp"
#include "dualflood/trainer.hpp"

using namespace dualflood;

namespace {

FloodGraph reference_graph() {
  CatchmentSpec spec;  // 1129 nodes / 2743 edges
  spec.seed = 1;
  return generate_catchment(spec);
}

EventSeries short_event(const FloodGraph& g, int steps) {
  HydrographSpec h;
  h.num_steps = steps;
  h.seed = 2;
  return generate_event(g, h);
}

ModelState reference_model(const FloodGraph& g, int d) {
  ModelConfig c;
  c.latent_dim = d;
  c.gnn_layers = 2;
  c.mlp_layers = 2;
  c.features.history = 2;
  c.node_in_dim = c.features.node_feature_dim(static_cast<int>(g.static_node_features.cols()));
  c.edge_in_dim = c.features.edge_feature_dim(static_cast<int>(g.static_edge_features.cols()));
  c.seed = 3;
  return init_model(c);
}

void bm_node_fluxes(benchmark::State& state) {
  const FloodGraph g = reference_graph();
  Rng rng(4);
  Eigen::VectorXd q(g.num_edges);
  for (int k = 0; k < g.num_edges; ++k) q[k] = rng.uniform(-5, 5);
  for (auto _ : state) {
    const NodeFluxes f = compute_node_fluxes(g, q);
    benchmark::DoNotOptimize(f.inflow.sum());
  }
}
BENCHMARK(bm_node_fluxes);

void bm_forward_step(benchmark::State& state) {
  const FloodGraph g = reference_graph();
  const EventSeries e = short_event(g, 8);
  const ModelState m = reference_model(g, static_cast<int>(state.range(0)));
  const NormStats stats = fit_normalizer(g, {e}, m.config.features);
  const Eigen::MatrixXd x = assemble_node_features(g, e, 4, m.config.features);
  const Eigen::MatrixXd ef = assemble_edge_features(g, e, 4, m.config.features);
  for (auto _ : state) {
    const StepOutput out = forward_step(m, g, x, ef, stats);
    benchmark::DoNotOptimize(out.delta_volume.sum());
  }
}
BENCHMARK(bm_forward_step)->Arg(32)->Arg(64);

void bm_rollout_loss_backward(benchmark::State& state) {
  const FloodGraph g = reference_graph();
  const EventSeries e = short_event(g, 16);
  const ModelState m = reference_model(g, 32);
  const NormStats stats = fit_normalizer(g, {e}, m.config.features);
  const LossWeights w;
  for (auto _ : state) {
    ad::Tape tape;
    const TapeModel tm = load_on_tape(tape, m, true);
    const RolloutLoss rl =
        build_rollout_loss(tape, tm, g, e, 2, static_cast<int>(state.range(0)), stats, w, {});
    tape.backward(rl.total);
    benchmark::DoNotOptimize(tape.grad(tape_parameters(tm)[0]).sum());
  }
}
BENCHMARK(bm_rollout_loss_backward)->Arg(1)->Arg(4);

void bm_generate_event(benchmark::State& state) {
  const FloodGraph g = reference_graph();
  HydrographSpec h;
  h.num_steps = static_cast<int>(state.range(0));
  h.seed = 5;
  for (auto _ : state) {
    const EventSeries e = generate_event(g, h);
    benchmark::DoNotOptimize(e.node_volume.sum());
  }
}
BENCHMARK(bm_generate_event)->Arg(64)->Arg(576);

}  // namespace

BENCHMARK_MAIN();

// dualflood command-line driver: gen-data, train, eval, rollout, report.
//
// Every command resolves its configuration from an optional --config JSON
// file plus command-line overrides, then persists the resolved values next
// to its outputs so any run can be reproduced from its directory alone.
//
// Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
// divergence.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>

#include "dualflood/rng.hpp"

#include "dualflood/binio.hpp"
#include "dualflood/checkpoint.hpp"
#include "dualflood/errors.hpp"
#include "dualflood/evaluator.hpp"
#include "dualflood/synthetic.hpp"
#include "dualflood/trainer.hpp"

namespace fs = std::filesystem;
using dualflood::io::json;
using namespace dualflood;

namespace {

json load_config_file(const std::string& path) {
  if (path.empty()) return json::object();
  try {
    return io::read_json(path);
  } catch (const DataError& e) {
    throw ConfigError(std::string("--config: ") + e.what());
  }
}

// --out falls back to $DUALFLOOD_OUT_ROOT/<leaf>
std::string resolve_out(const std::string& out, const char* leaf) {
  if (!out.empty()) return out;
  const char* root = std::getenv("DUALFLOOD_OUT_ROOT");
  if (!root || !*root)
    throw ConfigError("no --out given and DUALFLOOD_OUT_ROOT is not set");
  return (fs::path(root) / leaf).string();
}

void prepare_out_dir(const std::string& out, bool force) {
  const fs::path p(out);
  if (fs::exists(p) && !fs::is_empty(p)) {
    if (!force) throw ConfigError("output path exists: " + out + " (use --force to overwrite)");
    fs::remove_all(p);
  }
  fs::create_directories(p);
}

struct SplitSpec {
  double train_frac = 40.0 / 56.0;
  double val_frac = 8.0 / 56.0;
  std::uint64_t seed = 0;
};

Splits resolve_split(const SplitSpec& s, int num_events) {
  return split_events(num_events, s.train_frac, s.val_frac, s.seed);
}

// ---- gen-data ---------------------------------------------------------------

struct GenArgs {
  std::string config_path, out;
  bool force = false;
  CatchmentSpec catchment;
  HydrographSpec hydro;
  int num_events = 56;
  std::uint64_t seed = 0;
  std::optional<int> nodes, edges, steps, events_override;
  std::optional<double> dt;
  std::optional<std::uint64_t> seed_override;
};

int run_gen_data(const GenArgs& args_in) {
  GenArgs a = args_in;
  const json file = load_config_file(a.config_path);
  if (file.contains("gen")) {
    const json& g = file["gen"];
    a.catchment.num_nodes = g.value("num_nodes", a.catchment.num_nodes);
    a.catchment.target_num_edges = g.value("num_edges", a.catchment.target_num_edges);
    a.catchment.extent_m = g.value("extent_m", a.catchment.extent_m);
    a.catchment.relief_m = g.value("relief_m", a.catchment.relief_m);
    a.catchment.channel_fraction = g.value("channel_fraction", a.catchment.channel_fraction);
    a.catchment.num_inflow = g.value("num_inflow", a.catchment.num_inflow);
    a.catchment.num_outflow = g.value("num_outflow", a.catchment.num_outflow);
    a.hydro.num_steps = g.value("num_steps", a.hydro.num_steps);
    a.hydro.dt_s = g.value("dt_seconds", a.hydro.dt_s);
    a.hydro.peak_inflow_m3s = g.value("peak_inflow_m3s", a.hydro.peak_inflow_m3s);
    a.hydro.base_inflow_m3s = g.value("base_inflow_m3s", a.hydro.base_inflow_m3s);
    a.hydro.peak_time_frac = g.value("peak_time_frac", a.hydro.peak_time_frac);
    a.hydro.pulse_shape = g.value("pulse_shape", a.hydro.pulse_shape);
    a.hydro.rain_peak_m_per_step = g.value("rain_peak_m_per_step", a.hydro.rain_peak_m_per_step);
    a.hydro.rain_peak_frac = g.value("rain_peak_frac", a.hydro.rain_peak_frac);
    a.hydro.rain_sigma_frac = g.value("rain_sigma_frac", a.hydro.rain_sigma_frac);
    a.hydro.routing_velocity_m_s = g.value("routing_velocity_m_s", a.hydro.routing_velocity_m_s);
    a.hydro.drain_fraction = g.value("drain_fraction", a.hydro.drain_fraction);
    a.hydro.max_release_fraction = g.value("max_release_fraction", a.hydro.max_release_fraction);
    a.num_events = g.value("num_events", a.num_events);
    a.seed = g.value("seed", a.seed);
  }
  // flags override the file
  if (a.nodes) a.catchment.num_nodes = *a.nodes;
  if (a.edges) a.catchment.target_num_edges = *a.edges;
  if (a.steps) a.hydro.num_steps = *a.steps;
  if (a.dt) a.hydro.dt_s = *a.dt;
  if (a.events_override) a.num_events = *a.events_override;
  if (a.seed_override) a.seed = *a.seed_override;
  if (a.num_events < 1) throw ConfigError("gen-data: need at least one event");

  const std::string out = resolve_out(a.out, "dataset");
  prepare_out_dir(out, a.force);

  a.catchment.seed = Rng::mix(a.seed, 1);
  const FloodGraph graph = generate_catchment(a.catchment);
  std::vector<EventSeries> events;
  events.reserve(static_cast<std::size_t>(a.num_events));
  for (int i = 0; i < a.num_events; ++i) {
    HydrographSpec h = a.hydro;
    h.seed = Rng::mix(a.seed, 1000 + static_cast<std::uint64_t>(i));
    // vary the forcing across events so the set spans a range of severities
    Rng vary(Rng::mix(a.seed, 2000 + static_cast<std::uint64_t>(i)));
    h.peak_inflow_m3s *= vary.uniform(0.6, 1.4);
    h.peak_time_frac = std::clamp(h.peak_time_frac * vary.uniform(0.7, 1.3), 0.05, 0.9);
    h.rain_peak_m_per_step *= vary.uniform(0.5, 1.5);
    events.push_back(generate_event(graph, h));
  }

  json provenance;
  provenance["seed"] = a.seed;
  provenance["catchment"] = {{"num_nodes", a.catchment.num_nodes},
                             {"num_edges", a.catchment.target_num_edges},
                             {"extent_m", a.catchment.extent_m},
                             {"relief_m", a.catchment.relief_m},
                             {"channel_fraction", a.catchment.channel_fraction},
                             {"num_inflow", a.catchment.num_inflow},
                             {"num_outflow", a.catchment.num_outflow},
                             {"seed", a.catchment.seed}};
  provenance["hydrograph"] = {{"num_steps", a.hydro.num_steps},
                              {"dt_seconds", a.hydro.dt_s},
                              {"peak_inflow_m3s", a.hydro.peak_inflow_m3s},
                              {"base_inflow_m3s", a.hydro.base_inflow_m3s},
                              {"peak_time_frac", a.hydro.peak_time_frac},
                              {"pulse_shape", a.hydro.pulse_shape},
                              {"rain_peak_m_per_step", a.hydro.rain_peak_m_per_step},
                              {"rain_peak_frac", a.hydro.rain_peak_frac},
                              {"rain_sigma_frac", a.hydro.rain_sigma_frac},
                              {"routing_velocity_m_s", a.hydro.routing_velocity_m_s},
                              {"drain_fraction", a.hydro.drain_fraction},
                              {"max_release_fraction", a.hydro.max_release_fraction}};
  provenance["num_events"] = a.num_events;
  save_dataset(graph, events, out, provenance);
  std::cout << "wrote dataset: " << out << " (" << graph.num_nodes << " nodes, " << graph.num_edges
            << " edges, " << a.num_events << " events)\n";
  return 0;
}

// ---- train --------------------------------------------------------------------

struct TrainArgs {
  std::string config_path, data, out, resume, physics_preset;
  bool force = false;
  bool no_inflow_feature = false;
  std::optional<int> folds;
  SplitSpec split;
  std::optional<double> train_frac, val_frac;
  std::optional<std::uint64_t> seed;
  std::optional<int> target_horizon, curriculum_increment, max_epochs, batch_size, patience;
  std::optional<double> lr, lr_decay, lambda_global, lambda_local;
  std::optional<int> latent_dim, gnn_layers, mlp_layers, history;
};

void apply_physics_preset(LossWeights& w, const std::string& preset) {
  if (preset.empty() || preset == "both") return;
  if (preset == "none") w = w.with_physics_none();
  else if (preset == "global") w = w.with_global_only();
  else if (preset == "local") w = w.with_local_only();
  else throw ConfigError("--physics must be one of both|global|local|none");
}

int run_train(const TrainArgs& a) {
  const json file = load_config_file(a.config_path);
  ModelConfig mc = file.contains("model") ? ModelConfig::from_json(file["model"]) : ModelConfig{};
  TrainConfig tc = file.contains("train") ? TrainConfig::from_json(file["train"]) : TrainConfig{};
  SplitSpec split = a.split;
  if (file.contains("split")) {
    split.train_frac = file["split"].value("train_frac", split.train_frac);
    split.val_frac = file["split"].value("val_frac", split.val_frac);
    split.seed = file["split"].value("seed", split.seed);
  }
  if (a.train_frac) split.train_frac = *a.train_frac;
  if (a.val_frac) split.val_frac = *a.val_frac;
  if (a.seed) {
    split.seed = *a.seed;
    tc.seed = *a.seed;
    mc.seed = *a.seed;
  }
  if (a.target_horizon) tc.target_horizon = *a.target_horizon;
  if (a.curriculum_increment) tc.curriculum_increment = *a.curriculum_increment;
  if (a.max_epochs) tc.max_epochs_per_stage = *a.max_epochs;
  if (a.batch_size) tc.batch_size = *a.batch_size;
  if (a.patience) tc.patience = *a.patience;
  if (a.lr) tc.adam.lr = *a.lr;
  if (a.lr_decay) tc.lr_decay = *a.lr_decay;
  if (a.lambda_global) tc.loss.global_mass = *a.lambda_global;
  if (a.lambda_local) tc.loss.local_mass = *a.lambda_local;
  if (a.latent_dim) mc.latent_dim = *a.latent_dim;
  if (a.gnn_layers) mc.gnn_layers = *a.gnn_layers;
  if (a.mlp_layers) mc.mlp_layers = *a.mlp_layers;
  if (a.history) mc.features.history = *a.history;
  apply_physics_preset(tc.loss, a.physics_preset);
  if (a.no_inflow_feature) {
    mc.features.include_inflow_bc = false;
    mc.features.include_outflow_bc = false;
  }

  if (a.data.empty()) throw ConfigError("train: --data is required");
  const Dataset ds = load_dataset(a.data);
  const std::string out = resolve_out(a.out, "train");
  if (a.resume.empty()) prepare_out_dir(out, a.force);

  const int folds = a.folds.value_or(1);
  if (folds < 1) throw ConfigError("train: --folds must be >= 1");

  for (int fold = 0; fold < folds; ++fold) {
    SplitSpec fold_split = split;
    fold_split.seed = Rng::mix(split.seed, static_cast<std::uint64_t>(fold));
    const Splits splits = resolve_split(fold_split, static_cast<int>(ds.events.size()));
    const std::string fold_out = folds == 1 ? out : (fs::path(out) / ("fold_" + std::to_string(fold))).string();
    fs::create_directories(fold_out);

    mc.node_in_dim = mc.features.node_feature_dim(static_cast<int>(ds.graph.static_node_features.cols()));
    mc.edge_in_dim = mc.features.edge_feature_dim(static_cast<int>(ds.graph.static_edge_features.cols()));

    json resolved;
    resolved["command"] = "train";
    resolved["dataset"] = fs::absolute(a.data).string();
    resolved["dataset_format_version"] = kDatasetFormatVersion;
    resolved["checkpoint_format_version"] = kCheckpointFormatVersion;
    resolved["physics_preset"] = a.physics_preset.empty() ? "both" : a.physics_preset;
    resolved["no_inflow_feature"] = a.no_inflow_feature;
    resolved["model"] = mc.to_json();
    resolved["train"] = tc.to_json();
    resolved["split"] = {{"train_frac", fold_split.train_frac},
                         {"val_frac", fold_split.val_frac},
                         {"seed", fold_split.seed},
                         {"train_events", splits.train},
                         {"val_events", splits.val},
                         {"test_events", splits.test}};
    resolved["fold"] = fold;
    io::write_json(fs::path(fold_out) / "resolved_config.json", resolved);

    const TrainResult result = train(ds.graph, ds.events, splits, mc, tc, fold_out, a.resume);
    std::cout << "fold " << fold << ": " << result.epochs_run << " epochs, final horizon "
              << result.curriculum.horizon << ", val total "
              << (result.history.empty() ? 0.0 : result.history.back().val.total) << "\n";
  }
  return 0;
}

// ---- eval / rollout / report ---------------------------------------------------

struct EvalArgs {
  std::string checkpoint, data, out, split = "test";
  bool force = false;
  std::vector<double> thresholds = {0.05, 0.3};
};

// The split lists live in the training run's resolved_config.json; the usual
// layout is <run>/checkpoints/<name>, so walk up from the checkpoint when no
// run directory is given explicitly.
std::vector<int> events_from_run_dir(const fs::path& run_dir, const std::string& split) {
  const json resolved = io::read_json(run_dir / "resolved_config.json");
  const json& sp = resolved.at("split");
  const std::string key = split + "_events";
  if (!sp.contains(key)) throw ConfigError("eval: unknown split '" + split + "'");
  return sp.at(key).get<std::vector<int>>();
}

int run_eval(const EvalArgs& a, const std::vector<int>& explicit_events,
             const std::string& run_dir) {
  if (a.checkpoint.empty() || a.data.empty()) throw ConfigError("eval: --checkpoint and --data are required");
  const Dataset ds = load_dataset(a.data);
  const Checkpoint ckpt = load_checkpoint(a.checkpoint);
  const std::string out = resolve_out(a.out, "eval");
  prepare_out_dir(out, a.force);

  std::vector<int> events;
  if (!explicit_events.empty()) {
    events = explicit_events;
  } else if (a.split == "all") {
    for (int i = 0; i < static_cast<int>(ds.events.size()); ++i) events.push_back(i);
  } else if (!run_dir.empty()) {
    events = events_from_run_dir(run_dir, a.split);
  } else {
    const fs::path guess = fs::path(a.checkpoint).parent_path().parent_path();
    if (fs::exists(guess / "resolved_config.json")) {
      events = events_from_run_dir(guess, a.split);
    } else if (ckpt.kind == "oracle") {
      for (int i = 0; i < static_cast<int>(ds.events.size()); ++i) events.push_back(i);
    } else {
      throw ConfigError("eval: cannot locate the run's split record; pass --run-dir, --events or "
                        "--split all");
    }
  }
  if (events.empty()) throw ConfigError("eval: selected split contains no events");
  for (int ei : events)
    if (ei < 0 || ei >= static_cast<int>(ds.events.size()))
      throw DataError("eval: event index " + std::to_string(ei) + " out of range");

  if (ckpt.kind == "model") {
    const int want_fv = ckpt.model.config.features.node_feature_dim(
        static_cast<int>(ds.graph.static_node_features.cols()));
    if (want_fv != ckpt.model.config.node_in_dim)
      throw DataError("eval: checkpoint feature schema does not match dataset (f_v " +
                      std::to_string(ckpt.model.config.node_in_dim) + " vs " + std::to_string(want_fv) + ")");
  }

  std::vector<MetricsReport> reports;
  for (int ei : events) {
    const EventSeries& e = ds.events[static_cast<std::size_t>(ei)];
    const int history = ckpt.kind == "model" ? ckpt.model.config.features.history : 0;
    const int steps = e.num_steps - 1 - history;
    const RolloutResult rr = ckpt.kind == "model"
                                 ? rollout(ckpt.model, ds.graph, e, ckpt.stats, steps)
                                 : oracle_rollout(ds.graph, e, history, steps);
    MetricsReport rep = event_report(rr, e, ds.graph, a.thresholds);
    char dir[32];
    std::snprintf(dir, sizeof(dir), "event_%04d", ei);
    write_report(rep, ds.graph, (fs::path(out) / dir).string());
    reports.push_back(std::move(rep));
  }
  const AggregateMetrics agg = aggregate_reports(reports);
  json agg_json = agg.to_json();
  agg_json["events"] = events;
  agg_json["checkpoint"] = fs::absolute(a.checkpoint).string();
  io::write_json(fs::path(out) / "metrics.json", agg_json);
  std::cout << "evaluated " << events.size() << " event(s) -> " << out << "\n";
  return 0;
}

int run_rollout(const std::string& checkpoint, const std::string& data, int event_idx,
                std::optional<int> steps, const std::string& out_in, bool force) {
  if (checkpoint.empty() || data.empty()) throw ConfigError("rollout: --checkpoint and --data are required");
  const Dataset ds = load_dataset(data);
  if (event_idx < 0 || event_idx >= static_cast<int>(ds.events.size()))
    throw DataError("rollout: event index out of range");
  const Checkpoint ckpt = load_checkpoint(checkpoint);
  const EventSeries& e = ds.events[static_cast<std::size_t>(event_idx)];
  const int history = ckpt.kind == "model" ? ckpt.model.config.features.history : 0;
  const int n_steps = steps.value_or(e.num_steps - 1 - history);

  const std::string out = resolve_out(out_in, "rollout");
  prepare_out_dir(out, force);
  const RolloutResult rr = ckpt.kind == "model"
                               ? rollout(ckpt.model, ds.graph, e, ckpt.stats, n_steps)
                               : oracle_rollout(ds.graph, e, history, n_steps);
  json provenance;
  provenance["checkpoint"] = fs::absolute(checkpoint).string();
  provenance["dataset"] = fs::absolute(data).string();
  provenance["event"] = event_idx;
  provenance["steps"] = n_steps;
  save_rollout(rr, out, provenance);
  std::cout << "rollout of event " << event_idx << " (" << n_steps << " steps) -> " << out << "\n";
  return 0;
}

int run_report(const std::string& rollout_dir, const std::string& data, int event_idx,
               const std::string& out_in, bool force, const std::vector<double>& thresholds) {
  if (rollout_dir.empty() || data.empty()) throw ConfigError("report: --rollout and --data are required");
  const Dataset ds = load_dataset(data);
  if (event_idx < 0 || event_idx >= static_cast<int>(ds.events.size()))
    throw DataError("report: event index out of range");
  const RolloutResult rr = load_rollout(rollout_dir);
  const std::string out = resolve_out(out_in, "report");
  prepare_out_dir(out, force);
  const MetricsReport rep = event_report(rr, ds.events[static_cast<std::size_t>(event_idx)], ds.graph, thresholds);
  write_report(rep, ds.graph, out);
  std::cout << "report for event " << event_idx << " -> " << out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dualflood: physics-regularized dual node/edge flood surrogate"};
  app.require_subcommand(1);

  GenArgs gen;
  auto* cmd_gen = app.add_subcommand("gen-data", "generate a synthetic catchment and flood events");
  cmd_gen->add_option("--config", gen.config_path, "JSON config file");
  cmd_gen->add_option("--out", gen.out, "output dataset directory");
  cmd_gen->add_flag("--force", gen.force, "overwrite an existing output directory");
  int gen_nodes = 0, gen_edges = 0, gen_steps = 0, gen_events = 0;
  double gen_dt = 0;
  std::uint64_t gen_seed = 0;
  cmd_gen->add_option("--nodes", gen_nodes, "number of mesh cells");
  cmd_gen->add_option("--edges", gen_edges, "target number of faces");
  cmd_gen->add_option("--steps", gen_steps, "states per event");
  cmd_gen->add_option("--dt", gen_dt, "timestep in seconds");
  cmd_gen->add_option("--events", gen_events, "number of events");
  cmd_gen->add_option("--seed", gen_seed, "master seed");

  TrainArgs tr;
  auto* cmd_train = app.add_subcommand("train", "train the surrogate on a dataset");
  cmd_train->add_option("--config", tr.config_path, "JSON config file");
  cmd_train->add_option("--data", tr.data, "dataset directory");
  cmd_train->add_option("--out", tr.out, "run output directory");
  cmd_train->add_flag("--force", tr.force, "overwrite an existing output directory");
  cmd_train->add_option("--resume", tr.resume, "checkpoint directory to resume from");
  cmd_train->add_option("--physics", tr.physics_preset, "physics loss preset: both|global|local|none");
  cmd_train->add_flag("--no-inflow-feature", tr.no_inflow_feature,
                      "drop the broadcast boundary inflow/outflow channels");
  int tr_folds = 0, tr_O = 0, tr_C = 0, tr_epochs = 0, tr_batch = 0, tr_patience = 0;
  int tr_d = 0, tr_gnn = 0, tr_mlp = 0, tr_p = -1;
  double tr_trainf = -1, tr_valf = -1, tr_lr = 0, tr_gamma = 0, tr_lg = -1, tr_ll = -1;
  std::uint64_t tr_seed = 0;
  cmd_train->add_option("--folds", tr_folds, "rotate K seeded splits");
  cmd_train->add_option("--train-frac", tr_trainf, "training fraction of events");
  cmd_train->add_option("--val-frac", tr_valf, "validation fraction of events");
  cmd_train->add_option("--seed", tr_seed, "seed for init, shuffling and splits");
  cmd_train->add_option("--horizon", tr_O, "target rollout length O");
  cmd_train->add_option("--curriculum-step", tr_C, "horizon increment C");
  cmd_train->add_option("--max-epochs", tr_epochs, "epoch budget per curriculum stage");
  cmd_train->add_option("--batch-size", tr_batch, "windows per optimizer step");
  cmd_train->add_option("--patience", tr_patience, "epochs without improvement before advancing");
  cmd_train->add_option("--lr", tr_lr, "initial learning rate");
  cmd_train->add_option("--lr-decay", tr_gamma, "learning-rate decay per stage");
  cmd_train->add_option("--lambda-global", tr_lg, "global mass loss weight");
  cmd_train->add_option("--lambda-local", tr_ll, "local mass loss weight");
  cmd_train->add_option("--latent-dim", tr_d, "latent width d");
  cmd_train->add_option("--gnn-layers", tr_gnn, "message passing rounds");
  cmd_train->add_option("--mlp-layers", tr_mlp, "layers per MLP");
  cmd_train->add_option("--history", tr_p, "previous states per feature window");

  EvalArgs ev;
  std::string ev_run_dir;
  std::vector<int> ev_events;
  auto* cmd_eval = app.add_subcommand("eval", "evaluate a checkpoint over a dataset split");
  cmd_eval->add_option("--checkpoint", ev.checkpoint, "checkpoint directory");
  cmd_eval->add_option("--data", ev.data, "dataset directory");
  cmd_eval->add_option("--out", ev.out, "report output directory");
  cmd_eval->add_option("--split", ev.split, "train|val|test|all (split lists come from --run-dir)");
  cmd_eval->add_option("--run-dir", ev_run_dir, "training run directory holding resolved_config.json");
  cmd_eval->add_option("--events", ev_events, "explicit event indices (overrides --split)");
  cmd_eval->add_option("--thresholds", ev.thresholds, "flood depth thresholds in meters");
  cmd_eval->add_flag("--force", ev.force, "overwrite an existing output directory");

  std::string ro_ckpt, ro_data, ro_out;
  int ro_event = 0, ro_steps = 0;
  bool ro_force = false;
  auto* cmd_rollout = app.add_subcommand("rollout", "run one autoregressive rollout and save the trajectories");
  cmd_rollout->add_option("--checkpoint", ro_ckpt, "checkpoint directory");
  cmd_rollout->add_option("--data", ro_data, "dataset directory");
  cmd_rollout->add_option("--event", ro_event, "event index");
  cmd_rollout->add_option("--steps", ro_steps, "steps to roll (default: full event)");
  cmd_rollout->add_option("--out", ro_out, "output directory");
  cmd_rollout->add_flag("--force", ro_force, "overwrite an existing output directory");

  std::string rp_rollout, rp_data, rp_out;
  int rp_event = 0;
  bool rp_force = false;
  std::vector<double> rp_thresholds = {0.05, 0.3};
  auto* cmd_report = app.add_subcommand("report", "regenerate metric reports from a saved rollout");
  cmd_report->add_option("--rollout", rp_rollout, "rollout directory");
  cmd_report->add_option("--data", rp_data, "dataset directory");
  cmd_report->add_option("--event", rp_event, "event index the rollout belongs to");
  cmd_report->add_option("--out", rp_out, "output directory");
  cmd_report->add_option("--thresholds", rp_thresholds, "flood depth thresholds in meters");
  cmd_report->add_flag("--force", rp_force, "overwrite an existing output directory");

  try {
    app.parse(argc, argv);

    if (cmd_gen->parsed()) {
      if (cmd_gen->count("--nodes")) gen.nodes = gen_nodes;
      if (cmd_gen->count("--edges")) gen.edges = gen_edges;
      if (cmd_gen->count("--steps")) gen.steps = gen_steps;
      if (cmd_gen->count("--dt")) gen.dt = gen_dt;
      if (cmd_gen->count("--events")) gen.events_override = gen_events;
      if (cmd_gen->count("--seed")) gen.seed_override = gen_seed;
      return run_gen_data(gen);
    }
    if (cmd_train->parsed()) {
      if (cmd_train->count("--folds")) tr.folds = tr_folds;
      if (cmd_train->count("--train-frac")) tr.train_frac = tr_trainf;
      if (cmd_train->count("--val-frac")) tr.val_frac = tr_valf;
      if (cmd_train->count("--seed")) tr.seed = tr_seed;
      if (cmd_train->count("--horizon")) tr.target_horizon = tr_O;
      if (cmd_train->count("--curriculum-step")) tr.curriculum_increment = tr_C;
      if (cmd_train->count("--max-epochs")) tr.max_epochs = tr_epochs;
      if (cmd_train->count("--batch-size")) tr.batch_size = tr_batch;
      if (cmd_train->count("--patience")) tr.patience = tr_patience;
      if (cmd_train->count("--lr")) tr.lr = tr_lr;
      if (cmd_train->count("--lr-decay")) tr.lr_decay = tr_gamma;
      if (cmd_train->count("--lambda-global")) tr.lambda_global = tr_lg;
      if (cmd_train->count("--lambda-local")) tr.lambda_local = tr_ll;
      if (cmd_train->count("--latent-dim")) tr.latent_dim = tr_d;
      if (cmd_train->count("--gnn-layers")) tr.gnn_layers = tr_gnn;
      if (cmd_train->count("--mlp-layers")) tr.mlp_layers = tr_mlp;
      if (cmd_train->count("--history")) tr.history = tr_p;
      return run_train(tr);
    }
    if (cmd_eval->parsed()) return run_eval(ev, ev_events, ev_run_dir);
    if (cmd_rollout->parsed())
      return run_rollout(ro_ckpt, ro_data, ro_event,
                         cmd_rollout->count("--steps") ? std::optional<int>(ro_steps) : std::nullopt,
                         ro_out, ro_force);
    if (cmd_report->parsed())
      return run_report(rp_rollout, rp_data, rp_event, rp_out, rp_force, rp_thresholds);
    return 2;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const DivergenceError& e) {
    std::cerr << "divergence: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

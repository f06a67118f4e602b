#include "dualflood/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>

#include "dualflood/checkpoint.hpp"
#include "dualflood/errors.hpp"
#include "dualflood/rng.hpp"

namespace dualflood {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

void TrainConfig::validate() const {
  if (target_horizon < 1) throw ConfigError("train: target_horizon must be >= 1");
  if (curriculum_increment < 1 || curriculum_increment > target_horizon)
    throw ConfigError("train: curriculum_increment must lie in [1, target_horizon]");
  if (lr_decay <= 0.0 || lr_decay > 1.0) throw ConfigError("train: lr_decay must lie in (0, 1]");
  if (patience < 1) throw ConfigError("train: patience must be >= 1");
  if (max_epochs_per_stage < 1) throw ConfigError("train: max_epochs_per_stage must be >= 1");
  if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (val_window_stride < 1) throw ConfigError("train: val_window_stride must be >= 1");
  if (adam.lr <= 0.0) throw ConfigError("train: learning rate must be positive");
  loss.validate();
}

ordered_json TrainConfig::to_json() const {
  return {{"target_horizon", target_horizon},
          {"curriculum_increment", curriculum_increment},
          {"lr_decay", lr_decay},
          {"lr", adam.lr},
          {"adam_beta1", adam.beta1},
          {"adam_beta2", adam.beta2},
          {"adam_eps", adam.eps},
          {"patience", patience},
          {"min_delta_rel", min_delta_rel},
          {"max_epochs_per_stage", max_epochs_per_stage},
          {"batch_size", batch_size},
          {"lambda_node", loss.node},
          {"lambda_edge", loss.edge},
          {"lambda_global", loss.global_mass},
          {"lambda_local", loss.local_mass},
          {"local_boundary", loss_options.boundary == BoundaryMode::GhostFlux ? "ghost_flux" : "exclude_nodes"},
          {"local_per_node_mean", loss_options.local_per_node_mean},
          {"clip_gradients", clip_gradients},
          {"max_grad_norm", max_grad_norm},
          {"reset_moments_on_stage", reset_moments_on_stage},
          {"val_window_stride", val_window_stride},
          {"checkpoint_every_epochs", checkpoint_every_epochs},
          {"seed", seed}};
}

TrainConfig TrainConfig::from_json(const ordered_json& j) {
  TrainConfig c;
  c.target_horizon = j.value("target_horizon", c.target_horizon);
  c.curriculum_increment = j.value("curriculum_increment", c.curriculum_increment);
  c.lr_decay = j.value("lr_decay", c.lr_decay);
  c.adam.lr = j.value("lr", c.adam.lr);
  c.adam.beta1 = j.value("adam_beta1", c.adam.beta1);
  c.adam.beta2 = j.value("adam_beta2", c.adam.beta2);
  c.adam.eps = j.value("adam_eps", c.adam.eps);
  c.patience = j.value("patience", c.patience);
  c.min_delta_rel = j.value("min_delta_rel", c.min_delta_rel);
  c.max_epochs_per_stage = j.value("max_epochs_per_stage", c.max_epochs_per_stage);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.loss.node = j.value("lambda_node", c.loss.node);
  c.loss.edge = j.value("lambda_edge", c.loss.edge);
  c.loss.global_mass = j.value("lambda_global", c.loss.global_mass);
  c.loss.local_mass = j.value("lambda_local", c.loss.local_mass);
  const std::string boundary = j.value("local_boundary", std::string("ghost_flux"));
  if (boundary == "ghost_flux") c.loss_options.boundary = BoundaryMode::GhostFlux;
  else if (boundary == "exclude_nodes") c.loss_options.boundary = BoundaryMode::ExcludeNodes;
  else throw ConfigError("train: unknown local_boundary '" + boundary + "'");
  c.loss_options.local_per_node_mean = j.value("local_per_node_mean", c.loss_options.local_per_node_mean);
  c.clip_gradients = j.value("clip_gradients", c.clip_gradients);
  c.max_grad_norm = j.value("max_grad_norm", c.max_grad_norm);
  c.reset_moments_on_stage = j.value("reset_moments_on_stage", c.reset_moments_on_stage);
  c.val_window_stride = j.value("val_window_stride", c.val_window_stride);
  c.checkpoint_every_epochs = j.value("checkpoint_every_epochs", c.checkpoint_every_epochs);
  c.seed = j.value("seed", c.seed);
  return c;
}

namespace {

CurriculumState advance_stage(const CurriculumState& cur, const TrainConfig& cfg) {
  CurriculumState next = cur;
  if (cur.horizon >= cfg.target_horizon) {
    next.finished = true;
    return next;
  }
  next.horizon = std::min(cur.horizon + cfg.curriculum_increment, cfg.target_horizon);
  next.stage = cur.stage + 1;
  next.lr = cfg.adam.lr * std::pow(cfg.lr_decay, next.stage);
  next.best_val = std::numeric_limits<double>::infinity();
  next.epochs_since_improvement = 0;
  next.epochs_in_stage = 0;
  return next;
}

}  // namespace

CurriculumState curriculum_step(const CurriculumState& cur, double val_loss,
                                const TrainConfig& cfg) {
  CurriculumState next = cur;
  next.epochs_in_stage = cur.epochs_in_stage + 1;
  const bool improved =
      !std::isfinite(cur.best_val) ||
      (cur.best_val - val_loss) >= cfg.min_delta_rel * std::max(std::abs(cur.best_val), 1e-30);
  if (improved) {
    next.best_val = val_loss;
    next.epochs_since_improvement = 0;
    return next;
  }
  next.epochs_since_improvement = cur.epochs_since_improvement + 1;
  if (next.epochs_since_improvement >= cfg.patience) {
    const int carried = next.epochs_in_stage;
    next = advance_stage(next, cfg);
    if (next.finished) next.epochs_in_stage = carried;
  }
  return next;
}

AdamState init_adam(const ModelState& model) {
  AdamState s;
  for (const auto* w : model.parameters()) {
    s.m.push_back(Eigen::MatrixXd::Zero(w->rows(), w->cols()));
    s.v.push_back(Eigen::MatrixXd::Zero(w->rows(), w->cols()));
  }
  return s;
}

void adam_step(ModelState& model, const std::vector<Eigen::MatrixXd>& grads, AdamState& opt,
               const AdamConfig& cfg, double lr) {
  auto params = model.parameters();
  if (grads.size() != params.size() || opt.m.size() != params.size())
    throw std::invalid_argument("adam_step: gradient/state count mismatch");
  opt.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(opt.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(opt.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    opt.m[i] = cfg.beta1 * opt.m[i] + (1.0 - cfg.beta1) * grads[i];
    opt.v[i] = cfg.beta2 * opt.v[i] + (1.0 - cfg.beta2) * grads[i].cwiseProduct(grads[i]);
    const Eigen::MatrixXd m_hat = opt.m[i] / bc1;
    const Eigen::MatrixXd v_hat = opt.v[i] / bc2;
    *params[i] -= lr * (m_hat.array() / (v_hat.array().sqrt() + cfg.eps)).matrix();
  }
}

// ---- differentiable rollout ---------------------------------------------------

namespace {

ad::Var assemble_node_window(ad::Tape& t, const FloodGraph& g, const EventSeries& e, int step_t,
                             const FeatureConfig& fc, const std::map<int, ad::Var>& volume_at) {
  const ColumnPlan plan = ColumnPlan::nodes(static_cast<int>(g.static_node_features.cols()), fc);
  std::vector<ad::Var> cols;
  cols.reserve(plan.columns.size());
  for (const auto& col : plan.columns) {
    const int step = step_t + col.arg;
    switch (col.kind) {
      case ColumnPlan::Kind::Static:
        cols.push_back(t.constant(g.static_node_features.col(col.arg)));
        break;
      case ColumnPlan::Kind::Volume:
        cols.push_back(volume_at.at(step));
        break;
      case ColumnPlan::Kind::Rainfall:
        cols.push_back(t.constant(e.rainfall.row(step).transpose()));
        break;
      case ColumnPlan::Kind::InflowBc:
        cols.push_back(t.constant(Eigen::MatrixXd::Constant(g.num_nodes, 1, e.inflow_bc[step])));
        break;
      case ColumnPlan::Kind::OutflowBc:
        cols.push_back(t.constant(Eigen::MatrixXd::Constant(g.num_nodes, 1, e.outflow_bc[step])));
        break;
      case ColumnPlan::Kind::Flow:
        throw std::logic_error("flow column in node plan");
    }
  }
  return t.concat_cols(cols);
}

ad::Var assemble_edge_window(ad::Tape& t, const FloodGraph& g, int step_t,
                             const FeatureConfig& fc, const std::map<int, ad::Var>& flow_at) {
  const ColumnPlan plan = ColumnPlan::edges(static_cast<int>(g.static_edge_features.cols()), fc);
  std::vector<ad::Var> cols;
  cols.reserve(plan.columns.size());
  for (const auto& col : plan.columns) {
    if (col.kind == ColumnPlan::Kind::Static)
      cols.push_back(t.constant(g.static_edge_features.col(col.arg)));
    else
      cols.push_back(flow_at.at(step_t + col.arg));
  }
  return t.concat_cols(cols);
}

}  // namespace

RolloutLoss build_rollout_loss(ad::Tape& tape, const TapeModel& m, const FloodGraph& g,
                               const EventSeries& e, int start_t, int horizon,
                               const NormStats& stats, const LossWeights& w,
                               const LossOptions& opt) {
  const FeatureConfig& fc = m.config->features;
  if (horizon < 1) throw std::invalid_argument("rollout horizon must be >= 1");
  if (start_t < fc.history) throw std::invalid_argument("rollout start lacks history");
  if (start_t + horizon > e.num_steps - 1)
    throw std::invalid_argument("rollout horizon exceeds event length");

  std::map<int, ad::Var> volume_at, flow_at;
  for (int s = start_t - fc.history; s <= start_t; ++s) {
    volume_at[s] = tape.constant(e.node_volume.row(s).transpose());
    flow_at[s] = tape.constant(e.edge_flow.row(s).transpose());
  }

  RolloutLoss out;
  ad::Var acc;
  for (int s = 0; s < horizon; ++s) {
    const int step = start_t + s;
    const ad::Var x = assemble_node_window(tape, g, e, step, fc, volume_at);
    const ad::Var ef = assemble_edge_window(tape, g, step, fc, flow_at);
    const StepVars sv = forward_step(tape, m, g, x, ef, stats);

    const ad::Var v_next = tape.add(volume_at.at(step), sv.dv);
    const ad::Var q_next = tape.add(flow_at.at(step), sv.dq);

    const Eigen::VectorXd truth_dv =
        (e.node_volume.row(step + 1) - e.node_volume.row(step)).transpose();
    const Eigen::VectorXd truth_dq =
        (e.edge_flow.row(step + 1) - e.edge_flow.row(step)).transpose();
    const Eigen::VectorXd truth_dv_hat = (truth_dv.array() - stats.dv_mean) / stats.dv_std;
    const Eigen::VectorXd truth_dq_hat = (truth_dq.array() - stats.dq_mean) / stats.dq_std;

    const StepLossVars sl = step_loss(
        tape, g, sv.dv_hat, sv.dq_hat, truth_dv_hat, truth_dq_hat, volume_at.at(step), v_next,
        q_next, e.rainfall.row(step).transpose(), e.inflow_bc[step], e.outflow_bc[step], e.dt, w,
        opt);
    out.steps.push_back(sl.values);
    acc = (s == 0) ? sl.total : tape.add(acc, sl.total);

    volume_at[step + 1] = v_next;
    flow_at[step + 1] = q_next;
  }
  out.total = tape.scale(acc, 1.0 / static_cast<double>(horizon));
  return out;
}

RolloutLossValue training_rollout(const ModelState& model, const FloodGraph& g,
                                  const EventSeries& e, int start_t, int horizon,
                                  const NormStats& stats, const LossWeights& w,
                                  const LossOptions& opt) {
  ad::Tape tape;
  const TapeModel m = load_on_tape(tape, model, /*requires_grad=*/false);
  const RolloutLoss rl = build_rollout_loss(tape, m, g, e, start_t, horizon, stats, w, opt);
  return {tape.value(rl.total)(0, 0), rl.steps};
}

// ---- training loop ------------------------------------------------------------

Splits split_events(int num_events, double train_frac, double val_frac, std::uint64_t seed) {
  if (train_frac < 0 || val_frac < 0 || train_frac + val_frac > 1.0 + 1e-12)
    throw ConfigError("split fractions must be non-negative and sum to at most 1");
  std::vector<int> order(static_cast<std::size_t>(num_events));
  for (int i = 0; i < num_events; ++i) order[static_cast<std::size_t>(i)] = i;
  Rng rng(Rng::mix(seed, 0x5017ULL));
  rng.shuffle(order);
  const int n_train = static_cast<int>(std::floor(train_frac * num_events + 0.5));
  const int n_val = std::min(num_events - n_train,
                             static_cast<int>(std::floor(val_frac * num_events + 0.5)));
  Splits s;
  s.train.assign(order.begin(), order.begin() + n_train);
  s.val.assign(order.begin() + n_train, order.begin() + n_train + n_val);
  s.test.assign(order.begin() + n_train + n_val, order.end());
  return s;
}

std::string epoch_csv_header() {
  return "epoch,stage,horizon,lr,"
         "train_node,train_edge,train_pred,train_global,train_local,train_physics,train_total,"
         "val_node,val_edge,val_pred,val_global,val_local,val_physics,val_total";
}

namespace {

void append_breakdown(std::string& row, const LossBreakdown& b) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), ",%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g", b.node, b.edge,
                b.pred, b.global_mass, b.local_mass, b.physics, b.total);
  row += buf;
}

LossBreakdown mean_breakdown(const std::vector<LossBreakdown>& xs) {
  LossBreakdown m;
  if (xs.empty()) return m;
  for (const auto& b : xs) {
    m.node += b.node;
    m.edge += b.edge;
    m.pred += b.pred;
    m.global_mass += b.global_mass;
    m.local_mass += b.local_mass;
    m.physics += b.physics;
    m.total += b.total;
  }
  const double n = static_cast<double>(xs.size());
  m.node /= n;
  m.edge /= n;
  m.pred /= n;
  m.global_mass /= n;
  m.local_mass /= n;
  m.physics /= n;
  m.total /= n;
  return m;
}

struct Window {
  int event;
  int t;
};

std::vector<Window> enumerate_windows(const std::vector<int>& event_ids,
                                      const std::vector<EventSeries>& events, int history,
                                      int horizon, int stride = 1) {
  std::vector<Window> ws;
  for (int ei : event_ids) {
    const auto& e = events[static_cast<std::size_t>(ei)];
    for (int t = history; t + horizon <= e.num_steps - 1; t += stride) ws.push_back({ei, t});
  }
  return ws;
}

void write_history_csv(const fs::path& path, const std::vector<EpochRecord>& history) {
  std::ofstream out(path, std::ios::trunc);
  out << epoch_csv_header() << "\n";
  for (const auto& r : history) out << epoch_csv_row(r) << "\n";
}

}  // namespace

std::string epoch_csv_row(const EpochRecord& r) {
  char head[128];
  std::snprintf(head, sizeof(head), "%d,%d,%d,%.17g", r.epoch, r.stage, r.horizon, r.lr);
  std::string row = head;
  append_breakdown(row, r.train);
  append_breakdown(row, r.val);
  return row;
}

TrainResult train(const FloodGraph& g, const std::vector<EventSeries>& events, const Splits& splits,
                  const ModelConfig& model_cfg_in, const TrainConfig& train_cfg_in,
                  const std::string& out_dir, const std::string& resume_from) {
  if (splits.train.empty()) throw ConfigError("train: empty training split");
  if (splits.val.empty()) throw ConfigError("train: empty validation split");
  for (int ei : splits.train)
    if (ei < 0 || ei >= static_cast<int>(events.size())) throw ConfigError("train: bad event index in split");

  ModelState model;
  NormStats stats;
  AdamState opt;
  CurriculumState cur;
  TrainConfig cfg = train_cfg_in;
  int first_epoch = 0;

  Splits active_splits = splits;
  if (!resume_from.empty()) {
    Checkpoint ckpt = load_checkpoint(resume_from);
    if (ckpt.kind != "model") throw ConfigError("train: cannot resume from an oracle checkpoint");
    if (!ckpt.has_optimizer) throw ConfigError("train: checkpoint lacks optimizer state, cannot resume");
    model = std::move(ckpt.model);
    stats = ckpt.stats;
    opt = std::move(ckpt.opt);
    cur = ckpt.curriculum;
    cfg = ckpt.train;  // resumed runs keep their original configuration
    if (!ckpt.splits.train.empty()) active_splits = ckpt.splits;
    first_epoch = ckpt.epoch;
  } else {
    cfg.validate();
    ModelConfig mc = model_cfg_in;
    mc.node_in_dim = mc.features.node_feature_dim(static_cast<int>(g.static_node_features.cols()));
    mc.edge_in_dim = mc.features.edge_feature_dim(static_cast<int>(g.static_edge_features.cols()));
    mc.validate();

    std::vector<EventSeries> train_events;
    for (int ei : active_splits.train) train_events.push_back(events[static_cast<std::size_t>(ei)]);
    stats = fit_normalizer(g, train_events, mc.features);
    model = init_model(mc);
    opt = init_adam(model);
    cur.horizon = std::min(1 + 0 * cfg.curriculum_increment, cfg.target_horizon);
    cur.lr = cfg.adam.lr;
  }

  for (int ei : active_splits.train)
    if (ei < 0 || ei >= static_cast<int>(events.size()))
      throw ConfigError("train: resumed split references a missing event");

  const int history = model.config.features.history;
  const int stages_total =
      1 + (cfg.target_horizon - 1 + cfg.curriculum_increment - 1) / cfg.curriculum_increment;
  const int max_total_epochs = stages_total * cfg.max_epochs_per_stage;

  const fs::path out(out_dir);
  if (!out_dir.empty()) fs::create_directories(out / "checkpoints");
  auto save = [&](const std::string& name, int completed_epochs) {
    if (out_dir.empty()) return;
    Checkpoint ckpt;
    ckpt.kind = "model";
    ckpt.model = model;
    ckpt.stats = stats;
    ckpt.train = cfg;
    ckpt.curriculum = cur;
    ckpt.opt = opt;
    ckpt.splits = active_splits;
    ckpt.epoch = completed_epochs;
    ckpt.has_optimizer = true;
    save_checkpoint((out / "checkpoints" / name).string(), ckpt);
  };

  TrainResult result;
  for (int epoch = first_epoch; epoch < max_total_epochs && !cur.finished; ++epoch) {
    // ---- optimize over shuffled rollout windows at the current horizon
    std::vector<Window> windows = enumerate_windows(active_splits.train, events, history, cur.horizon);
    if (windows.empty()) throw ConfigError("train: no usable windows (events too short?)");
    {
      Rng shuffle_rng(Rng::mix(cfg.seed, static_cast<std::uint64_t>(epoch)));
      shuffle_rng.shuffle(windows);
    }

    std::vector<LossBreakdown> train_window_means;
    for (std::size_t at = 0; at < windows.size(); at += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(windows.size(), at + static_cast<std::size_t>(cfg.batch_size));
      ad::Tape tape;
      const TapeModel tm = load_on_tape(tape, model, /*requires_grad=*/true);
      ad::Var batch_loss;
      for (std::size_t i = at; i < end; ++i) {
        const auto& win = windows[i];
        RolloutLoss rl = build_rollout_loss(tape, tm, g, events[static_cast<std::size_t>(win.event)],
                                            win.t, cur.horizon, stats, cfg.loss, cfg.loss_options);
        train_window_means.push_back(mean_breakdown(rl.steps));
        batch_loss = (i == at) ? rl.total : tape.add(batch_loss, rl.total);
      }
      batch_loss = tape.scale(batch_loss, 1.0 / static_cast<double>(end - at));
      const double loss_value = tape.value(batch_loss)(0, 0);
      if (!std::isfinite(loss_value))
        throw DivergenceError("training diverged: non-finite loss at epoch " + std::to_string(epoch));
      tape.backward(batch_loss);

      auto tape_params = tape_parameters(tm);
      std::vector<Eigen::MatrixXd> grads;
      grads.reserve(tape_params.size());
      for (ad::Var p : tape_params) grads.push_back(tape.grad(p));
      if (cfg.clip_gradients) {
        double norm_sq = 0.0;
        for (const auto& gr : grads) norm_sq += gr.squaredNorm();
        const double norm = std::sqrt(norm_sq);
        if (norm > cfg.max_grad_norm && norm > 0.0)
          for (auto& gr : grads) gr *= cfg.max_grad_norm / norm;
      }
      adam_step(model, grads, opt, cfg.adam, cur.lr);
    }

    // ---- validate at the current horizon
    std::vector<Window> val_windows =
        enumerate_windows(active_splits.val, events, history, cur.horizon, cfg.val_window_stride);
    if (val_windows.empty()) throw ConfigError("train: no validation windows");
    std::vector<LossBreakdown> val_window_means;
    double val_total = 0.0;
    for (const auto& win : val_windows) {
      const RolloutLossValue rv =
          training_rollout(model, g, events[static_cast<std::size_t>(win.event)], win.t,
                           cur.horizon, stats, cfg.loss, cfg.loss_options);
      val_window_means.push_back(mean_breakdown(rv.steps));
      val_total += rv.loss;
    }
    val_total /= static_cast<double>(val_windows.size());
    if (!std::isfinite(val_total))
      throw DivergenceError("training diverged: non-finite validation loss at epoch " +
                            std::to_string(epoch));

    EpochRecord rec;
    rec.epoch = epoch;
    rec.stage = cur.stage;
    rec.horizon = cur.horizon;
    rec.lr = cur.lr;
    rec.train = mean_breakdown(train_window_means);
    rec.val = mean_breakdown(val_window_means);
    result.history.push_back(rec);
    if (!out_dir.empty()) write_history_csv(out / "training_log.csv", result.history);

    const CurriculumState prev = cur;
    cur = curriculum_step(cur, val_total, cfg);
    const bool improved = !cur.finished && cur.stage == prev.stage && cur.epochs_since_improvement == 0;
    bool advanced = cur.stage != prev.stage;
    if (!advanced && !cur.finished && cur.epochs_in_stage >= cfg.max_epochs_per_stage) {
      cur = advance_stage(cur, cfg);  // stage budget exhausted
      advanced = cur.stage != prev.stage;
    }
    if (advanced && cfg.reset_moments_on_stage) {
      opt = init_adam(model);
    }

    if (improved) save("best", epoch + 1);
    if (advanced) {
      char name[32];
      std::snprintf(name, sizeof(name), "stage_%02d", cur.stage);
      save(name, epoch + 1);
    }
    if (cfg.checkpoint_every_epochs > 0 && (epoch + 1) % cfg.checkpoint_every_epochs == 0)
      save("last", epoch + 1);
    result.epochs_run = epoch + 1;
  }

  result.model = model;
  result.stats = stats;
  result.curriculum = cur;
  if (!out_dir.empty()) {
    save("final", result.epochs_run);
    write_history_csv(out / "training_log.csv", result.history);
  }
  return result;
}

}  // namespace dualflood

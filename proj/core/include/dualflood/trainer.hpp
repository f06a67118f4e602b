#pragma once

#include <limits>
#include <string>
#include <vector>

#include "dualflood/losses.hpp"
#include "dualflood/model.hpp"

namespace dualflood {

struct AdamConfig {
  double lr = 3e-4;  // initial learning rate
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct TrainConfig {
  int target_horizon = 4;      // O: final rollout length
  int curriculum_increment = 1;  // C: horizon growth per stage
  double lr_decay = 0.5;       // gamma, applied per stage advance
  AdamConfig adam;
  int patience = 10;           // epochs without improvement before advancing
  double min_delta_rel = 1e-4; // relative improvement that resets patience
  int max_epochs_per_stage = 200;
  int batch_size = 8;          // windows per optimizer step
  LossWeights loss;
  LossOptions loss_options;
  bool clip_gradients = false;
  double max_grad_norm = 1.0;
  bool reset_moments_on_stage = false;
  int val_window_stride = 1;   // evaluate every k-th validation window
  int checkpoint_every_epochs = 0;  // 0: only stage/best/final checkpoints
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::ordered_json to_json() const;
  static TrainConfig from_json(const nlohmann::ordered_json& j);
};

struct CurriculumState {
  int horizon = 1;  // o, never decreases
  int stage = 0;
  double best_val = std::numeric_limits<double>::infinity();
  int epochs_since_improvement = 0;
  int epochs_in_stage = 0;
  double lr = 0.0;  // always lr0 * gamma^stage
  bool finished = false;
};

/// Patience-driven horizon scheduling: a sufficient relative improvement
/// resets the counter; exhausting patience extends the horizon by C (capped
/// at O) and decays the learning rate, or finishes the run when the horizon
/// already sits at O.
CurriculumState curriculum_step(const CurriculumState& cur, double val_loss,
                                const TrainConfig& cfg);

struct AdamState {
  std::vector<Eigen::MatrixXd> m, v;
  long step = 0;
};

AdamState init_adam(const ModelState& model);
void adam_step(ModelState& model, const std::vector<Eigen::MatrixXd>& grads, AdamState& opt,
               const AdamConfig& cfg, double lr);

// ---- rollout loss -------------------------------------------------------------

struct RolloutLoss {
  ad::Var total;                    // mean over the horizon
  std::vector<LossBreakdown> steps;
};

/// Unrolls `horizon` model steps starting from ground truth at start_t,
/// feeding predicted volume/flow back into subsequent feature windows while
/// boundary forcing stays ground truth. Gradients flow through the entire
/// chain, including the fed-back states.
RolloutLoss build_rollout_loss(ad::Tape& tape, const TapeModel& m, const FloodGraph& g,
                               const EventSeries& e, int start_t, int horizon,
                               const NormStats& stats, const LossWeights& w,
                               const LossOptions& opt);

/// Value-only convenience form.
struct RolloutLossValue {
  double loss;
  std::vector<LossBreakdown> steps;
};
RolloutLossValue training_rollout(const ModelState& model, const FloodGraph& g,
                                  const EventSeries& e, int start_t, int horizon,
                                  const NormStats& stats, const LossWeights& w,
                                  const LossOptions& opt = {});

// ---- training loop ------------------------------------------------------------

struct Splits {
  std::vector<int> train, val, test;
};

/// Seeded event-level split; fractions are rounded to counts with the
/// remainder going to test.
Splits split_events(int num_events, double train_frac, double val_frac, std::uint64_t seed);

struct EpochRecord {
  int epoch = 0;
  int stage = 0;
  int horizon = 1;
  double lr = 0.0;
  LossBreakdown train;  // means over training windows
  LossBreakdown val;    // means over validation windows
};

struct TrainResult {
  ModelState model;
  NormStats stats;
  std::vector<EpochRecord> history;
  CurriculumState curriculum;
  int epochs_run = 0;
};

std::string epoch_csv_header();
std::string epoch_csv_row(const EpochRecord& r);

/// Full curriculum training run. When out_dir is non-empty, checkpoints land
/// in out_dir/checkpoints/{best,stage_XX,final} and the per-epoch log in
/// out_dir/training_log.csv. Pass resume_from to continue a previous run
/// deterministically. Throws DivergenceError when the loss leaves the
/// finite range.
TrainResult train(const FloodGraph& g, const std::vector<EventSeries>& events, const Splits& splits,
                  const ModelConfig& model_cfg, const TrainConfig& train_cfg,
                  const std::string& out_dir = "", const std::string& resume_from = "");

}  // namespace dualflood

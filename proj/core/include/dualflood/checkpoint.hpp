#pragma once

#include <string>

#include "dualflood/trainer.hpp"

namespace dualflood {

inline constexpr int kCheckpointFormatVersion = 1;

/// On-disk training snapshot: manifest.json (configs, normalizer,
/// curriculum, epoch) plus float64 little-endian weight and optimizer-moment
/// blobs in ModelState::parameters() order. kind == "oracle" marks a stub
/// that predicts ground-truth deltas (no weights); useful for exercising the
/// evaluation pipeline end to end.
struct Checkpoint {
  std::string kind = "model";  // "model" | "oracle"
  ModelState model;
  NormStats stats;
  TrainConfig train;
  CurriculumState curriculum;
  AdamState opt;
  Splits splits;  // the event split of the run; resume reuses it verbatim
  int epoch = 0;
  bool has_optimizer = false;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

/// Writes a weightless oracle-stub checkpoint.
void save_oracle_checkpoint(const std::string& path);

nlohmann::ordered_json norm_stats_to_json(const NormStats& s);
NormStats norm_stats_from_json(const nlohmann::ordered_json& j);

}  // namespace dualflood

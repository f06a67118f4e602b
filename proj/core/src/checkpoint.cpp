#include "dualflood/checkpoint.hpp"

#include <cstdio>
#include <filesystem>
#include <limits>

#include "dualflood/binio.hpp"
#include "dualflood/errors.hpp"

namespace dualflood {

namespace fs = std::filesystem;
using io::json;

json norm_stats_to_json(const NormStats& s) {
  auto vec = [](const Eigen::VectorXd& v) {
    std::vector<double> out(v.data(), v.data() + v.size());
    return out;
  };
  return {{"node_mean", vec(s.node_mean)}, {"node_std", vec(s.node_std)},
          {"edge_mean", vec(s.edge_mean)}, {"edge_std", vec(s.edge_std)},
          {"dv_mean", s.dv_mean},          {"dv_std", s.dv_std},
          {"dq_mean", s.dq_mean},          {"dq_std", s.dq_std}};
}

NormStats norm_stats_from_json(const json& j) {
  auto vec = [](const json& a) {
    const std::vector<double> v = a.get<std::vector<double>>();
    return Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<long>(v.size())));
  };
  NormStats s;
  s.node_mean = vec(j.at("node_mean"));
  s.node_std = vec(j.at("node_std"));
  s.edge_mean = vec(j.at("edge_mean"));
  s.edge_std = vec(j.at("edge_std"));
  s.dv_mean = j.at("dv_mean").get<double>();
  s.dv_std = j.at("dv_std").get<double>();
  s.dq_mean = j.at("dq_mean").get<double>();
  s.dq_std = j.at("dq_std").get<double>();
  return s;
}

namespace {

json curriculum_to_json(const CurriculumState& c) {
  json j = {{"horizon", c.horizon},
            {"stage", c.stage},
            {"epochs_since_improvement", c.epochs_since_improvement},
            {"epochs_in_stage", c.epochs_in_stage},
            {"lr", c.lr},
            {"finished", c.finished}};
  if (std::isfinite(c.best_val)) j["best_val"] = c.best_val;
  else j["best_val"] = nullptr;  // infinity: no validation seen this stage yet
  return j;
}

CurriculumState curriculum_from_json(const json& j) {
  CurriculumState c;
  c.horizon = j.at("horizon").get<int>();
  c.stage = j.at("stage").get<int>();
  c.epochs_since_improvement = j.at("epochs_since_improvement").get<int>();
  c.epochs_in_stage = j.value("epochs_in_stage", 0);
  c.lr = j.at("lr").get<double>();
  c.finished = j.at("finished").get<bool>();
  c.best_val = j.at("best_val").is_null() ? std::numeric_limits<double>::infinity()
                                          : j.at("best_val").get<double>();
  return c;
}

std::string param_file(const char* prefix, std::size_t i) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s_%03zu.bin", prefix, i);
  return buf;
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  fs::create_directories(path);
  io::ArrayWriter w{fs::path(path)};

  json manifest;
  manifest["format_version"] = kCheckpointFormatVersion;
  manifest["kind"] = ckpt.kind;
  if (ckpt.kind == "model") {
    const auto params = ckpt.model.parameters();
    for (std::size_t i = 0; i < params.size(); ++i)
      w.f64("weights/" + std::to_string(i), "weights/" + param_file("w", i), *params[i]);
    if (ckpt.has_optimizer) {
      for (std::size_t i = 0; i < ckpt.opt.m.size(); ++i) {
        w.f64("adam_m/" + std::to_string(i), "adam/" + param_file("m", i), ckpt.opt.m[i]);
        w.f64("adam_v/" + std::to_string(i), "adam/" + param_file("v", i), ckpt.opt.v[i]);
      }
      manifest["adam_step"] = ckpt.opt.step;
    }
    manifest["model_config"] = ckpt.model.config.to_json();
    manifest["train_config"] = ckpt.train.to_json();
    manifest["norm_stats"] = norm_stats_to_json(ckpt.stats);
    manifest["curriculum"] = curriculum_to_json(ckpt.curriculum);
    manifest["splits"] = {{"train", ckpt.splits.train},
                          {"val", ckpt.splits.val},
                          {"test", ckpt.splits.test}};
    manifest["epoch"] = ckpt.epoch;
    manifest["has_optimizer"] = ckpt.has_optimizer;
    manifest["parameter_count"] = ckpt.model.parameter_count();
  }
  manifest["arrays"] = w.manifest_arrays();
  io::write_json(fs::path(path) / "manifest.json", manifest);
}

Checkpoint load_checkpoint(const std::string& path) {
  const fs::path root(path);
  const json manifest = io::read_json(root / "manifest.json");
  if (!manifest.contains("format_version") || !manifest["format_version"].is_number_integer())
    throw DataError("checkpoint manifest: missing format_version");
  const int version = manifest["format_version"].get<int>();
  if (version != kCheckpointFormatVersion)
    throw DataError("checkpoint manifest: unsupported format version " + std::to_string(version));

  Checkpoint ckpt;
  ckpt.kind = manifest.value("kind", "model");
  if (ckpt.kind == "oracle") return ckpt;
  if (ckpt.kind != "model") throw DataError("checkpoint manifest: unknown kind '" + ckpt.kind + "'");

  const ModelConfig mc = ModelConfig::from_json(manifest.at("model_config"));
  ckpt.model = init_model(mc);  // allocates the right shapes; weights overwritten below
  ckpt.train = TrainConfig::from_json(manifest.at("train_config"));
  ckpt.stats = norm_stats_from_json(manifest.at("norm_stats"));
  ckpt.curriculum = curriculum_from_json(manifest.at("curriculum"));
  if (manifest.contains("splits")) {
    ckpt.splits.train = manifest["splits"].value("train", std::vector<int>{});
    ckpt.splits.val = manifest["splits"].value("val", std::vector<int>{});
    ckpt.splits.test = manifest["splits"].value("test", std::vector<int>{});
  }
  ckpt.epoch = manifest.value("epoch", 0);
  ckpt.has_optimizer = manifest.value("has_optimizer", false);

  io::ArrayReader r(root, manifest.at("arrays"));
  auto params = ckpt.model.parameters();
  for (std::size_t i = 0; i < params.size(); ++i)
    *params[i] = r.f64("weights/" + std::to_string(i), params[i]->rows(), params[i]->cols());
  if (ckpt.has_optimizer) {
    ckpt.opt = init_adam(ckpt.model);
    ckpt.opt.step = manifest.value("adam_step", 0L);
    for (std::size_t i = 0; i < params.size(); ++i) {
      ckpt.opt.m[i] = r.f64("adam_m/" + std::to_string(i), params[i]->rows(), params[i]->cols());
      ckpt.opt.v[i] = r.f64("adam_v/" + std::to_string(i), params[i]->rows(), params[i]->cols());
    }
  }
  return ckpt;
}

void save_oracle_checkpoint(const std::string& path) {
  fs::create_directories(path);
  json manifest;
  manifest["format_version"] = kCheckpointFormatVersion;
  manifest["kind"] = "oracle";
  manifest["arrays"] = json::array();
  io::write_json(fs::path(path) / "manifest.json", manifest);
}

}  // namespace dualflood

#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "dualflood/binio.hpp"
#include "dualflood/checkpoint.hpp"
#include "dualflood/dataset.hpp"
#include "test_helpers.hpp"

// Exercises the installed command-line surface end to end through real
// subprocesses, including the exit-code contract: 0 ok, 2 config, 3 data.

namespace fs = std::filesystem;
using dualflood::io::json;

namespace {

#ifndef DUALFLOOD_CLI_PATH
#error "DUALFLOOD_CLI_PATH must point at the dualflood executable"
#endif

int run_cli(const std::string& args) {
  const std::string cmd = std::string(DUALFLOOD_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

// one shared tiny dataset per test binary run
const std::string& tiny_dataset() {
  static dftest::TempDir dir("cli_ds");
  static std::string path;
  if (path.empty()) {
    path = (dir.path() / "ds").string();
    REQUIRE(run_cli("gen-data --out " + path +
                    " --nodes 24 --edges 50 --events 3 --steps 20 --seed 11") == 0);
  }
  return path;
}

std::string quick_train_flags() {
  return " --horizon 2 --curriculum-step 1 --max-epochs 2 --patience 1 --batch-size 8"
         " --latent-dim 6 --gnn-layers 1 --history 1 --train-frac 0.4 --val-frac 0.3 --seed 3";
}

bool trees_identical(const fs::path& a, const fs::path& b) {
  for (const auto& entry : fs::recursive_directory_iterator(a)) {
    if (!entry.is_regular_file()) continue;
    const auto rel = fs::relative(entry.path(), a);
    if (!fs::exists(b / rel)) return false;
    if (dualflood::io::read_bytes(entry.path()) != dualflood::io::read_bytes(b / rel)) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("cli: gen-data is deterministic and respects --force") {
  dftest::TempDir dir("cli_gen");
  const std::string one = (dir.path() / "one").string();
  const std::string two = (dir.path() / "two").string();
  const std::string flags = " --nodes 16 --edges 32 --events 2 --steps 12 --seed 5";
  CHECK(run_cli("gen-data --out " + one + flags) == 0);
  CHECK(run_cli("gen-data --out " + two + flags) == 0);
  CHECK(trees_identical(one, two));

  // existing non-empty output without --force is a config error
  CHECK(run_cli("gen-data --out " + one + flags) == 2);
  CHECK(run_cli("gen-data --out " + one + flags + " --force") == 0);
}

TEST_CASE("cli: gen-data rejects infeasible specs with exit 2") {
  dftest::TempDir dir("cli_gen_bad");
  CHECK(run_cli("gen-data --out " + (dir.path() / "x").string() +
                " --nodes 3 --edges 2 --events 1 --steps 8 --seed 1") == 2);
}

TEST_CASE("cli: train produces resolved config, log, and checkpoints") {
  dftest::TempDir dir("cli_train");
  const std::string out = (dir.path() / "run").string();
  REQUIRE(run_cli("train --data " + tiny_dataset() + " --out " + out + quick_train_flags()) == 0);
  CHECK(fs::exists(fs::path(out) / "resolved_config.json"));
  CHECK(fs::exists(fs::path(out) / "training_log.csv"));
  CHECK(fs::exists(fs::path(out) / "checkpoints/final/manifest.json"));

  const json resolved = dualflood::io::read_json(fs::path(out) / "resolved_config.json");
  CHECK(resolved["physics_preset"] == "both");
  CHECK(resolved["train"]["lambda_global"].get<double>() > 0.0);
  CHECK(resolved["split"]["train_events"].size() == 1);
  CHECK(resolved["split"]["val_events"].size() == 1);
}

TEST_CASE("cli: physics presets zero the right loss weights and the log shows it") {
  dftest::TempDir dir("cli_ablate");
  struct Case {
    const char* preset;
    bool global_zero, local_zero;
  };
  for (const Case c : {Case{"none", true, true}, Case{"global", false, true},
                       Case{"local", true, false}}) {
    const std::string out = (dir.path() / c.preset).string();
    REQUIRE(run_cli("train --data " + tiny_dataset() + " --out " + out + quick_train_flags() +
                    " --physics " + c.preset) == 0);
    const json resolved = dualflood::io::read_json(fs::path(out) / "resolved_config.json");
    CHECK((resolved["train"]["lambda_global"].get<double>() == 0.0) == c.global_zero);
    CHECK((resolved["train"]["lambda_local"].get<double>() == 0.0) == c.local_zero);

    // the weighted physics column in the log must honor the preset
    std::ifstream log(fs::path(out) / "training_log.csv");
    std::string header, line;
    std::getline(log, header);
    REQUIRE(std::getline(log, line));
    std::vector<std::string> cols;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) cols.push_back(cell);
    const double train_physics = std::strtod(cols[9].c_str(), nullptr);
    if (c.global_zero && c.local_zero) CHECK(train_physics == 0.0);
    else CHECK(train_physics >= 0.0);
  }
}

TEST_CASE("cli: --no-inflow-feature shrinks the feature schema and is recorded") {
  dftest::TempDir dir("cli_noinflow");
  const std::string out = (dir.path() / "run").string();
  REQUIRE(run_cli("train --data " + tiny_dataset() + " --out " + out + quick_train_flags() +
                  " --no-inflow-feature") == 0);
  const json resolved = dualflood::io::read_json(fs::path(out) / "resolved_config.json");
  CHECK(resolved["no_inflow_feature"] == true);
  CHECK(resolved["model"]["include_inflow_bc"] == false);
  CHECK(resolved["model"]["include_outflow_bc"] == false);
  // history 1, static 2, dynamic [volume, rain]: f_v = 2 + 2*2 = 6
  CHECK(resolved["model"]["node_in_dim"] == 6);

  const json manifest =
      dualflood::io::read_json(fs::path(out) / "checkpoints/final/manifest.json");
  CHECK(manifest["model_config"]["include_inflow_bc"] == false);
}

TEST_CASE("cli: eval with an oracle checkpoint reports perfect aggregate skill") {
  dftest::TempDir dir("cli_eval");
  const std::string ckpt = (dir.path() / "oracle").string();
  dualflood::save_oracle_checkpoint(ckpt);
  const std::string out = (dir.path() / "reports").string();
  REQUIRE(run_cli("eval --checkpoint " + ckpt + " --data " + tiny_dataset() + " --split all --out " +
                  out) == 0);
  const json agg = dualflood::io::read_json(fs::path(out) / "metrics.json");
  CHECK(agg["num_events"] == 3);
  CHECK(agg["metrics"]["volume_nse"]["mean"].get<double>() == doctest::Approx(1.0));
  CHECK(agg["metrics"]["csi_0.05"]["mean"].get<double>() == doctest::Approx(1.0));
  CHECK(agg["metrics"]["volume_rmse"]["mean"].get<double>() == doctest::Approx(0.0));
  CHECK(fs::exists(fs::path(out) / "event_0000/metrics.json"));
  CHECK(fs::exists(fs::path(out) / "event_0002/per_timestep_rmse.csv"));
}

TEST_CASE("cli: eval aggregate matches a loop over per-event reports") {
  dftest::TempDir dir("cli_eval_agg");
  const std::string ckpt = (dir.path() / "oracle").string();
  dualflood::save_oracle_checkpoint(ckpt);
  const std::string out = (dir.path() / "reports").string();
  REQUIRE(run_cli("eval --checkpoint " + ckpt + " --data " + tiny_dataset() +
                  " --split all --out " + out) == 0);
  const json agg = dualflood::io::read_json(fs::path(out) / "metrics.json");
  double sum = 0.0;
  int n = 0;
  for (const char* ev : {"event_0000", "event_0001", "event_0002"}) {
    const json m = dualflood::io::read_json(fs::path(out) / ev / "metrics.json");
    sum += m["volume"]["rmse"].get<double>();
    ++n;
  }
  CHECK(agg["metrics"]["volume_rmse"]["mean"].get<double>() == doctest::Approx(sum / n));
}

TEST_CASE("cli: schema and corruption failures exit with the data-error code") {
  dftest::TempDir dir("cli_bad");

  SUBCASE("checkpoint feature schema vs dataset") {
    const std::string out = (dir.path() / "run").string();
    REQUIRE(run_cli("train --data " + tiny_dataset() + " --out " + out + quick_train_flags()) == 0);
    // sabotage the recorded input width
    const fs::path manifest_path = fs::path(out) / "checkpoints/final/manifest.json";
    json manifest = dualflood::io::read_json(manifest_path);
    manifest["model_config"]["node_in_dim"] = 99;
    dualflood::io::write_json(manifest_path, manifest);
    CHECK(run_cli("eval --checkpoint " + out + "/checkpoints/final --data " + tiny_dataset() +
                  " --split all --out " + (dir.path() / "r").string()) == 3);
  }

  SUBCASE("dataset version gate") {
    const std::string copy = (dir.path() / "ds_bad").string();
    fs::copy(tiny_dataset(), copy, fs::copy_options::recursive);
    json manifest = dualflood::io::read_json(fs::path(copy) / "manifest.json");
    manifest["format_version"] = 99;
    dualflood::io::write_json(fs::path(copy) / "manifest.json", manifest);
    CHECK(run_cli("eval --checkpoint x --data " + copy + " --split all --out " +
                  (dir.path() / "r2").string()) == 3);
  }

  SUBCASE("truncated dataset payload") {
    const std::string copy = (dir.path() / "ds_trunc").string();
    fs::copy(tiny_dataset(), copy, fs::copy_options::recursive);
    const fs::path bin = fs::path(copy) / "events/event_0000/node_volume.bin";
    auto bytes = dualflood::io::read_bytes(bin);
    bytes.resize(bytes.size() / 2);
    dualflood::io::write_bytes(bin, bytes);
    CHECK(run_cli("train --data " + copy + " --out " + (dir.path() / "r3").string() +
                  quick_train_flags()) == 3);
  }

  SUBCASE("missing config file") {
    CHECK(run_cli("train --data " + tiny_dataset() + " --out " + (dir.path() / "r4").string() +
                  " --config /nonexistent.json") == 2);
  }
}

TEST_CASE("cli: rollout then report regenerates the metric files") {
  dftest::TempDir dir("cli_rollout");
  const std::string ckpt = (dir.path() / "oracle").string();
  dualflood::save_oracle_checkpoint(ckpt);
  const std::string ro = (dir.path() / "ro").string();
  REQUIRE(run_cli("rollout --checkpoint " + ckpt + " --data " + tiny_dataset() +
                  " --event 1 --out " + ro) == 0);
  CHECK(fs::exists(fs::path(ro) / "node_volume.bin"));
  const std::string rep = (dir.path() / "rep").string();
  REQUIRE(run_cli("report --rollout " + ro + " --data " + tiny_dataset() + " --event 1 --out " +
                  rep) == 0);
  const json m = dualflood::io::read_json(fs::path(rep) / "metrics.json");
  CHECK(m["volume"]["nse"].get<double>() == doctest::Approx(1.0));
}

TEST_CASE("cli: resume continues a run deterministically") {
  dftest::TempDir dir("cli_resume");
  const std::string full = (dir.path() / "full").string();
  const std::string part = (dir.path() / "part").string();
  const std::string common = " --horizon 1 --max-epochs 6 --patience 100 --batch-size 8"
                             " --latent-dim 6 --gnn-layers 1 --history 1"
                             " --train-frac 0.4 --val-frac 0.3 --seed 9";
  // full run writes a mid-run snapshot after epoch 4
  json cfg;
  cfg["train"]["checkpoint_every_epochs"] = 4;
  const std::string cfg_path = (dir.path() / "cfg.json").string();
  dualflood::io::write_json(cfg_path, cfg);
  REQUIRE(run_cli("train --data " + tiny_dataset() + " --out " + full + common + " --config " +
                  cfg_path) == 0);
  REQUIRE(fs::exists(fs::path(full) / "checkpoints/last"));

  REQUIRE(run_cli("train --data " + tiny_dataset() + " --out " + part + " --resume " + full +
                  "/checkpoints/last" + common) == 0);

  // the resumed log covers epochs 4..5 and must equal the tail of the full log
  std::ifstream flog(fs::path(full) / "training_log.csv");
  std::ifstream plog(fs::path(part) / "training_log.csv");
  std::vector<std::string> flines, plines;
  for (std::string l; std::getline(flog, l);) flines.push_back(l);
  for (std::string l; std::getline(plog, l);) plines.push_back(l);
  REQUIRE(flines.size() == 7);  // header + 6 epochs
  REQUIRE(plines.size() == 3);  // header + 2 epochs
  CHECK(plines[1] == flines[5]);
  CHECK(plines[2] == flines[6]);
}

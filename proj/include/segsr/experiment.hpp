#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "segsr/degrade.hpp"
#include "segsr/generator.hpp"
#include "segsr/latent_opt.hpp"
#include "segsr/phantom.hpp"

namespace segsr {

// Single JSON experiment config (explicit version, unknown keys rejected).
// All stage randomness derives from `seed` via per-stage tags.
struct ExperimentConfig {
  uint64_t seed = 20260811;
  std::string out_dir = "runs/default";
  int workers = 2;

  PhantomParams phantom;
  int dataset_n = 300;
  std::array<int, 3> split_counts{250, 25, 25};

  ScaleFactor scale{5.0, 1.0, 1.0};
  double label_flip_rate = 0.0;
  std::vector<std::string> degrade_splits{"test"};
  double custom_motion_mean_mm = 0.0;
  double custom_motion_std_mm = 0.0;

  GeneratorArch arch;
  double beta = 1e-3;
  VaeTrainConfig train;

  LatentOptConfig latent_opt;
  PlaneSpec la_plane{PlaneMode::FixedH, 32};
  std::vector<std::string> methods{"NN", "SBI", "LO", "LO-multi-view"};

  void validate() const;
};

ExperimentConfig default_config();
// Strict parse; SEGSR_OUT (when set) overrides out_dir.
ExperimentConfig load_config(const std::string& path);
void save_config(const ExperimentConfig& cfg, const std::string& path);

extern const std::vector<std::string> kKnownMethods;
extern const std::vector<MotionRegime> kStandardRegimes;

// Held-out reconstruction quality gate (mean foreground Dice).
constexpr double kReconDiceGate = 0.85;

// --- pipeline stages (the CLI subcommands call straight into these) ---

// Writes data/hr volumes + data/manifest.json; returns the manifest path.
std::string cmd_gen_data(const ExperimentConfig& cfg);

// Trains on the manifest's train/val splits, writes models/vae.ckpt and
// models/training_log.csv. recon_dice (when non-null) receives the held-out
// reconstruction Dice; returns the checkpoint path.
std::string cmd_train_vae(const ExperimentConfig& cfg, double* recon_dice = nullptr);

// Degrades the configured splits under one regime; writes LR volumes,
// ground-truth motion JSONs and a manifest.
void cmd_degrade(const ExperimentConfig& cfg, MotionRegime regime);

// Runs one method over the degraded test split of one regime.
void cmd_superres(const ExperimentConfig& cfg, const std::string& method,
                  MotionRegime regime);

struct MetricsRow {
  std::string regime;
  std::string method;
  bool present = false;
  double lv_mean = 0, lv_std = 0;
  double myo_mean = 0, myo_std = 0;
  double rv_mean = 0, rv_std = 0;
  double mean = 0;                    // mean of the three structure means
  std::optional<double> motion_err;   // LR in-plane voxels, LO methods only
};

struct MetricsTable {
  std::vector<MetricsRow> rows;
  const MetricsRow* find(const std::string& regime, const std::string& method) const;
};

struct EvaluateResult {
  MetricsTable sa;  // volume Dice vs HR ground truth
  MetricsTable la;  // plane Dice on the configured LA plane
  bool complete = false;
};

// Aggregates Dice/motion metrics over every configured regime x method and
// writes metrics/metrics.csv, metrics/la_metrics.csv and metrics/metrics.json.
// Missing combinations stay in the table as absent rows.
EvaluateResult cmd_evaluate(const ExperimentConfig& cfg);

// --- shared helpers (manifest access, paths) ---

struct DatasetManifest {
  int n = 0;
  std::array<int, 3> split_counts{};
  std::vector<std::string> train, val, test;  // volume base paths (absolute-ish)
};

DatasetManifest load_manifest(const ExperimentConfig& cfg);
std::string subject_name(int global_index);

}  // namespace segsr

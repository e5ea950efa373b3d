#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "anogen/classifier.hpp"
#include "anogen/cyclegan.hpp"
#include "anogen/metrics.hpp"
#include "anogen/trace_data.hpp"

namespace anogen {

struct SynthSpec {
  std::size_t normal = 2000;
  std::size_t anomaly = 200;
  std::size_t min_length = 75;
  std::size_t max_length = 1024;

  friend bool operator==(const SynthSpec&, const SynthSpec&) = default;
};

// Everything one experiment needs. Exactly one data source is set: the two
// trace directories, or a synthetic corpus. Module seeds are not configured
// directly; they are derived from `seed` (see derived_seed()).
struct ExperimentConfig {
  std::optional<std::filesystem::path> normal_dir;
  std::optional<std::filesystem::path> anomaly_dir;
  std::optional<SynthSpec> synth;
  std::size_t max_length = kMaxTraceLength;
  ClampPolicy clamp = ClampPolicy::Clamp;
  SplitSpec split;  // seed ignored
  // Share of the training set held back for checkpoint selection.
  double validation_fraction = 0.1;
  bool select_on_test = false;
  GanConfig gan;  // seed ignored
  MlpConfig mlp;  // seed ignored
  std::size_t smote_k = kDefaultSmoteK;
  std::filesystem::path output_dir = "anogen_out";
  std::uint64_t seed = 0;

  // Throws std::invalid_argument naming the offending field.
  void validate() const;
};

// Seed of a pipeline stage: derive_seed(cfg.seed, tag) for the tags
// "synth", "split", "validation", "templates", "gan", "smote" and "mlp".
std::uint64_t derived_seed(const ExperimentConfig& cfg, std::string_view tag);

// JSON document with the same field names as the structs above; every field
// is optional and unknown keys are rejected. Throws std::invalid_argument.
ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::filesystem::path& file);
// Effective configuration, including the derived module seeds.
std::string config_to_json(const ExperimentConfig& cfg);

// Small configuration that finishes on one CPU core in minutes: synthetic
// corpus, base_channels 16, 2 residual blocks, 3,000 steps at a flat 2e-4,
// and 10 classifier epochs.
ExperimentConfig desk_config();

// Data shared by every stage, recomputed deterministically from the config.
struct PreparedData {
  Dataset all;
  Split split;            // train / held-out test
  Dataset fit;            // train minus validation (all of train with select_on_test)
  Dataset selection;      // validation subsplit, or test with select_on_test
  std::vector<TraceSequence> templates;      // from train, one per needed anomaly
  std::vector<TraceSequence> fit_templates;  // from fit, for checkpoint selection
};
PreparedData prepare_data(const ExperimentConfig& cfg);

struct SweepRow {
  std::uint64_t checkpoint_step = 0;
  double auc = 0;

  friend bool operator==(const SweepRow&, const SweepRow&) = default;
};
using SweepResult = std::vector<SweepRow>;

// "checkpoint_step,auc" with six decimals.
std::string sweep_to_csv(const SweepResult& rows);

// source_id -> "train" | "test", plus the validation ids and template ids.
std::string split_manifest_json(const PreparedData& data);

struct ExperimentResult {
  std::vector<EvaluationReport> reports;  // imbalanced, SMOTE, Cycle-GAN
  SweepResult sweep;                      // test AUC per checkpoint
  SweepResult selection;                  // AUC used to choose the checkpoint
  std::uint64_t selected_step = 0;
  std::vector<std::string> warnings;
};

// Progress messages go here; nullptr (the default) silences them.
void set_progress_stream(std::ostream* out);

// Full pipeline. Writes report.csv, report.json, sweep.csv, selection.csv,
// losses.csv, split_manifest.json, config.json and checkpoints/ to
// cfg.output_dir. On failure a FAILED file holding the error is written
// and the exception propagates.
ExperimentResult cmd_experiment(const ExperimentConfig& cfg);

// Test AUC of every ckpt_<step>.agck in `checkpoint_dir`, ascending. An
// unreadable checkpoint is skipped with a warning. Writes sweep.csv.
SweepResult cmd_sweep(const ExperimentConfig& cfg, const std::filesystem::path& checkpoint_dir,
                      std::vector<std::string>* warnings = nullptr);

// Trains the GAN on the fit set, writing checkpoints/ and losses.csv.
// `resume` continues from a saved checkpoint.
void cmd_train_gan(const ExperimentConfig& cfg, const std::optional<std::filesystem::path>& resume = std::nullopt);

// One PGM per template plus manifest.json in `out_dir`; returns the count.
std::size_t cmd_generate(const ExperimentConfig& cfg, const std::filesystem::path& checkpoint,
                         const std::filesystem::path& out_dir);

// Trains the classifier for one approach on the training split and saves it.
// Cycle-GAN balancing reads the images written by cmd_generate.
void cmd_train_clf(const ExperimentConfig& cfg, Approach approach,
                   const std::optional<std::filesystem::path>& generated_dir, const std::filesystem::path& model_out);

// Scores the test split with a saved classifier; writes report.csv/json.
EvaluationReport cmd_evaluate(const ExperimentConfig& cfg, const std::filesystem::path& model, Approach approach);

// Writes synth_dataset(...) as normal/ and anomaly/ trace directories.
void cmd_synth_data(const ExperimentConfig& cfg, const std::filesystem::path& out_dir);

Approach parse_approach(const std::string& name);

}  // namespace anogen

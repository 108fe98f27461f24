/* Copyright 2026 The vqrephrase Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#pragma once

// Experiment orchestration: the delta sweep, the lambda sweep, the attention
// ablation, box-plot data export and the end-to-end experiment pipeline.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vqr/metrics.hpp"
#include "vqr/synthworld.hpp"
#include "vqr/training.hpp"
#include "vqr/vqa.hpp"

namespace vqr::harness {

using training::Regime;
using training::RephraseSample;
using training::Strategy;

// Size of the reference answer vocabulary the reference grid is expressed in.
inline constexpr int kReferenceAnswerVocab = 3129;

// -2.0 .. +2.0 in steps of 0.5.
std::vector<double> reference_delta_grid();
// The reference grid scaled by ln(answer_vocab) / ln(kReferenceAnswerVocab).
std::vector<double> desk_delta_grid(int answer_vocab);
double delta_unit(int answer_vocab);
std::vector<double> reference_lambda_grid();

// "Noise Pretrain", "Noise", "Noise-FT", "Sampling Pretrain", ... with a
// " w/o A" suffix when attention is disabled.
std::string configuration_label(Regime regime, Strategy strategy, bool use_attention = true);
// "pretrain-noise", "finetune-sampling", ... with a "-noattn" suffix.
std::string checkpoint_dirname(Regime regime, Strategy strategy, bool use_attention = true);

struct Configuration {
  Regime regime = Regime::pretrain;
  Strategy strategy = Strategy::sampling;
  bool use_attention = true;
  std::string label() const { return configuration_label(regime, strategy, use_attention); }
  bool operator==(const Configuration&) const = default;
};

// The six Pretrain / Scratch / FT x Noise / Sampling configurations.
std::vector<Configuration> all_configurations();
// Inverse of Configuration::label(); throws ConfigError.
Configuration parse_configuration(std::string_view label);

struct SweepConfig {
  std::vector<double> delta_grid;
  std::vector<double> lambda_grid;
  std::vector<Configuration> configurations;
  std::vector<std::uint64_t> seeds;
  std::filesystem::path output_dir;
  int threads = 1;

  static SweepConfig desk(int answer_vocab);
  static SweepConfig full();
};

// Throws ConfigError unless delta_grid is sorted ascending and nonempty.
void validate(const SweepConfig& config);

// Retains samples with E_S + delta >= 0 and sets E_T = min(E_S + delta,
// max_entropy). Order is preserved.
std::vector<RephraseSample> build_delta_samples(const std::vector<RephraseSample>& eval, double delta,
                                                double max_entropy);

struct SweepRow {
  double delta = 0.0;
  std::string configuration;
  std::optional<double> lambda;
  metrics::MetricsReport metrics;
};

struct RawRecord {
  double delta = 0.0;
  std::string configuration;
  std::optional<double> lambda;
  int scene_id = 0;
  int question_id = 0;
  double source_entropy = 0.0;
  double target_entropy = 0.0;
  double generated_entropy = 0.0;
  std::vector<int> source;     // without the end token
  std::vector<int> generated;  // without the end token
  std::string source_text;
  std::string generated_text;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  std::vector<RawRecord> raw;
};

struct LoadedConfiguration {
  std::string label;
  rephraser::RephraserModel model;
  std::optional<double> lambda;
};

// Loads `dir / checkpoint_dirname(c)` for every configuration. Throws
// ConfigError naming the label of the first missing checkpoint.
std::vector<LoadedConfiguration> load_configurations(const std::filesystem::path& dir,
                                                     const std::vector<Configuration>& configurations);

// Rows ordered by delta, then by configuration order.
SweepResult run_delta_sweep(const std::vector<LoadedConfiguration>& models, const world::Dataset& dataset,
                            const vqa::VqaModel& vqa, const std::vector<double>& delta_grid, int threads = 1);

// Recomputes the rows from raw records (grouped by delta, configuration,
// lambda in first-seen order). Cells that retained no sample have no raw
// records and therefore no recomputed row.
std::vector<SweepRow> rows_from_raw(const std::vector<RawRecord>& raw);

// delta,configuration,entropy_error_mean,entropy_error_std,bleu4,cider,
// meteor_lite,rouge_l,diversity,n_questions; a leading lambda column when
// any row carries one.
std::string sweep_csv(const std::vector<SweepRow>& rows);
void write_sweep_csv(const std::vector<SweepRow>& rows, const std::filesystem::path& path);
void write_raw_jsonl(const std::vector<RawRecord>& raw, const std::filesystem::path& path);
std::vector<RawRecord> read_raw_jsonl(const std::filesystem::path& path);

struct AsymmetryEntry {
  std::string configuration;
  double negative_delta = 0.0;
  double negative_error = 0.0;
  double positive_delta = 0.0;
  double positive_error = 0.0;
  // positive_error > negative_error
  bool increase_harder = false;
};

// Mean error at the largest positive versus the largest negative delta, per
// configuration.
std::vector<AsymmetryEntry> asymmetry_report(const std::vector<SweepRow>& rows);
nlohmann::json to_json(const std::vector<AsymmetryEntry>& report);

enum class AxisMode { eg_minus_et, eg_minus_es };
// Throws DomainError for anything but "eg_minus_et" / "eg_minus_es".
AxisMode parse_axis_mode(std::string_view s);
std::string_view to_string(AxisMode mode);

struct BoxplotPoint {
  double delta = 0.0;
  std::string configuration;
  double value = 0.0;
};
std::vector<BoxplotPoint> boxplot_points(const std::vector<RawRecord>& raw, AxisMode mode);

struct Quartiles {
  double delta = 0.0;
  std::string configuration;
  std::size_t n = 0;
  double min = 0.0, q1 = 0.0, median = 0.0, q3 = 0.0, max = 0.0;
};
// Linear interpolation between order statistics.
std::vector<Quartiles> quartile_summary(const std::vector<BoxplotPoint>& points);

// Writes `path` (delta,configuration,value) and a sidecar with the quartile
// summary next to it (".quartiles.csv").
void export_boxplot_csv(const std::vector<RawRecord>& raw, AxisMode mode, const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Experiment pipeline.

struct ExperimentConfig {
  std::uint64_t seed = 1;
  world::WorldConfig world;
  vqa::VqaConfig vqa;  // vocabulary sizes are filled from the dataset
  vqa::VqaTrainConfig vqa_training;
  training::TrainRegimeConfig rephraser;  // regime / strategy set per run
  // Iterations of the finetune regime; rephraser.iterations covers the others.
  int finetune_iterations = 300;
  std::string delta_grid = "desk";        // "desk", "full" or explicit via deltas
  std::vector<double> deltas;
  std::vector<double> lambda_grid = reference_lambda_grid();
  std::vector<Configuration> configurations = all_configurations();
  int threads = 1;

  std::vector<double> resolved_delta_grid(int answer_vocab) const;
};

nlohmann::json to_json(const ExperimentConfig& config);
// Missing keys keep their defaults; throws ConfigError on unknown keys or
// bad values.
ExperimentConfig experiment_config_from_json(const nlohmann::json& j);
ExperimentConfig read_experiment_config(const std::filesystem::path& path);
void write_experiment_config(const ExperimentConfig& config, const std::filesystem::path& path);

// Fixed layout under an experiment directory.
struct ExperimentPaths {
  std::filesystem::path root;
  std::filesystem::path dataset() const { return root / "dataset.jsonl"; }
  std::filesystem::path vqa() const { return root / "vqa"; }
  std::filesystem::path config() const { return root / "experiment.json"; }
  std::filesystem::path checkpoint(const Configuration& c) const {
    return root / checkpoint_dirname(c.regime, c.strategy, c.use_attention);
  }
  std::filesystem::path sweep_dir(std::string_view name) const { return root / std::string(name); }
};

world::Dataset step_generate_data(const ExperimentConfig& config, const ExperimentPaths& paths);
vqa::VqaTrainReport step_train_vqa(const ExperimentConfig& config, const ExperimentPaths& paths);
// Finetune looks for the matching pretrain checkpoint in the experiment
// directory.
training::TrainedRephraser step_train(const ExperimentConfig& config, const ExperimentPaths& paths,
                                      const Configuration& configuration);
// Writes sweep.csv, raw.jsonl and asymmetry.json under `sweep-delta`.
SweepResult step_sweep_delta(const ExperimentConfig& config, const ExperimentPaths& paths);

// One finetune (Sampling) per lambda from the pretrain-sampling checkpoint,
// each in its own "lambda-<value>" directory, followed by a delta sweep.
SweepResult run_lambda_sweep(const ExperimentConfig& config, const ExperimentPaths& paths);

struct AblationDelta {
  double delta = 0.0;
  std::string regime_label;  // "Pretrain" or "FT"
  double error_with = 0.0;
  double error_without = 0.0;
};

struct AblationResult {
  SweepResult sweep;
  std::vector<AblationDelta> deltas;
};

// Sampling Pretrain and FT trained with and without attention under the
// same seed, then swept together. Throws ConfigError when the two variants'
// manifests disagree on seed.
AblationResult run_attention_ablation(const ExperimentConfig& config, const ExperimentPaths& paths);

// ---------------------------------------------------------------------------
// Invariant suite run by the `verify` command.

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};
std::vector<CheckResult> run_invariant_suite(std::uint64_t seed);

}  // namespace vqr::harness

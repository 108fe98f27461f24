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

// Target construction (noise / sampling), the pretrain / scratch / finetune
// regimes, the optimisation loop and batch rephrasing.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "vqr/nn.hpp"
#include "vqr/rephraser.hpp"
#include "vqr/synthworld.hpp"
#include "vqr/vqa.hpp"

namespace vqr::training {

using ad::Matrix;

enum class Regime { pretrain, scratch, finetune };
enum class Strategy { noise, sampling };

std::string_view to_string(Regime r);
std::string_view to_string(Strategy s);
Regime parse_regime(std::string_view s);      // throws ConfigError
Strategy parse_strategy(std::string_view s);  // throws ConfigError

struct RephraseSample {
  int scene_id = 0;
  int question_id = 0;
  std::vector<int> source;
  double source_entropy = 0.0;
  std::vector<int> target;
  double target_entropy = 0.0;
  std::optional<std::vector<int>> generated;
  std::optional<double> generated_entropy;
};

// Region features of every scene, indexed by scene_id.
class FeatureCache {
 public:
  explicit FeatureCache(const world::Dataset& dataset);
  const Matrix& operator[](int scene_id) const;

 private:
  std::vector<Matrix> features_;
};

// scene_id -> questions of that scene.
class ImageQuestionIndex {
 public:
  ImageQuestionIndex() = default;
  explicit ImageQuestionIndex(const world::Dataset& dataset);
  void add(int scene_id, const world::Question* q);
  const std::vector<const world::Question*>& questions(int scene_id) const;

 private:
  std::map<int, std::vector<const world::Question*>> by_scene_;
};

// entropy(predict(vqa, features, tokens)).
double question_entropy(const vqa::VqaModel& vqa, const Matrix& features, const std::vector<int>& tokens);

// One sample per question of `split`, with E_S computed by the frozen VQA
// model. Target fields mirror the source until a strategy fills them.
std::vector<RephraseSample> source_samples(const world::Dataset& dataset, world::Split split,
                                           const vqa::VqaModel& vqa, const FeatureCache& features);

// Q_T = Q_S, E_T = clamp(E_S + epsilon, 0, max_entropy).
RephraseSample make_noise_target(RephraseSample sample, double epsilon, double max_entropy);
// Same with epsilon ~ U(-noise_bound, noise_bound).
RephraseSample make_noise_target(RephraseSample sample, Rng& rng, double noise_bound, double max_entropy);

// Q_T drawn uniformly from the scene's other questions; E_T from the frozen
// VQA model on Q_T. Throws StrategyError when the scene offers no other
// question.
RephraseSample make_sampling_target(RephraseSample sample, const ImageQuestionIndex& index,
                                    const vqa::VqaModel& vqa, const FeatureCache& features, Rng& rng);

struct TrainRegimeConfig {
  Regime regime = Regime::finetune;
  Strategy strategy = Strategy::sampling;
  double lambda = 1.0;
  int batch_size = 32;
  double learning_rate = 5e-4;
  int iterations = 3000;
  std::uint64_t seed = 1;
  double noise_bound = 1.0;
  double tau = 1.0;
  bool straight_through = false;
  double clip_norm = 0.0;
  std::filesystem::path pretrain_checkpoint;

  int hidden = 64;
  int embed_dim = 32;
  int max_length = 20;
  bool use_attention = true;

  // 64 / 44000 iterations / hidden 512.
  static TrainRegimeConfig full_scale();
};

// Applies regime rules (pretrain forces lambda = 0) and checks ranges.
// Throws ConfigError.
TrainRegimeConfig normalized(TrainRegimeConfig config);

struct LossRecord {
  long iteration = 0;
  double l_vqg = 0.0;
  std::optional<double> l_ent;  // absent when the entropy path is not run
  double total = 0.0;
};

struct TrainedRephraser {
  rephraser::RephraserModel model;
  nn::Adam optimizer;
  TrainRegimeConfig config;
  std::vector<LossRecord> log;
  // Number of Gumbel decoding passes run during training.
  long gumbel_passes = 0;
};

// Throws ContractError for an unfrozen VQA model, ConfigError for a missing
// pretrain checkpoint and TrainingError (with the iteration) for a
// non-finite loss.
TrainedRephraser train(const world::Dataset& dataset, const vqa::VqaModel& vqa, const TrainRegimeConfig& config);

// Checkpoint directory: tensors.bin + manifest.json + loss.csv.
void save_rephraser(const TrainedRephraser& trained, const std::filesystem::path& dir);
TrainedRephraser load_rephraser(const std::filesystem::path& dir);

// CSV: iteration,l_vqg,l_ent,total (l_ent empty when not computed).
void write_loss_log(const std::vector<LossRecord>& log, const std::filesystem::path& path);

// Fills generated (greedy decoding) and generated_entropy for every sample.
std::vector<RephraseSample> rephrase_batch(const rephraser::RephraserModel& model, const vqa::VqaModel& vqa,
                                           const FeatureCache& features, std::vector<RephraseSample> samples,
                                           std::size_t chunk = 128);

}  // namespace vqr::training

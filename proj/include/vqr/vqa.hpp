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

// Desk-scale attention VQA model. A question (hard tokens or soft token
// distributions) is embedded and run through an LSTM; additive attention
// over image regions pools a context vector, and a two-layer perceptron on
// [context; question] produces answer logits.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vqr/autograd.hpp"
#include "vqr/nn.hpp"
#include "vqr/synthworld.hpp"

namespace vqr::vqa {

using ad::Matrix;
using ad::Var;

struct AnswerDistribution {
  Eigen::VectorXd probs;
};

struct AttentionMap {
  Eigen::VectorXd weights;
};

struct Prediction {
  AnswerDistribution answer;
  AttentionMap attention;
};

// Entropy in nats, -sum p ln p over entries above kEntropyFloor.
inline constexpr double kEntropyFloor = 1e-12;
double entropy(const AnswerDistribution& dist);
double entropy(std::span<const double> probs);

struct VqaConfig {
  int question_vocab = 0;
  int answer_vocab = 0;
  int feature_dim = world::kFeatureDim;
  int regions = 9;
  int max_length = 20;
  int embed_dim = 32;
  int hidden = 64;
  int attention_dim = 32;
  int mlp_hidden = 64;
};

struct VqaTrainConfig {
  int iterations = 2500;
  int batch_size = 64;
  double learning_rate = 3e-3;
  std::uint64_t seed = 1;
};

struct VqaTrainReport {
  double final_loss = 0.0;
  double heldout_kl = 0.0;  // mean KL(label || prediction) on eval-split questions
  std::vector<double> loss_log;
};

class VqaModel {
 public:
  VqaModel() = default;
  VqaModel(const VqaConfig& config, std::uint64_t seed);

  const VqaConfig& config() const { return config_; }
  bool frozen() const { return frozen_; }
  // Records the parameter digest; the model is immutable afterwards.
  void freeze();
  // SHA-256 over all parameters.
  std::string digest() const;
  // Digest captured by freeze().
  const std::string& frozen_digest() const { return frozen_digest_; }

  std::vector<ad::Parameter*> parameters();
  std::vector<const ad::Parameter*> parameters() const;

  // Parameters bound on one tape.
  struct Bound {
    Var embed;
    nn::Lstm::Bound lstm;
    Var att_regions, att_question, att_bias, att_score;
    nn::Linear::Bound mlp_hidden, mlp_out;
  };
  Bound bind_frozen(ad::Tape& tape) const;
  Bound bind_trainable(ad::Tape& tape);

  struct Output {
    Var logits;     // B x |A|
    Var attention;  // B x R
  };
  // regions: (B*R) x D. tokens: per-sample sequences (each ending in kEnd).
  Output forward_tokens(const Bound& bound, const Var& regions,
                        const std::vector<std::vector<int>>& tokens) const;
  // soft_steps[t]: B x V token distributions for step t; lengths[b] rows of
  // sample b are consumed.
  Output forward_soft(const Bound& bound, const Var& regions, const std::vector<Var>& soft_steps,
                      std::span<const int> lengths) const;

  Prediction predict(const Matrix& features, const std::vector<int>& tokens) const;
  // rows: L x V, each row a distribution over the question vocabulary.
  Prediction predict_soft(const Matrix& features, const Matrix& rows) const;

  // Batched hard-token prediction; returns answer probabilities (B x |A|).
  Matrix predict_batch(const std::vector<const Matrix*>& features,
                       const std::vector<std::vector<int>>& tokens) const;

  void save(const std::filesystem::path& dir) const;
  static VqaModel load(const std::filesystem::path& dir);

 private:
  Output forward_embedded(const Bound& bound, const Var& regions, const std::vector<Var>& steps,
                          std::span<const int> lengths) const;
  void check_features(const Matrix& features) const;

  VqaConfig config_;
  ad::Parameter embed_;
  nn::Lstm lstm_;
  ad::Parameter att_regions_, att_question_, att_bias_, att_score_;
  nn::Linear mlp_hidden_, mlp_out_;
  bool frozen_ = false;
  std::string frozen_digest_;
};

// Stacks per-sample R x D feature matrices into one (B*R) x D matrix.
Matrix stack_regions(const std::vector<const Matrix*>& features);

VqaConfig default_vqa_config(const world::Dataset& dataset);

// Trains on train-split questions with soft-label cross-entropy, then
// measures held-out KL on eval-split questions. Throws TrainingError on a
// non-finite loss. The model is left unfrozen.
VqaTrainReport train_vqa(VqaModel& model, const world::Dataset& dataset, const VqaTrainConfig& config);

}  // namespace vqr::vqa

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

// Entropy-conditioned encoder-decoder rephraser.
//
// Encoder: mean-pooled region features, optionally the region features
// pooled with the frozen VQA model's attention on the source question, an
// LSTM encoding of the source question and the normalised target entropy
// are concatenated and mapped by a linear layer.
//
// Decoder: a second linear layer maps [encoder output; target entropy] to a
// context vector that initialises the decoder LSTM and is fed alongside the
// previous token embedding at every step.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "vqr/autograd.hpp"
#include "vqr/nn.hpp"
#include "vqr/vqa.hpp"

namespace vqr::rephraser {

using ad::Matrix;
using ad::Var;

struct RephraserConfig {
  int question_vocab = 0;
  int answer_vocab = 0;
  int feature_dim = world::kFeatureDim;
  int regions = 9;
  int max_length = 20;
  int embed_dim = 32;
  int hidden = 512;
  bool use_attention = true;

  // ln |A|, the largest attainable answer entropy.
  double max_entropy() const;
};

struct LossConfig {
  double entropy_weight = 1.0;  // lambda
  double gumbel_temperature = 0.01;
  bool straight_through = false;
};

// Throws DomainError unless lambda >= 0 and tau > 0.
void validate(const LossConfig& config);

// softmax((logits + noise) / tau). Throws DomainError for tau <= 0.
Eigen::VectorXd gumbel_softmax(const Eigen::VectorXd& logits, double tau, const Eigen::VectorXd& noise);
// Same on the tape, row-wise; straight_through swaps the forward value for
// the hard one-hot argmax.
Var gumbel_softmax(const Var& logits, double tau, const Matrix& noise, bool straight_through);

// Supplies the Gumbel noise matrix (batch x vocab) for one decoding step.
using NoiseSource = std::function<Matrix(Eigen::Index rows, Eigen::Index cols)>;
NoiseSource gumbel_source(Rng& rng);
NoiseSource zero_noise();

struct EncoderInput {
  Matrix regions;                          // (B*R) x D
  std::vector<std::vector<int>> sources;   // source questions
  std::vector<double> target_entropy;      // nats, one per sample
};

struct Encoded {
  Var fused;           // B x H encoder output
  Var entropy_feature; // B x 1, E_T / ln|A|
  Var regions;         // (B*R) x D
};

struct SoftTokenSequence {
  std::vector<Var> rows;     // rows[t]: B x V
  std::vector<int> lengths;  // consumed rows per sample
};

class RephraserModel {
 public:
  RephraserModel() = default;
  RephraserModel(const RephraserConfig& config, std::uint64_t seed);

  const RephraserConfig& config() const { return config_; }
  std::vector<ad::Parameter*> parameters();
  std::vector<const ad::Parameter*> parameters() const;
  std::string digest() const;

  struct Bound {
    Var enc_embed, dec_embed;
    nn::Lstm::Bound enc_lstm, dec_lstm;
    nn::Linear::Bound enc_fuse, dec_fuse, out_proj;
  };
  Bound bind(ad::Tape& tape, bool trainable);
  Bound bind_frozen(ad::Tape& tape) const;

  // Throws ContractError when `vqa` is not frozen and DomainError when a
  // target entropy lies outside [0, ln|A|].
  Encoded encode(const Bound& bound, ad::Tape& tape, const EncoderInput& input,
                 const vqa::VqaModel& vqa) const;

  // Step t consumes target token t-1 (start token at t = 0). Returns one
  // B x V logit matrix per step, as many steps as the longest target.
  std::vector<Var> decode_teacher_forced(const Bound& bound, const Encoded& enc,
                                         const std::vector<std::vector<int>>& targets) const;

  // Free-running decoding on Gumbel-Softmax relaxed tokens; step t consumes
  // the expected embedding of step t-1's soft row. A sample stops after the
  // step whose row argmax is the end token, or at max_length.
  SoftTokenSequence decode_gumbel(const Bound& bound, const Encoded& enc, double tau,
                                  bool straight_through, const NoiseSource& noise) const;

  // Argmax decoding. Each output ends in the end token; a sequence reaching
  // max_length has its last token replaced by the end token.
  std::vector<std::vector<int>> decode_greedy(const Bound& bound, const Encoded& enc) const;

  // Single-sample convenience wrapper around encode + decode_greedy.
  std::vector<int> rephrase(const Matrix& features, const std::vector<int>& source, double target_entropy,
                            const vqa::VqaModel& vqa) const;

  void restore(const std::vector<std::pair<std::string, Matrix>>& tensors);

 private:
  Var decoder_context(const Bound& bound, const Encoded& enc) const;

  RephraserConfig config_;
  ad::Parameter enc_embed_, dec_embed_;
  nn::Lstm enc_lstm_, dec_lstm_;
  nn::Linear enc_fuse_, dec_fuse_, out_proj_;
};

// Mean over samples of -(1/n_b) sum_t log p(target_t) with n_b the target
// length of sample b. Throws ShapeError when the step count differs from the
// longest target.
Var vqg_loss(const std::vector<Var>& step_logits, const std::vector<std::vector<int>>& targets);
double vqg_loss(const Matrix& step_logits, const std::vector<int>& target);

// (E_T - E_G)^2.
double entropy_loss(double target_entropy, double generated_entropy);
// Mean over the batch of (E_T - E_G)^2; generated is B x 1.
Var entropy_loss(const std::vector<double>& target_entropy, const Var& generated);

// L_VQG + lambda * L_Ent. Throws DomainError for lambda < 0.
double total_loss(double vqg, double ent, double lambda);
Var total_loss(const Var& vqg, const Var& ent, double lambda);

// Entropy (B x 1) of the frozen VQA model's prediction on soft generated
// questions.
Var generated_entropy(const vqa::VqaModel& vqa, const vqa::VqaModel::Bound& bound, const Encoded& enc,
                      const SoftTokenSequence& seq);

}  // namespace vqr::rephraser

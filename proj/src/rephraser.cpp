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

#include "vqr/rephraser.hpp"

#include <cmath>

#include "vqr/checkpoint.hpp"
#include "vqr/error.hpp"

namespace vqr::rephraser {

double RephraserConfig::max_entropy() const { return std::log(static_cast<double>(answer_vocab)); }

void validate(const LossConfig& config) {
  if (!(config.entropy_weight >= 0.0)) throw DomainError("entropy weight must be >= 0");
  if (!(config.gumbel_temperature > 0.0)) throw DomainError("Gumbel temperature must be > 0");
}

Eigen::VectorXd gumbel_softmax(const Eigen::VectorXd& logits, double tau, const Eigen::VectorXd& noise) {
  if (!(tau > 0.0)) throw DomainError("Gumbel temperature must be > 0");
  if (noise.size() != logits.size()) throw ShapeError("noise and logits differ in size");
  const Eigen::VectorXd z = (logits + noise) / tau;
  Eigen::VectorXd y = (z.array() - z.maxCoeff()).exp();
  return y / y.sum();
}

Var gumbel_softmax(const Var& logits, double tau, const Matrix& noise, bool straight_through) {
  if (!(tau > 0.0)) throw DomainError("Gumbel temperature must be > 0");
  ad::Tape& tape = *logits.tape();
  const Var soft = ad::softmax_rows(ad::scale(ad::add(logits, tape.constant(noise)), 1.0 / tau));
  return straight_through ? ad::straight_through(soft) : soft;
}

NoiseSource gumbel_source(Rng& rng) {
  return [&rng](Eigen::Index rows, Eigen::Index cols) { return gumbel_noise(rng, rows, cols); };
}

NoiseSource zero_noise() {
  return [](Eigen::Index rows, Eigen::Index cols) -> Matrix { return Matrix::Zero(rows, cols); };
}

RephraserModel::RephraserModel(const RephraserConfig& config, std::uint64_t seed) : config_(config) {
  if (config.question_vocab <= world::kUnk || config.answer_vocab < 2 || config.hidden < 1 ||
      config.max_length < 1) {
    throw ConfigError("invalid rephraser configuration");
  }
  Rng rng(seed);
  const int h = config.hidden;
  const int image_in = config.use_attention ? 2 * config.feature_dim : config.feature_dim;
  enc_embed_ = nn::make_parameter("reph.enc.embed", config.question_vocab, config.embed_dim, 0.5, rng);
  enc_lstm_ = nn::Lstm::create("reph.enc.lstm", config.embed_dim, h, rng);
  enc_fuse_ = nn::Linear::create("reph.enc.fuse", image_in + h + 1, h, rng);
  dec_fuse_ = nn::Linear::create("reph.dec.fuse", h + 1, h, rng);
  dec_embed_ = nn::make_parameter("reph.dec.embed", config.question_vocab, config.embed_dim, 0.5, rng);
  dec_lstm_ = nn::Lstm::create("reph.dec.lstm", config.embed_dim + h, h, rng);
  out_proj_ = nn::Linear::create("reph.dec.out", h, config.question_vocab, rng);
}

std::vector<ad::Parameter*> RephraserModel::parameters() {
  std::vector<ad::Parameter*> out{&enc_embed_};
  enc_lstm_.collect(out);
  enc_fuse_.collect(out);
  dec_fuse_.collect(out);
  out.push_back(&dec_embed_);
  dec_lstm_.collect(out);
  out_proj_.collect(out);
  return out;
}

std::vector<const ad::Parameter*> RephraserModel::parameters() const {
  auto ps = const_cast<RephraserModel*>(this)->parameters();
  return {ps.begin(), ps.end()};
}

std::string RephraserModel::digest() const {
  const auto ps = parameters();
  return checkpoint::parameter_digest(ps);
}

void RephraserModel::restore(const std::vector<std::pair<std::string, Matrix>>& tensors) {
  checkpoint::assign(parameters(), tensors);
}

RephraserModel::Bound RephraserModel::bind(ad::Tape& tape, bool trainable) {
  return {nn::bind(tape, enc_embed_, trainable), nn::bind(tape, dec_embed_, trainable),
          enc_lstm_.bind(tape, trainable),       dec_lstm_.bind(tape, trainable),
          enc_fuse_.bind(tape, trainable),       dec_fuse_.bind(tape, trainable),
          out_proj_.bind(tape, trainable)};
}

RephraserModel::Bound RephraserModel::bind_frozen(ad::Tape& tape) const {
  return const_cast<RephraserModel*>(this)->bind(tape, false);
}

Encoded RephraserModel::encode(const Bound& bound, ad::Tape& tape, const EncoderInput& input,
                               const vqa::VqaModel& vqa) const {
  if (!vqa.frozen()) throw ContractError("the rephraser requires a frozen VQA model");
  const auto batch = static_cast<Eigen::Index>(input.sources.size());
  if (batch == 0 || static_cast<Eigen::Index>(input.target_entropy.size()) != batch) {
    throw ShapeError("encoder batch is empty or target entropies do not match sources");
  }
  const Eigen::Index r = config_.regions;
  if (input.regions.rows() != batch * r || input.regions.cols() != config_.feature_dim) {
    throw ShapeError("image features do not match the rephraser configuration");
  }
  const double max_h = config_.max_entropy();
  Matrix e(batch, 1);
  for (Eigen::Index b = 0; b < batch; ++b) {
    const double et = input.target_entropy[static_cast<std::size_t>(b)];
    if (!(et >= 0.0 && et <= max_h + 1e-12)) {
      throw DomainError("target entropy " + std::to_string(et) + " outside [0, ln|A|]");
    }
    e(b, 0) = et / max_h;
  }

  Encoded enc;
  enc.regions = tape.constant(input.regions);
  enc.entropy_feature = tape.constant(std::move(e));

  std::vector<Var> parts;
  parts.push_back(ad::pool_regions(tape.constant(Matrix::Constant(batch, r, 1.0 / static_cast<double>(r))),
                                   enc.regions));
  if (config_.use_attention) {
    const auto vb = vqa.bind_frozen(tape);
    const Var attention = vqa.forward_tokens(vb, enc.regions, input.sources).attention;
    parts.push_back(ad::pool_regions(attention, enc.regions));
  }

  std::vector<int> lengths;
  int steps = 0;
  for (const auto& q : input.sources) {
    world::validate_question(q, config_.question_vocab, config_.max_length);
    lengths.push_back(static_cast<int>(q.size()));
    steps = std::max(steps, static_cast<int>(q.size()));
  }
  auto state = bound.enc_lstm.zero_state(tape, batch);
  std::vector<int> ids(static_cast<std::size_t>(batch));
  for (int t = 0; t < steps; ++t) {
    for (std::size_t b = 0; b < ids.size(); ++b) {
      ids[b] = t < lengths[b] ? input.sources[b][static_cast<std::size_t>(t)] : world::kPad;
    }
    state = bound.enc_lstm.masked_step(ad::gather_rows(bound.enc_embed, ids), state, nn::step_mask(lengths, t));
  }
  parts.push_back(state.h);
  parts.push_back(enc.entropy_feature);
  enc.fused = bound.enc_fuse(ad::concat_cols(parts));
  return enc;
}

Var RephraserModel::decoder_context(const Bound& bound, const Encoded& enc) const {
  const std::vector<Var> parts{enc.fused, enc.entropy_feature};
  return ad::tanh(bound.dec_fuse(ad::concat_cols(parts)));
}

std::vector<Var> RephraserModel::decode_teacher_forced(const Bound& bound, const Encoded& enc,
                                                       const std::vector<std::vector<int>>& targets) const {
  const auto batch = static_cast<std::size_t>(enc.fused.rows());
  if (targets.size() != batch) throw ShapeError("target count does not match the encoded batch");
  int steps = 0;
  for (const auto& t : targets) {
    if (t.empty()) throw DomainError("empty target question");
    if (static_cast<int>(t.size()) > config_.max_length) {
      throw DomainError("target longer than max_length " + std::to_string(config_.max_length));
    }
    steps = std::max(steps, static_cast<int>(t.size()));
  }
  ad::Tape& tape = *enc.fused.tape();
  const Var ctx = decoder_context(bound, enc);
  nn::Lstm::State state{ctx, tape.constant(Matrix::Zero(ctx.rows(), ctx.cols()))};
  std::vector<Var> logits;
  std::vector<int> prev(batch, world::kStart);
  for (int t = 0; t < steps; ++t) {
    if (t > 0) {
      for (std::size_t b = 0; b < batch; ++b) {
        prev[b] = t - 1 < static_cast<int>(targets[b].size()) ? targets[b][static_cast<std::size_t>(t - 1)]
                                                              : world::kPad;
      }
    }
    const std::vector<Var> in{ad::gather_rows(bound.dec_embed, prev), ctx};
    state = bound.dec_lstm.step(ad::concat_cols(in), state);
    logits.push_back(bound.out_proj(state.h));
  }
  return logits;
}

SoftTokenSequence RephraserModel::decode_gumbel(const Bound& bound, const Encoded& enc, double tau,
                                                bool straight_through, const NoiseSource& noise) const {
  if (!(tau > 0.0)) throw DomainError("Gumbel temperature must be > 0");
  ad::Tape& tape = *enc.fused.tape();
  const Eigen::Index batch = enc.fused.rows();
  const Var ctx = decoder_context(bound, enc);
  nn::Lstm::State state{ctx, tape.constant(Matrix::Zero(ctx.rows(), ctx.cols()))};

  SoftTokenSequence seq;
  seq.lengths.assign(static_cast<std::size_t>(batch), config_.max_length);
  std::vector<bool> alive(static_cast<std::size_t>(batch), true);
  std::size_t remaining = alive.size();
  Var prev = ad::gather_rows(bound.dec_embed, std::vector<int>(static_cast<std::size_t>(batch), world::kStart));
  for (int t = 0; t < config_.max_length && remaining > 0; ++t) {
    const std::vector<Var> in{prev, ctx};
    state = bound.dec_lstm.step(ad::concat_cols(in), state);
    const Var logits = bound.out_proj(state.h);
    const Var row = gumbel_softmax(logits, tau, noise(batch, config_.question_vocab), straight_through);
    seq.rows.push_back(row);
    for (Eigen::Index b = 0; b < batch; ++b) {
      if (!alive[static_cast<std::size_t>(b)]) continue;
      Eigen::Index k = 0;
      row.value().row(b).maxCoeff(&k);
      if (k == world::kEnd) {
        alive[static_cast<std::size_t>(b)] = false;
        seq.lengths[static_cast<std::size_t>(b)] = t + 1;
        --remaining;
      }
    }
    prev = ad::matmul(row, bound.dec_embed);
  }
  return seq;
}

std::vector<std::vector<int>> RephraserModel::decode_greedy(const Bound& bound, const Encoded& enc) const {
  ad::Tape& tape = *enc.fused.tape();
  const auto batch = static_cast<std::size_t>(enc.fused.rows());
  const Var ctx = decoder_context(bound, enc);
  nn::Lstm::State state{ctx, tape.constant(Matrix::Zero(ctx.rows(), ctx.cols()))};
  std::vector<std::vector<int>> out(batch);
  std::vector<bool> alive(batch, true);
  std::size_t remaining = batch;
  std::vector<int> prev(batch, world::kStart);
  for (int t = 0; t < config_.max_length && remaining > 0; ++t) {
    const std::vector<Var> in{ad::gather_rows(bound.dec_embed, prev), ctx};
    state = bound.dec_lstm.step(ad::concat_cols(in), state);
    const Matrix& logits = bound.out_proj(state.h).value();
    for (std::size_t b = 0; b < batch; ++b) {
      Eigen::Index k = 0;
      logits.row(static_cast<Eigen::Index>(b)).maxCoeff(&k);
      prev[b] = static_cast<int>(k);
      if (!alive[b]) continue;
      int token = static_cast<int>(k);
      if (t == config_.max_length - 1) token = world::kEnd;
      out[b].push_back(token);
      if (token == world::kEnd) {
        alive[b] = false;
        --remaining;
      }
    }
  }
  return out;
}

std::vector<int> RephraserModel::rephrase(const Matrix& features, const std::vector<int>& source,
                                          double target_entropy, const vqa::VqaModel& vqa) const {
  ad::Tape tape;
  const Bound b = bind_frozen(tape);
  const Encoded enc = encode(b, tape, EncoderInput{features, {source}, {target_entropy}}, vqa);
  return decode_greedy(b, enc).front();
}

Var vqg_loss(const std::vector<Var>& step_logits, const std::vector<std::vector<int>>& targets) {
  if (step_logits.empty()) throw ShapeError("vqg_loss: no steps");
  const auto batch = static_cast<std::size_t>(step_logits.front().rows());
  if (targets.size() != batch) throw ShapeError("vqg_loss: target count does not match batch");
  std::size_t steps = 0;
  for (const auto& t : targets) steps = std::max(steps, t.size());
  if (steps != step_logits.size()) {
    throw ShapeError("vqg_loss: " + std::to_string(step_logits.size()) + " steps for targets of length " +
                     std::to_string(steps));
  }
  ad::Tape& tape = *step_logits.front().tape();
  Var total;
  std::vector<int> idx(batch);
  for (std::size_t t = 0; t < steps; ++t) {
    Matrix w(static_cast<Eigen::Index>(batch), 1);
    for (std::size_t b = 0; b < batch; ++b) {
      const bool live = t < targets[b].size();
      idx[b] = live ? targets[b][t] : 0;
      w(static_cast<Eigen::Index>(b), 0) = live ? 1.0 / static_cast<double>(targets[b].size()) : 0.0;
    }
    const Var term = ad::sum_all(ad::mul_col(ad::pick(ad::log_softmax_rows(step_logits[t]), idx), tape.constant(w)));
    total = total.valid() ? ad::add(total, term) : term;
  }
  return ad::scale(total, -1.0 / static_cast<double>(batch));
}

double vqg_loss(const Matrix& step_logits, const std::vector<int>& target) {
  if (step_logits.rows() != static_cast<Eigen::Index>(target.size())) {
    throw ShapeError("vqg_loss: " + std::to_string(step_logits.rows()) + " steps for a target of length " +
                     std::to_string(target.size()));
  }
  if (target.empty()) throw ShapeError("vqg_loss: empty target");
  double nll = 0.0;
  for (Eigen::Index t = 0; t < step_logits.rows(); ++t) {
    const double m = step_logits.row(t).maxCoeff();
    const double lse = m + std::log((step_logits.row(t).array() - m).exp().sum());
    nll -= step_logits(t, target[static_cast<std::size_t>(t)]) - lse;
  }
  return nll / static_cast<double>(target.size());
}

double entropy_loss(double target_entropy, double generated_entropy) {
  const double d = target_entropy - generated_entropy;
  return d * d;
}

Var entropy_loss(const std::vector<double>& target_entropy, const Var& generated) {
  if (generated.cols() != 1 || generated.rows() != static_cast<Eigen::Index>(target_entropy.size())) {
    throw ShapeError("entropy_loss: target/generated size mismatch");
  }
  ad::Tape& tape = *generated.tape();
  const Matrix targets = Eigen::Map<const Matrix>(target_entropy.data(), generated.rows(), 1);
  return ad::mean_all(ad::square(ad::sub(tape.constant(targets), generated)));
}

double total_loss(double vqg, double ent, double lambda) {
  if (!(lambda >= 0.0)) throw DomainError("entropy weight must be >= 0");
  return vqg + lambda * ent;
}

Var total_loss(const Var& vqg, const Var& ent, double lambda) {
  if (!(lambda >= 0.0)) throw DomainError("entropy weight must be >= 0");
  return ad::add(vqg, ad::scale(ent, lambda));
}

Var generated_entropy(const vqa::VqaModel& vqa, const vqa::VqaModel::Bound& bound, const Encoded& enc,
                      const SoftTokenSequence& seq) {
  return ad::softmax_entropy_rows(vqa.forward_soft(bound, enc.regions, seq.rows, seq.lengths).logits);
}

}  // namespace vqr::rephraser

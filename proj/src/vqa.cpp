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

#include "vqr/vqa.hpp"

#include <cmath>

#include <nlohmann/json.hpp>

#include "vqr/checkpoint.hpp"
#include "vqr/error.hpp"

namespace vqr::vqa {

using ad::Var;
using nlohmann::json;

double entropy(std::span<const double> probs) {
  double h = 0.0;
  for (double p : probs) {
    if (p > kEntropyFloor) h -= p * std::log(p);
  }
  return h;
}

double entropy(const AnswerDistribution& dist) {
  return entropy(std::span<const double>(dist.probs.data(), static_cast<std::size_t>(dist.probs.size())));
}

VqaModel::VqaModel(const VqaConfig& config, std::uint64_t seed) : config_(config) {
  if (config.question_vocab <= world::kUnk || config.answer_vocab < 2 || config.regions < 1) {
    throw ConfigError("VQA model needs a question vocabulary, >= 2 answers and >= 1 region");
  }
  Rng rng(seed);
  embed_ = nn::make_parameter("vqa.embed", config.question_vocab, config.embed_dim, 0.5, rng);
  lstm_ = nn::Lstm::create("vqa.lstm", config.embed_dim, config.hidden, rng);
  att_regions_ = nn::make_parameter("vqa.att.regions", config.feature_dim, config.attention_dim,
                                    1.0 / std::sqrt(static_cast<double>(config.feature_dim)), rng);
  att_question_ = nn::make_parameter("vqa.att.question", config.hidden, config.attention_dim,
                                     1.0 / std::sqrt(static_cast<double>(config.hidden)), rng);
  att_bias_ = nn::make_zero_parameter("vqa.att.bias", 1, config.attention_dim);
  att_score_ = nn::make_parameter("vqa.att.score", config.attention_dim, 1,
                                  1.0 / std::sqrt(static_cast<double>(config.attention_dim)), rng);
  mlp_hidden_ = nn::Linear::create("vqa.mlp.hidden", config.feature_dim + config.hidden, config.mlp_hidden, rng);
  // zero answer head: an untrained model predicts the uniform distribution
  mlp_out_ = nn::Linear::zeros("vqa.mlp.out", config.mlp_hidden, config.answer_vocab);
}

std::vector<ad::Parameter*> VqaModel::parameters() {
  std::vector<ad::Parameter*> out{&embed_};
  lstm_.collect(out);
  out.push_back(&att_regions_);
  out.push_back(&att_question_);
  out.push_back(&att_bias_);
  out.push_back(&att_score_);
  mlp_hidden_.collect(out);
  mlp_out_.collect(out);
  return out;
}

std::vector<const ad::Parameter*> VqaModel::parameters() const {
  auto ps = const_cast<VqaModel*>(this)->parameters();
  return {ps.begin(), ps.end()};
}

void VqaModel::freeze() {
  frozen_ = true;
  frozen_digest_ = digest();
}

std::string VqaModel::digest() const {
  const auto ps = parameters();
  return checkpoint::parameter_digest(ps);
}

VqaModel::Bound VqaModel::bind_frozen(ad::Tape& tape) const {
  auto& self = const_cast<VqaModel&>(*this);
  Bound b;
  b.embed = tape.frozen(embed_);
  b.lstm = self.lstm_.bind(tape, false);
  b.att_regions = tape.frozen(att_regions_);
  b.att_question = tape.frozen(att_question_);
  b.att_bias = tape.frozen(att_bias_);
  b.att_score = tape.frozen(att_score_);
  b.mlp_hidden = self.mlp_hidden_.bind(tape, false);
  b.mlp_out = self.mlp_out_.bind(tape, false);
  return b;
}

VqaModel::Bound VqaModel::bind_trainable(ad::Tape& tape) {
  if (frozen_) throw ContractError("cannot train a frozen VQA model");
  Bound b;
  b.embed = tape.parameter(embed_);
  b.lstm = lstm_.bind(tape, true);
  b.att_regions = tape.parameter(att_regions_);
  b.att_question = tape.parameter(att_question_);
  b.att_bias = tape.parameter(att_bias_);
  b.att_score = tape.parameter(att_score_);
  b.mlp_hidden = mlp_hidden_.bind(tape, true);
  b.mlp_out = mlp_out_.bind(tape, true);
  return b;
}

VqaModel::Output VqaModel::forward_tokens(const Bound& bound, const Var& regions,
                                          const std::vector<std::vector<int>>& tokens) const {
  std::vector<int> lengths;
  int steps = 0;
  for (const auto& q : tokens) {
    if (q.empty()) throw ShapeError("empty question");
    lengths.push_back(static_cast<int>(q.size()));
    steps = std::max(steps, static_cast<int>(q.size()));
  }
  std::vector<Var> embedded;
  std::vector<int> ids(tokens.size());
  for (int t = 0; t < steps; ++t) {
    for (std::size_t b = 0; b < tokens.size(); ++b) {
      ids[b] = t < lengths[b] ? tokens[b][static_cast<std::size_t>(t)] : world::kPad;
    }
    embedded.push_back(ad::gather_rows(bound.embed, ids));
  }
  return forward_embedded(bound, regions, embedded, lengths);
}

VqaModel::Output VqaModel::forward_soft(const Bound& bound, const Var& regions,
                                        const std::vector<Var>& soft_steps,
                                        std::span<const int> lengths) const {
  std::vector<Var> embedded;
  embedded.reserve(soft_steps.size());
  for (const Var& s : soft_steps) {
    if (s.cols() != config_.question_vocab) throw ShapeError("soft token rows do not match vocabulary");
    embedded.push_back(ad::matmul(s, bound.embed));
  }
  return forward_embedded(bound, regions, embedded, lengths);
}

VqaModel::Output VqaModel::forward_embedded(const Bound& bound, const Var& regions,
                                            const std::vector<Var>& steps,
                                            std::span<const int> lengths) const {
  if (steps.empty()) throw ShapeError("question has no steps");
  const Eigen::Index batch = steps.front().rows();
  const Eigen::Index r = config_.regions;
  if (regions.cols() != config_.feature_dim || regions.rows() != batch * r) {
    throw ShapeError("image features " + std::to_string(regions.rows()) + "x" + std::to_string(regions.cols()) +
                     " do not match model (" + std::to_string(batch * r) + "x" +
                     std::to_string(config_.feature_dim) + ")");
  }
  ad::Tape& tape = *regions.tape();
  auto state = bound.lstm.zero_state(tape, batch);
  for (std::size_t t = 0; t < steps.size(); ++t) {
    state = bound.lstm.masked_step(steps[t], state, nn::step_mask(lengths, static_cast<int>(t)));
  }
  const Var q = state.h;

  const Var proj_regions = ad::matmul(regions, bound.att_regions);
  const Var proj_question = ad::add_row(ad::matmul(q, bound.att_question), bound.att_bias);
  const Var mixed = ad::tanh(ad::add(proj_regions, ad::repeat_rows(proj_question, r)));
  const Var scores = ad::reshape(ad::matmul(mixed, bound.att_score), batch, r);
  const Var attention = ad::softmax_rows(scores);
  const Var context = ad::pool_regions(attention, regions);

  const std::vector<Var> joint{context, q};
  const Var hidden = ad::relu(bound.mlp_hidden(ad::concat_cols(joint)));
  return {bound.mlp_out(hidden), attention};
}

void VqaModel::check_features(const Matrix& features) const {
  if (features.rows() != config_.regions || features.cols() != config_.feature_dim) {
    throw ShapeError("image features " + std::to_string(features.rows()) + "x" +
                     std::to_string(features.cols()) + " do not match model (" +
                     std::to_string(config_.regions) + "x" + std::to_string(config_.feature_dim) + ")");
  }
}

namespace {

Prediction to_prediction(const VqaModel::Output& out) {
  Prediction p;
  const Matrix probs = ad::softmax_rows(out.logits).value();
  p.answer.probs = probs.row(0).transpose();
  p.attention.weights = out.attention.value().row(0).transpose();
  return p;
}

}  // namespace

Prediction VqaModel::predict(const Matrix& features, const std::vector<int>& tokens) const {
  check_features(features);
  world::validate_question(tokens, config_.question_vocab, config_.max_length);
  ad::Tape tape;
  const Bound b = bind_frozen(tape);
  const Var regions = tape.constant(features);
  return to_prediction(forward_tokens(b, regions, {tokens}));
}

Prediction VqaModel::predict_soft(const Matrix& features, const Matrix& rows) const {
  check_features(features);
  if (rows.rows() < 1 || rows.cols() != config_.question_vocab) {
    throw ShapeError("soft question must be L x |V| with L >= 1");
  }
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    if (rows.row(i).minCoeff() < 0.0 || std::abs(rows.row(i).sum() - 1.0) > 1e-6) {
      throw DomainError("soft token row " + std::to_string(i) + " is not a distribution");
    }
  }
  ad::Tape tape;
  const Bound b = bind_frozen(tape);
  const Var regions = tape.constant(features);
  std::vector<Var> steps;
  for (Eigen::Index i = 0; i < rows.rows(); ++i) steps.push_back(tape.constant(rows.row(i)));
  const int len = static_cast<int>(rows.rows());
  return to_prediction(forward_soft(b, regions, steps, std::span<const int>(&len, 1)));
}

Matrix VqaModel::predict_batch(const std::vector<const Matrix*>& features,
                               const std::vector<std::vector<int>>& tokens) const {
  if (features.size() != tokens.size()) throw ShapeError("features/questions count mismatch");
  for (const Matrix* f : features) check_features(*f);
  ad::Tape tape;
  const Bound b = bind_frozen(tape);
  const Var regions = tape.constant(stack_regions(features));
  return ad::softmax_rows(forward_tokens(b, regions, tokens).logits).value();
}

void VqaModel::save(const std::filesystem::path& dir) const {
  json manifest = {{"kind", "vqa"},
                   {"frozen", frozen_},
                   {"parameter_digest", digest()},
                   {"config",
                    {{"question_vocab", config_.question_vocab},
                     {"answer_vocab", config_.answer_vocab},
                     {"feature_dim", config_.feature_dim},
                     {"regions", config_.regions},
                     {"max_length", config_.max_length},
                     {"embed_dim", config_.embed_dim},
                     {"hidden", config_.hidden},
                     {"attention_dim", config_.attention_dim},
                     {"mlp_hidden", config_.mlp_hidden}}}};
  const auto ps = parameters();
  checkpoint::save(dir, std::move(manifest), checkpoint::snapshot(ps));
}

VqaModel VqaModel::load(const std::filesystem::path& dir) {
  auto contents = checkpoint::load(dir);
  const json& m = contents.manifest;
  if (m.value("kind", std::string{}) != "vqa") throw ConfigError(dir.string() + " is not a VQA checkpoint");
  VqaConfig c;
  try {
    const json& j = m.at("config");
    c.question_vocab = j.at("question_vocab").get<int>();
    c.answer_vocab = j.at("answer_vocab").get<int>();
    c.feature_dim = j.at("feature_dim").get<int>();
    c.regions = j.at("regions").get<int>();
    c.max_length = j.at("max_length").get<int>();
    c.embed_dim = j.at("embed_dim").get<int>();
    c.hidden = j.at("hidden").get<int>();
    c.attention_dim = j.at("attention_dim").get<int>();
    c.mlp_hidden = j.at("mlp_hidden").get<int>();
  } catch (const json::exception& e) {
    throw CorruptionError("VQA manifest incomplete: " + std::string(e.what()));
  }
  VqaModel model(c, 0);
  checkpoint::assign(model.parameters(), contents.tensors);
  if (model.digest() != m.value("parameter_digest", std::string{})) {
    throw CorruptionError("parameter digest mismatch in " + dir.string());
  }
  if (m.value("frozen", false)) model.freeze();
  return model;
}

Matrix stack_regions(const std::vector<const Matrix*>& features) {
  if (features.empty()) throw ShapeError("empty batch");
  const Eigen::Index r = features.front()->rows();
  Matrix out(r * static_cast<Eigen::Index>(features.size()), features.front()->cols());
  for (std::size_t b = 0; b < features.size(); ++b) {
    if (features[b]->rows() != r || features[b]->cols() != out.cols()) {
      throw ShapeError("inconsistent feature shapes in batch");
    }
    out.middleRows(static_cast<Eigen::Index>(b) * r, r) = *features[b];
  }
  return out;
}

VqaConfig default_vqa_config(const world::Dataset& dataset) {
  VqaConfig c;
  c.question_vocab = dataset.vocab.question.size();
  c.answer_vocab = dataset.vocab.answer.size();
  c.regions = dataset.config.grid_size * dataset.config.grid_size;
  return c;
}

VqaTrainReport train_vqa(VqaModel& model, const world::Dataset& dataset, const VqaTrainConfig& config) {
  if (model.frozen()) throw ContractError("cannot train a frozen VQA model");
  const auto train = dataset.questions_in(world::Split::train);
  if (train.empty()) throw ConfigError("dataset has no training questions");
  if (config.batch_size < 1 || config.iterations < 0) throw ConfigError("bad VQA training config");

  std::vector<Matrix> features;
  features.reserve(dataset.scenes.size());
  for (const auto& s : dataset.scenes) features.push_back(world::scene_to_features(s));

  const int answers = model.config().answer_vocab;
  nn::Adam adam(nn::Adam::Options{.learning_rate = config.learning_rate});
  Rng rng(config.seed);
  std::uniform_int_distribution<std::size_t> pick(0, train.size() - 1);
  auto params = model.parameters();

  VqaTrainReport report;
  for (int it = 0; it < config.iterations; ++it) {
    std::vector<const Matrix*> feats;
    std::vector<std::vector<int>> tokens;
    Matrix labels(config.batch_size, answers);
    for (int b = 0; b < config.batch_size; ++b) {
      const world::Question* q = train[pick(rng)];
      feats.push_back(&features[static_cast<std::size_t>(q->scene_id)]);
      tokens.push_back(q->tokens);
      labels.row(b) = Eigen::Map<const Eigen::RowVectorXd>(q->label.data(), answers);
    }
    ad::Tape tape;
    const auto bound = model.bind_trainable(tape);
    const Var regions = tape.constant(stack_regions(feats));
    const auto out = model.forward_tokens(bound, regions, tokens);
    const Var loss = ad::scale(ad::sum_all(ad::mul(tape.constant(labels), ad::log_softmax_rows(out.logits))),
                               -1.0 / config.batch_size);
    const double value = loss.item();
    if (!std::isfinite(value)) throw TrainingError("VQA loss is not finite", it);
    tape.backward(loss);
    adam.step(params);
    report.loss_log.push_back(value);
    report.final_loss = value;
  }

  const auto held = dataset.questions_in(world::Split::eval);
  double kl = 0.0;
  const std::size_t chunk = 256;
  for (std::size_t start = 0; start < held.size(); start += chunk) {
    const std::size_t end = std::min(held.size(), start + chunk);
    std::vector<const Matrix*> feats;
    std::vector<std::vector<int>> tokens;
    for (std::size_t i = start; i < end; ++i) {
      feats.push_back(&features[static_cast<std::size_t>(held[i]->scene_id)]);
      tokens.push_back(held[i]->tokens);
    }
    const Matrix probs = model.predict_batch(feats, tokens);
    for (std::size_t i = start; i < end; ++i) {
      const auto& label = held[i]->label;
      for (int a = 0; a < answers; ++a) {
        const double p = label[static_cast<std::size_t>(a)];
        if (p > 0.0) kl += p * (std::log(p) - std::log(probs(static_cast<Eigen::Index>(i - start), a)));
      }
    }
  }
  report.heldout_kl = held.empty() ? 0.0 : kl / static_cast<double>(held.size());
  return report;
}

}  // namespace vqr::vqa

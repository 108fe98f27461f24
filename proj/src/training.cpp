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

#include "vqr/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "vqr/checkpoint.hpp"
#include "vqr/error.hpp"

namespace vqr::training {

using nlohmann::json;
using rephraser::RephraserModel;

std::string_view to_string(Regime r) {
  switch (r) {
    case Regime::pretrain:
      return "pretrain";
    case Regime::scratch:
      return "scratch";
    case Regime::finetune:
      return "finetune";
  }
  return "";
}

std::string_view to_string(Strategy s) { return s == Strategy::noise ? "noise" : "sampling"; }

Regime parse_regime(std::string_view s) {
  if (s == "pretrain") return Regime::pretrain;
  if (s == "scratch") return Regime::scratch;
  if (s == "finetune") return Regime::finetune;
  throw ConfigError("unknown regime '" + std::string(s) + "'");
}

Strategy parse_strategy(std::string_view s) {
  if (s == "noise") return Strategy::noise;
  if (s == "sampling") return Strategy::sampling;
  throw ConfigError("unknown strategy '" + std::string(s) + "'");
}

FeatureCache::FeatureCache(const world::Dataset& dataset) {
  features_.reserve(dataset.scenes.size());
  for (const auto& s : dataset.scenes) features_.push_back(world::scene_to_features(s));
}

const Matrix& FeatureCache::operator[](int scene_id) const {
  if (scene_id < 0 || scene_id >= static_cast<int>(features_.size())) {
    throw DomainError("unknown scene_id " + std::to_string(scene_id));
  }
  return features_[static_cast<std::size_t>(scene_id)];
}

ImageQuestionIndex::ImageQuestionIndex(const world::Dataset& dataset) {
  for (const auto& q : dataset.questions) add(q.scene_id, &q);
}

void ImageQuestionIndex::add(int scene_id, const world::Question* q) { by_scene_[scene_id].push_back(q); }

const std::vector<const world::Question*>& ImageQuestionIndex::questions(int scene_id) const {
  auto it = by_scene_.find(scene_id);
  if (it == by_scene_.end()) throw DomainError("no questions for scene_id " + std::to_string(scene_id));
  return it->second;
}

double question_entropy(const vqa::VqaModel& vqa, const Matrix& features, const std::vector<int>& tokens) {
  return vqa::entropy(vqa.predict(features, tokens).answer);
}

std::vector<RephraseSample> source_samples(const world::Dataset& dataset, world::Split split,
                                           const vqa::VqaModel& vqa, const FeatureCache& features) {
  std::vector<RephraseSample> out;
  for (const world::Question* q : dataset.questions_in(split)) {
    RephraseSample s;
    s.scene_id = q->scene_id;
    s.question_id = q->question_id;
    s.source = q->tokens;
    s.source_entropy = question_entropy(vqa, features[q->scene_id], q->tokens);
    s.target = s.source;
    s.target_entropy = s.source_entropy;
    out.push_back(std::move(s));
  }
  return out;
}

RephraseSample make_noise_target(RephraseSample sample, double epsilon, double max_entropy) {
  sample.target = sample.source;
  sample.target_entropy = std::clamp(sample.source_entropy + epsilon, 0.0, max_entropy);
  return sample;
}

RephraseSample make_noise_target(RephraseSample sample, Rng& rng, double noise_bound, double max_entropy) {
  const double eps = uniform(rng, -noise_bound, noise_bound);
  return make_noise_target(std::move(sample), eps, max_entropy);
}

namespace {

const world::Question* draw_other_question(const RephraseSample& sample, const ImageQuestionIndex& index,
                                           Rng& rng) {
  std::vector<const world::Question*> others;
  for (const world::Question* q : index.questions(sample.scene_id)) {
    if (q->tokens != sample.source) others.push_back(q);
  }
  if (others.empty()) {
    throw StrategyError("scene " + std::to_string(sample.scene_id) +
                        " has no question other than the source; sampling needs at least two");
  }
  return others[std::uniform_int_distribution<std::size_t>(0, others.size() - 1)(rng)];
}

}  // namespace

RephraseSample make_sampling_target(RephraseSample sample, const ImageQuestionIndex& index,
                                    const vqa::VqaModel& vqa, const FeatureCache& features, Rng& rng) {
  const world::Question* q = draw_other_question(sample, index, rng);
  sample.target = q->tokens;
  sample.target_entropy = question_entropy(vqa, features[sample.scene_id], q->tokens);
  return sample;
}

TrainRegimeConfig TrainRegimeConfig::full_scale() {
  TrainRegimeConfig c;
  c.batch_size = 64;
  c.iterations = 44000;
  c.learning_rate = 5e-4;
  c.hidden = 512;
  c.tau = 0.01;
  return c;
}

TrainRegimeConfig normalized(TrainRegimeConfig c) {
  if (c.regime == Regime::pretrain) c.lambda = 0.0;
  if (!(c.lambda >= 0.0)) throw ConfigError("lambda must be >= 0");
  if (!(c.tau > 0.0)) throw ConfigError("tau must be > 0");
  if (c.batch_size < 1 || c.iterations < 0 || !(c.learning_rate > 0.0)) {
    throw ConfigError("batch_size, iterations and learning_rate must be positive");
  }
  if (!(c.noise_bound >= 0.0)) throw ConfigError("noise_bound must be >= 0");
  if (c.regime == Regime::finetune && c.pretrain_checkpoint.empty()) {
    throw ConfigError("finetune requires a pretrain checkpoint");
  }
  return c;
}

namespace {

rephraser::RephraserConfig model_config(const world::Dataset& d, const TrainRegimeConfig& c) {
  rephraser::RephraserConfig m;
  m.question_vocab = d.vocab.question.size();
  m.answer_vocab = d.vocab.answer.size();
  m.regions = d.config.grid_size * d.config.grid_size;
  m.max_length = c.max_length;
  m.embed_dim = c.embed_dim;
  m.hidden = c.hidden;
  m.use_attention = c.use_attention;
  return m;
}

json config_json(const TrainRegimeConfig& c) {
  return {{"regime", to_string(c.regime)},
          {"strategy", to_string(c.strategy)},
          {"lambda", c.lambda},
          {"batch_size", c.batch_size},
          {"learning_rate", c.learning_rate},
          {"iterations", c.iterations},
          {"seed", c.seed},
          {"noise_bound", c.noise_bound},
          {"tau", c.tau},
          {"straight_through", c.straight_through},
          {"clip_norm", c.clip_norm},
          {"pretrain_checkpoint", c.pretrain_checkpoint.string()},
          {"hidden", c.hidden},
          {"embed_dim", c.embed_dim},
          {"max_length", c.max_length},
          {"use_attention", c.use_attention}};
}

TrainRegimeConfig config_from_json(const json& j) {
  TrainRegimeConfig c;
  c.regime = parse_regime(j.at("regime").get<std::string>());
  c.strategy = parse_strategy(j.at("strategy").get<std::string>());
  c.lambda = j.at("lambda").get<double>();
  c.batch_size = j.at("batch_size").get<int>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.iterations = j.at("iterations").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.noise_bound = j.at("noise_bound").get<double>();
  c.tau = j.at("tau").get<double>();
  c.straight_through = j.at("straight_through").get<bool>();
  c.clip_norm = j.at("clip_norm").get<double>();
  c.pretrain_checkpoint = j.at("pretrain_checkpoint").get<std::string>();
  c.hidden = j.at("hidden").get<int>();
  c.embed_dim = j.at("embed_dim").get<int>();
  c.max_length = j.at("max_length").get<int>();
  c.use_attention = j.at("use_attention").get<bool>();
  return c;
}

}  // namespace

TrainedRephraser train(const world::Dataset& dataset, const vqa::VqaModel& vqa, const TrainRegimeConfig& raw) {
  const TrainRegimeConfig config = normalized(raw);
  if (!vqa.frozen()) throw ContractError("rephraser training requires a frozen VQA model");
  const std::string vqa_digest = vqa.digest();

  const FeatureCache features(dataset);
  const auto pool = source_samples(dataset, world::Split::train, vqa, features);
  if (pool.empty()) throw ConfigError("dataset has no training questions");

  ImageQuestionIndex index;
  std::unordered_map<int, double> target_entropy;
  for (const world::Question* q : dataset.questions_in(world::Split::train)) index.add(q->scene_id, q);
  for (const auto& s : pool) target_entropy[s.question_id] = s.source_entropy;

  TrainedRephraser out;
  out.config = config;
  if (config.regime == Regime::finetune) {
    TrainedRephraser warm = load_rephraser(config.pretrain_checkpoint);
    const auto expected = model_config(dataset, config);
    const auto& got = warm.model.config();
    if (got.hidden != expected.hidden || got.embed_dim != expected.embed_dim ||
        got.question_vocab != expected.question_vocab || got.use_attention != expected.use_attention ||
        got.max_length != expected.max_length) {
      throw ConfigError("pretrain checkpoint architecture does not match the finetune configuration");
    }
    out.model = std::move(warm.model);
    out.optimizer = std::move(warm.optimizer);
    out.optimizer.set_learning_rate(config.learning_rate);
  } else {
    out.model = RephraserModel(model_config(dataset, config), derive_seed(config.seed, "init"));
    out.optimizer = nn::Adam(nn::Adam::Options{.learning_rate = config.learning_rate, .clip_norm = config.clip_norm});
  }

  const double max_entropy = out.model.config().max_entropy();
  Rng batch_rng(derive_seed(config.seed, "batches"));
  Rng target_rng(derive_seed(config.seed, "targets"));
  Rng gumbel_rng(derive_seed(config.seed, "gumbel"));
  const auto noise = rephraser::gumbel_source(gumbel_rng);
  std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
  auto params = out.model.parameters();

  for (int it = 0; it < config.iterations; ++it) {
    std::vector<RephraseSample> batch;
    std::vector<const Matrix*> feats;
    for (int b = 0; b < config.batch_size; ++b) {
      RephraseSample s = pool[pick(batch_rng)];
      if (config.strategy == Strategy::noise) {
        s = make_noise_target(std::move(s), target_rng, config.noise_bound, max_entropy);
      } else {
        const world::Question* q = draw_other_question(s, index, target_rng);
        s.target = q->tokens;
        s.target_entropy = target_entropy.at(q->question_id);
      }
      feats.push_back(&features[s.scene_id]);
      batch.push_back(std::move(s));
    }
    rephraser::EncoderInput input{vqa::stack_regions(feats), {}, {}};
    std::vector<std::vector<int>> targets;
    for (const auto& s : batch) {
      input.sources.push_back(s.source);
      input.target_entropy.push_back(s.target_entropy);
      targets.push_back(s.target);
    }

    ad::Tape tape;
    const auto bound = out.model.bind(tape, true);
    const auto enc = out.model.encode(bound, tape, input, vqa);
    const ad::Var l_vqg = rephraser::vqg_loss(out.model.decode_teacher_forced(bound, enc, targets), targets);

    LossRecord rec;
    rec.iteration = it;
    rec.l_vqg = l_vqg.item();
    ad::Var total = l_vqg;
    if (config.lambda > 0.0) {
      const auto seq = out.model.decode_gumbel(bound, enc, config.tau, config.straight_through, noise);
      ++out.gumbel_passes;
      const ad::Var eg = rephraser::generated_entropy(vqa, vqa.bind_frozen(tape), enc, seq);
      const ad::Var l_ent = rephraser::entropy_loss(input.target_entropy, eg);
      rec.l_ent = l_ent.item();
      total = rephraser::total_loss(l_vqg, l_ent, config.lambda);
    }
    rec.total = total.item();
    if (!std::isfinite(rec.total)) throw TrainingError("rephraser loss is not finite", it);
    tape.backward(total);
    out.optimizer.step(params);
    out.log.push_back(rec);
  }

  if (vqa.digest() != vqa_digest) throw ContractError("frozen VQA parameters changed during training");
  return out;
}

void write_loss_log(const std::vector<LossRecord>& log, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << "iteration,l_vqg,l_ent,total\n" << std::setprecision(17);
  for (const auto& r : log) {
    out << r.iteration << ',' << r.l_vqg << ',';
    if (r.l_ent) out << *r.l_ent;
    out << ',' << r.total << '\n';
  }
}

void save_rephraser(const TrainedRephraser& trained, const std::filesystem::path& dir) {
  const auto& m = trained.model.config();
  json manifest = {{"kind", "rephraser"},
                   {"training", config_json(trained.config)},
                   {"lambda", trained.config.lambda},
                   {"tau", trained.config.tau},
                   {"use_attention", m.use_attention},
                   {"regime", to_string(trained.config.regime)},
                   {"strategy", to_string(trained.config.strategy)},
                   {"parameter_digest", trained.model.digest()},
                   {"gumbel_passes", trained.gumbel_passes},
                   {"model",
                    {{"question_vocab", m.question_vocab},
                     {"answer_vocab", m.answer_vocab},
                     {"feature_dim", m.feature_dim},
                     {"regions", m.regions},
                     {"max_length", m.max_length},
                     {"embed_dim", m.embed_dim},
                     {"hidden", m.hidden},
                     {"use_attention", m.use_attention}}},
                   {"optimizer",
                    {{"steps", trained.optimizer.steps()},
                     {"learning_rate", trained.optimizer.options().learning_rate},
                     {"clip_norm", trained.optimizer.options().clip_norm}}}};
  const auto ps = trained.model.parameters();
  auto tensors = checkpoint::snapshot(ps);
  for (auto& t : trained.optimizer.export_state()) tensors.push_back(std::move(t));
  checkpoint::save(dir, std::move(manifest), tensors);
  write_loss_log(trained.log, dir / "loss.csv");
}

TrainedRephraser load_rephraser(const std::filesystem::path& dir) {
  auto contents = checkpoint::load(dir);
  const json& m = contents.manifest;
  if (m.value("kind", std::string{}) != "rephraser") {
    throw ConfigError(dir.string() + " is not a rephraser checkpoint");
  }
  TrainedRephraser out;
  try {
    out.config = config_from_json(m.at("training"));
    const json& mc = m.at("model");
    rephraser::RephraserConfig c;
    c.question_vocab = mc.at("question_vocab").get<int>();
    c.answer_vocab = mc.at("answer_vocab").get<int>();
    c.feature_dim = mc.at("feature_dim").get<int>();
    c.regions = mc.at("regions").get<int>();
    c.max_length = mc.at("max_length").get<int>();
    c.embed_dim = mc.at("embed_dim").get<int>();
    c.hidden = mc.at("hidden").get<int>();
    c.use_attention = mc.at("use_attention").get<bool>();
    out.model = RephraserModel(c, 0);
    out.gumbel_passes = m.value("gumbel_passes", 0L);
    const json& opt = m.at("optimizer");
    out.optimizer = nn::Adam(nn::Adam::Options{.learning_rate = opt.at("learning_rate").get<double>(),
                                               .clip_norm = opt.at("clip_norm").get<double>()});
    out.optimizer.import_state(opt.at("steps").get<std::int64_t>(), contents.tensors);
  } catch (const json::exception& e) {
    throw CorruptionError("rephraser manifest incomplete: " + std::string(e.what()));
  }
  out.model.restore(contents.tensors);
  if (out.model.digest() != m.value("parameter_digest", std::string{})) {
    throw CorruptionError("parameter digest mismatch in " + dir.string());
  }
  return out;
}

std::vector<RephraseSample> rephrase_batch(const RephraserModel& model, const vqa::VqaModel& vqa,
                                           const FeatureCache& features, std::vector<RephraseSample> samples,
                                           std::size_t chunk) {
  if (chunk == 0) chunk = 1;
  for (std::size_t start = 0; start < samples.size(); start += chunk) {
    const std::size_t end = std::min(samples.size(), start + chunk);
    std::vector<const Matrix*> feats;
    rephraser::EncoderInput input;
    for (std::size_t i = start; i < end; ++i) {
      feats.push_back(&features[samples[i].scene_id]);
      input.sources.push_back(samples[i].source);
      input.target_entropy.push_back(samples[i].target_entropy);
    }
    input.regions = vqa::stack_regions(feats);
    ad::Tape tape;
    const auto bound = model.bind_frozen(tape);
    const auto enc = model.encode(bound, tape, input, vqa);
    auto generated = model.decode_greedy(bound, enc);
    for (std::size_t i = start; i < end; ++i) {
      auto& s = samples[i];
      s.generated = std::move(generated[i - start]);
      s.generated_entropy = question_entropy(vqa, features[s.scene_id], *s.generated);
    }
  }
  return samples;
}

}  // namespace vqr::training

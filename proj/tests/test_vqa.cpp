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

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "vqr/error.hpp"
#include "vqr/vqa.hpp"

using namespace vqr;
using ad::Matrix;

namespace {

world::Dataset tiny_dataset() {
  world::WorldConfig c;
  c.train_scenes = 30;
  c.eval_scenes = 10;
  return world::generate_dataset(21, c);
}

std::filesystem::path temp_dir(const char* name) {
  auto dir = std::filesystem::temp_directory_path() / "vqr_tests" / name;
  std::filesystem::remove_all(dir);
  return dir;
}

}  // namespace

TEST_CASE("entropy of fixed distributions") {
  const std::vector<double> p{0.5, 0.25, 0.25};
  const double expected = -(0.5 * std::log(0.5) + 2 * 0.25 * std::log(0.25));
  CHECK(vqa::entropy(p) == doctest::Approx(expected).epsilon(1e-14));
  CHECK(vqa::entropy(p) == doctest::Approx(1.039721).epsilon(1e-6));
  for (int k : {2, 4, 16}) {
    std::vector<double> u(static_cast<std::size_t>(k), 1.0 / k);
    CHECK(std::abs(vqa::entropy(u) - std::log(k)) <= 1e-9);
  }
  std::vector<double> one_hot(16, 0.0);
  one_hot[3] = 1.0;
  CHECK(vqa::entropy(one_hot) == 0.0);
}

TEST_CASE("entropy bounds on random distributions") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 10000; ++i) {
    std::vector<double> p(16);
    double s = 0.0;
    for (auto& x : p) s += (x = std::pow(u(rng), 4));
    for (auto& x : p) x /= s;
    const double h = vqa::entropy(p);
    CHECK(h >= 0.0);
    CHECK(h <= std::log(16.0) + 1e-12);
  }
}

TEST_CASE("an untrained model predicts the uniform answer distribution") {
  const auto d = tiny_dataset();
  const vqa::VqaModel m(vqa::default_vqa_config(d), 1);
  const auto& q = d.questions.front();
  const auto p = m.predict(world::scene_to_features(d.scene(q.scene_id)), q.tokens);
  CHECK(p.answer.probs.size() == 16);
  CHECK(vqa::entropy(p.answer) == doctest::Approx(std::log(16.0)).epsilon(1e-12));
  CHECK(p.attention.weights.size() == 9);
  CHECK(p.attention.weights.sum() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("soft one-hot questions reproduce hard-token predictions") {
  const auto d = tiny_dataset();
  vqa::VqaModel m(vqa::default_vqa_config(d), 2);
  vqa::VqaTrainConfig tc;
  tc.iterations = 20;
  vqa::train_vqa(m, d, tc);
  m.freeze();
  const auto& q = d.questions[3];
  const auto f = world::scene_to_features(d.scene(q.scene_id));
  Matrix rows = Matrix::Zero(static_cast<Eigen::Index>(q.tokens.size()), d.vocab.question.size());
  for (std::size_t t = 0; t < q.tokens.size(); ++t) rows(static_cast<Eigen::Index>(t), q.tokens[t]) = 1.0;
  const auto hard = m.predict(f, q.tokens);
  const auto soft = m.predict_soft(f, rows);
  CHECK((hard.answer.probs - soft.answer.probs).cwiseAbs().maxCoeff() < 1e-12);
  rows(0, 0) = 0.5;
  CHECK_THROWS_AS(m.predict_soft(f, rows), DomainError);
}

TEST_CASE("batched prediction matches single predictions") {
  const auto d = tiny_dataset();
  const vqa::VqaModel m(vqa::default_vqa_config(d), 3);
  std::vector<ad::Matrix> feats;
  std::vector<std::vector<int>> toks;
  for (int i = 0; i < 6; ++i) {
    const auto& q = d.questions[static_cast<std::size_t>(i * 7)];
    feats.push_back(world::scene_to_features(d.scene(q.scene_id)));
    toks.push_back(q.tokens);
  }
  std::vector<const ad::Matrix*> ptrs;
  for (auto& f : feats) ptrs.push_back(&f);
  const auto batch = m.predict_batch(ptrs, toks);
  for (int i = 0; i < 6; ++i) {
    const auto single = m.predict(feats[static_cast<std::size_t>(i)], toks[static_cast<std::size_t>(i)]);
    CHECK((batch.row(i).transpose() - single.answer.probs).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("training reduces loss and freezing locks parameters") {
  const auto d = tiny_dataset();
  vqa::VqaModel m(vqa::default_vqa_config(d), 4);
  vqa::VqaTrainConfig tc;
  tc.iterations = 150;
  const auto r = vqa::train_vqa(m, d, tc);
  double head = 0.0, tail = 0.0;
  for (int i = 0; i < 20; ++i) {
    head += r.loss_log[static_cast<std::size_t>(i)];
    tail += r.loss_log[r.loss_log.size() - 1 - static_cast<std::size_t>(i)];
  }
  CHECK(tail < head);
  CHECK(std::isfinite(r.heldout_kl));
  m.freeze();
  CHECK(m.frozen_digest() == m.digest());
  ad::Tape tape;
  CHECK_THROWS_AS(m.bind_trainable(tape), ContractError);
  CHECK_THROWS_AS(vqa::train_vqa(m, d, tc), ContractError);
}

TEST_CASE("checkpoints round-trip and detect corruption") {
  const auto d = tiny_dataset();
  vqa::VqaModel m(vqa::default_vqa_config(d), 5);
  m.freeze();
  const auto dir = temp_dir("vqa_ckpt");
  m.save(dir);
  const auto back = vqa::VqaModel::load(dir);
  CHECK(back.digest() == m.digest());
  CHECK(back.frozen());
  {
    std::fstream f(dir / "tensors.bin", std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(200);
    f.put('\x7f');
  }
  CHECK_THROWS_AS(vqa::VqaModel::load(dir), CorruptionError);
  CHECK_THROWS_AS(vqa::VqaModel::load(temp_dir("vqa_missing")), ConfigError);
}

TEST_CASE("mismatched image features raise ShapeError") {
  const auto d = tiny_dataset();
  const vqa::VqaModel m(vqa::default_vqa_config(d), 6);
  CHECK_THROWS_AS(m.predict(Matrix::Zero(4, world::kFeatureDim), d.questions[0].tokens), ShapeError);
}

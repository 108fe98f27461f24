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

#include "mini_model.hpp"
#include "vqr/error.hpp"
#include "vqr/rephraser.hpp"

using namespace vqr;
using ad::Matrix;

TEST_CASE("vqg_loss is the mean negative log-likelihood of the targets") {
  // Two steps whose target probabilities are 0.5 and 0.2.
  Matrix logits(2, 3);
  logits << std::log(0.5), std::log(0.3), std::log(0.2), std::log(0.2), std::log(0.4), std::log(0.4);
  const double expected = -(std::log(0.5) + std::log(0.2)) / 2.0;
  CHECK(rephraser::vqg_loss(logits, {0, 0}) == doctest::Approx(expected).epsilon(1e-12));
  CHECK(rephraser::vqg_loss(logits, {0, 0}) == doctest::Approx(1.151293).epsilon(1e-6));
}

TEST_CASE("vqg_loss vanishes on probability-one targets") {
  for (int v : {3, 5, 8}) {
    for (int n : {1, 2, 6}) {
      Matrix logits = Matrix::Zero(n, v);
      std::vector<int> target;
      for (int t = 0; t < n; ++t) {
        target.push_back((t * 7 + 1) % v);
        logits(t, target.back()) = 1000.0;
      }
      CHECK(rephraser::vqg_loss(logits, target) == 0.0);
    }
  }
}

TEST_CASE("batched vqg_loss averages per-sample normalised likelihoods") {
  ad::Tape tape;
  Matrix s0(2, 3), s1(2, 3);
  s0 << 0.1, 0.2, 0.3, 1.0, -1.0, 0.5;
  s1 << -0.4, 0.9, 0.0, 0.2, 0.2, 0.2;
  const std::vector<std::vector<int>> targets{{2, 1}, {0}};
  const auto loss = rephraser::vqg_loss({tape.constant(s0), tape.constant(s1)}, targets);
  auto nll = [](const Eigen::RowVectorXd& row, int k) { return std::log(row.array().exp().sum()) - row(k); };
  const double a = (nll(s0.row(0), 2) + nll(s1.row(0), 1)) / 2.0;
  const double b = nll(s0.row(1), 0);
  CHECK(loss.item() == doctest::Approx((a + b) / 2.0).epsilon(1e-12));
  CHECK_THROWS_AS(rephraser::vqg_loss({tape.constant(s0)}, targets), ShapeError);
}

TEST_CASE("entropy loss and total loss identities") {
  CHECK(rephraser::entropy_loss(0.899, 4.601) == doctest::Approx(3.702 * 3.702).epsilon(1e-12));
  CHECK(rephraser::entropy_loss(0.899, 4.601) == doctest::Approx(13.704804).epsilon(1e-9));
  for (double a : {0.0, 0.3, 1.7, 2.77}) {
    for (double b : {0.0, 0.9, 2.2}) {
      CHECK(rephraser::entropy_loss(a, b) == rephraser::entropy_loss(b, a));
      CHECK(rephraser::total_loss(a, b, 0.0) == a);
      CHECK(rephraser::total_loss(a, b, 2.0) == doctest::Approx(a + 2.0 * b));
    }
  }
  CHECK_THROWS_AS(rephraser::total_loss(1.0, 1.0, -0.1), DomainError);
  CHECK(rephraser::entropy_loss(1.0, 1.0) == 0.0);
}

TEST_CASE("gumbel_softmax") {
  Eigen::VectorXd logits(4), noise(4);
  logits << 0.1, 2.0, -1.0, 0.5;
  noise << 0.0, 0.0, 0.0, 3.0;
  const auto y = rephraser::gumbel_softmax(logits, 1.0, noise);
  const Eigen::VectorXd z = (logits + noise).array().exp();
  CHECK((y - z / z.sum()).cwiseAbs().maxCoeff() < 1e-12);
  const auto sharp = rephraser::gumbel_softmax(logits, 0.01, noise);
  CHECK(sharp(3) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK_THROWS_AS(rephraser::gumbel_softmax(logits, 0.0, noise), DomainError);

  ad::Tape tape;
  const ad::Var hard = rephraser::gumbel_softmax(tape.constant(logits.transpose()), 1.0, noise.transpose(), true);
  CHECK(hard.value()(0, 3) == 1.0);
  CHECK(hard.value().sum() == 1.0);
}

TEST_CASE("encode enforces the frozen-VQA contract and the entropy range") {
  auto s = mini::make_setup();
  ad::Tape tape;
  const auto bound = s.model.bind(tape, false);
  auto bad = s.input;
  bad.target_entropy[0] = std::log(4.0) + 0.01;
  CHECK_THROWS_AS(s.model.encode(bound, tape, bad, s.vqa), DomainError);
  bad.target_entropy[0] = -0.01;
  CHECK_THROWS_AS(s.model.encode(bound, tape, bad, s.vqa), DomainError);
  vqa::VqaModel unfrozen(s.vqa.config(), 1);
  CHECK_THROWS_AS(s.model.encode(bound, tape, s.input, unfrozen), ContractError);
}

TEST_CASE("greedy decoding always yields valid questions") {
  auto s = mini::make_setup();
  ad::Tape tape;
  const auto bound = s.model.bind_frozen(tape);
  const auto enc = s.model.encode(bound, tape, s.input, s.vqa);
  for (const auto& q : s.model.decode_greedy(bound, enc)) {
    CHECK_NOTHROW(world::validate_question(q, 8, s.model.config().max_length));
  }
}

TEST_CASE("teacher forcing emits one step per target token") {
  auto s = mini::make_setup();
  ad::Tape tape;
  const auto bound = s.model.bind_frozen(tape);
  const auto enc = s.model.encode(bound, tape, s.input, s.vqa);
  const auto steps = s.model.decode_teacher_forced(bound, enc, s.targets);
  std::size_t longest = 0;
  for (const auto& t : s.targets) longest = std::max(longest, t.size());
  CHECK(steps.size() == longest);
  CHECK(steps[0].rows() == 3);
  CHECK(steps[0].cols() == 8);
}

TEST_CASE("gumbel decoding yields distributions and consistent lengths") {
  auto s = mini::make_setup();
  ad::Tape tape;
  const auto bound = s.model.bind_frozen(tape);
  const auto enc = s.model.encode(bound, tape, s.input, s.vqa);
  Rng rng(3);
  const auto seq = s.model.decode_gumbel(bound, enc, 0.5, false, rephraser::gumbel_source(rng));
  for (const auto& row : seq.rows) {
    for (Eigen::Index b = 0; b < row.rows(); ++b) CHECK(row.value().row(b).sum() == doctest::Approx(1.0));
  }
  for (int len : seq.lengths) {
    CHECK(len >= 1);
    CHECK(len <= s.model.config().max_length);
  }
  const auto eg = rephraser::generated_entropy(s.vqa, s.vqa.bind_frozen(tape), enc, seq);
  for (Eigen::Index b = 0; b < eg.rows(); ++b) {
    CHECK(eg.value()(b, 0) >= 0.0);
    CHECK(eg.value()(b, 0) <= std::log(4.0) + 1e-12);
  }
}

TEST_CASE("decoder projection gradients of the joint loss match finite differences") {
  auto s = mini::make_setup();
  const auto checks = mini::check_decoder_gradients(s, 20);
  for (const auto& c : checks) {
    INFO(c.parameter, "[", c.index, "] analytic ", c.analytic, " numeric ", c.numeric);
    CHECK(c.relative_error() < 1e-3);
  }
}

TEST_CASE("entropy gradients reach the decoder through the frozen VQA") {
  auto s = mini::make_setup();
  s.lambda = 1.0;
  auto with = mini::check_decoder_gradients(s, 5);
  s.lambda = 0.0;
  auto without = mini::check_decoder_gradients(s, 5);
  double diff = 0.0;
  for (std::size_t i = 0; i < with.size(); ++i) diff += std::abs(with[i].analytic - without[i].analytic);
  CHECK(diff > 0.0);
}

TEST_CASE("the frozen VQA digest is unchanged by rephraser backprop") {
  auto s = mini::make_setup();
  const auto before = s.vqa.digest();
  s.loss(true);
  CHECK(s.vqa.digest() == before);
  CHECK(s.vqa.frozen_digest() == before);
}

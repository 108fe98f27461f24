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

#include <cmath>
#include <functional>
#include <sstream>

#include "vqr/checkpoint.hpp"
#include "vqr/error.hpp"
#include "vqr/harness.hpp"
#include "vqr/metrics.hpp"
#include "vqr/random.hpp"
#include "vqr/rephraser.hpp"

namespace vqr::harness {

namespace {

struct Suite {
  std::vector<CheckResult> results;

  void check(const std::string& name, const std::function<std::string()>& body) {
    CheckResult r{name, false, {}};
    try {
      r.detail = body();
      r.passed = r.detail.empty();
    } catch (const std::exception& e) {
      r.detail = std::string("exception: ") + e.what();
    }
    results.push_back(std::move(r));
  }
};

std::string fail(const std::string& what, double got, double want) {
  std::ostringstream s;
  s.precision(12);
  s << what << ": got " << got << ", expected " << want;
  return s.str();
}

}  // namespace

std::vector<CheckResult> run_invariant_suite(std::uint64_t seed) {
  Suite suite;
  Rng rng(derive_seed(seed, "verify"));

  suite.check("entropy of uniform distributions", [] {
    for (int k : {2, 4, 16}) {
      std::vector<double> p(static_cast<std::size_t>(k), 1.0 / k);
      const double h = vqa::entropy(p);
      if (std::abs(h - std::log(k)) > 1e-9) return fail("K=" + std::to_string(k), h, std::log(k));
    }
    return std::string();
  });

  suite.check("entropy of one-hot distributions", [] {
    std::vector<double> p(16, 0.0);
    p[5] = 1.0;
    const double h = vqa::entropy(p);
    return h == 0.0 ? std::string() : fail("one-hot", h, 0.0);
  });

  suite.check("entropy bounds on random distributions", [&] {
    for (int i = 0; i < 1000; ++i) {
      std::vector<double> p(16);
      double s = 0.0;
      for (auto& x : p) s += (x = uniform(rng, 0.0, 1.0));
      for (auto& x : p) x /= s;
      const double h = vqa::entropy(p);
      if (h < 0.0 || h > std::log(16.0) + 1e-12) return fail("entropy", h, std::log(16.0));
    }
    return std::string();
  });

  suite.check("delta filter exclusion and monotone counts", [&] {
    std::vector<RephraseSample> eval(300);
    for (auto& s : eval) s.source_entropy = uniform(rng, 0.0, std::log(16.0));
    const auto grid = desk_delta_grid(16);
    std::size_t prev = 0;
    for (double d : grid) {
      const auto kept = build_delta_samples(eval, d, std::log(16.0));
      std::size_t expected = 0;
      for (const auto& s : eval) expected += s.source_entropy + d >= 0.0 ? 1 : 0;
      if (kept.size() != expected) return fail("retained count", double(kept.size()), double(expected));
      if (kept.size() < prev) return std::string("retained count decreased with delta");
      if (d >= 0.0 && kept.size() != eval.size()) return std::string("nonnegative delta dropped samples");
      prev = kept.size();
    }
    return std::string();
  });

  suite.check("loss identities", [] {
    if (rephraser::total_loss(1.25, 3.0, 0.0) != 1.25) return std::string("lambda = 0 does not reduce to L_VQG");
    if (rephraser::entropy_loss(0.3, 2.1) != rephraser::entropy_loss(2.1, 0.3)) {
      return std::string("entropy loss is not symmetric");
    }
    ad::Matrix logits = ad::Matrix::Zero(3, 6);
    const std::vector<int> target{4, 1, 2};
    for (int t = 0; t < 3; ++t) logits(t, target[static_cast<std::size_t>(t)]) = 1000.0;
    const double l = rephraser::vqg_loss(logits, target);
    return l == 0.0 ? std::string() : fail("vqg loss on certain targets", l, 0.0);
  });

  suite.check("similarity metrics on identical and disjoint inputs", [] {
    const metrics::Tokens a{5, 6, 7, 8, 9}, b{10, 11, 12};
    if (std::abs(metrics::bleu4(a, {a}) - 1.0) > 1e-12) return std::string("bleu4 identity");
    if (metrics::rouge_l(a, a) != 1.0) return std::string("rouge_l identity");
    if (std::abs(metrics::meteor_lite(a, a) - 0.996) > 1e-12) return fail("meteor_lite n=5", metrics::meteor_lite(a, a), 0.996);
    if (metrics::bleu4(a, {b}) > 1e-6) return std::string("bleu4 disjoint");
    if (metrics::rouge_l(a, b) != 0.0 || metrics::meteor_lite(a, b) != 0.0) return std::string("disjoint scores");
    if (metrics::diversity({a, a, b}) != 2) return std::string("diversity");
    return std::string();
  });

  suite.check("dataset generation determinism and round trip", [&] {
    world::WorldConfig wc;
    wc.train_scenes = 20;
    wc.eval_scenes = 5;
    const auto d1 = world::generate_dataset(seed, wc);
    const auto d2 = world::generate_dataset(seed, wc);
    const auto text = world::serialize_dataset(d1);
    if (text != world::serialize_dataset(d2)) return std::string("generation is not deterministic");
    if (!(world::parse_dataset(text) == d1)) return std::string("serialization round trip differs");
    return std::string();
  });

  suite.check("checkpoint archive round trip", [&] {
    ad::Parameter p{"w", ad::Matrix::Random(3, 4), ad::Matrix::Zero(3, 4)};
    const std::vector<checkpoint::NamedTensor> t{{p.name, p.value}};
    const auto back = checkpoint::decode_archive(checkpoint::encode_archive(t));
    if (back.size() != 1 || back[0].first != "w" || back[0].second != p.value) {
      return std::string("archive round trip differs");
    }
    return std::string();
  });

  suite.check("gumbel-softmax rows are distributions", [&] {
    Eigen::VectorXd logits(8), noise(8);
    for (int i = 0; i < 8; ++i) {
      logits[i] = uniform(rng, -3.0, 3.0);
      noise[i] = uniform(rng, -1.0, 1.0);
    }
    const auto y = rephraser::gumbel_softmax(logits, 0.5, noise);
    if (std::abs(y.sum() - 1.0) > 1e-12 || y.minCoeff() < 0.0) return std::string("not a distribution");
    return std::string();
  });

  return suite.results;
}

}  // namespace vqr::harness

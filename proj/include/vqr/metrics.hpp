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

// Entropy-error statistics and token-level similarity metrics between
// generated and source questions.

#include <cstddef>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace vqr::metrics {

using Tokens = std::vector<int>;

inline constexpr double kBleuEpsilon = 1e-9;
inline constexpr double kRougeBeta = 1.2;

struct ErrorStats {
  double mean = 0.0;
  double std = 0.0;  // population standard deviation
};

// Statistics of |E_T - E_G| over (E_T, E_G) pairs. Throws DomainError when
// empty.
ErrorStats entropy_error_stats(const std::vector<std::pair<double, double>>& pairs);

// Sentence BLEU-4: geometric mean of clipped 1..4-gram precisions times the
// brevity penalty against the closest reference length. A zero clipped count
// is replaced by kBleuEpsilon. Throws DomainError for an empty candidate or
// reference list.
double bleu4(const Tokens& candidate, const std::vector<Tokens>& references);

// LCS F-measure with beta = kRougeBeta. Throws DomainError on empty input.
double rouge_l(const Tokens& candidate, const Tokens& reference);

struct CiderDocument {
  Tokens candidate;
  std::vector<Tokens> references;
};

// Mean over documents of 10 * mean_n mean_ref cos(tfidf_n(cand), tfidf_n(ref))
// for n = 1..4, with idf = ln(N / max(1, df)) and df counted over reference
// sets. Throws DegenerateCorpusError for fewer than two documents.
double cider(const std::vector<CiderDocument>& corpus);
// Per-document scores (same definition, not averaged).
std::vector<double> cider_scores(const std::vector<CiderDocument>& corpus);

struct MeteorAlignment {
  int matches = 0;
  int chunks = 0;
};

// Exact-match alignment with the most matches and, among those, the fewest
// chunks.
MeteorAlignment meteor_align(const Tokens& candidate, const Tokens& reference);

// F_mean = 10PR / (R + 9P), penalty = 0.5 (chunks / matches)^3,
// score = F_mean (1 - penalty); 0 without matches. Throws DomainError on
// empty input.
double meteor_lite(const Tokens& candidate, const Tokens& reference);

// Number of distinct token sequences.
std::size_t diversity(const std::vector<Tokens>& questions);

struct EvalRecord {
  double target_entropy = 0.0;
  double generated_entropy = 0.0;
  Tokens source;     // reference, without the end token
  Tokens generated;  // candidate, without the end token
};

struct MetricsReport {
  double mean_abs_entropy_error = 0.0;
  double std_abs_entropy_error = 0.0;
  double bleu4 = 0.0;
  double cider = 0.0;
  double meteor_lite = 0.0;
  double rouge_l = 0.0;
  std::size_t diversity = 0;
  std::size_t n_samples = 0;
};

// Averages every similarity metric over the records (generated against
// source). CIDEr is 0 for fewer than two records. Throws DomainError when
// empty.
MetricsReport evaluate(const std::vector<EvalRecord>& records);

// Metric parameters and deviations from the reference implementations.
nlohmann::json metric_config();
nlohmann::json to_json(const MetricsReport& report);

}  // namespace vqr::metrics

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

#include "vqr/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "vqr/error.hpp"

namespace vqr::metrics {

namespace {

using NgramCounts = std::map<Tokens, int>;

NgramCounts ngrams(const Tokens& t, std::size_t n) {
  NgramCounts out;
  for (std::size_t i = 0; i + n <= t.size(); ++i) ++out[Tokens(t.begin() + i, t.begin() + i + n)];
  return out;
}

void require_nonempty(const Tokens& t, const char* what) {
  if (t.empty()) throw DomainError(std::string(what) + " must not be empty");
}

}  // namespace

ErrorStats entropy_error_stats(const std::vector<std::pair<double, double>>& pairs) {
  if (pairs.empty()) throw DomainError("entropy_error_stats of an empty list");
  const double n = static_cast<double>(pairs.size());
  double sum = 0.0;
  for (const auto& [t, g] : pairs) sum += std::abs(t - g);
  const double mean = sum / n;
  double var = 0.0;
  for (const auto& [t, g] : pairs) var += (std::abs(t - g) - mean) * (std::abs(t - g) - mean);
  return {mean, std::sqrt(var / n)};
}

double bleu4(const Tokens& candidate, const std::vector<Tokens>& references) {
  require_nonempty(candidate, "candidate");
  if (references.empty()) throw DomainError("bleu4 needs at least one reference");
  double log_sum = 0.0;
  for (std::size_t n = 1; n <= 4; ++n) {
    const auto cand = ngrams(candidate, n);
    NgramCounts max_ref;
    for (const auto& r : references) {
      for (const auto& [g, c] : ngrams(r, n)) max_ref[g] = std::max(max_ref[g], c);
    }
    int clipped = 0, total = 0;
    for (const auto& [g, c] : cand) {
      total += c;
      auto it = max_ref.find(g);
      if (it != max_ref.end()) clipped += std::min(c, it->second);
    }
    const double num = clipped == 0 ? kBleuEpsilon : clipped;
    log_sum += 0.25 * std::log(num / std::max(total, 1));
  }
  const double c = static_cast<double>(candidate.size());
  double r = static_cast<double>(references.front().size());
  for (const auto& ref : references) {
    const double len = static_cast<double>(ref.size());
    if (std::abs(len - c) < std::abs(r - c) || (std::abs(len - c) == std::abs(r - c) && len < r)) r = len;
  }
  const double bp = c > r ? 1.0 : std::exp(1.0 - r / c);
  return bp * std::exp(log_sum);
}

double rouge_l(const Tokens& candidate, const Tokens& reference) {
  require_nonempty(candidate, "candidate");
  require_nonempty(reference, "reference");
  std::vector<int> prev(reference.size() + 1, 0), cur(reference.size() + 1, 0);
  for (int c : candidate) {
    for (std::size_t j = 1; j <= reference.size(); ++j) {
      cur[j] = c == reference[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  const double lcs = prev.back();
  if (lcs == 0) return 0.0;
  const double p = lcs / static_cast<double>(candidate.size());
  const double r = lcs / static_cast<double>(reference.size());
  const double b2 = kRougeBeta * kRougeBeta;
  return (1.0 + b2) * r * p / (r + b2 * p);
}

std::vector<double> cider_scores(const std::vector<CiderDocument>& corpus) {
  if (corpus.size() < 2) throw DegenerateCorpusError("CIDEr needs at least two documents");
  const double log_n = std::log(static_cast<double>(corpus.size()));
  std::vector<double> scores(corpus.size(), 0.0);
  for (std::size_t n = 1; n <= 4; ++n) {
    std::map<Tokens, int> df;
    for (const auto& doc : corpus) {
      std::set<Tokens> seen;
      for (const auto& r : doc.references) {
        for (const auto& [g, c] : ngrams(r, n)) seen.insert(g);
      }
      for (const auto& g : seen) ++df[g];
    }
    auto vec = [&](const Tokens& t) {
      std::map<Tokens, double> v;
      const auto counts = ngrams(t, n);
      int total = 0;
      for (const auto& [g, c] : counts) total += c;
      for (const auto& [g, c] : counts) {
        auto it = df.find(g);
        const double idf = log_n - std::log(std::max(1.0, it == df.end() ? 0.0 : double(it->second)));
        v[g] = static_cast<double>(c) / total * idf;
      }
      return v;
    };
    auto norm = [](const std::map<Tokens, double>& v) {
      double s = 0.0;
      for (const auto& [g, x] : v) s += x * x;
      return std::sqrt(s);
    };
    for (std::size_t d = 0; d < corpus.size(); ++d) {
      const auto& doc = corpus[d];
      if (doc.references.empty()) throw DomainError("CIDEr document without references");
      const auto cv = vec(doc.candidate);
      const double cn = norm(cv);
      double sum = 0.0;
      for (const auto& r : doc.references) {
        const auto rv = vec(r);
        const double rn = norm(rv);
        if (cn == 0.0 || rn == 0.0) continue;
        double dot = 0.0;
        for (const auto& [g, x] : cv) {
          auto it = rv.find(g);
          if (it != rv.end()) dot += x * it->second;
        }
        sum += dot / (cn * rn);
      }
      scores[d] += 10.0 * sum / static_cast<double>(doc.references.size()) / 4.0;
    }
  }
  return scores;
}

double cider(const std::vector<CiderDocument>& corpus) {
  const auto s = cider_scores(corpus);
  double sum = 0.0;
  for (double x : s) sum += x;
  return sum / static_cast<double>(s.size());
}

namespace {

struct AlignSearch {
  const Tokens& cand;
  const Tokens& ref;
  int target_matches;
  std::vector<int> remaining_matchable;  // matchable candidate tokens at positions >= i
  std::vector<bool> used;
  int best_chunks;

  void run(std::size_t i, int matches, int chunks, int prev_ref) {
    if (chunks >= best_chunks) return;
    if (matches + remaining_matchable[i] < target_matches) return;
    if (i == cand.size()) {
      if (matches == target_matches) best_chunks = chunks;
      return;
    }
    // Continuing the current chunk first finds good bounds early.
    if (prev_ref >= 0 && prev_ref + 1 < static_cast<int>(ref.size()) && !used[prev_ref + 1] &&
        ref[prev_ref + 1] == cand[i]) {
      used[prev_ref + 1] = true;
      run(i + 1, matches + 1, chunks, prev_ref + 1);
      used[prev_ref + 1] = false;
    }
    for (std::size_t j = 0; j < ref.size(); ++j) {
      if (used[j] || ref[j] != cand[i] || static_cast<int>(j) == prev_ref + 1) continue;
      used[j] = true;
      run(i + 1, matches + 1, chunks + 1, static_cast<int>(j));
      used[j] = false;
    }
    run(i + 1, matches, chunks, -2);
  }
};

}  // namespace

MeteorAlignment meteor_align(const Tokens& candidate, const Tokens& reference) {
  std::map<int, int> ref_count, cand_count;
  for (int t : reference) ++ref_count[t];
  for (int t : candidate) ++cand_count[t];
  int max_matches = 0;
  for (const auto& [t, c] : cand_count) max_matches += std::min(c, ref_count[t]);
  if (max_matches == 0) return {0, 0};

  AlignSearch s{candidate, reference, max_matches, std::vector<int>(candidate.size() + 1, 0),
                std::vector<bool>(reference.size(), false), max_matches + 1};
  for (std::size_t i = candidate.size(); i-- > 0;) {
    s.remaining_matchable[i] = s.remaining_matchable[i + 1] + (ref_count.count(candidate[i]) ? 1 : 0);
  }
  s.run(0, 0, 0, -2);
  return {max_matches, s.best_chunks};
}

double meteor_lite(const Tokens& candidate, const Tokens& reference) {
  require_nonempty(candidate, "candidate");
  require_nonempty(reference, "reference");
  const auto a = meteor_align(candidate, reference);
  if (a.matches == 0) return 0.0;
  const double p = static_cast<double>(a.matches) / static_cast<double>(candidate.size());
  const double r = static_cast<double>(a.matches) / static_cast<double>(reference.size());
  const double f_mean = 10.0 * p * r / (r + 9.0 * p);
  const double frag = static_cast<double>(a.chunks) / static_cast<double>(a.matches);
  return f_mean * (1.0 - 0.5 * frag * frag * frag);
}

std::size_t diversity(const std::vector<Tokens>& questions) {
  return std::set<Tokens>(questions.begin(), questions.end()).size();
}

MetricsReport evaluate(const std::vector<EvalRecord>& records) {
  if (records.empty()) throw DomainError("evaluate of an empty record list");
  MetricsReport rep;
  rep.n_samples = records.size();
  std::vector<std::pair<double, double>> pairs;
  std::vector<Tokens> generated;
  std::vector<CiderDocument> corpus;
  for (const auto& r : records) {
    pairs.emplace_back(r.target_entropy, r.generated_entropy);
    generated.push_back(r.generated);
    corpus.push_back({r.generated, {r.source}});
    // An empty generation scores zero on every similarity metric.
    if (r.generated.empty() || r.source.empty()) continue;
    rep.bleu4 += bleu4(r.generated, {r.source});
    rep.rouge_l += rouge_l(r.generated, r.source);
    rep.meteor_lite += meteor_lite(r.generated, r.source);
  }
  const double n = static_cast<double>(records.size());
  rep.bleu4 /= n;
  rep.rouge_l /= n;
  rep.meteor_lite /= n;
  rep.cider = records.size() >= 2 ? cider(corpus) : 0.0;
  const auto stats = entropy_error_stats(pairs);
  rep.mean_abs_entropy_error = stats.mean;
  rep.std_abs_entropy_error = stats.std;
  rep.diversity = diversity(generated);
  return rep;
}

nlohmann::json metric_config() {
  return {{"similarity_reference", "source question"},
          {"rouge_l_beta", kRougeBeta},
          {"bleu4",
           {{"smoothing", "add-epsilon on zero clipped n-gram counts"},
            {"epsilon", kBleuEpsilon},
            {"averaging", "sentence-level, mean over samples"},
            {"brevity_reference", "closest reference length, ties to the shorter"}}},
          {"cider",
           {{"variant", "tf-idf cosine, n = 1..4, x10, no length penalty or clipping"},
            {"idf", "ln(N / max(1, df)), df over reference sets"},
            {"single_sample", "reported as 0"}}},
          {"meteor_lite",
           {{"matching", "exact tokens only"},
            {"f_mean", "10PR / (R + 9P)"},
            {"penalty", "0.5 * (chunks / matches)^3"},
            {"deviation", "no stemming or synonym stages"}}},
          {"entropy_error_std", "population"}};
}

nlohmann::json to_json(const MetricsReport& r) {
  return {{"mean_abs_entropy_error", r.mean_abs_entropy_error},
          {"std_abs_entropy_error", r.std_abs_entropy_error},
          {"bleu4", r.bleu4},
          {"cider", r.cider},
          {"meteor_lite", r.meteor_lite},
          {"rouge_l", r.rouge_l},
          {"diversity", r.diversity},
          {"n_samples", r.n_samples},
          {"metric_config", metric_config()}};
}

}  // namespace vqr::metrics

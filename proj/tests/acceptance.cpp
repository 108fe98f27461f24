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

// Acceptance suite: one PASS/FAIL line per criterion.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "mini_model.hpp"
#include "oracles.hpp"
#include "vqr/harness.hpp"
#include "vqr/metrics.hpp"
#include "vqr/rephraser.hpp"
#include "vqr/training.hpp"
#include "vqr/vqa.hpp"

namespace fs = std::filesystem;
using namespace vqr;
using nlohmann::json;

namespace {

struct Outcome {
  bool passed = false;
  std::string detail;
};

struct Options {
  fs::path work = "acceptance-work";
  std::string cli;
  fs::path snapshot;
  std::vector<int> only;
};

std::string fmt(double x, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, x);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

// Collects failures; the criterion passes when none were recorded.
struct Failures {
  std::vector<std::string> items;
  void expect(bool ok, const std::string& what) {
    if (!ok) items.push_back(what);
  }
  Outcome outcome(const std::string& summary) const {
    if (items.empty()) return {true, summary};
    std::string d = items.front();
    if (items.size() > 1) d += " (+" + std::to_string(items.size() - 1) + " more)";
    return {false, d};
  }
};

// ---------------------------------------------------------------------------

Outcome entropy_suite() {
  Failures f;
  for (int k : {2, 4, 16}) {
    const std::vector<double> p(static_cast<std::size_t>(k), 1.0 / k);
    f.expect(std::abs(vqa::entropy(p) - std::log(double(k))) < 1e-9, "uniform K=" + std::to_string(k));
  }
  for (int k : {2, 4, 16}) {
    for (int hot = 0; hot < k; ++hot) {
      std::vector<double> p(static_cast<std::size_t>(k), 0.0);
      p[static_cast<std::size_t>(hot)] = 1.0;
      f.expect(vqa::entropy(p) == 0.0, "one-hot K=" + std::to_string(k));
    }
  }
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> size(2, 64);
  std::exponential_distribution<double> ex(1.0);
  std::bernoulli_distribution sparse(0.3);
  for (int i = 0; i < 10000; ++i) {
    std::vector<double> p(static_cast<std::size_t>(size(rng)));
    double s = 0.0;
    for (auto& x : p) s += (x = sparse(rng) ? 0.0 : ex(rng));
    if (s == 0.0) p[0] = s = 1.0;
    for (auto& x : p) x /= s;
    const double h = vqa::entropy(p);
    f.expect(h >= 0.0 && h <= std::log(double(p.size())) + 1e-12, "bounds violated at draw " + std::to_string(i));
  }
  return f.outcome("uniform, one-hot and 10^4 random distributions");
}

Outcome gradient_fidelity() {
  auto s = mini::make_setup();
  const auto checks = mini::check_decoder_gradients(s, 20);
  double worst = 0.0;
  for (const auto& c : checks) worst = std::max(worst, c.relative_error());
  const bool ok = checks.size() == 20 && worst < 1e-3;
  return {ok, "max relative error " + fmt(worst, 3) + " over 20 decoder projection coordinates"};
}

Outcome frozen_invariance(const fs::path& dir) {
  world::WorldConfig wc;
  wc.train_scenes = 30;
  wc.eval_scenes = 5;
  const auto d = world::generate_dataset(23, wc);
  vqa::VqaModel v(vqa::default_vqa_config(d), 4);
  vqa::VqaTrainConfig vt;
  vt.iterations = 50;
  vqa::train_vqa(v, d, vt);
  v.freeze();
  const std::string digest = v.digest();
  Failures f;
  int runs = 0;
  for (auto strategy : {training::Strategy::noise, training::Strategy::sampling}) {
    training::TrainRegimeConfig c;
    c.strategy = strategy;
    c.iterations = 20;
    c.batch_size = 8;
    c.hidden = 16;
    c.embed_dim = 8;
    c.tau = 1.0;
    const auto pre_dir = dir / ("pre-" + std::string(training::to_string(strategy)));
    for (auto regime : {training::Regime::pretrain, training::Regime::scratch, training::Regime::finetune}) {
      c.regime = regime;
      c.pretrain_checkpoint = pre_dir;
      const auto t = training::train(d, v, c);
      if (regime == training::Regime::pretrain) training::save_rephraser(t, pre_dir);
      ++runs;
      f.expect(v.digest() == digest, "digest changed after " + std::string(training::to_string(regime)));
    }
  }
  return f.outcome("digest identical across " + std::to_string(runs) + " training runs");
}

Outcome metric_oracles() {
  std::mt19937_64 rng(99);
  auto tokens = [&](int lo, int hi, int vocab) {
    std::uniform_int_distribution<int> len(lo, hi), tok(4, 3 + vocab);
    metrics::Tokens t(static_cast<std::size_t>(len(rng)));
    for (auto& x : t) x = tok(rng);
    return t;
  };
  auto close = [](double a, double b) { return std::abs(a - b) <= 1e-9 * std::max(1.0, std::abs(b)); };
  Failures f;
  std::vector<metrics::Tokens> all;
  for (int i = 0; i < 50; ++i) {
    const auto c = tokens(1, 10, 5), r = tokens(1, 10, 5);
    f.expect(close(metrics::bleu4(c, {r}), oracle::bleu4(c, {r}, metrics::kBleuEpsilon)), "bleu4 pair " + std::to_string(i));
    f.expect(close(metrics::rouge_l(c, r), oracle::rouge_l(c, r, metrics::kRougeBeta)), "rouge_l pair " + std::to_string(i));
    f.expect(close(metrics::meteor_lite(c, r), oracle::meteor_lite(c, r)), "meteor_lite pair " + std::to_string(i));
    f.expect(metrics::diversity({c, r, c}) == oracle::distinct({c, r, c}), "diversity pair " + std::to_string(i));
    all.push_back(c);
    all.push_back(r);
  }
  f.expect(metrics::diversity(all) == oracle::distinct(all), "diversity over all sequences");
  std::vector<metrics::CiderDocument> corpus;
  std::vector<oracle::Doc> docs;
  for (int i = 0; i < 10; ++i) {
    metrics::CiderDocument d{tokens(2, 8, 6), {tokens(2, 8, 6), tokens(2, 8, 6)}};
    docs.push_back({d.candidate, d.references});
    corpus.push_back(std::move(d));
  }
  f.expect(close(metrics::cider(corpus), oracle::cider(docs)), "cider corpus");
  return f.outcome("bleu4, rouge_l, meteor_lite, diversity on 50 pairs; cider on 10 images");
}

Outcome delta_filter() {
  Failures f;
  std::size_t checked = 0, excluded = 0;
  for (std::uint64_t seed : {101u, 102u, 103u}) {
    world::WorldConfig wc;
    wc.train_scenes = 1;
    wc.eval_scenes = 100;
    const auto d = world::generate_dataset(seed, wc);
    // Random weights so the eval entropies spread over [0, ln|A|].
    vqa::VqaModel v(vqa::default_vqa_config(d), seed);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, 1.5);
    for (auto* p : v.parameters()) {
      for (Eigen::Index i = 0; i < p->value.size(); ++i) p->value.data()[i] = g(rng);
    }
    v.freeze();
    const training::FeatureCache features(d);
    const auto eval = training::source_samples(d, world::Split::eval, v, features);
    const double h_max = std::log(double(d.vocab.answer.size()));
    auto grid = harness::desk_delta_grid(d.vocab.answer.size());
    for (double x : harness::reference_delta_grid()) grid.push_back(x);
    std::sort(grid.begin(), grid.end());
    std::size_t prev = 0;
    for (double delta : grid) {
      const auto kept = harness::build_delta_samples(eval, delta, h_max);
      std::size_t j = 0;
      for (const auto& s : eval) {
        const bool in = j < kept.size() && kept[j].question_id == s.question_id;
        f.expect(in == (s.source_entropy + delta >= 0.0), "exclusion rule at delta " + fmt(delta));
        if (in) ++j;
      }
      f.expect(j == kept.size(), "unexpected retained samples");
      f.expect(kept.size() >= prev, "count decreased at delta " + fmt(delta));
      if (delta >= 0.0) f.expect(kept.size() == eval.size(), "dropped samples at delta " + fmt(delta));
      prev = kept.size();
      excluded += eval.size() - kept.size();
      ++checked;
    }
  }
  f.expect(excluded > 0, "no sample was ever excluded");
  return f.outcome(std::to_string(checked) + " (eval set, delta) pairs, " + std::to_string(excluded) +
                   " exclusions");
}

Outcome loss_identities() {
  Failures f;
  const std::vector<double> values{0.0, 1e-9, 0.25, 1.0, 2.772588722239781, 17.5};
  for (double a : values) {
    for (double b : values) {
      f.expect(rephraser::total_loss(a, b, 0.0) == a, "lambda=0 total");
      f.expect(rephraser::entropy_loss(a, b) == rephraser::entropy_loss(b, a), "entropy symmetry");
      ad::Tape tape;
      const auto t = rephraser::total_loss(tape.scalar(a), tape.scalar(b), 0.0);
      f.expect(t.item() == a, "lambda=0 total on the tape");
    }
  }
  constexpr int kVocab = 4;
  for (int len = 1; len <= 3; ++len) {
    int combos = 1;
    for (int i = 0; i < len; ++i) combos *= kVocab;
    for (int code = 0; code < combos; ++code) {
      std::vector<int> target;
      for (int i = 0, c = code; i < len; ++i, c /= kVocab) target.push_back(c % kVocab);
      ad::Matrix logits = ad::Matrix::Constant(len, kVocab, -1000.0);
      for (int t = 0; t < len; ++t) logits(t, target[static_cast<std::size_t>(t)]) = 1000.0;
      f.expect(rephraser::vqg_loss(logits, target) == 0.0, "vqg_loss on a certain target");
    }
  }
  return f.outcome("total_loss, entropy_loss and vqg_loss on constructed cases");
}

// ---------------------------------------------------------------------------
// Default-config experiments shared by the pattern and asymmetry criteria.

struct SeedRun {
  std::uint64_t seed = 0;
  std::vector<harness::SweepRow> rows;
  double s = 0.0;
  std::string error;
};

const std::vector<harness::Configuration> kPair{{training::Regime::pretrain, training::Strategy::sampling, true},
                                                {training::Regime::finetune, training::Strategy::sampling, true}};

SeedRun run_default_seed(const fs::path& dir, std::uint64_t seed) {
  SeedRun out;
  out.seed = seed;
  try {
    harness::ExperimentConfig c;
    c.seed = seed;
    c.configurations = kPair;
    const harness::ExperimentPaths paths{dir};
    fs::remove_all(dir);
    const auto d = harness::step_generate_data(c, paths);
    out.s = harness::delta_unit(d.vocab.answer.size());
    harness::step_train_vqa(c, paths);
    const std::string digest = json::parse(slurp(paths.vqa() / "report.json")).at("digest");
    for (const auto& cfg : kPair) harness::step_train(c, paths, cfg);
    out.rows = harness::step_sweep_delta(c, paths).rows;
    if (vqa::VqaModel::load(paths.vqa()).digest() != digest) out.error = "VQA digest changed";
  } catch (const std::exception& e) {
    out.error = e.what();
  }
  return out;
}

double error_at(const std::vector<harness::SweepRow>& rows, const std::string& label, double delta) {
  for (const auto& r : rows) {
    if (r.configuration == label && std::abs(r.delta - delta) < 1e-12) return r.metrics.mean_abs_entropy_error;
  }
  return std::nan("");
}

Outcome table_pattern(const std::vector<SeedRun>& runs) {
  int seeds_ok = 0;
  std::string detail;
  for (const auto& r : runs) {
    if (!r.error.empty()) {
      detail += " seed " + std::to_string(r.seed) + ": " + r.error + ";";
      continue;
    }
    int wins = 0;
    detail += " seed " + std::to_string(r.seed) + ":";
    for (double delta : {-r.s, 0.0, r.s}) {
      const double pre = error_at(r.rows, kPair[0].label(), delta);
      const double ft = error_at(r.rows, kPair[1].label(), delta);
      wins += ft < pre ? 1 : 0;
      detail += " [" + fmt(delta, 3) + ": FT " + fmt(ft, 4) + " vs " + fmt(pre, 4) + "]";
    }
    detail += " " + std::to_string(wins) + "/3;";
    seeds_ok += wins >= 2 ? 1 : 0;
  }
  return {seeds_ok >= 2, std::to_string(seeds_ok) + "/3 seeds with FT ahead at >=2 of 3 deltas." + detail};
}

Outcome asymmetry(const SeedRun& run, const fs::path& run_dir, const fs::path& snapshot) {
  if (!run.error.empty()) return {false, run.error};
  const auto report = json::parse(slurp(run_dir / "sweep-delta" / "report.json")).at("asymmetry");
  if (report.size() != kPair.size()) return {false, "report lists " + std::to_string(report.size()) + " configurations"};
  std::string detail;
  for (const auto& e : report) {
    detail += " " + e.at("configuration").get<std::string>() + ": " +
              fmt(e.at("positive_error").get<double>(), 4) + " at delta " +
              fmt(e.at("positive_delta").get<double>(), 3) + " vs " + fmt(e.at("negative_error").get<double>(), 4) +
              " at delta " + fmt(e.at("negative_delta").get<double>(), 3) +
              (e.at("increase_harder").get<bool>() ? " (increase harder);" : " (decrease harder);");
  }
  if (snapshot.empty()) return {true, "reported;" + detail};
  if (!fs::exists(snapshot)) {
    fs::create_directories(snapshot.parent_path());
    std::ofstream(snapshot) << json{{"seed", run.seed}, {"asymmetry", report}}.dump(2) << "\n";
    return {true, "snapshot recorded;" + detail};
  }
  const auto pinned = json::parse(slurp(snapshot)).at("asymmetry");
  bool same = pinned.size() == report.size();
  for (std::size_t i = 0; same && i < report.size(); ++i) {
    for (const char* k : {"negative_delta", "negative_error", "positive_delta", "positive_error"}) {
      same = same && std::abs(pinned[i].at(k).get<double>() - report[i].at(k).get<double>()) <= 1e-9;
    }
    same = same && pinned[i].at("configuration") == report[i].at("configuration");
    same = same && pinned[i].at("increase_harder") == report[i].at("increase_harder");
  }
  return {same, (same ? "matches snapshot;" : "differs from snapshot;") + detail};
}

Outcome determinism(const fs::path& dir, const std::string& cli) {
  if (cli.empty()) return {false, "command-line tool not available"};
  fs::remove_all(dir);
  fs::create_directories(dir);
  harness::ExperimentConfig c;
  c.seed = 11;
  c.world.train_scenes = 200;
  c.world.eval_scenes = 40;
  c.vqa_training.iterations = 300;
  c.rephraser.iterations = 150;
  c.finetune_iterations = 100;
  c.configurations = kPair;
  c.threads = 1;
  harness::write_experiment_config(c, dir / "config.json");
  std::vector<std::string> csv;
  for (const char* name : {"run-a", "run-b"}) {
    for (const char* step : {"gen-data", "train-vqa", "pretrain", "finetune", "sweep-delta"}) {
      const std::string cmd = "\"" + cli + "\" --config \"" + (dir / "config.json").string() + "\" --out \"" +
                              (dir / name).string() + "\" " + step + " > \"" + (dir / name).string() + "." + step +
                              ".log\" 2>&1";
      fs::create_directories(dir / name);
      if (std::system(cmd.c_str()) != 0) return {false, std::string(name) + ": '" + step + "' failed"};
    }
    csv.push_back(slurp(dir / name / "sweep-delta" / "sweep.csv"));
  }
  const bool same = !csv[0].empty() && csv[0] == csv[1];
  return {same, same ? "sweep.csv identical (" + std::to_string(csv[0].size()) + " bytes)" : "sweep.csv differs"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  Options o;
  app.add_option("--work", o.work, "Scratch directory");
  app.add_option("--cli", o.cli, "Path to the vqr_cli binary");
  app.add_option("--snapshot", o.snapshot, "Asymmetry regression snapshot (written when missing)");
  app.add_option("--only", o.only, "Run only these criteria");
  CLI11_PARSE(app, argc, argv);

  auto selected = [&](int n) { return o.only.empty() || std::find(o.only.begin(), o.only.end(), n) != o.only.end(); };
  struct Line {
    int n;
    std::string name;
    double budget;
    Outcome outcome;
    double seconds;
  };
  std::vector<Line> lines;
  auto timed = [&](int n, const std::string& name, double budget, const std::function<Outcome()>& body) {
    if (!selected(n)) return;
    std::cerr << "running criterion " << n << " (" << name << ")" << std::endl;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = body();
    } catch (const std::exception& e) {
      out = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (secs > budget) {
      out.passed = false;
      out.detail += "; over the " + fmt(budget) + " s budget";
    }
    lines.push_back({n, name, budget, out, secs});
  };

  fs::create_directories(o.work);
  timed(1, "entropy unit suite", 5, entropy_suite);
  timed(2, "gradient fidelity", 120, gradient_fidelity);
  timed(3, "frozen VQA invariance", 600, [&] { return frozen_invariance(o.work / "frozen"); });
  timed(6, "metric oracle equivalence", 30, metric_oracles);
  timed(7, "delta filter properties", 10, delta_filter);
  timed(9, "loss identities", 1, loss_identities);

  std::vector<SeedRun> runs;
  double pattern_secs = 0.0;
  if (selected(4) || selected(5)) {
    const auto t0 = std::chrono::steady_clock::now();
    const int n_seeds = selected(4) ? 3 : 1;
    for (int k = 1; k <= n_seeds; ++k) {
      std::cerr << "default-config run, seed " << k << std::endl;
      runs.push_back(run_default_seed(o.work / ("default-seed-" + std::to_string(k)), static_cast<std::uint64_t>(k)));
    }
    pattern_secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }
  timed(4, "Sampling-FT beats Sampling Pretrain", 45 * 60 - pattern_secs, [&] { return table_pattern(runs); });
  if (selected(4)) lines.back().seconds += pattern_secs;
  timed(5, "asymmetry report", 60, [&] { return asymmetry(runs.at(0), o.work / "default-seed-1", o.snapshot); });
  timed(8, "end-to-end determinism", 90 * 60, [&] { return determinism(o.work / "determinism", o.cli); });

  std::sort(lines.begin(), lines.end(), [](const Line& a, const Line& b) { return a.n < b.n; });
  bool all = true;
  for (const auto& l : lines) {
    std::cout << "criterion " << l.n << " " << (l.outcome.passed ? "PASS" : "FAIL") << " " << l.name << " ("
              << fmt(l.seconds, 3) << " s): " << l.outcome.detail << "\n";
    all = all && l.outcome.passed;
  }
  return all ? 0 : 1;
}

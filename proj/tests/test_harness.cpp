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
#include <sstream>

#include "vqr/error.hpp"
#include "vqr/harness.hpp"

using namespace vqr;
using namespace vqr::harness;

namespace {

std::vector<RephraseSample> eval_set(std::uint64_t seed, std::size_t n, double max_entropy) {
  Rng rng(seed);
  std::vector<RephraseSample> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i].question_id = static_cast<int>(i);
    out[i].source_entropy = uniform(rng, 0.0, max_entropy);
  }
  return out;
}

std::filesystem::path temp_dir(const char* name) {
  auto dir = std::filesystem::temp_directory_path() / "vqr_tests" / name;
  std::filesystem::remove_all(dir);
  return dir;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

SweepRow row(double delta, const std::string& label, double error, std::size_t n = 10) {
  SweepRow r;
  r.delta = delta;
  r.configuration = label;
  r.metrics.mean_abs_entropy_error = error;
  r.metrics.n_samples = n;
  return r;
}

}  // namespace

TEST_CASE("delta grids") {
  const auto reference = reference_delta_grid();
  REQUIRE(reference.size() == 9);
  CHECK(reference.front() == -2.0);
  CHECK(reference.back() == 2.0);
  CHECK(reference[4] == 0.0);
  const double s = std::log(16.0) / std::log(3129.0);
  CHECK(delta_unit(16) == doctest::Approx(s).epsilon(1e-14));
  const auto desk = desk_delta_grid(16);
  REQUIRE(desk.size() == 9);
  for (std::size_t i = 0; i < 9; ++i) CHECK(desk[i] == doctest::Approx(reference[i] * s).epsilon(1e-14));
  CHECK(reference_lambda_grid() == std::vector<double>{0.01, 0.1, 1.0, 10.0, 100.0});
  CHECK_THROWS_AS(delta_unit(1), DomainError);
}

TEST_CASE("configuration labels") {
  CHECK(configuration_label(Regime::pretrain, Strategy::noise) == "Noise Pretrain");
  CHECK(configuration_label(Regime::scratch, Strategy::noise) == "Noise");
  CHECK(configuration_label(Regime::finetune, Strategy::noise) == "Noise-FT");
  CHECK(configuration_label(Regime::pretrain, Strategy::sampling) == "Sampling Pretrain");
  CHECK(configuration_label(Regime::scratch, Strategy::sampling) == "Sampling");
  CHECK(configuration_label(Regime::finetune, Strategy::sampling, false) == "Sampling-FT w/o A");
  CHECK(all_configurations().size() == 6);
  for (const auto& c : all_configurations()) CHECK(parse_configuration(c.label()) == c);
  const Configuration no_attn{Regime::finetune, Strategy::sampling, false};
  CHECK(parse_configuration(no_attn.label()) == no_attn);
  CHECK(checkpoint_dirname(Regime::pretrain, Strategy::noise) == "pretrain-noise");
  CHECK(checkpoint_dirname(Regime::finetune, Strategy::sampling, false) == "finetune-sampling-noattn");
  CHECK_THROWS_AS(parse_configuration("Sampling-XL"), ConfigError);
}

TEST_CASE("sweep grid validation") {
  SweepConfig c = SweepConfig::desk(16);
  CHECK_NOTHROW(validate(c));
  c.delta_grid = {0.5, -0.5};
  CHECK_THROWS_AS(validate(c), ConfigError);
  c.delta_grid.clear();
  CHECK_THROWS_AS(validate(c), ConfigError);
}

TEST_CASE("delta filter worked examples") {
  RephraseSample s;
  s.source_entropy = 1.2;
  CHECK(build_delta_samples({s}, -2.0, std::log(16.0)).empty());
  const auto kept = build_delta_samples({s}, -1.2, std::log(16.0));
  REQUIRE(kept.size() == 1);
  CHECK(kept[0].target_entropy == 0.0);
  const auto same = build_delta_samples({s}, 0.0, std::log(16.0));
  REQUIRE(same.size() == 1);
  CHECK(same[0].target_entropy == s.source_entropy);
  CHECK(build_delta_samples({s}, 5.0, std::log(16.0))[0].target_entropy == std::log(16.0));
}

TEST_CASE("delta filter properties on random eval sets") {
  const double h_max = std::log(16.0);
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto eval = eval_set(seed, 500, h_max);
    std::size_t prev = 0;
    for (double d : desk_delta_grid(16)) {
      const auto kept = build_delta_samples(eval, d, h_max);
      std::size_t j = 0;
      for (const auto& s : eval) {
        const bool retained = s.source_entropy + d >= 0.0;
        if (retained) {
          REQUIRE(j < kept.size());
          CHECK(kept[j].question_id == s.question_id);
          CHECK(kept[j].target_entropy == std::min(s.source_entropy + d, h_max));
          ++j;
        }
      }
      CHECK(j == kept.size());
      CHECK(kept.size() >= prev);
      if (d >= 0.0) CHECK(kept.size() == eval.size());
      prev = kept.size();
    }
  }
}

TEST_CASE("asymmetry report compares the extreme deltas") {
  const std::vector<SweepRow> rows{row(-0.5, "A", 0.3), row(-0.25, "A", 0.2), row(0.0, "A", 0.1),
                                   row(0.5, "A", 0.7),  row(-0.5, "B", 0.4),  row(0.5, "B", 0.1),
                                   row(-1.0, "B", 9.0, 0)};
  const auto rep = asymmetry_report(rows);
  REQUIRE(rep.size() == 2);
  CHECK(rep[0].configuration == "A");
  CHECK(rep[0].negative_delta == -0.5);
  CHECK(rep[0].positive_error == 0.7);
  CHECK(rep[0].increase_harder);
  CHECK(rep[1].negative_error == 0.4);
  CHECK_FALSE(rep[1].increase_harder);
  CHECK(to_json(rep).size() == 2);
}

TEST_CASE("box plot axes and quartiles") {
  std::vector<RawRecord> raw;
  for (int i = 1; i <= 4; ++i) {
    RawRecord r;
    r.delta = 0.5;
    r.configuration = "X";
    r.source_entropy = 1.0;
    r.target_entropy = 1.5;
    r.generated_entropy = 1.0 + i;
    raw.push_back(r);
  }
  const auto et = boxplot_points(raw, AxisMode::eg_minus_et);
  const auto es = boxplot_points(raw, AxisMode::eg_minus_es);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(et[i].value == raw[i].generated_entropy - 1.5);
    CHECK(es[i].value == raw[i].generated_entropy - 1.0);
  }
  const auto q = quartile_summary(es);
  REQUIRE(q.size() == 1);
  CHECK(q[0].n == 4);
  CHECK(q[0].min == 1.0);
  CHECK(q[0].q1 == doctest::Approx(1.75));
  CHECK(q[0].median == doctest::Approx(2.5));
  CHECK(q[0].q3 == doctest::Approx(3.25));
  CHECK(q[0].max == 4.0);
  CHECK(parse_axis_mode("eg_minus_es") == AxisMode::eg_minus_es);
  CHECK_THROWS_AS(parse_axis_mode("es_minus_eg"), DomainError);

  const auto dir = temp_dir("boxplot");
  std::filesystem::create_directories(dir);
  export_boxplot_csv(raw, AxisMode::eg_minus_et, dir / "box.csv");
  CHECK(slurp(dir / "box.csv").rfind("delta,configuration,eg_minus_et\n", 0) == 0);
  CHECK(std::filesystem::exists(dir / "box.quartiles.csv"));
}

TEST_CASE("experiment config JSON") {
  ExperimentConfig c;
  c.seed = 9;
  c.world.train_scenes = 12;
  c.rephraser.tau = 0.25;
  c.delta_grid = "explicit";
  c.deltas = {-0.1, 0.0, 0.1};
  c.configurations = {Configuration{Regime::finetune, Strategy::noise, false}};
  const auto back = experiment_config_from_json(to_json(c));
  CHECK(to_json(back) == to_json(c));
  CHECK(back.resolved_delta_grid(16) == c.deltas);
  auto j = to_json(c);
  j["rephraser"]["temperature"] = 1.0;
  CHECK_THROWS_AS(experiment_config_from_json(j), ConfigError);
  j = to_json(c);
  j["extra"] = 1;
  CHECK_THROWS_AS(experiment_config_from_json(j), ConfigError);
  CHECK(experiment_config_from_json(nlohmann::json::object()).seed == ExperimentConfig{}.seed);
}

TEST_CASE("missing checkpoints are reported by configuration label") {
  const auto dir = temp_dir("no_ckpt");
  try {
    load_configurations(dir, {Configuration{Regime::finetune, Strategy::sampling, true}});
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("Sampling-FT") != std::string::npos);
  }
}

TEST_CASE("delta sweep rows, raw records and CSV") {
  world::WorldConfig wc;
  wc.train_scenes = 20;
  wc.eval_scenes = 6;
  const auto d = world::generate_dataset(17, wc);
  vqa::VqaModel v(vqa::default_vqa_config(d), 3);
  vqa::VqaTrainConfig vt;
  vt.iterations = 40;
  vqa::train_vqa(v, d, vt);
  v.freeze();
  const auto digest = v.digest();

  training::TrainRegimeConfig rc;
  rc.iterations = 5;
  rc.batch_size = 4;
  rc.hidden = 12;
  rc.embed_dim = 6;
  rc.regime = Regime::pretrain;
  auto a = training::train(d, v, rc);
  rc.regime = Regime::scratch;
  rc.strategy = Strategy::noise;
  auto b = training::train(d, v, rc);
  const std::vector<LoadedConfiguration> models{{"Sampling Pretrain", a.model, std::nullopt},
                                                {"Noise", b.model, std::nullopt}};
  const auto grid = desk_delta_grid(d.vocab.answer.size());
  const auto r = run_delta_sweep(models, d, v, grid, 1);
  REQUIRE(r.rows.size() == grid.size() * models.size());
  for (std::size_t i = 0; i < r.rows.size(); ++i) {
    CHECK(r.rows[i].delta == grid[i / 2]);
    CHECK(r.rows[i].configuration == models[i % 2].label);
  }
  CHECK(v.digest() == digest);

  const auto recomputed = rows_from_raw(r.raw);
  std::size_t k = 0;
  for (const auto& row : r.rows) {
    if (row.metrics.n_samples == 0) continue;
    REQUIRE(k < recomputed.size());
    CHECK(sweep_csv({recomputed[k]}) == sweep_csv({row}));
    ++k;
  }
  CHECK(k == recomputed.size());

  const auto threaded = run_delta_sweep(models, d, v, grid, 3);
  CHECK(sweep_csv(threaded.rows) == sweep_csv(r.rows));

  const auto dir = temp_dir("sweep_io");
  std::filesystem::create_directories(dir);
  write_raw_jsonl(r.raw, dir / "raw.jsonl");
  const auto back = read_raw_jsonl(dir / "raw.jsonl");
  REQUIRE(back.size() == r.raw.size());
  CHECK(sweep_csv(rows_from_raw(back)) == sweep_csv(recomputed));
  const auto csv = sweep_csv(r.rows);
  CHECK(csv.rfind(
            "delta,configuration,entropy_error_mean,entropy_error_std,bleu4,cider,meteor_lite,rouge_l,diversity,"
            "n_questions\n",
            0) == 0);
}

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

// Command-line front end for data generation, training, sweeps and export.

#include <cmath>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "vqr/error.hpp"
#include "vqr/harness.hpp"
#include "vqr/training.hpp"

namespace {

using namespace vqr;
using harness::Configuration;
using harness::ExperimentConfig;
using harness::ExperimentPaths;

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out = "runs";
};

ExperimentConfig resolve_config(const Globals& g) {
  ExperimentConfig c;
  const ExperimentPaths paths{g.out};
  if (!g.config_path.empty()) {
    c = harness::read_experiment_config(g.config_path);
  } else if (std::filesystem::exists(paths.config())) {
    c = harness::read_experiment_config(paths.config());
  }
  if (g.seed) c.seed = *g.seed;
  return c;
}

void print_rows(const std::vector<harness::SweepRow>& rows) { std::cout << harness::sweep_csv(rows); }

void print_asymmetry(const std::vector<harness::SweepRow>& rows) {
  for (const auto& a : harness::asymmetry_report(rows)) {
    std::cout << "asymmetry " << a.configuration << ": error at delta " << a.positive_delta << " = "
              << a.positive_error << ", at delta " << a.negative_delta << " = " << a.negative_error
              << (a.increase_harder ? " (increasing is harder)" : " (decreasing is harder)") << "\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Entropy-controlled visual question rephrasing"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config_path, "Experiment config (JSON)");
  app.add_option("--seed", g.seed, "Override the experiment seed");
  app.add_option("--out", g.out, "Experiment directory")->capture_default_str();

  auto* gen = app.add_subcommand("gen-data", "Generate the synthetic dataset");
  auto* train_vqa = app.add_subcommand("train-vqa", "Train and freeze the VQA model");

  std::string strategy = "sampling";
  bool no_attention = false;
  auto add_train_opts = [&](CLI::App* sub) {
    sub->add_option("--strategy", strategy, "noise or sampling")
        ->check(CLI::IsMember({"noise", "sampling"}))
        ->capture_default_str();
    sub->add_flag("--no-attention", no_attention, "Disable VQA attention in the encoder");
  };
  auto* pretrain = app.add_subcommand("pretrain", "Train with the VQG loss only");
  auto* scratch = app.add_subcommand("train", "Train with the joint loss from random initialisation");
  auto* finetune = app.add_subcommand("finetune", "Train with the joint loss from the pretrain checkpoint");
  for (auto* s : {pretrain, scratch, finetune}) add_train_opts(s);

  auto* rephrase = app.add_subcommand("rephrase", "Rephrase one question towards a target entropy");
  int image = 0;
  std::string question;
  double target_entropy = 0.0;
  std::string model_label = "Sampling-FT";
  rephrase->add_option("--image", image, "Scene id")->required();
  rephrase->add_option("--question", question, "Source question text")->required();
  rephrase->add_option("--target-entropy", target_entropy, "Target entropy in nats")->required();
  rephrase->add_option("--model", model_label, "Configuration label")->capture_default_str();

  auto* sweep_delta = app.add_subcommand("sweep-delta", "Delta sweep over the configured models");
  auto* sweep_lambda = app.add_subcommand("sweep-lambda", "Finetune and sweep for every lambda");
  auto* ablate = app.add_subcommand("ablate-attention", "Attention ablation for Sampling Pretrain and FT");

  auto* plots = app.add_subcommand("export-plots", "Box-plot CSVs from sweep raw records");
  std::string axis = "both";
  std::string sweep_name = "sweep-delta";
  plots->add_option("--axis", axis, "eg_minus_et, eg_minus_es or both")->capture_default_str();
  plots->add_option("--sweep", sweep_name, "Sweep directory under --out")->capture_default_str();

  auto* verify = app.add_subcommand("verify", "Run the invariant suite");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    const ExperimentPaths paths{g.out};
    const ExperimentConfig config = resolve_config(g);
    auto train_cmd = [&](training::Regime regime) {
      const Configuration c{regime, training::parse_strategy(strategy),
                            !no_attention && config.rephraser.use_attention};
      const auto t = harness::step_train(config, paths, c);
      const auto& last = t.log.back();
      std::cout << c.label() << ": " << t.log.size() << " iterations, final L_VQG " << last.l_vqg;
      if (last.l_ent) std::cout << ", L_Ent " << *last.l_ent;
      std::cout << "\ncheckpoint " << paths.checkpoint(c).string() << "\n";
    };

    if (*gen) {
      const auto d = harness::step_generate_data(config, paths);
      std::cout << "scenes " << d.scenes.size() << ", questions " << d.questions.size() << "\n"
                << "dataset " << paths.dataset().string() << "\n";
    } else if (*train_vqa) {
      const auto r = harness::step_train_vqa(config, paths);
      std::cout << "final loss " << r.final_loss << ", held-out KL " << r.heldout_kl << "\n"
                << "checkpoint " << paths.vqa().string() << "\n";
    } else if (*pretrain) {
      train_cmd(training::Regime::pretrain);
    } else if (*scratch) {
      train_cmd(training::Regime::scratch);
    } else if (*finetune) {
      train_cmd(training::Regime::finetune);
    } else if (*rephrase) {
      const auto d = world::read_dataset(paths.dataset());
      const auto vqa = vqa::VqaModel::load(paths.vqa());
      const auto models = harness::load_configurations(paths.root, {harness::parse_configuration(model_label)});
      const auto features = world::scene_to_features(d.scene(image));
      const auto source = world::encode_question(d.vocab.question, question);
      world::validate_question(source, d.vocab.question.size(), models[0].model.config().max_length);
      const double e_s = training::question_entropy(vqa, features, source);
      const auto generated = models[0].model.rephrase(features, source, target_entropy, vqa);
      const double e_g = training::question_entropy(vqa, features, generated);
      std::cout << "Q_S: " << world::decode_question(d.vocab.question, source) << "\n"
                << "E_S: " << e_s << "\n"
                << "E_T: " << target_entropy << "\n"
                << "Q_G: " << world::decode_question(d.vocab.question, generated) << "\n"
                << "E_G: " << e_g << "\n"
                << "|E_T-E_G|: " << std::abs(target_entropy - e_g) << "\n";
    } else if (*sweep_delta) {
      const auto r = harness::step_sweep_delta(config, paths);
      print_rows(r.rows);
      print_asymmetry(r.rows);
    } else if (*sweep_lambda) {
      print_rows(harness::run_lambda_sweep(config, paths).rows);
    } else if (*ablate) {
      const auto r = harness::run_attention_ablation(config, paths);
      print_rows(r.sweep.rows);
      for (const auto& a : r.deltas) {
        std::cout << "delta " << a.delta << " " << a.regime_label << ": with A " << a.error_with << ", w/o A "
                  << a.error_without << "\n";
      }
    } else if (*plots) {
      const auto dir = paths.sweep_dir(sweep_name);
      const auto raw = harness::read_raw_jsonl(dir / "raw.jsonl");
      std::vector<harness::AxisMode> modes;
      if (axis == "both") {
        modes = {harness::AxisMode::eg_minus_et, harness::AxisMode::eg_minus_es};
      } else {
        modes = {harness::parse_axis_mode(axis)};
      }
      for (auto m : modes) {
        const auto path = dir / ("boxplot_" + std::string(harness::to_string(m)) + ".csv");
        harness::export_boxplot_csv(raw, m, path);
        std::cout << path.string() << "\n";
      }
    } else if (*verify) {
      bool ok = true;
      for (const auto& r : harness::run_invariant_suite(config.seed)) {
        std::cout << (r.passed ? "PASS " : "FAIL ") << r.name;
        if (!r.passed) std::cout << ": " << r.detail;
        std::cout << "\n";
        ok = ok && r.passed;
      }
      return ok ? 0 : 2;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

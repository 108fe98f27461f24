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

// Python module exposing entropy, losses, metrics, the delta filter and the
// experiment pipeline.

#include <cmath>
#include <string>
#include <vector>

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "vqr/error.hpp"
#include "vqr/harness.hpp"
#include "vqr/metrics.hpp"
#include "vqr/rephraser.hpp"
#include "vqr/training.hpp"
#include "vqr/vqa.hpp"

namespace py = pybind11;
using namespace vqr;

namespace {

std::string report_json(const metrics::MetricsReport& r) { return metrics::to_json(r).dump(); }

// Pipeline over one experiment directory.
class Experiment {
 public:
  Experiment(const std::string& config_json, const std::filesystem::path& out)
      : config_(harness::experiment_config_from_json(nlohmann::json::parse(config_json))), paths_{out} {}

  std::string config_json() const { return harness::to_json(config_).dump(); }

  py::dict generate_data() {
    const auto d = harness::step_generate_data(config_, paths_);
    py::dict r;
    r["scenes"] = d.scenes.size();
    r["questions"] = d.questions.size();
    r["path"] = paths_.dataset();
    return r;
  }

  py::dict train_vqa() {
    const auto rep = harness::step_train_vqa(config_, paths_);
    py::dict r;
    r["final_loss"] = rep.final_loss;
    r["heldout_kl"] = rep.heldout_kl;
    return r;
  }

  py::dict train(const std::string& label) {
    const auto c = harness::parse_configuration(label);
    const auto t = harness::step_train(config_, paths_, c);
    std::vector<double> vqg, ent;
    for (const auto& l : t.log) {
      vqg.push_back(l.l_vqg);
      ent.push_back(l.l_ent ? *l.l_ent : std::nan(""));
    }
    py::dict r;
    r["label"] = c.label();
    r["l_vqg"] = vqg;
    r["l_ent"] = ent;
    r["gumbel_passes"] = t.gumbel_passes;
    r["checkpoint"] = paths_.checkpoint(c);
    return r;
  }

  std::string sweep_delta_csv() { return harness::sweep_csv(harness::step_sweep_delta(config_, paths_).rows); }

  py::dict rephrase(int scene_id, const std::string& question, double target_entropy, const std::string& label) {
    const auto d = world::read_dataset(paths_.dataset());
    const auto vqa = vqa::VqaModel::load(paths_.vqa());
    const auto models = harness::load_configurations(paths_.root, {harness::parse_configuration(label)});
    const auto features = world::scene_to_features(d.scene(scene_id));
    const auto source = world::encode_question(d.vocab.question, question);
    world::validate_question(source, d.vocab.question.size(), models[0].model.config().max_length);
    const auto generated = models[0].model.rephrase(features, source, target_entropy, vqa);
    py::dict r;
    r["source"] = world::decode_question(d.vocab.question, source);
    r["source_entropy"] = training::question_entropy(vqa, features, source);
    r["target_entropy"] = target_entropy;
    r["generated"] = world::decode_question(d.vocab.question, generated);
    r["generated_entropy"] = training::question_entropy(vqa, features, generated);
    return r;
  }

 private:
  harness::ExperimentConfig config_;
  harness::ExperimentPaths paths_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Entropy-controlled visual question rephrasing";

  py::register_exception<Error>(m, "Error");

  m.def("entropy", [](const std::vector<double>& p) { return vqa::entropy(p); }, py::arg("probs"),
        "Entropy in nats of an answer distribution.");
  m.def("vqg_loss", [](const ad::Matrix& logits, const std::vector<int>& target) {
    return rephraser::vqg_loss(logits, target);
  }, py::arg("step_logits"), py::arg("target"));
  m.def("entropy_loss", py::overload_cast<double, double>(&rephraser::entropy_loss), py::arg("target_entropy"),
        py::arg("generated_entropy"));
  m.def("total_loss", py::overload_cast<double, double, double>(&rephraser::total_loss), py::arg("vqg"),
        py::arg("ent"), py::arg("lambda_"));

  m.def("bleu4", &metrics::bleu4, py::arg("candidate"), py::arg("references"));
  m.def("rouge_l", &metrics::rouge_l, py::arg("candidate"), py::arg("reference"));
  m.def("meteor_lite", &metrics::meteor_lite, py::arg("candidate"), py::arg("reference"));
  m.def("diversity", &metrics::diversity, py::arg("questions"));
  m.def("cider", [](const std::vector<std::pair<metrics::Tokens, std::vector<metrics::Tokens>>>& docs) {
    std::vector<metrics::CiderDocument> corpus;
    for (const auto& [c, refs] : docs) corpus.push_back({c, refs});
    return metrics::cider(corpus);
  }, py::arg("documents"), "Corpus CIDEr over (candidate, references) pairs.");
  m.def("evaluate", [](const std::vector<double>& target, const std::vector<double>& generated,
                       const std::vector<metrics::Tokens>& sources, const std::vector<metrics::Tokens>& questions) {
    if (target.size() != generated.size() || target.size() != sources.size() || target.size() != questions.size()) {
      throw ShapeError("evaluate: argument lengths differ");
    }
    std::vector<metrics::EvalRecord> records;
    for (std::size_t i = 0; i < target.size(); ++i) records.push_back({target[i], generated[i], sources[i], questions[i]});
    return report_json(metrics::evaluate(records));
  }, py::arg("target_entropy"), py::arg("generated_entropy"), py::arg("sources"), py::arg("generated"),
        "Metrics report as a JSON string.");

  m.def("reference_delta_grid", &harness::reference_delta_grid);
  m.def("desk_delta_grid", &harness::desk_delta_grid, py::arg("answer_vocab"));
  m.def("delta_unit", &harness::delta_unit, py::arg("answer_vocab"));
  m.def("delta_filter", [](const std::vector<double>& source_entropy, double delta, double max_entropy) {
    std::vector<training::RephraseSample> eval(source_entropy.size());
    for (std::size_t i = 0; i < eval.size(); ++i) {
      eval[i].question_id = static_cast<int>(i);
      eval[i].source_entropy = source_entropy[i];
    }
    std::vector<std::pair<int, double>> out;
    for (const auto& s : harness::build_delta_samples(eval, delta, max_entropy)) {
      out.emplace_back(s.question_id, s.target_entropy);
    }
    return out;
  }, py::arg("source_entropy"), py::arg("delta"), py::arg("max_entropy"),
        "Retained (index, target entropy) pairs.");

  m.def("default_config_json", [] { return harness::to_json(harness::ExperimentConfig{}).dump(); });
  m.def("verify", [](std::uint64_t seed) {
    std::vector<std::tuple<std::string, bool, std::string>> out;
    for (const auto& r : harness::run_invariant_suite(seed)) out.emplace_back(r.name, r.passed, r.detail);
    return out;
  }, py::arg("seed") = 1);

  py::class_<Experiment>(m, "Experiment")
      .def(py::init<const std::string&, const std::filesystem::path&>(), py::arg("config_json"), py::arg("out"))
      .def("config_json", &Experiment::config_json)
      .def("generate_data", &Experiment::generate_data)
      .def("train_vqa", &Experiment::train_vqa)
      .def("train", &Experiment::train, py::arg("label"))
      .def("sweep_delta_csv", &Experiment::sweep_delta_csv)
      .def("rephrase", &Experiment::rephrase, py::arg("scene_id"), py::arg("question"), py::arg("target_entropy"),
           py::arg("label") = "Sampling-FT");
}

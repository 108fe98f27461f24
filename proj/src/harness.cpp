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

#include "vqr/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <thread>

#include "vqr/checkpoint.hpp"
#include "vqr/error.hpp"

namespace vqr::harness {

using nlohmann::json;

namespace {

std::string num(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", x);
  return buf;
}

std::vector<int> strip_end(const std::vector<int>& tokens) {
  std::vector<int> out = tokens;
  if (!out.empty() && out.back() == world::kEnd) out.pop_back();
  return out;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

}  // namespace

std::vector<double> reference_delta_grid() {
  std::vector<double> g;
  for (int i = -4; i <= 4; ++i) g.push_back(0.5 * i);
  return g;
}

double delta_unit(int answer_vocab) {
  if (answer_vocab < 2) throw DomainError("answer vocabulary must have at least two entries");
  return std::log(static_cast<double>(answer_vocab)) / std::log(static_cast<double>(kReferenceAnswerVocab));
}

std::vector<double> desk_delta_grid(int answer_vocab) {
  const double s = delta_unit(answer_vocab);
  std::vector<double> g;
  for (int i = -4; i <= 4; ++i) g.push_back(0.5 * i * s);
  return g;
}

std::vector<double> reference_lambda_grid() { return {0.01, 0.1, 1.0, 10.0, 100.0}; }

std::string configuration_label(Regime regime, Strategy strategy, bool use_attention) {
  std::string s = strategy == Strategy::noise ? "Noise" : "Sampling";
  if (regime == Regime::pretrain) s += " Pretrain";
  if (regime == Regime::finetune) s += "-FT";
  if (!use_attention) s += " w/o A";
  return s;
}

std::string checkpoint_dirname(Regime regime, Strategy strategy, bool use_attention) {
  std::string s = std::string(training::to_string(regime)) + "-" + std::string(training::to_string(strategy));
  if (!use_attention) s += "-noattn";
  return s;
}

std::vector<Configuration> all_configurations() {
  std::vector<Configuration> out;
  for (Strategy s : {Strategy::noise, Strategy::sampling}) {
    for (Regime r : {Regime::pretrain, Regime::scratch, Regime::finetune}) out.push_back({r, s, true});
  }
  return out;
}

Configuration parse_configuration(std::string_view label) {
  for (bool att : {true, false}) {
    for (const auto& c : all_configurations()) {
      Configuration v{c.regime, c.strategy, att};
      if (v.label() == label) return v;
    }
  }
  throw ConfigError("unknown configuration label '" + std::string(label) + "'");
}

SweepConfig SweepConfig::desk(int answer_vocab) {
  return {desk_delta_grid(answer_vocab), reference_lambda_grid(), all_configurations(), {1}, "runs", 1};
}

SweepConfig SweepConfig::full() {
  return {reference_delta_grid(), reference_lambda_grid(), all_configurations(), {1}, "runs", 1};
}

void validate(const SweepConfig& c) {
  if (c.delta_grid.empty()) throw ConfigError("delta grid is empty");
  if (!std::is_sorted(c.delta_grid.begin(), c.delta_grid.end())) {
    throw ConfigError("delta grid must be sorted ascending");
  }
  if (c.threads < 1) throw ConfigError("threads must be >= 1");
}

std::vector<RephraseSample> build_delta_samples(const std::vector<RephraseSample>& eval, double delta,
                                                double max_entropy) {
  std::vector<RephraseSample> out;
  for (const auto& s : eval) {
    if (s.source_entropy + delta < 0.0) continue;
    RephraseSample t = s;
    t.target = t.source;
    t.target_entropy = std::min(s.source_entropy + delta, max_entropy);
    t.generated.reset();
    t.generated_entropy.reset();
    out.push_back(std::move(t));
  }
  return out;
}

std::vector<LoadedConfiguration> load_configurations(const std::filesystem::path& dir,
                                                     const std::vector<Configuration>& configurations) {
  std::vector<LoadedConfiguration> out;
  for (const auto& c : configurations) {
    const auto path = dir / checkpoint_dirname(c.regime, c.strategy, c.use_attention);
    if (!std::filesystem::exists(path / "manifest.json")) {
      throw ConfigError("missing checkpoint for configuration '" + c.label() + "' at " + path.string());
    }
    out.push_back({c.label(), training::load_rephraser(path).model, std::nullopt});
  }
  return out;
}

SweepResult run_delta_sweep(const std::vector<LoadedConfiguration>& models, const world::Dataset& dataset,
                            const vqa::VqaModel& vqa, const std::vector<double>& delta_grid, int threads) {
  validate(SweepConfig{delta_grid, {}, {}, {}, {}, threads});
  if (!vqa.frozen()) throw ContractError("sweeps require a frozen VQA model");
  const std::string digest = vqa.digest();
  const training::FeatureCache features(dataset);
  const auto eval = training::source_samples(dataset, world::Split::eval, vqa, features);
  const double max_entropy = std::log(static_cast<double>(dataset.vocab.answer.size()));

  struct Cell {
    SweepRow row;
    std::vector<RawRecord> raw;
  };
  const std::size_t n_cells = delta_grid.size() * models.size();
  std::vector<Cell> cells(n_cells);
  auto run_cell = [&](std::size_t k) {
    const double delta = delta_grid[k / models.size()];
    const auto& m = models[k % models.size()];
    auto samples = training::rephrase_batch(m.model, vqa, features, build_delta_samples(eval, delta, max_entropy));
    Cell& cell = cells[k];
    std::vector<metrics::EvalRecord> records;
    for (const auto& s : samples) {
      RawRecord r;
      r.delta = delta;
      r.configuration = m.label;
      r.lambda = m.lambda;
      r.scene_id = s.scene_id;
      r.question_id = s.question_id;
      r.source_entropy = s.source_entropy;
      r.target_entropy = s.target_entropy;
      r.generated_entropy = *s.generated_entropy;
      r.source = strip_end(s.source);
      r.generated = strip_end(*s.generated);
      r.source_text = world::decode_question(dataset.vocab.question, r.source);
      r.generated_text = world::decode_question(dataset.vocab.question, r.generated);
      records.push_back({r.target_entropy, r.generated_entropy, r.source, r.generated});
      cell.raw.push_back(std::move(r));
    }
    cell.row.delta = delta;
    cell.row.configuration = m.label;
    cell.row.lambda = m.lambda;
    if (!records.empty()) cell.row.metrics = metrics::evaluate(records);
  };

  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(threads), n_cells);
  if (workers <= 1) {
    for (std::size_t k = 0; k < n_cells; ++k) run_cell(k);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t k = next++; k < n_cells; k = next++) run_cell(k);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  SweepResult out;
  for (auto& c : cells) {
    out.rows.push_back(std::move(c.row));
    for (auto& r : c.raw) out.raw.push_back(std::move(r));
  }
  if (vqa.digest() != digest) throw ContractError("frozen VQA parameters changed during the sweep");
  return out;
}

std::vector<SweepRow> rows_from_raw(const std::vector<RawRecord>& raw) {
  using Key = std::tuple<double, std::string, std::optional<double>>;
  std::vector<Key> order;
  std::map<Key, std::vector<metrics::EvalRecord>> groups;
  for (const auto& r : raw) {
    Key k{r.delta, r.configuration, r.lambda};
    auto [it, inserted] = groups.try_emplace(k);
    if (inserted) order.push_back(k);
    it->second.push_back({r.target_entropy, r.generated_entropy, r.source, r.generated});
  }
  std::vector<SweepRow> rows;
  for (const auto& k : order) {
    rows.push_back({std::get<0>(k), std::get<1>(k), std::get<2>(k), metrics::evaluate(groups[k])});
  }
  return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  const bool with_lambda =
      std::any_of(rows.begin(), rows.end(), [](const SweepRow& r) { return r.lambda.has_value(); });
  std::ostringstream out;
  if (with_lambda) out << "lambda,";
  out << "delta,configuration,entropy_error_mean,entropy_error_std,bleu4,cider,meteor_lite,rouge_l,diversity,"
         "n_questions\n";
  for (const auto& r : rows) {
    const auto& m = r.metrics;
    if (with_lambda) out << (r.lambda ? num(*r.lambda) : std::string()) << ',';
    out << num(r.delta) << ',' << r.configuration << ',' << num(m.mean_abs_entropy_error) << ','
        << num(m.std_abs_entropy_error) << ',' << num(m.bleu4) << ',' << num(m.cider) << ','
        << num(m.meteor_lite) << ',' << num(m.rouge_l) << ',' << m.diversity << ',' << m.n_samples << '\n';
  }
  return out.str();
}

void write_sweep_csv(const std::vector<SweepRow>& rows, const std::filesystem::path& path) {
  write_text(path, sweep_csv(rows));
}

void write_raw_jsonl(const std::vector<RawRecord>& raw, const std::filesystem::path& path) {
  std::ostringstream out;
  for (const auto& r : raw) {
    json j = {{"delta", r.delta},
              {"configuration", r.configuration},
              {"scene_id", r.scene_id},
              {"question_id", r.question_id},
              {"E_S", r.source_entropy},
              {"E_T", r.target_entropy},
              {"E_G", r.generated_entropy},
              {"Q_S", r.source},
              {"Q_G", r.generated},
              {"Q_S_text", r.source_text},
              {"Q_G_text", r.generated_text}};
    if (r.lambda) j["lambda"] = *r.lambda;
    out << j.dump() << '\n';
  }
  write_text(path, out.str());
}

std::vector<RawRecord> read_raw_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read " + path.string());
  std::vector<RawRecord> out;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      RawRecord r;
      r.delta = j.at("delta").get<double>();
      r.configuration = j.at("configuration").get<std::string>();
      if (j.contains("lambda")) r.lambda = j.at("lambda").get<double>();
      r.scene_id = j.at("scene_id").get<int>();
      r.question_id = j.at("question_id").get<int>();
      r.source_entropy = j.at("E_S").get<double>();
      r.target_entropy = j.at("E_T").get<double>();
      r.generated_entropy = j.at("E_G").get<double>();
      r.source = j.at("Q_S").get<std::vector<int>>();
      r.generated = j.at("Q_G").get<std::vector<int>>();
      r.source_text = j.value("Q_S_text", std::string{});
      r.generated_text = j.value("Q_G_text", std::string{});
      out.push_back(std::move(r));
    } catch (const json::exception& e) {
      throw ParseError(path.string() + ": " + e.what(), line_no);
    }
  }
  return out;
}

std::vector<AsymmetryEntry> asymmetry_report(const std::vector<SweepRow>& rows) {
  std::vector<std::string> order;
  for (const auto& r : rows) {
    if (std::find(order.begin(), order.end(), r.configuration) == order.end()) order.push_back(r.configuration);
  }
  std::vector<AsymmetryEntry> out;
  for (const auto& label : order) {
    const SweepRow* neg = nullptr;
    const SweepRow* pos = nullptr;
    for (const auto& r : rows) {
      if (r.configuration != label || r.metrics.n_samples == 0) continue;
      if (r.delta < 0.0 && (!neg || r.delta < neg->delta)) neg = &r;
      if (r.delta > 0.0 && (!pos || r.delta > pos->delta)) pos = &r;
    }
    if (!neg || !pos) continue;
    AsymmetryEntry e{label,
                     neg->delta,
                     neg->metrics.mean_abs_entropy_error,
                     pos->delta,
                     pos->metrics.mean_abs_entropy_error,
                     false};
    e.increase_harder = e.positive_error > e.negative_error;
    out.push_back(e);
  }
  return out;
}

json to_json(const std::vector<AsymmetryEntry>& report) {
  json arr = json::array();
  for (const auto& e : report) {
    arr.push_back({{"configuration", e.configuration},
                   {"negative_delta", e.negative_delta},
                   {"negative_error", e.negative_error},
                   {"positive_delta", e.positive_delta},
                   {"positive_error", e.positive_error},
                   {"increase_harder", e.increase_harder}});
  }
  return arr;
}

AxisMode parse_axis_mode(std::string_view s) {
  if (s == "eg_minus_et") return AxisMode::eg_minus_et;
  if (s == "eg_minus_es") return AxisMode::eg_minus_es;
  throw DomainError("unknown axis mode '" + std::string(s) + "'");
}

std::string_view to_string(AxisMode mode) { return mode == AxisMode::eg_minus_et ? "eg_minus_et" : "eg_minus_es"; }

std::vector<BoxplotPoint> boxplot_points(const std::vector<RawRecord>& raw, AxisMode mode) {
  std::vector<BoxplotPoint> out;
  out.reserve(raw.size());
  for (const auto& r : raw) {
    const double base = mode == AxisMode::eg_minus_et ? r.target_entropy : r.source_entropy;
    std::string label = r.configuration;
    if (r.lambda) label += " lambda=" + num(*r.lambda);
    out.push_back({r.delta, std::move(label), r.generated_entropy - base});
  }
  return out;
}

namespace {

double quantile(const std::vector<double>& sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

}  // namespace

std::vector<Quartiles> quartile_summary(const std::vector<BoxplotPoint>& points) {
  std::vector<std::pair<double, std::string>> order;
  std::map<std::pair<double, std::string>, std::vector<double>> groups;
  for (const auto& p : points) {
    auto key = std::make_pair(p.delta, p.configuration);
    auto [it, inserted] = groups.try_emplace(key);
    if (inserted) order.push_back(key);
    it->second.push_back(p.value);
  }
  std::vector<Quartiles> out;
  for (const auto& key : order) {
    auto v = groups[key];
    std::sort(v.begin(), v.end());
    out.push_back({key.first, key.second, v.size(), v.front(), quantile(v, 0.25), quantile(v, 0.5),
                   quantile(v, 0.75), v.back()});
  }
  return out;
}

void export_boxplot_csv(const std::vector<RawRecord>& raw, AxisMode mode, const std::filesystem::path& path) {
  const auto points = boxplot_points(raw, mode);
  std::ostringstream csv;
  csv << "delta,configuration," << to_string(mode) << '\n';
  for (const auto& p : points) csv << num(p.delta) << ',' << p.configuration << ',' << num(p.value) << '\n';
  write_text(path, csv.str());

  std::ostringstream side;
  side << "delta,configuration,n,min,q1,median,q3,max\n";
  for (const auto& q : quartile_summary(points)) {
    side << num(q.delta) << ',' << q.configuration << ',' << q.n << ',' << num(q.min) << ',' << num(q.q1) << ','
         << num(q.median) << ',' << num(q.q3) << ',' << num(q.max) << '\n';
  }
  auto sidecar = path;
  sidecar.replace_extension("");
  write_text(sidecar.string() + ".quartiles.csv", side.str());
}

// ---------------------------------------------------------------------------

std::vector<double> ExperimentConfig::resolved_delta_grid(int answer_vocab) const {
  if (delta_grid == "desk") return desk_delta_grid(answer_vocab);
  if (delta_grid == "full") return reference_delta_grid();
  if (delta_grid == "explicit") return deltas;
  throw ConfigError("delta_grid must be 'desk', 'full' or 'explicit'");
}

json to_json(const ExperimentConfig& c) {
  std::vector<std::string> labels;
  for (const auto& cfg : c.configurations) labels.push_back(cfg.label());
  const auto& r = c.rephraser;
  return {{"seed", c.seed},
          {"world",
           {{"train_scenes", c.world.train_scenes},
            {"eval_scenes", c.world.eval_scenes},
            {"grid_size", c.world.grid_size},
            {"min_objects", c.world.min_objects},
            {"max_objects", c.world.max_objects},
            {"max_per_shape", c.world.max_per_shape},
            {"questions_per_scene", c.world.questions_per_scene}}},
          {"vqa",
           {{"embed_dim", c.vqa.embed_dim},
            {"hidden", c.vqa.hidden},
            {"attention_dim", c.vqa.attention_dim},
            {"mlp_hidden", c.vqa.mlp_hidden},
            {"max_length", c.vqa.max_length}}},
          {"vqa_training",
           {{"iterations", c.vqa_training.iterations},
            {"batch_size", c.vqa_training.batch_size},
            {"learning_rate", c.vqa_training.learning_rate}}},
          {"rephraser",
           {{"lambda", r.lambda},
            {"batch_size", r.batch_size},
            {"learning_rate", r.learning_rate},
            {"iterations", r.iterations},
            {"finetune_iterations", c.finetune_iterations},
            {"noise_bound", r.noise_bound},
            {"tau", r.tau},
            {"straight_through", r.straight_through},
            {"clip_norm", r.clip_norm},
            {"hidden", r.hidden},
            {"embed_dim", r.embed_dim},
            {"max_length", r.max_length},
            {"use_attention", r.use_attention}}},
          {"sweep",
           {{"delta_grid", c.delta_grid},
            {"deltas", c.deltas},
            {"lambda_grid", c.lambda_grid},
            {"configurations", labels},
            {"threads", c.threads}}}};
}

namespace {

template <typename T>
void read_field(const json& obj, const char* key, T& out, const std::string& where) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

void check_keys(const json& obj, std::initializer_list<const char*> keys, const std::string& where) {
  if (!obj.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [k, v] : obj.items()) {
    if (std::none_of(keys.begin(), keys.end(), [&](const char* key) { return k == key; })) {
      throw ConfigError("unknown key '" + where + "." + k + "'");
    }
  }
}

}  // namespace

ExperimentConfig experiment_config_from_json(const json& j) {
  ExperimentConfig c;
  check_keys(j, {"seed", "world", "vqa", "vqa_training", "rephraser", "sweep"}, "config");
  read_field(j, "seed", c.seed, "config");
  if (j.contains("world")) {
    const json& w = j.at("world");
    check_keys(w,
               {"train_scenes", "eval_scenes", "grid_size", "min_objects", "max_objects", "max_per_shape",
                "questions_per_scene"},
               "world");
    read_field(w, "train_scenes", c.world.train_scenes, "world");
    read_field(w, "eval_scenes", c.world.eval_scenes, "world");
    read_field(w, "grid_size", c.world.grid_size, "world");
    read_field(w, "min_objects", c.world.min_objects, "world");
    read_field(w, "max_objects", c.world.max_objects, "world");
    read_field(w, "max_per_shape", c.world.max_per_shape, "world");
    read_field(w, "questions_per_scene", c.world.questions_per_scene, "world");
  }
  world::validate(c.world);
  if (j.contains("vqa")) {
    const json& v = j.at("vqa");
    check_keys(v, {"embed_dim", "hidden", "attention_dim", "mlp_hidden", "max_length"}, "vqa");
    read_field(v, "embed_dim", c.vqa.embed_dim, "vqa");
    read_field(v, "hidden", c.vqa.hidden, "vqa");
    read_field(v, "attention_dim", c.vqa.attention_dim, "vqa");
    read_field(v, "mlp_hidden", c.vqa.mlp_hidden, "vqa");
    read_field(v, "max_length", c.vqa.max_length, "vqa");
  }
  if (j.contains("vqa_training")) {
    const json& v = j.at("vqa_training");
    check_keys(v, {"iterations", "batch_size", "learning_rate"}, "vqa_training");
    read_field(v, "iterations", c.vqa_training.iterations, "vqa_training");
    read_field(v, "batch_size", c.vqa_training.batch_size, "vqa_training");
    read_field(v, "learning_rate", c.vqa_training.learning_rate, "vqa_training");
  }
  if (j.contains("rephraser")) {
    const json& r = j.at("rephraser");
    check_keys(r,
               {"lambda", "batch_size", "learning_rate", "iterations", "finetune_iterations", "noise_bound", "tau",
                "straight_through", "clip_norm", "hidden", "embed_dim", "max_length", "use_attention"},
               "rephraser");
    auto& t = c.rephraser;
    read_field(r, "lambda", t.lambda, "rephraser");
    read_field(r, "batch_size", t.batch_size, "rephraser");
    read_field(r, "learning_rate", t.learning_rate, "rephraser");
    read_field(r, "iterations", t.iterations, "rephraser");
    read_field(r, "finetune_iterations", c.finetune_iterations, "rephraser");
    read_field(r, "noise_bound", t.noise_bound, "rephraser");
    read_field(r, "tau", t.tau, "rephraser");
    read_field(r, "straight_through", t.straight_through, "rephraser");
    read_field(r, "clip_norm", t.clip_norm, "rephraser");
    read_field(r, "hidden", t.hidden, "rephraser");
    read_field(r, "embed_dim", t.embed_dim, "rephraser");
    read_field(r, "max_length", t.max_length, "rephraser");
    read_field(r, "use_attention", t.use_attention, "rephraser");
  }
  if (j.contains("sweep")) {
    const json& s = j.at("sweep");
    check_keys(s, {"delta_grid", "deltas", "lambda_grid", "configurations", "threads"}, "sweep");
    read_field(s, "delta_grid", c.delta_grid, "sweep");
    read_field(s, "deltas", c.deltas, "sweep");
    read_field(s, "lambda_grid", c.lambda_grid, "sweep");
    read_field(s, "threads", c.threads, "sweep");
    if (s.contains("configurations")) {
      std::vector<std::string> labels;
      read_field(s, "configurations", labels, "sweep");
      c.configurations.clear();
      for (const auto& l : labels) c.configurations.push_back(parse_configuration(l));
    }
  }
  validate(SweepConfig{c.resolved_delta_grid(16), c.lambda_grid, c.configurations, {c.seed}, {}, c.threads});
  for (double l : c.lambda_grid) {
    if (!(l >= 0.0)) throw ConfigError("lambda grid entries must be >= 0");
  }
  if (c.finetune_iterations <= 0) throw ConfigError("finetune_iterations must be positive");
  return c;
}

ExperimentConfig read_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  try {
    return experiment_config_from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
}

void write_experiment_config(const ExperimentConfig& config, const std::filesystem::path& path) {
  write_text(path, to_json(config).dump(2) + "\n");
}

namespace {

vqa::VqaModel load_frozen_vqa(const ExperimentPaths& paths) {
  if (!std::filesystem::exists(paths.vqa() / "manifest.json")) {
    throw ConfigError("missing VQA checkpoint at " + paths.vqa().string() + " (run train-vqa first)");
  }
  auto m = vqa::VqaModel::load(paths.vqa());
  if (!m.frozen()) throw ContractError("VQA checkpoint at " + paths.vqa().string() + " is not frozen");
  return m;
}

world::Dataset load_dataset(const ExperimentPaths& paths) {
  if (!std::filesystem::exists(paths.dataset())) {
    throw ConfigError("missing dataset at " + paths.dataset().string() + " (run gen-data first)");
  }
  return world::read_dataset(paths.dataset());
}

training::TrainRegimeConfig regime_config(const ExperimentConfig& config, const Configuration& c,
                                          const std::filesystem::path& pretrain_dir) {
  training::TrainRegimeConfig t = config.rephraser;
  t.regime = c.regime;
  t.strategy = c.strategy;
  t.use_attention = c.use_attention;
  t.seed = config.seed;
  if (c.regime == Regime::finetune) {
    if (!std::filesystem::exists(pretrain_dir / "manifest.json")) {
      throw ConfigError("finetune of '" + c.label() + "' needs the pretrain checkpoint " + pretrain_dir.string());
    }
    t.pretrain_checkpoint = pretrain_dir;
    t.iterations = config.finetune_iterations;
  }
  return t;
}

void write_sweep_outputs(const SweepResult& r, const std::filesystem::path& dir) {
  write_sweep_csv(r.rows, dir / "sweep.csv");
  write_raw_jsonl(r.raw, dir / "raw.jsonl");
  json meta = {{"asymmetry", to_json(asymmetry_report(r.rows))}, {"metric_config", metrics::metric_config()}};
  write_text(dir / "report.json", meta.dump(2) + "\n");
}

}  // namespace

world::Dataset step_generate_data(const ExperimentConfig& config, const ExperimentPaths& paths) {
  auto d = world::generate_dataset(config.seed, config.world);
  std::filesystem::create_directories(paths.root);
  world::write_dataset(d, paths.dataset());
  write_experiment_config(config, paths.config());
  return d;
}

vqa::VqaTrainReport step_train_vqa(const ExperimentConfig& config, const ExperimentPaths& paths) {
  const auto d = load_dataset(paths);
  auto vc = config.vqa;
  const auto defaults = vqa::default_vqa_config(d);
  vc.question_vocab = defaults.question_vocab;
  vc.answer_vocab = defaults.answer_vocab;
  vc.regions = defaults.regions;
  vqa::VqaModel model(vc, derive_seed(config.seed, "vqa-init"));
  auto tc = config.vqa_training;
  tc.seed = derive_seed(config.seed, "vqa-train");
  auto report = vqa::train_vqa(model, d, tc);
  model.freeze();
  model.save(paths.vqa());
  json summary = {{"final_loss", report.final_loss}, {"heldout_kl", report.heldout_kl}, {"digest", model.digest()}};
  write_text(paths.vqa() / "report.json", summary.dump(2) + "\n");
  return report;
}

training::TrainedRephraser step_train(const ExperimentConfig& config, const ExperimentPaths& paths,
                                      const Configuration& c) {
  const auto d = load_dataset(paths);
  const auto vqa = load_frozen_vqa(paths);
  const auto t = regime_config(config, c, paths.checkpoint({Regime::pretrain, c.strategy, c.use_attention}));
  auto trained = training::train(d, vqa, t);
  training::save_rephraser(trained, paths.checkpoint(c));
  return trained;
}

SweepResult step_sweep_delta(const ExperimentConfig& config, const ExperimentPaths& paths) {
  const auto models = load_configurations(paths.root, config.configurations);
  const auto d = load_dataset(paths);
  const auto vqa = load_frozen_vqa(paths);
  auto result = run_delta_sweep(models, d, vqa, config.resolved_delta_grid(d.vocab.answer.size()), config.threads);
  write_sweep_outputs(result, paths.sweep_dir("sweep-delta"));
  return result;
}

SweepResult run_lambda_sweep(const ExperimentConfig& config, const ExperimentPaths& paths) {
  const auto d = load_dataset(paths);
  const auto vqa = load_frozen_vqa(paths);
  const Configuration ft{Regime::finetune, Strategy::sampling, config.rephraser.use_attention};
  const auto pre_dir = paths.checkpoint({Regime::pretrain, Strategy::sampling, ft.use_attention});
  const auto out_dir = paths.sweep_dir("sweep-lambda");
  std::vector<LoadedConfiguration> models;
  for (double lambda : config.lambda_grid) {
    auto t = regime_config(config, ft, pre_dir);
    t.lambda = lambda;
    auto trained = training::train(d, vqa, t);
    char name[64];
    std::snprintf(name, sizeof name, "lambda-%g", lambda);
    training::save_rephraser(trained, out_dir / name);
    models.push_back({ft.label(), std::move(trained.model), lambda});
  }
  auto result = run_delta_sweep(models, d, vqa, config.resolved_delta_grid(d.vocab.answer.size()), config.threads);
  write_sweep_outputs(result, out_dir);
  return result;
}

AblationResult run_attention_ablation(const ExperimentConfig& config, const ExperimentPaths& paths) {
  const auto d = load_dataset(paths);
  const auto vqa = load_frozen_vqa(paths);
  const auto out_dir = paths.sweep_dir("ablate-attention");
  std::vector<LoadedConfiguration> models;
  std::map<std::string, std::uint64_t> seeds;
  for (Regime regime : {Regime::pretrain, Regime::finetune}) {
    for (bool att : {false, true}) {
      const Configuration c{regime, Strategy::sampling, att};
      const auto pre_dir = out_dir / checkpoint_dirname(Regime::pretrain, Strategy::sampling, att);
      auto trained = training::train(d, vqa, regime_config(config, c, pre_dir));
      const auto dir = out_dir / checkpoint_dirname(regime, Strategy::sampling, att);
      training::save_rephraser(trained, dir);
      const auto manifest = checkpoint::load(dir).manifest;
      const std::string regime_label = regime == Regime::pretrain ? "Pretrain" : "FT";
      const auto seed = manifest.at("training").at("seed").get<std::uint64_t>();
      auto [it, inserted] = seeds.try_emplace(regime_label, seed);
      if (!inserted && it->second != seed) {
        throw ConfigError("attention ablation variants of '" + regime_label + "' were trained with different seeds");
      }
      models.push_back({regime_label + (att ? "" : " w/o A"), std::move(trained.model), std::nullopt});
    }
  }
  AblationResult out;
  out.sweep = run_delta_sweep(models, d, vqa, config.resolved_delta_grid(d.vocab.answer.size()), config.threads);
  for (std::size_t i = 0; i + 1 < out.sweep.rows.size(); i += 2) {
    const auto& without = out.sweep.rows[i];
    const auto& with = out.sweep.rows[i + 1];
    out.deltas.push_back({with.delta, with.configuration, with.metrics.mean_abs_entropy_error,
                          without.metrics.mean_abs_entropy_error});
  }
  write_sweep_outputs(out.sweep, out_dir);
  json deltas = json::array();
  for (const auto& a : out.deltas) {
    deltas.push_back({{"delta", a.delta},
                      {"regime", a.regime_label},
                      {"error_with_attention", a.error_with},
                      {"error_without_attention", a.error_without},
                      {"difference", a.error_with - a.error_without}});
  }
  write_text(out_dir / "ablation.json", deltas.dump(2) + "\n");
  return out;
}

}  // namespace vqr::harness

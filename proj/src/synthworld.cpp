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

#include "vqr/synthworld.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "vqr/error.hpp"
#include "vqr/random.hpp"

namespace vqr::world {

using nlohmann::json;

namespace {

constexpr std::array<std::string_view, kShapeCount> kShapeNames{"circle", "square", "triangle"};
constexpr std::array<std::string_view, kShapeCount> kShapePlurals{"circles", "squares", "triangles"};
constexpr std::array<std::string_view, kColorCount> kColorNames{"red", "green", "blue", "yellow"};
constexpr std::array<std::string_view, kSizeCount> kSizeNames{"small", "large"};
constexpr std::array<std::string_view, 4> kPositions{"left", "right", "top", "bottom"};

// Highest count answer; counts above this cannot be labelled.
constexpr int kMaxCount = 4;

enum class Kind { color_of_object, color_of_shape, color_of_shape_at, size_of_shape, shape_of_color, count_of_shape, exists };

constexpr std::array<std::string_view, 7> kKindNames{
    "color_of_object", "color_of_shape", "color_of_shape_at", "size_of_shape",
    "shape_of_color",  "count_of_shape", "exists"};

struct Form {
  Kind kind;
  int shape = 0;
  int color = 0;
  int position = 0;
};

std::string text_of(const Form& s) {
  const std::string shape(kShapeNames[s.shape]);
  const std::string color(kColorNames[s.color]);
  switch (s.kind) {
    case Kind::color_of_object:
      return "what color is the object";
    case Kind::color_of_shape:
      return "what color is the " + shape;
    case Kind::color_of_shape_at:
      return "what color is the " + shape + " on the " + std::string(kPositions[s.position]);
    case Kind::size_of_shape:
      return "what size is the " + shape;
    case Kind::shape_of_color:
      return "what shape is the " + color + " object";
    case Kind::count_of_shape:
      return "how many " + std::string(kShapePlurals[s.shape]) + " are there";
    case Kind::exists:
      return "is there a " + color + " " + shape;
  }
  return {};
}

template <std::size_t N>
std::optional<int> index_in(const std::array<std::string_view, N>& names, std::string_view w) {
  for (std::size_t i = 0; i < N; ++i) {
    if (names[i] == w) return static_cast<int>(i);
  }
  return std::nullopt;
}

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> out;
  std::istringstream is{std::string(text)};
  for (std::string w; is >> w;) out.push_back(w);
  return out;
}

std::optional<Form> parse_form(std::string_view text) {
  const auto w = split_words(text);
  auto is = [&](std::size_t i, std::string_view s) { return i < w.size() && w[i] == s; };
  if (w.size() == 5 && is(0, "what") && is(1, "color") && is(2, "is") && is(3, "the")) {
    if (w[4] == "object") return Form{Kind::color_of_object};
    if (auto s = index_in(kShapeNames, w[4])) return Form{Kind::color_of_shape, *s};
  }
  if (w.size() == 8 && is(0, "what") && is(1, "color") && is(2, "is") && is(3, "the") && is(5, "on") &&
      is(6, "the")) {
    auto s = index_in(kShapeNames, w[4]);
    auto p = index_in(kPositions, w[7]);
    if (s && p) return Form{Kind::color_of_shape_at, *s, 0, *p};
  }
  if (w.size() == 5 && is(0, "what") && is(1, "size") && is(2, "is") && is(3, "the")) {
    if (auto s = index_in(kShapeNames, w[4])) return Form{Kind::size_of_shape, *s};
  }
  if (w.size() == 6 && is(0, "what") && is(1, "shape") && is(2, "is") && is(3, "the") && is(5, "object")) {
    if (auto c = index_in(kColorNames, w[4])) return Form{Kind::shape_of_color, 0, *c};
  }
  if (w.size() == 5 && is(0, "how") && is(1, "many") && is(3, "are") && is(4, "there")) {
    if (auto s = index_in(kShapePlurals, w[2])) return Form{Kind::count_of_shape, *s};
  }
  if (w.size() == 5 && is(0, "is") && is(1, "there") && is(2, "a")) {
    auto c = index_in(kColorNames, w[3]);
    auto s = index_in(kShapeNames, w[4]);
    if (c && s) return Form{Kind::exists, *s, *c};
  }
  return std::nullopt;
}

bool in_position(int row, int col, int grid, int position) {
  // Halves exclude the middle line on odd grids.
  const int twice_last = grid - 1;
  switch (position) {
    case 0:
      return 2 * col < twice_last;
    case 1:
      return 2 * col > twice_last;
    case 2:
      return 2 * row < twice_last;
    default:
      return 2 * row > twice_last;
  }
}

// Objects a question refers to (attribute templates only).
std::vector<Object> referents(const Scene& scene, const Form& s) {
  std::vector<Object> out;
  for (int r = 0; r < scene.grid_size; ++r) {
    for (int c = 0; c < scene.grid_size; ++c) {
      const auto& cell = scene.cells[static_cast<std::size_t>(r * scene.grid_size + c)];
      if (!cell) continue;
      bool match = false;
      switch (s.kind) {
        case Kind::color_of_object:
          match = true;
          break;
        case Kind::color_of_shape:
        case Kind::size_of_shape:
          match = static_cast<int>(cell->shape) == s.shape;
          break;
        case Kind::color_of_shape_at:
          match = static_cast<int>(cell->shape) == s.shape && in_position(r, c, scene.grid_size, s.position);
          break;
        case Kind::shape_of_color:
          match = static_cast<int>(cell->color) == s.color;
          break;
        default:
          break;
      }
      if (match) out.push_back(*cell);
    }
  }
  return out;
}

std::vector<double> label_of(const Scene& scene, const VocabPair& vocab, const Form& s) {
  std::vector<double> label(static_cast<std::size_t>(vocab.answer.size()), 0.0);
  auto bump = [&](std::string_view answer, double mass) {
    label[static_cast<std::size_t>(vocab.answer.id(answer))] += mass;
  };
  if (s.kind == Kind::count_of_shape || s.kind == Kind::exists) {
    int count = 0;
    for (const auto& cell : scene.cells) {
      if (!cell || static_cast<int>(cell->shape) != s.shape) continue;
      if (s.kind == Kind::exists && static_cast<int>(cell->color) != s.color) continue;
      ++count;
    }
    if (s.kind == Kind::exists) {
      bump(count > 0 ? "yes" : "no", 1.0);
    } else {
      if (count > kMaxCount) throw DomainError("count exceeds the answer vocabulary");
      bump(std::to_string(count), 1.0);
    }
    return label;
  }
  const auto objs = referents(scene, s);
  if (objs.empty()) throw DomainError("question has no referent in scene " + std::to_string(scene.scene_id));
  const double mass = 1.0 / static_cast<double>(objs.size());
  for (const Object& o : objs) {
    switch (s.kind) {
      case Kind::size_of_shape:
        bump(to_string(o.size), mass);
        break;
      case Kind::shape_of_color:
        bump(to_string(o.shape), mass);
        break;
      default:
        bump(to_string(o.color), mass);
        break;
    }
  }
  return label;
}

// Every answerable question for a scene, grouped by template.
std::vector<std::vector<Form>> candidate_forms(const Scene& scene) {
  std::vector<std::vector<Form>> by_kind(kKindNames.size());
  auto add_if_referenced = [&](const Form& s) {
    if (!referents(scene, s).empty()) by_kind[static_cast<std::size_t>(s.kind)].push_back(s);
  };
  add_if_referenced(Form{Kind::color_of_object});
  for (int sh = 0; sh < kShapeCount; ++sh) {
    add_if_referenced(Form{Kind::color_of_shape, sh});
    add_if_referenced(Form{Kind::size_of_shape, sh});
    for (int p = 0; p < static_cast<int>(kPositions.size()); ++p) {
      add_if_referenced(Form{Kind::color_of_shape_at, sh, 0, p});
    }
    by_kind[static_cast<std::size_t>(Kind::count_of_shape)].push_back(Form{Kind::count_of_shape, sh});
    for (int c = 0; c < kColorCount; ++c) {
      by_kind[static_cast<std::size_t>(Kind::exists)].push_back(Form{Kind::exists, sh, c});
    }
  }
  for (int c = 0; c < kColorCount; ++c) add_if_referenced(Form{Kind::shape_of_color, 0, c});
  return by_kind;
}

Scene generate_scene(int scene_id, Split split, const WorldConfig& config, Rng& rng) {
  Scene scene;
  scene.scene_id = scene_id;
  scene.split = split;
  scene.grid_size = config.grid_size;
  scene.cells.assign(static_cast<std::size_t>(config.grid_size * config.grid_size), std::nullopt);

  const int n = std::uniform_int_distribution<int>(config.min_objects, config.max_objects)(rng);
  std::vector<int> order(scene.cells.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::shuffle(order.begin(), order.end(), rng);

  std::array<int, kShapeCount> per_shape{};
  std::uniform_int_distribution<int> shape_d(0, kShapeCount - 1);
  std::uniform_int_distribution<int> color_d(0, kColorCount - 1);
  std::uniform_int_distribution<int> size_d(0, kSizeCount - 1);
  for (int k = 0; k < n; ++k) {
    int sh = shape_d(rng);
    while (per_shape[static_cast<std::size_t>(sh)] >= config.max_per_shape) sh = shape_d(rng);
    ++per_shape[static_cast<std::size_t>(sh)];
    scene.cells[static_cast<std::size_t>(order[static_cast<std::size_t>(k)])] =
        Object{static_cast<Shape>(sh), static_cast<Color>(color_d(rng)), static_cast<Size>(size_d(rng))};
  }
  return scene;
}

json object_json(const std::optional<Object>& o) {
  if (!o) return nullptr;
  return {{"shape", to_string(o->shape)}, {"color", to_string(o->color)}, {"size", to_string(o->size)}};
}

json config_json(const WorldConfig& c) {
  return {{"train_scenes", c.train_scenes},   {"eval_scenes", c.eval_scenes},
          {"grid_size", c.grid_size},         {"min_objects", c.min_objects},
          {"max_objects", c.max_objects},     {"max_per_shape", c.max_per_shape},
          {"questions_per_scene", c.questions_per_scene}};
}

WorldConfig config_from_json(const json& j) {
  WorldConfig c;
  c.train_scenes = j.at("train_scenes").get<int>();
  c.eval_scenes = j.at("eval_scenes").get<int>();
  c.grid_size = j.at("grid_size").get<int>();
  c.min_objects = j.at("min_objects").get<int>();
  c.max_objects = j.at("max_objects").get<int>();
  c.max_per_shape = j.at("max_per_shape").get<int>();
  c.questions_per_scene = j.at("questions_per_scene").get<int>();
  return c;
}

template <std::size_t N>
int enum_from(const std::array<std::string_view, N>& names, const json& j, const char* what) {
  const auto s = j.get<std::string>();
  if (auto i = index_in(names, s)) return *i;
  throw std::invalid_argument(std::string("unknown ") + what + " '" + s + "'");
}

}  // namespace

std::string_view to_string(Shape s) { return kShapeNames[static_cast<std::size_t>(s)]; }
std::string_view to_string(Color c) { return kColorNames[static_cast<std::size_t>(c)]; }
std::string_view to_string(Size s) { return kSizeNames[static_cast<std::size_t>(s)]; }
std::string_view to_string(Split s) { return s == Split::train ? "train" : "eval"; }

Vocab::Vocab(std::vector<std::string> words) : words_(std::move(words)) {
  for (std::size_t i = 0; i < words_.size(); ++i) {
    if (!index_.emplace(words_[i], static_cast<int>(i)).second) {
      throw IntegrityError("duplicate vocabulary entry '" + words_[i] + "'");
    }
  }
}

int Vocab::id(std::string_view word) const {
  if (auto i = find(word)) return *i;
  throw DomainError("word '" + std::string(word) + "' not in vocabulary");
}

std::optional<int> Vocab::find(std::string_view word) const {
  auto it = index_.find(std::string(word));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

const std::string& Vocab::word(int id) const {
  if (id < 0 || id >= size()) throw DomainError("token id " + std::to_string(id) + " out of range");
  return words_[static_cast<std::size_t>(id)];
}

VocabPair make_vocab() {
  std::vector<std::string> q{"<pad>", "<start>", "<end>", "<unk>", "what", "color", "is", "the",
                             "object", "on", "size", "shape", "how", "many", "are", "there", "a"};
  for (auto s : kShapeNames) q.emplace_back(s);
  for (auto s : kShapePlurals) q.emplace_back(s);
  for (auto s : kColorNames) q.emplace_back(s);
  for (auto s : kPositions) q.emplace_back(s);

  std::vector<std::string> a;
  for (auto s : kColorNames) a.emplace_back(s);
  for (auto s : kShapeNames) a.emplace_back(s);
  for (auto s : kSizeNames) a.emplace_back(s);
  a.emplace_back("yes");
  a.emplace_back("no");
  for (int k = 0; k <= kMaxCount; ++k) a.push_back(std::to_string(k));
  return {Vocab(std::move(q)), Vocab(std::move(a))};
}

std::vector<int> encode_question(const Vocab& vocab, std::string_view text) {
  std::vector<int> tokens;
  for (const auto& w : split_words(text)) tokens.push_back(vocab.find(w).value_or(kUnk));
  tokens.push_back(kEnd);
  return tokens;
}

std::string decode_question(const Vocab& vocab, const std::vector<int>& tokens) {
  std::string out;
  for (int t : tokens) {
    if (t == kPad || t == kStart || t == kEnd) continue;
    if (!out.empty()) out += ' ';
    out += vocab.word(t);
  }
  return out;
}

void validate_question(const std::vector<int>& tokens, int vocab_size, int max_length) {
  if (tokens.empty() || static_cast<int>(tokens.size()) > max_length) {
    throw DomainError("question length " + std::to_string(tokens.size()) + " outside [1, " +
                      std::to_string(max_length) + "]");
  }
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i] < 0 || tokens[i] >= vocab_size) throw DomainError("token id out of vocabulary");
    if ((tokens[i] == kEnd) != (i + 1 == tokens.size())) {
      throw DomainError("question must hold exactly one end token, at the final position");
    }
  }
}

void validate(const WorldConfig& c) {
  if (c.train_scenes < 0 || c.eval_scenes < 0 || c.train_scenes + c.eval_scenes < 1) {
    throw ConfigError("world needs at least one scene");
  }
  if (c.grid_size < 2) throw ConfigError("grid_size must be >= 2");
  if (c.questions_per_scene < 2) throw ConfigError("questions_per_scene must be >= 2");
  if (c.max_per_shape < 1 || c.max_per_shape > kMaxCount) {
    throw ConfigError("max_per_shape must lie in [1, " + std::to_string(kMaxCount) + "]");
  }
  if (c.min_objects < 1 || c.max_objects < c.min_objects) throw ConfigError("bad object count range");
  if (c.max_objects > c.grid_size * c.grid_size || c.max_objects > kShapeCount * c.max_per_shape) {
    throw ConfigError("max_objects does not fit the grid or the per-shape cap");
  }
}

const Scene& Dataset::scene(int scene_id) const {
  if (scene_id < 0 || scene_id >= static_cast<int>(scenes.size()) ||
      scenes[static_cast<std::size_t>(scene_id)].scene_id != scene_id) {
    throw DomainError("unknown scene_id " + std::to_string(scene_id));
  }
  return scenes[static_cast<std::size_t>(scene_id)];
}

std::vector<const Question*> Dataset::questions_of(int scene_id) const {
  std::vector<const Question*> out;
  for (const auto& q : questions) {
    if (q.scene_id == scene_id) out.push_back(&q);
  }
  return out;
}

std::vector<const Question*> Dataset::questions_in(Split split) const {
  std::vector<const Question*> out;
  for (const auto& q : questions) {
    if (scene(q.scene_id).split == split) out.push_back(&q);
  }
  return out;
}

std::vector<double> label_for(const Scene& scene, const VocabPair& vocab, std::string_view text) {
  const auto form = parse_form(text);
  if (!form) throw DomainError("question outside the template grammar: '" + std::string(text) + "'");
  return label_of(scene, vocab, *form);
}

Dataset generate_dataset(std::uint64_t seed, const WorldConfig& config) {
  validate(config);
  Dataset d;
  d.seed = seed;
  d.config = config;
  d.vocab = make_vocab();
  const int total = config.train_scenes + config.eval_scenes;
  int next_question = 0;
  for (int id = 0; id < total; ++id) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(id)));
    const Split split = id < config.train_scenes ? Split::train : Split::eval;
    Scene scene = generate_scene(id, split, config, rng);

    auto pool = candidate_forms(scene);
    for (int k = 0; k < config.questions_per_scene; ++k) {
      std::vector<std::size_t> live;
      for (std::size_t t = 0; t < pool.size(); ++t) {
        if (!pool[t].empty()) live.push_back(t);
      }
      if (live.empty()) break;
      const std::size_t t = live[std::uniform_int_distribution<std::size_t>(0, live.size() - 1)(rng)];
      const std::size_t pick = std::uniform_int_distribution<std::size_t>(0, pool[t].size() - 1)(rng);
      const Form form = pool[t][pick];
      pool[t].erase(pool[t].begin() + static_cast<std::ptrdiff_t>(pick));

      Question q;
      q.question_id = next_question++;
      q.scene_id = id;
      q.template_name = std::string(kKindNames[static_cast<std::size_t>(form.kind)]);
      q.tokens = encode_question(d.vocab.question, text_of(form));
      q.label = label_of(scene, d.vocab, form);
      d.questions.push_back(std::move(q));
    }
    d.scenes.push_back(std::move(scene));
  }
  return d;
}

std::string serialize_dataset(const Dataset& d) {
  std::string out;
  json manifest = {{"record", "manifest"},
                   {"format_version", kDatasetFormatVersion},
                   {"seed", d.seed},
                   {"config", config_json(d.config)},
                   {"question_vocab", d.vocab.question.words()},
                   {"answer_vocab", d.vocab.answer.words()},
                   {"scene_count", d.scenes.size()},
                   {"question_count", d.questions.size()}};
  out += manifest.dump() + "\n";
  for (const auto& s : d.scenes) {
    json cells = json::array();
    for (const auto& c : s.cells) cells.push_back(object_json(c));
    json rec = {{"record", "scene"},
                {"scene_id", s.scene_id},
                {"split", to_string(s.split)},
                {"grid_size", s.grid_size},
                {"cells", std::move(cells)}};
    out += rec.dump() + "\n";
  }
  for (const auto& q : d.questions) {
    json rec = {{"record", "question"},
                {"question_id", q.question_id},
                {"scene_id", q.scene_id},
                {"template", q.template_name},
                {"text", decode_question(d.vocab.question, q.tokens)},
                {"tokens", q.tokens},
                {"label", q.label}};
    out += rec.dump() + "\n";
  }
  return out;
}

Dataset parse_dataset(std::string_view text) {
  Dataset d;
  std::size_t line_no = 0;
  std::size_t expected_scenes = 0;
  std::size_t expected_questions = 0;
  bool have_manifest = false;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    const bool terminated = end != std::string_view::npos;
    if (!terminated) end = text.size();
    const std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line.empty()) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::exception& e) {
      throw ParseError(std::string("malformed JSON record: ") + e.what(), line_no);
    }
    try {
      const auto kind = rec.at("record").get<std::string>();
      if (kind == "manifest") {
        if (have_manifest) throw ParseError("duplicate manifest record", line_no);
        if (rec.at("format_version").get<int>() != kDatasetFormatVersion) {
          throw ParseError("unsupported format_version", line_no);
        }
        d.seed = rec.at("seed").get<std::uint64_t>();
        d.config = config_from_json(rec.at("config"));
        d.vocab.question = Vocab(rec.at("question_vocab").get<std::vector<std::string>>());
        d.vocab.answer = Vocab(rec.at("answer_vocab").get<std::vector<std::string>>());
        const Vocab& qv = d.vocab.question;
        if (qv.size() < 4 || qv.word(kPad) != "<pad>" || qv.word(kStart) != "<start>" ||
            qv.word(kEnd) != "<end>" || qv.word(kUnk) != "<unk>") {
          throw IntegrityError("special tokens must occupy indices 0-3");
        }
        expected_scenes = rec.at("scene_count").get<std::size_t>();
        expected_questions = rec.at("question_count").get<std::size_t>();
        have_manifest = true;
        continue;
      }
      if (!have_manifest) throw ParseError("first record must be the manifest", line_no);
      if (kind == "scene") {
        Scene s;
        s.scene_id = rec.at("scene_id").get<int>();
        const auto split = rec.at("split").get<std::string>();
        if (split != "train" && split != "eval") throw ParseError("unknown split '" + split + "'", line_no);
        s.split = split == "train" ? Split::train : Split::eval;
        s.grid_size = rec.at("grid_size").get<int>();
        for (const auto& c : rec.at("cells")) {
          if (c.is_null()) {
            s.cells.emplace_back(std::nullopt);
          } else {
            s.cells.emplace_back(Object{static_cast<Shape>(enum_from(kShapeNames, c.at("shape"), "shape")),
                                        static_cast<Color>(enum_from(kColorNames, c.at("color"), "color")),
                                        static_cast<Size>(enum_from(kSizeNames, c.at("size"), "size"))});
          }
        }
        if (static_cast<int>(s.cells.size()) != s.grid_size * s.grid_size) {
          throw ParseError("scene cell count does not match grid_size", line_no);
        }
        if (s.scene_id != static_cast<int>(d.scenes.size())) {
          throw IntegrityError("scene_id " + std::to_string(s.scene_id) + " out of sequence at line " +
                               std::to_string(line_no));
        }
        d.scenes.push_back(std::move(s));
      } else if (kind == "question") {
        Question q;
        q.question_id = rec.at("question_id").get<int>();
        q.scene_id = rec.at("scene_id").get<int>();
        q.template_name = rec.at("template").get<std::string>();
        q.tokens = rec.at("tokens").get<std::vector<int>>();
        q.label = rec.at("label").get<std::vector<double>>();
        if (q.scene_id < 0 || q.scene_id >= static_cast<int>(d.scenes.size())) {
          throw IntegrityError("question " + std::to_string(q.question_id) + " references unknown scene_id " +
                               std::to_string(q.scene_id) + " (line " + std::to_string(line_no) + ")");
        }
        for (int t : q.tokens) {
          if (t < 0 || t >= d.vocab.question.size()) {
            throw IntegrityError("token id outside question vocabulary at line " + std::to_string(line_no));
          }
        }
        if (static_cast<int>(q.label.size()) != d.vocab.answer.size()) {
          throw IntegrityError("label size does not match answer vocabulary at line " +
                               std::to_string(line_no));
        }
        if (rec.contains("text") &&
            rec.at("text").get<std::string>() != decode_question(d.vocab.question, q.tokens)) {
          throw IntegrityError("question text disagrees with tokens at line " + std::to_string(line_no));
        }
        d.questions.push_back(std::move(q));
      } else {
        throw ParseError("unknown record type '" + kind + "'", line_no);
      }
    } catch (const json::exception& e) {
      throw ParseError(std::string("bad record: ") + e.what(), line_no);
    } catch (const std::invalid_argument& e) {
      throw ParseError(e.what(), line_no);
    }
    if (!terminated) throw ParseError("record not newline-terminated (truncated file?)", line_no);
  }
  if (!have_manifest) throw ParseError("missing manifest record", line_no + 1);
  if (d.scenes.size() != expected_scenes || d.questions.size() != expected_questions) {
    throw ParseError("unexpected end of file: manifest announces " + std::to_string(expected_scenes) +
                         " scenes and " + std::to_string(expected_questions) + " questions",
                     line_no + 1);
  }
  return d;
}

void write_dataset(const Dataset& dataset, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << serialize_dataset(dataset);
  if (!out) throw Error("failed writing " + path.string());
}

Dataset read_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open dataset " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_dataset(ss.str());
}

ad::Matrix scene_to_features(const Scene& scene) {
  const int g = scene.grid_size;
  ad::Matrix f = ad::Matrix::Zero(scene.regions(), kFeatureDim);
  for (int r = 0; r < g; ++r) {
    for (int c = 0; c < g; ++c) {
      const int row = r * g + c;
      const auto& cell = scene.cells[static_cast<std::size_t>(row)];
      if (cell) {
        f(row, static_cast<int>(cell->shape)) = 1.0;
        f(row, kShapeCount + static_cast<int>(cell->color)) = 1.0;
        f(row, kShapeCount + kColorCount + static_cast<int>(cell->size)) = 1.0;
      }
      f(row, kFeatureDim - 2) = static_cast<double>(c) / (g - 1);
      f(row, kFeatureDim - 1) = static_cast<double>(r) / (g - 1);
    }
  }
  return f;
}

}  // namespace vqr::world

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
#include <set>

#include "vqr/error.hpp"
#include "vqr/synthworld.hpp"

using namespace vqr;
using namespace vqr::world;

namespace {

Scene make_scene(std::vector<std::pair<int, Object>> objects, int grid = 3) {
  Scene s;
  s.grid_size = grid;
  s.cells.assign(static_cast<std::size_t>(grid * grid), std::nullopt);
  for (auto& [cell, obj] : objects) s.cells[static_cast<std::size_t>(cell)] = obj;
  return s;
}

double mass(const std::vector<double>& label, const VocabPair& v, const char* answer) {
  return label[static_cast<std::size_t>(v.answer.id(answer))];
}

WorldConfig small_world() {
  WorldConfig c;
  c.train_scenes = 40;
  c.eval_scenes = 10;
  return c;
}

std::filesystem::path temp_file(const char* name) {
  auto dir = std::filesystem::temp_directory_path() / "vqr_tests";
  std::filesystem::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_CASE("vocabularies have fixed special tokens and sizes") {
  const auto v = make_vocab();
  CHECK(v.question.word(kPad) == "<pad>");
  CHECK(v.question.word(kStart) == "<start>");
  CHECK(v.question.word(kEnd) == "<end>");
  CHECK(v.question.word(kUnk) == "<unk>");
  CHECK(v.answer.size() == 16);
  for (int i = 0; i < v.question.size(); ++i) CHECK(v.question.id(v.question.word(i)) == i);
  CHECK_THROWS_AS(v.question.id("zebra"), DomainError);
}

TEST_CASE("attribute labels spread mass uniformly over referents") {
  const auto v = make_vocab();
  const Object red_circle{Shape::circle, Color::red, Size::small};
  const Object blue_circle{Shape::circle, Color::blue, Size::large};
  const Object green_square{Shape::square, Color::green, Size::large};

  auto one = make_scene({{0, red_circle}, {4, green_square}});
  auto label = label_for(one, v, "what color is the circle");
  CHECK(mass(label, v, "red") == 1.0);

  auto two = make_scene({{0, red_circle}, {8, blue_circle}});
  label = label_for(two, v, "what color is the circle");
  CHECK(mass(label, v, "red") == doctest::Approx(0.5));
  CHECK(mass(label, v, "blue") == doctest::Approx(0.5));

  label = label_for(two, v, "what color is the circle on the left");
  CHECK(mass(label, v, "red") == 1.0);

  label = label_for(two, v, "what size is the circle");
  CHECK(mass(label, v, "small") == doctest::Approx(0.5));
  CHECK(mass(label, v, "large") == doctest::Approx(0.5));
}

TEST_CASE("count and existence labels are one-hot") {
  const auto v = make_vocab();
  const Object rc{Shape::circle, Color::red, Size::small};
  const Object bc{Shape::circle, Color::blue, Size::small};
  auto s = make_scene({{0, rc}, {1, bc}, {2, rc}});
  auto label = label_for(s, v, "how many circles are there");
  CHECK(mass(label, v, "3") == 1.0);
  label = label_for(s, v, "is there a red circle");
  CHECK(mass(label, v, "yes") == 1.0);
  label = label_for(s, v, "is there a green square");
  CHECK(mass(label, v, "no") == 1.0);
}

TEST_CASE("generated datasets satisfy the scene and question invariants") {
  const auto d = generate_dataset(5, small_world());
  CHECK(d.scenes.size() == 50);
  const auto v = make_vocab();
  for (const auto& s : d.scenes) {
    CHECK(static_cast<int>(s.cells.size()) == s.grid_size * s.grid_size);
    CHECK(std::any_of(s.cells.begin(), s.cells.end(), [](const auto& c) { return c.has_value(); }));
    const auto qs = d.questions_of(s.scene_id);
    std::set<std::vector<int>> distinct;
    for (const auto* q : qs) distinct.insert(q->tokens);
    CHECK(distinct.size() >= 2);
  }
  for (const auto& q : d.questions) {
    double sum = 0.0;
    for (double p : q.label) {
      CHECK(p >= 0.0);
      sum += p;
    }
    CHECK(std::abs(sum - 1.0) <= 1e-9);
    CHECK_NOTHROW(validate_question(q.tokens, v.question.size(), 20));
    CHECK(label_for(d.scene(q.scene_id), v, decode_question(v.question, q.tokens)) == q.label);
  }
}

TEST_CASE("generation is a pure function of seed and config") {
  CHECK(serialize_dataset(generate_dataset(9, small_world())) == serialize_dataset(generate_dataset(9, small_world())));
  CHECK(serialize_dataset(generate_dataset(9, small_world())) != serialize_dataset(generate_dataset(10, small_world())));
}

TEST_CASE("invalid world configs are rejected") {
  WorldConfig c;
  c.train_scenes = 0;
  c.eval_scenes = 0;
  CHECK_THROWS_AS(generate_dataset(1, c), ConfigError);
  c = WorldConfig{};
  c.questions_per_scene = 1;
  CHECK_THROWS_AS(generate_dataset(1, c), ConfigError);
}

TEST_CASE("dataset files round-trip") {
  const auto d = generate_dataset(3, small_world());
  const auto path = temp_file("roundtrip.jsonl");
  write_dataset(d, path);
  CHECK(read_dataset(path) == d);
}

TEST_CASE("truncated dataset files raise ParseError with a line number") {
  const auto text = serialize_dataset(generate_dataset(3, small_world()));
  const auto cut = text.substr(0, text.size() / 2);
  try {
    parse_dataset(cut);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() > 0);
  }
  CHECK_THROWS_AS(parse_dataset(text.substr(0, text.size() - 1)), ParseError);
}

TEST_CASE("a question with an unknown scene raises IntegrityError") {
  auto text = serialize_dataset(generate_dataset(3, small_world()));
  const std::string needle = "\"scene_id\":49,";
  const auto pos = text.rfind(needle);
  REQUIRE(pos != std::string::npos);
  text.replace(pos, needle.size(), "\"scene_id\":9999,");
  CHECK_THROWS_AS(parse_dataset(text), IntegrityError);
}

TEST_CASE("question encoding and validation") {
  const auto v = make_vocab();
  const auto t = encode_question(v.question, "what color is the circle");
  CHECK(t.back() == kEnd);
  CHECK(decode_question(v.question, t) == "what color is the circle");
  CHECK(encode_question(v.question, "what colour is it")[1] == kUnk);
  CHECK_THROWS_AS(validate_question({}, v.question.size(), 20), DomainError);
  CHECK_THROWS_AS(validate_question({4, 5}, v.question.size(), 20), DomainError);
  CHECK_THROWS_AS(validate_question({4, kEnd, kEnd}, v.question.size(), 20), DomainError);
  CHECK_THROWS_AS(validate_question({999, kEnd}, v.question.size(), 20), DomainError);
  CHECK_THROWS_AS(validate_question(std::vector<int>(21, 4), v.question.size(), 20), DomainError);
}

TEST_CASE("region features encode cell contents and position") {
  const Object o{Shape::triangle, Color::yellow, Size::large};
  const auto s = make_scene({{5, o}});
  const auto f = scene_to_features(s);
  CHECK(f.rows() == 9);
  CHECK(f.cols() == kFeatureDim);
  CHECK(f(5, 2) == 1.0);      // triangle
  CHECK(f(5, 3 + 3) == 1.0);  // yellow
  CHECK(f(5, 7 + 1) == 1.0);  // large
  CHECK(f.row(5).head(9).sum() == 3.0);
  CHECK(f.row(0).head(9).sum() == 0.0);
}

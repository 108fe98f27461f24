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

// Synthetic shapes-grid world: scenes, template questions with soft answer
// labels, the JSON Lines dataset format, and symbolic region features.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "vqr/autograd.hpp"

namespace vqr::world {

enum class Shape { circle, square, triangle };
enum class Color { red, green, blue, yellow };
enum class Size { small, large };
enum class Split { train, eval };

inline constexpr int kShapeCount = 3;
inline constexpr int kColorCount = 4;
inline constexpr int kSizeCount = 2;
// one-hot shape | one-hot color | one-hot size | (x, y)
inline constexpr int kFeatureDim = kShapeCount + kColorCount + kSizeCount + 2;

std::string_view to_string(Shape s);
std::string_view to_string(Color c);
std::string_view to_string(Size s);
std::string_view to_string(Split s);

struct Object {
  Shape shape;
  Color color;
  Size size;
  bool operator==(const Object&) const = default;
};

struct Scene {
  int scene_id = 0;
  Split split = Split::train;
  int grid_size = 0;
  // Row-major, grid_size * grid_size entries; nullopt is an empty cell.
  std::vector<std::optional<Object>> cells;

  int regions() const { return grid_size * grid_size; }
  bool operator==(const Scene&) const = default;
};

// Token <-> string bijection.
class Vocab {
 public:
  Vocab() = default;
  explicit Vocab(std::vector<std::string> words);

  int size() const { return static_cast<int>(words_.size()); }
  int id(std::string_view word) const;  // throws DomainError when unknown
  std::optional<int> find(std::string_view word) const;
  const std::string& word(int id) const;
  const std::vector<std::string>& words() const { return words_; }

  bool operator==(const Vocab& other) const { return words_ == other.words_; }

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, int> index_;
};

inline constexpr int kPad = 0;
inline constexpr int kStart = 1;
inline constexpr int kEnd = 2;
inline constexpr int kUnk = 3;

struct VocabPair {
  Vocab question;
  Vocab answer;
  bool operator==(const VocabPair&) const = default;
};

// The fixed vocabularies of the template grammar.
VocabPair make_vocab();

// Tokenises whitespace-separated text and appends the end token. Unknown
// words map to <unk>.
std::vector<int> encode_question(const Vocab& vocab, std::string_view text);
// Inverse of encode_question; special tokens are dropped.
std::string decode_question(const Vocab& vocab, const std::vector<int>& tokens);

// Throws DomainError unless tokens form a valid question: 1 <= length <=
// max_length, every id < vocab size, and exactly one end token, last.
void validate_question(const std::vector<int>& tokens, int vocab_size, int max_length);

struct Question {
  int question_id = 0;  // unique across the dataset
  int scene_id = 0;
  std::string template_name;
  std::vector<int> tokens;    // ends with kEnd
  std::vector<double> label;  // ground-truth answer distribution
  bool operator==(const Question&) const = default;
};

struct WorldConfig {
  int train_scenes = 1000;
  int eval_scenes = 100;
  int grid_size = 3;
  int min_objects = 2;
  int max_objects = 6;
  int max_per_shape = 4;
  int questions_per_scene = 5;
  bool operator==(const WorldConfig&) const = default;
};

// Throws ConfigError on invalid settings.
void validate(const WorldConfig& config);

struct Dataset {
  std::uint64_t seed = 0;
  WorldConfig config;
  VocabPair vocab;
  std::vector<Scene> scenes;        // ordered by scene_id, ids 0..n-1
  std::vector<Question> questions;  // grouped by scene, ascending question_id

  const Scene& scene(int scene_id) const;
  std::vector<const Question*> questions_of(int scene_id) const;
  std::vector<const Question*> questions_in(Split split) const;
  bool operator==(const Dataset&) const = default;
};

inline constexpr int kDatasetFormatVersion = 1;

// Pure function of (seed, config). Scene k draws from its own stream seeded
// with derive_seed(seed, k).
Dataset generate_dataset(std::uint64_t seed, const WorldConfig& config);

// Answer distribution of a question over a scene under the template rules.
// Exposed for tests; generate_dataset labels with it.
std::vector<double> label_for(const Scene& scene, const VocabPair& vocab, std::string_view text);

std::string serialize_dataset(const Dataset& dataset);
Dataset parse_dataset(std::string_view text);
void write_dataset(const Dataset& dataset, const std::filesystem::path& path);
Dataset read_dataset(const std::filesystem::path& path);

// R x D region features, R = grid_size^2.
ad::Matrix scene_to_features(const Scene& scene);

}  // namespace vqr::world

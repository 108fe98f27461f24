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

// Layers, parameter binding and the Adam optimizer shared by the VQA model
// and the rephraser.

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "vqr/autograd.hpp"
#include "vqr/random.hpp"

namespace vqr::nn {

using ad::Matrix;
using ad::Parameter;
using ad::Var;

// Uniform(-bound, bound) initialisation.
Parameter make_parameter(std::string name, Eigen::Index rows, Eigen::Index cols, double bound,
                         Rng& rng);
Parameter make_zero_parameter(std::string name, Eigen::Index rows, Eigen::Index cols);

// Binds p onto the tape either as a trainable leaf or as a frozen constant.
inline Var bind(ad::Tape& tape, Parameter& p, bool trainable) {
  return trainable ? tape.parameter(p) : tape.frozen(p);
}

struct Linear {
  Parameter weight;  // in x out
  Parameter bias;    // 1 x out

  static Linear create(const std::string& name, Eigen::Index in, Eigen::Index out, Rng& rng);
  static Linear zeros(const std::string& name, Eigen::Index in, Eigen::Index out);

  struct Bound {
    Var weight, bias;
    Var operator()(const Var& x) const { return ad::add_row(ad::matmul(x, weight), bias); }
  };
  Bound bind(ad::Tape& tape, bool trainable) {
    return {nn::bind(tape, weight, trainable), nn::bind(tape, bias, trainable)};
  }
  void collect(std::vector<Parameter*>& out) {
    out.push_back(&weight);
    out.push_back(&bias);
  }
};

// Single-layer LSTM, gate order (input, forget, cell, output).
struct Lstm {
  Parameter w_input;   // in x 4H
  Parameter w_hidden;  // H x 4H
  Parameter bias;      // 1 x 4H
  Eigen::Index hidden = 0;

  static Lstm create(const std::string& name, Eigen::Index in, Eigen::Index hidden, Rng& rng);

  struct State {
    Var h, c;
  };
  struct Bound {
    Var w_input, w_hidden, bias;
    Eigen::Index hidden = 0;
    State step(const Var& x, const State& s) const;
    // Step that keeps the previous state on rows whose mask entry is 0.
    State masked_step(const Var& x, const State& s, const Matrix& mask) const;
    State zero_state(ad::Tape& tape, Eigen::Index batch) const;
  };
  Bound bind(ad::Tape& tape, bool trainable) {
    return {nn::bind(tape, w_input, trainable), nn::bind(tape, w_hidden, trainable),
            nn::bind(tape, bias, trainable), hidden};
  }
  void collect(std::vector<Parameter*>& out) {
    out.push_back(&w_input);
    out.push_back(&w_hidden);
    out.push_back(&bias);
  }
};

// Adam with bias correction. State is keyed by parameter name so it can be
// checkpointed and restored independently of object identity.
class Adam {
 public:
  struct Options {
    double learning_rate = 5e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    // Global gradient-norm clip; 0 disables.
    double clip_norm = 0.0;
  };

  Adam() = default;
  explicit Adam(Options options) : options_(options) {}

  // Applies one update from p->grad for every parameter, then zeroes grads.
  // Returns the pre-clip global gradient norm.
  double step(std::span<Parameter* const> params);

  const Options& options() const { return options_; }
  void set_learning_rate(double lr) { options_.learning_rate = lr; }
  std::int64_t steps() const { return steps_; }

  // Moments as named tensors ("adam.m.<param>", "adam.v.<param>").
  std::vector<std::pair<std::string, Matrix>> export_state() const;
  void import_state(std::int64_t steps, const std::vector<std::pair<std::string, Matrix>>& tensors);

 private:
  Options options_;
  std::int64_t steps_ = 0;
  std::map<std::string, std::pair<Matrix, Matrix>> moments_;
};

// Mask column (batch x 1) with 1 where step < length.
Matrix step_mask(std::span<const int> lengths, int step);

}  // namespace vqr::nn

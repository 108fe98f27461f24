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

#include "vqr/nn.hpp"

#include <cmath>

#include "vqr/error.hpp"

namespace vqr::nn {

Parameter make_parameter(std::string name, Eigen::Index rows, Eigen::Index cols, double bound,
                         Rng& rng) {
  Parameter p{std::move(name), Matrix(rows, cols), Matrix::Zero(rows, cols)};
  std::uniform_real_distribution<double> u(-bound, bound);
  for (Eigen::Index i = 0; i < p.value.size(); ++i) p.value.data()[i] = u(rng);
  return p;
}

Parameter make_zero_parameter(std::string name, Eigen::Index rows, Eigen::Index cols) {
  return Parameter{std::move(name), Matrix::Zero(rows, cols), Matrix::Zero(rows, cols)};
}

Linear Linear::create(const std::string& name, Eigen::Index in, Eigen::Index out, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  return {make_parameter(name + ".weight", in, out, bound, rng),
          make_zero_parameter(name + ".bias", 1, out)};
}

Linear Linear::zeros(const std::string& name, Eigen::Index in, Eigen::Index out) {
  return {make_zero_parameter(name + ".weight", in, out), make_zero_parameter(name + ".bias", 1, out)};
}

Lstm Lstm::create(const std::string& name, Eigen::Index in, Eigen::Index hidden, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
  Lstm l{make_parameter(name + ".w_input", in, 4 * hidden, bound, rng),
         make_parameter(name + ".w_hidden", hidden, 4 * hidden, bound, rng),
         make_zero_parameter(name + ".bias", 1, 4 * hidden), hidden};
  // forget-gate bias starts at 1
  l.bias.value.middleCols(hidden, hidden).setOnes();
  return l;
}

Lstm::State Lstm::Bound::step(const Var& x, const State& s) const {
  const Var gates = ad::add_row(ad::add(ad::matmul(x, w_input), ad::matmul(s.h, w_hidden)), bias);
  const Var i = ad::sigmoid(ad::slice_cols(gates, 0, hidden));
  const Var f = ad::sigmoid(ad::slice_cols(gates, hidden, hidden));
  const Var g = ad::tanh(ad::slice_cols(gates, 2 * hidden, hidden));
  const Var o = ad::sigmoid(ad::slice_cols(gates, 3 * hidden, hidden));
  const Var c = ad::add(ad::mul(f, s.c), ad::mul(i, g));
  const Var h = ad::mul(o, ad::tanh(c));
  return {h, c};
}

Lstm::State Lstm::Bound::masked_step(const Var& x, const State& s, const Matrix& mask) const {
  const State next = step(x, s);
  if (mask.minCoeff() > 0.5) return next;
  ad::Tape& tape = *x.tape();
  const Var m = tape.constant(mask);
  const Var h = ad::add(s.h, ad::mul_col(ad::sub(next.h, s.h), m));
  const Var c = ad::add(s.c, ad::mul_col(ad::sub(next.c, s.c), m));
  return {h, c};
}

Lstm::State Lstm::Bound::zero_state(ad::Tape& tape, Eigen::Index batch) const {
  return {tape.constant(Matrix::Zero(batch, hidden)), tape.constant(Matrix::Zero(batch, hidden))};
}

double Adam::step(std::span<Parameter* const> params) {
  double norm_sq = 0.0;
  for (const Parameter* p : params) norm_sq += p->grad.squaredNorm();
  const double norm = std::sqrt(norm_sq);
  const double clip =
      (options_.clip_norm > 0.0 && norm > options_.clip_norm) ? options_.clip_norm / norm : 1.0;

  ++steps_;
  const double t = static_cast<double>(steps_);
  const double c1 = 1.0 - std::pow(options_.beta1, t);
  const double c2 = 1.0 - std::pow(options_.beta2, t);
  for (Parameter* p : params) {
    auto [it, inserted] = moments_.try_emplace(p->name);
    auto& [m, v] = it->second;
    if (inserted) {
      m = Matrix::Zero(p->value.rows(), p->value.cols());
      v = Matrix::Zero(p->value.rows(), p->value.cols());
    }
    const Matrix g = p->grad * clip;
    m = options_.beta1 * m + (1.0 - options_.beta1) * g;
    v = options_.beta2 * v + (1.0 - options_.beta2) * g.cwiseProduct(g);
    p->value.array() -= options_.learning_rate * (m.array() / c1) /
                        ((v.array() / c2).sqrt() + options_.epsilon);
    p->zero_grad();
  }
  return norm;
}

std::vector<std::pair<std::string, Matrix>> Adam::export_state() const {
  std::vector<std::pair<std::string, Matrix>> out;
  for (const auto& [name, mv] : moments_) {
    out.emplace_back("adam.m." + name, mv.first);
    out.emplace_back("adam.v." + name, mv.second);
  }
  return out;
}

void Adam::import_state(std::int64_t steps,
                        const std::vector<std::pair<std::string, Matrix>>& tensors) {
  steps_ = steps;
  moments_.clear();
  for (const auto& [name, value] : tensors) {
    if (name.rfind("adam.m.", 0) == 0) {
      moments_[name.substr(7)].first = value;
    } else if (name.rfind("adam.v.", 0) == 0) {
      moments_[name.substr(7)].second = value;
    }
  }
  for (const auto& [name, mv] : moments_) {
    if (mv.first.size() == 0 || mv.second.size() == 0 || mv.first.rows() != mv.second.rows() ||
        mv.first.cols() != mv.second.cols()) {
      throw IntegrityError("optimizer state for '" + name + "' is incomplete");
    }
  }
}

Matrix step_mask(std::span<const int> lengths, int step) {
  Matrix m(static_cast<Eigen::Index>(lengths.size()), 1);
  for (std::size_t b = 0; b < lengths.size(); ++b) {
    m(static_cast<Eigen::Index>(b), 0) = step < lengths[b] ? 1.0 : 0.0;
  }
  return m;
}

}  // namespace vqr::nn

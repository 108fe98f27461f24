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

// Reverse-mode automatic differentiation over dense row-major matrices.
//
// A Tape records every operation of one forward pass. Values are computed
// eagerly; Tape::backward walks the records in reverse and accumulates
// gradients. Nodes whose inputs are all constant are stored as constants and
// never visited on the way back, so a frozen sub-network costs nothing in the
// backward pass unless a trainable input flows through it.

#include <Eigen/Dense>

#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace vqr::ad {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// A named trainable tensor. `grad` has the shape of `value` and is the sum of
// gradients from every backward pass since the last zero_grad().
struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

class Tape;

class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  bool requires_grad() const;
  // Scalar value of a 1x1 node.
  double item() const;

  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  using Backward = std::function<void(Tape&, std::size_t)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  Var scalar(double value);
  // Trainable leaf; backward() adds its gradient into p.grad.
  Var parameter(Parameter& p);
  // Leaf referencing p.value without copying and without a gradient.
  Var frozen(const Parameter& p);
  // Leaf that requires a gradient but is not tied to a Parameter (tests).
  Var variable(Matrix value);

  // Records a differentiable result. `backward` receives the node id and
  // reads grad_at(id) to push gradients into the inputs.
  Var record(Matrix value, Backward backward);

  const Matrix& value_at(std::size_t id) const;
  bool requires_grad_at(std::size_t id) const { return nodes_[id].requires_grad; }
  const Matrix& grad_at(std::size_t id) const { return nodes_[id].grad; }
  bool has_grad(std::size_t id) const { return nodes_[id].grad.size() != 0; }

  template <class Derived>
  void accumulate(std::size_t id, const Eigen::MatrixBase<Derived>& g) {
    Node& n = nodes_[id];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0) {
      n.grad = g;
    } else {
      n.grad += g;
    }
  }

  // Gradient of `root` (must be 1x1) with respect to every recorded node.
  void backward(const Var& root);
  // Gradient of a node after backward(); zero matrix if nothing flowed in.
  Matrix gradient(const Var& v) const;

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    const Matrix* ref = nullptr;
    Matrix grad;
    bool requires_grad = false;
    Backward backward;
    Parameter* param = nullptr;
  };
  std::deque<Node> nodes_;
};

// ---------------------------------------------------------------------------
// Operations. Shapes are checked and violations raise vqr::ShapeError.

Var matmul(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
// a (n x m) + row (1 x m) broadcast over rows.
Var add_row(const Var& a, const Var& row);
// a (n x m) * col (n x 1) broadcast over columns.
Var mul_col(const Var& a, const Var& col);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
Var neg(const Var& a);

Var sigmoid(const Var& a);
Var tanh(const Var& a);
Var relu(const Var& a);
Var exp(const Var& a);
Var log(const Var& a);
Var square(const Var& a);

Var softmax_rows(const Var& a);
Var log_softmax_rows(const Var& a);

Var concat_cols(std::span<const Var> parts);
Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count);
Var sum_rows(const Var& a);  // n x m -> n x 1
Var sum_all(const Var& a);   // -> 1 x 1
Var mean_all(const Var& a);  // -> 1 x 1

// Row lookup: result row i = table row indices[i].
Var gather_rows(const Var& table, std::span<const int> indices);
// result(i, 0) = a(i, indices[i]).
Var pick(const Var& a, std::span<const int> indices);
// Each row repeated `times` times consecutively: (n x m) -> (n*times x m).
Var repeat_rows(const Var& a, Eigen::Index times);
// Row-major reinterpretation.
Var reshape(const Var& a, Eigen::Index rows, Eigen::Index cols);
// Per-batch weighted sum of region rows. weights: B x R, regions: (B*R) x D.
// result(b, :) = sum_r weights(b, r) * regions(b*R + r, :).
Var pool_regions(const Var& weights, const Var& regions);
// Forward value is the one-hot argmax of each row; gradient passes through
// unchanged (straight-through estimator).
Var straight_through(const Var& soft);

// Row-wise entropy (nats) of softmax(logits): n x m -> n x 1.
Var softmax_entropy_rows(const Var& logits);

}  // namespace vqr::ad

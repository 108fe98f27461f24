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

#include "vqr/autograd.hpp"

#include <cmath>
#include <sstream>

#include "vqr/error.hpp"

namespace vqr::ad {

namespace {

std::string shape_of(const Matrix& m) {
  std::ostringstream os;
  os << m.rows() << "x" << m.cols();
  return os.str();
}

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_of(a.value()) + " vs " +
                     shape_of(b.value()));
  }
}

void require_same_tape(const Var& a, const Var& b) {
  if (a.tape() != b.tape()) throw ShapeError("operands recorded on different tapes");
}

Matrix row_softmax(const Matrix& a) {
  Matrix y(a.rows(), a.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    const double m = a.row(i).maxCoeff();
    y.row(i) = (a.row(i).array() - m).exp();
    y.row(i) /= y.row(i).sum();
  }
  return y;
}

Matrix row_log_softmax(const Matrix& a) {
  Matrix y(a.rows(), a.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    const double m = a.row(i).maxCoeff();
    const double lse = m + std::log((a.row(i).array() - m).exp().sum());
    y.row(i) = a.row(i).array() - lse;
  }
  return y;
}

}  // namespace

// ---------------------------------------------------------------------------
// Var / Tape

const Matrix& Var::value() const { return tape_->value_at(id_); }
bool Var::requires_grad() const { return tape_->requires_grad_at(id_); }

double Var::item() const {
  const Matrix& v = value();
  if (v.size() != 1) throw ShapeError("item() on non-scalar " + shape_of(v));
  return v(0, 0);
}

const Matrix& Tape::value_at(std::size_t id) const {
  const Node& n = nodes_[id];
  return n.ref != nullptr ? *n.ref : n.value;
}

Var Tape::constant(Matrix value) {
  nodes_.push_back(Node{std::move(value), nullptr, {}, false, {}, nullptr});
  return Var(this, nodes_.size() - 1);
}

Var Tape::scalar(double value) { return constant(Matrix::Constant(1, 1, value)); }

Var Tape::parameter(Parameter& p) {
  if (p.grad.rows() != p.value.rows() || p.grad.cols() != p.value.cols()) p.zero_grad();
  nodes_.push_back(Node{{}, &p.value, {}, true, {}, &p});
  return Var(this, nodes_.size() - 1);
}

Var Tape::frozen(const Parameter& p) {
  nodes_.push_back(Node{{}, &p.value, {}, false, {}, nullptr});
  return Var(this, nodes_.size() - 1);
}

Var Tape::variable(Matrix value) {
  nodes_.push_back(Node{std::move(value), nullptr, {}, true, {}, nullptr});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Matrix value, Backward backward) {
  nodes_.push_back(Node{std::move(value), nullptr, {}, true, std::move(backward), nullptr});
  return Var(this, nodes_.size() - 1);
}

void Tape::backward(const Var& root) {
  if (root.tape() != this) throw ShapeError("backward: root recorded on a different tape");
  if (root.value().size() != 1) throw ShapeError("backward: root must be 1x1");
  if (!root.requires_grad()) return;
  for (auto& n : nodes_) n.grad.resize(0, 0);
  nodes_[root.id()].grad = Matrix::Ones(1, 1);
  for (std::size_t i = root.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.grad.size() == 0) continue;
    if (n.backward) n.backward(*this, i);
    if (n.param != nullptr) n.param->grad += n.grad;
  }
}

Matrix Tape::gradient(const Var& v) const {
  const Node& n = nodes_[v.id()];
  if (n.grad.size() == 0) return Matrix::Zero(v.rows(), v.cols());
  return n.grad;
}

// ---------------------------------------------------------------------------
// Elementwise and linear-algebra ops

Var matmul(const Var& a, const Var& b) {
  require_same_tape(a, b);
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: " + shape_of(a.value()) + " * " + shape_of(b.value()));
  }
  Tape& t = *a.tape();
  Matrix y;
  y.noalias() = a.value() * b.value();
  if (!a.requires_grad() && !b.requires_grad()) return t.constant(std::move(y));
  return t.record(std::move(y), [ia = a.id(), ib = b.id()](Tape& t, std::size_t self) {
    const Matrix& g = t.grad_at(self);
    if (t.requires_grad_at(ia)) t.accumulate(ia, g * t.value_at(ib).transpose());
    if (t.requires_grad_at(ib)) t.accumulate(ib, t.value_at(ia).transpose() * g);
  });
}

Var add(const Var& a, const Var& b) {
  require_same_tape(a, b);
  require_same_shape(a, b, "add");
  Tape& t = *a.tape();
  Matrix y = a.value() + b.value();
  if (!a.requires_grad() && !b.requires_grad()) return t.constant(std::move(y));
  return t.record(std::move(y), [ia = a.id(), ib = b.id()](Tape& t, std::size_t self) {
    t.accumulate(ia, t.grad_at(self));
    t.accumulate(ib, t.grad_at(self));
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_tape(a, b);
  require_same_shape(a, b, "sub");
  Tape& t = *a.tape();
  Matrix y = a.value() - b.value();
  if (!a.requires_grad() && !b.requires_grad()) return t.constant(std::move(y));
  return t.record(std::move(y), [ia = a.id(), ib = b.id()](Tape& t, std::size_t self) {
    t.accumulate(ia, t.grad_at(self));
    t.accumulate(ib, -t.grad_at(self));
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_tape(a, b);
  require_same_shape(a, b, "mul");
  Tape& t = *a.tape();
  Matrix y = a.value().cwiseProduct(b.value());
  if (!a.requires_grad() && !b.requires_grad()) return t.constant(std::move(y));
  return t.record(std::move(y), [ia = a.id(), ib = b.id()](Tape& t, std::size_t self) {
    const Matrix& g = t.grad_at(self);
    if (t.requires_grad_at(ia)) t.accumulate(ia, g.cwiseProduct(t.value_at(ib)));
    if (t.requires_grad_at(ib)) t.accumulate(ib, g.cwiseProduct(t.value_at(ia)));
  });
}

Var add_row(const Var& a, const Var& row) {
  require_same_tape(a, row);
  if (row.rows() != 1 || row.cols() != a.cols()) {
    throw ShapeError("add_row: " + shape_of(a.value()) + " + " + shape_of(row.value()));
  }
  Tape& t = *a.tape();
  Matrix y = a.value().rowwise() + row.value().row(0);
  if (!a.requires_grad() && !row.requires_grad()) return t.constant(std::move(y));
  return t.record(std::move(y), [ia = a.id(), ir = row.id()](Tape& t, std::size_t self) {
    const Matrix& g = t.grad_at(self);
    t.accumulate(ia, g);
    if (t.requires_grad_at(ir)) t.accumulate(ir, g.colwise().sum());
  });
}

Var mul_col(const Var& a, const Var& col) {
  require_same_tape(a, col);
  if (col.cols() != 1 || col.rows() != a.rows()) {
    throw ShapeError("mul_col: " + shape_of(a.value()) + " * " + shape_of(col.value()));
  }
  Tape& t = *a.tape();
  Matrix y = a.value().array().colwise() * col.value().col(0).array();
  if (!a.requires_grad() && !col.requires_grad()) return t.constant(std::move(y));
  return t.record(std::move(y), [ia = a.id(), ic = col.id()](Tape& t, std::size_t self) {
    const Matrix& g = t.grad_at(self);
    if (t.requires_grad_at(ia)) {
      Matrix ga = g.array().colwise() * t.value_at(ic).col(0).array();
      t.accumulate(ia, ga);
    }
    if (t.requires_grad_at(ic)) t.accumulate(ic, g.cwiseProduct(t.value_at(ia)).rowwise().sum());
  });
}

Var scale(const Var& a, double s) {
  Tape& t = *a.tape();
  Matrix y = a.value() * s;
  if (!a.requires_grad()) return t.constant(std::move(y));
  return t.record(std::move(y), [ia = a.id(), s](Tape& t, std::size_t self) {
    t.accumulate(ia, t.grad_at(self) * s);
  });
}

Var add_scalar(const Var& a, double s) {
  Tape& t = *a.tape();
  Matrix y = a.value().array() + s;
  if (!a.requires_grad()) return t.constant(std::move(y));
  return t.record(std::move(y), [ia = a.id()](Tape& t, std::size_t self) {
    t.accumulate(ia, t.grad_at(self));
  });
}

Var neg(const Var& a) { return scale(a, -1.0); }

Var sigmoid(const Var& a) {
  Tape& t = *a.tape();
  Matrix y = (1.0 + (-a.value().array()).exp()).inverse();
  if (!a.requires_grad()) return t.constant(std::move(y));
  return t.record(std::move(y), [ia = a.id()](Tape& t, std::size_t self) {
    const auto y = t.value_at(self).array();
    t.accumulate(ia, (t.grad_at(self).array() * y * (1.0 - y)).matrix());
  });
}

Var tanh(const Var& a) {
  Tape& t = *a.tape();
  Matrix y = a.value().array().tanh();
  if (!a.requires_grad()) return t.constant(std::move(y));
  return t.record(std::move(y), [ia = a.id()](Tape& t, std::size_t self) {
    const auto y = t.value_at(self).array();
    t.accumulate(ia, (t.grad_at(self).array() * (1.0 - y.square())).matrix());
  });
}

Var relu(const Var& a) {
  Tape& t = *a.tape();
  Matrix y = a.value().cwiseMax(0.0);
  if (!a.requires_grad()) return t.constant(std::move(y));
  return t.record(std::move(y), [ia = a.id()](Tape& t, std::size_t self) {
    const auto y = t.value_at(self).array();
    t.accumulate(ia, (y > 0.0).select(t.grad_at(self).array(), 0.0).matrix());
  });
}

Var exp(const Var& a) {
  Tape& t = *a.tape();
  Matrix y = a.value().array().exp();
  if (!a.requires_grad()) return t.constant(std::move(y));
  return t.record(std::move(y), [ia = a.id()](Tape& t, std::size_t self) {
    t.accumulate(ia, t.grad_at(self).cwiseProduct(t.value_at(self)));
  });
}

Var log(const Var& a) {
  Tape& t = *a.tape();
  Matrix y = a.value().array().log();
  if (!a.requires_grad()) return t.constant(std::move(y));
  return t.record(std::move(y), [ia = a.id()](Tape& t, std::size_t self) {
    t.accumulate(ia, t.grad_at(self).cwiseQuotient(t.value_at(ia)));
  });
}

Var square(const Var& a) {
  Tape& t = *a.tape();
  Matrix y = a.value().array().square();
  if (!a.requires_grad()) return t.constant(std::move(y));
  return t.record(std::move(y), [ia = a.id()](Tape& t, std::size_t self) {
    t.accumulate(ia, 2.0 * t.grad_at(self).cwiseProduct(t.value_at(ia)));
  });
}

Var softmax_rows(const Var& a) {
  Tape& t = *a.tape();
  Matrix y = row_softmax(a.value());
  if (!a.requires_grad()) return t.constant(std::move(y));
  return t.record(std::move(y), [ia = a.id()](Tape& t, std::size_t self) {
    const Matrix& y = t.value_at(self);
    const Matrix& g = t.grad_at(self);
    const Eigen::VectorXd dot = g.cwiseProduct(y).rowwise().sum();
    Matrix ga = y.array() * (g.array().colwise() - dot.array());
    t.accumulate(ia, ga);
  });
}

Var log_softmax_rows(const Var& a) {
  Tape& t = *a.tape();
  Matrix y = row_log_softmax(a.value());
  if (!a.requires_grad()) return t.constant(std::move(y));
  return t.record(std::move(y), [ia = a.id()](Tape& t, std::size_t self) {
    const Matrix& y = t.value_at(self);
    const Matrix& g = t.grad_at(self);
    const Eigen::VectorXd total = g.rowwise().sum();
    Matrix ga = g.array() - y.array().exp().colwise() * total.array();
    t.accumulate(ia, ga);
  });
}

Var softmax_entropy_rows(const Var& logits) {
  Tape& t = *logits.tape();
  const Matrix lp = row_log_softmax(logits.value());
  const Matrix p = lp.array().exp();
  Matrix h = -(p.cwiseProduct(lp)).rowwise().sum();
  if (!logits.requires_grad()) return t.constant(std::move(h));
  // dH/dz_j = -p_j (log p_j + H)
  return t.record(std::move(h), [il = logits.id(), p, lp](Tape& t, std::size_t self) {
    const Matrix& g = t.grad_at(self);
    const Matrix& h = t.value_at(self);
    Matrix inner = lp.array().colwise() + h.col(0).array();
    Matrix gz = (p.array() * inner.array()).colwise() * (-g.col(0).array());
    t.accumulate(il, gz);
  });
}

// ---------------------------------------------------------------------------
// Structural ops

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no operands");
  Tape& t = *parts.front().tape();
  const Eigen::Index rows = parts.front().rows();
  Eigen::Index cols = 0;
  bool any_grad = false;
  for (const Var& p : parts) {
    require_same_tape(parts.front(), p);
    if (p.rows() != rows) throw ShapeError("concat_cols: row count mismatch");
    cols += p.cols();
    any_grad = any_grad || p.requires_grad();
  }
  Matrix y(rows, cols);
  std::vector<std::size_t> ids;
  std::vector<Eigen::Index> widths;
  Eigen::Index offset = 0;
  for (const Var& p : parts) {
    y.middleCols(offset, p.cols()) = p.value();
    offset += p.cols();
    ids.push_back(p.id());
    widths.push_back(p.cols());
  }
  if (!any_grad) return t.constant(std::move(y));
  return t.record(std::move(y), [ids, widths](Tape& t, std::size_t self) {
    const Matrix& g = t.grad_at(self);
    Eigen::Index off = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (t.requires_grad_at(ids[k])) t.accumulate(ids[k], g.middleCols(off, widths[k]));
      off += widths[k];
    }
  });
}

Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) {
    throw ShapeError("slice_cols: range out of bounds for " + shape_of(a.value()));
  }
  Tape& t = *a.tape();
  Matrix y = a.value().middleCols(start, count);
  if (!a.requires_grad()) return t.constant(std::move(y));
  return t.record(std::move(y), [ia = a.id(), start, count](Tape& t, std::size_t self) {
    const Matrix& av = t.value_at(ia);
    Matrix ga = Matrix::Zero(av.rows(), av.cols());
    ga.middleCols(start, count) = t.grad_at(self);
    t.accumulate(ia, ga);
  });
}

Var sum_rows(const Var& a) {
  Tape& t = *a.tape();
  Matrix y = a.value().rowwise().sum();
  if (!a.requires_grad()) return t.constant(std::move(y));
  return t.record(std::move(y), [ia = a.id()](Tape& t, std::size_t self) {
    const Eigen::Index cols = t.value_at(ia).cols();
    t.accumulate(ia, t.grad_at(self).col(0).replicate(1, cols));
  });
}

Var sum_all(const Var& a) {
  Tape& t = *a.tape();
  Matrix y = Matrix::Constant(1, 1, a.value().sum());
  if (!a.requires_grad()) return t.constant(std::move(y));
  return t.record(std::move(y), [ia = a.id()](Tape& t, std::size_t self) {
    const Matrix& av = t.value_at(ia);
    t.accumulate(ia, Matrix::Constant(av.rows(), av.cols(), t.grad_at(self)(0, 0)));
  });
}

Var mean_all(const Var& a) {
  if (a.value().size() == 0) throw ShapeError("mean_all: empty operand");
  return scale(sum_all(a), 1.0 / static_cast<double>(a.value().size()));
}

Var gather_rows(const Var& table, std::span<const int> indices) {
  const Matrix& tv = table.value();
  Matrix y(static_cast<Eigen::Index>(indices.size()), tv.cols());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] < 0 || indices[i] >= tv.rows()) {
      throw ShapeError("gather_rows: index " + std::to_string(indices[i]) + " out of range for " +
                       shape_of(tv));
    }
    y.row(static_cast<Eigen::Index>(i)) = tv.row(indices[i]);
  }
  Tape& t = *table.tape();
  if (!table.requires_grad()) return t.constant(std::move(y));
  std::vector<int> idx(indices.begin(), indices.end());
  return t.record(std::move(y), [it = table.id(), idx = std::move(idx)](Tape& t, std::size_t self) {
    const Matrix& g = t.grad_at(self);
    const Matrix& tv = t.value_at(it);
    Matrix gt = Matrix::Zero(tv.rows(), tv.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) gt.row(idx[i]) += g.row(static_cast<Eigen::Index>(i));
    t.accumulate(it, gt);
  });
}

Var pick(const Var& a, std::span<const int> indices) {
  const Matrix& av = a.value();
  if (static_cast<Eigen::Index>(indices.size()) != av.rows()) {
    throw ShapeError("pick: " + std::to_string(indices.size()) + " indices for " + shape_of(av));
  }
  Matrix y(av.rows(), 1);
  for (Eigen::Index i = 0; i < av.rows(); ++i) {
    const int k = indices[static_cast<std::size_t>(i)];
    if (k < 0 || k >= av.cols()) throw ShapeError("pick: index out of range");
    y(i, 0) = av(i, k);
  }
  Tape& t = *a.tape();
  if (!a.requires_grad()) return t.constant(std::move(y));
  std::vector<int> idx(indices.begin(), indices.end());
  return t.record(std::move(y), [ia = a.id(), idx = std::move(idx)](Tape& t, std::size_t self) {
    const Matrix& av = t.value_at(ia);
    const Matrix& g = t.grad_at(self);
    Matrix ga = Matrix::Zero(av.rows(), av.cols());
    for (Eigen::Index i = 0; i < av.rows(); ++i) ga(i, idx[static_cast<std::size_t>(i)]) = g(i, 0);
    t.accumulate(ia, ga);
  });
}

Var repeat_rows(const Var& a, Eigen::Index times) {
  const Matrix& av = a.value();
  Matrix y(av.rows() * times, av.cols());
  for (Eigen::Index i = 0; i < av.rows(); ++i) y.middleRows(i * times, times) = av.row(i).replicate(times, 1);
  Tape& t = *a.tape();
  if (!a.requires_grad()) return t.constant(std::move(y));
  return t.record(std::move(y), [ia = a.id(), times](Tape& t, std::size_t self) {
    const Matrix& g = t.grad_at(self);
    const Eigen::Index rows = g.rows() / times;
    Matrix ga(rows, g.cols());
    for (Eigen::Index i = 0; i < rows; ++i) ga.row(i) = g.middleRows(i * times, times).colwise().sum();
    t.accumulate(ia, ga);
  });
}

Var reshape(const Var& a, Eigen::Index rows, Eigen::Index cols) {
  const Matrix& av = a.value();
  if (rows * cols != av.size()) {
    throw ShapeError("reshape: " + shape_of(av) + " to " + std::to_string(rows) + "x" +
                     std::to_string(cols));
  }
  Matrix y = Eigen::Map<const Matrix>(av.data(), rows, cols);
  Tape& t = *a.tape();
  if (!a.requires_grad()) return t.constant(std::move(y));
  return t.record(std::move(y), [ia = a.id()](Tape& t, std::size_t self) {
    const Matrix& av = t.value_at(ia);
    const Matrix& g = t.grad_at(self);
    t.accumulate(ia, Eigen::Map<const Matrix>(g.data(), av.rows(), av.cols()));
  });
}

Var pool_regions(const Var& weights, const Var& regions) {
  require_same_tape(weights, regions);
  const Matrix& w = weights.value();
  const Matrix& v = regions.value();
  const Eigen::Index batch = w.rows();
  const Eigen::Index r = w.cols();
  if (v.rows() != batch * r) {
    throw ShapeError("pool_regions: weights " + shape_of(w) + " vs regions " + shape_of(v));
  }
  Matrix y(batch, v.cols());
  for (Eigen::Index b = 0; b < batch; ++b) y.row(b) = w.row(b) * v.middleRows(b * r, r);
  Tape& t = *weights.tape();
  if (!weights.requires_grad() && !regions.requires_grad()) return t.constant(std::move(y));
  return t.record(std::move(y), [iw = weights.id(), iv = regions.id()](Tape& t, std::size_t self) {
    const Matrix& w = t.value_at(iw);
    const Matrix& v = t.value_at(iv);
    const Matrix& g = t.grad_at(self);
    const Eigen::Index batch = w.rows();
    const Eigen::Index r = w.cols();
    if (t.requires_grad_at(iw)) {
      Matrix gw(batch, r);
      for (Eigen::Index b = 0; b < batch; ++b) gw.row(b) = g.row(b) * v.middleRows(b * r, r).transpose();
      t.accumulate(iw, gw);
    }
    if (t.requires_grad_at(iv)) {
      Matrix gv(v.rows(), v.cols());
      for (Eigen::Index b = 0; b < batch; ++b) gv.middleRows(b * r, r) = w.row(b).transpose() * g.row(b);
      t.accumulate(iv, gv);
    }
  });
}

Var straight_through(const Var& soft) {
  const Matrix& s = soft.value();
  Matrix y = Matrix::Zero(s.rows(), s.cols());
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    Eigen::Index k = 0;
    s.row(i).maxCoeff(&k);
    y(i, k) = 1.0;
  }
  Tape& t = *soft.tape();
  if (!soft.requires_grad()) return t.constant(std::move(y));
  return t.record(std::move(y), [is = soft.id()](Tape& t, std::size_t self) {
    t.accumulate(is, t.grad_at(self));
  });
}

}  // namespace vqr::ad

/*
 * Copyright 2026 The implang Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "implang/random.hpp"
#include "implang/tensor.hpp"

namespace implang {

class Tape;

// Handle to a value recorded on a Tape.
class Var
{
public:
  Var() = default;

  Tape& tape() const { return *_tape; }
  std::size_t index() const { return _index; }
  bool valid() const { return _tape != nullptr; }

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }

  // Gradient after Tape::backward; zero-sized when nothing flowed here.
  const Matrix& grad() const;

private:
  Var(Tape* tape, std::size_t index) : _tape(tape), _index(index) {}

  Tape* _tape = nullptr;
  std::size_t _index = 0;

  friend class Tape;
};

// Reverse-mode record of executed operations. Entries are appended in
// execution order, so every entry's inputs precede it.
class Tape
{
public:
  using Backward = std::function<void(Tape&, const Matrix& grad_out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var variable(Tensor value);
  Var constant(Tensor value);

  // Appends an op result. It requires grad iff one of `inputs` does; the
  // backward rule is dropped otherwise.
  Var record(Tensor value, std::initializer_list<Var> inputs, Backward backward);
  Var record(Tensor value, std::span<const Var> inputs, Backward backward);

  // Sets the backward rule of an already recorded op, for rules that read
  // the op's own output. No-op when `out` does not require grad.
  void attach(const Var& out, Backward backward);

  const Tensor& value(const Var& v) const { return _nodes[v._index].value; }
  bool requires_grad(const Var& v) const { return _nodes[v._index].requires_grad; }
  const Matrix& grad(const Var& v) const { return _nodes[v._index].grad; }

  // Adds `g` to the gradient of `v` if `v` requires grad.
  template <typename Derived>
  void accumulate(const Var& v, const Eigen::MatrixBase<Derived>& g)
  {
    auto& node = _nodes[v._index];
    if (!node.requires_grad) return;
    if (node.grad.size() == 0)
      node.grad = g;
    else
      node.grad += g;
  }

  // Mutable gradient buffer of `v`, zero-initialized on first use.
  Matrix& grad_buffer(const Var& v);

  // Seeds d(loss)/d(loss) = 1 and runs backward rules in reverse order.
  void backward(const Var& loss);

  std::size_t size() const { return _nodes.size(); }

private:
  struct Node
  {
    Tensor value;
    Matrix grad;
    bool requires_grad = false;
    Backward backward;
  };

  std::vector<Node> _nodes;
};

inline const Tensor& Var::value() const { return _tape->value(*this); }
inline const Matrix& Var::grad() const { return _tape->grad(*this); }

///////////////////////////////////////////
// Differentiable primitives
///////////////////////////////////////////

// [..., K] x [K, N] -> [..., N]
Var matmul(const Var& a, const Var& b);

// [B, M, K] x [B, K, N] -> [B, M, N]; with transpose_b, b is [B, N, K].
Var batched_matmul(const Var& a, const Var& b, bool transpose_b = false);

// Rank-2 transpose.
Var transpose(const Var& a);

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);

// Adds a length-N vector to every row of [..., N].
Var add_bias(const Var& a, const Var& bias);

// Concatenate along the last axis; leading shapes must agree.
Var concat(std::span<const Var> parts);

// Columns [begin, begin + count) of the last axis.
Var slice(const Var& a, Index begin, Index count);

// T tensors of shape [B, D] -> [B, T, D].
Var stack_steps(std::span<const Var> steps);

// Rows of `table` [V, D] selected by `ids`; result shape is `leading` + [D].
Var embedding_lookup(const Var& table, std::span<const int> ids, const Shape& leading);

Var reshape(const Var& a, const Shape& shape);

// [B, T, H*d] <-> [B*H, T, d]
Var split_heads(const Var& a, Index heads);
Var merge_heads(const Var& a, Index heads);

// Row-wise softmax over the last axis.
Var softmax(const Var& a);

// Fills entries above the diagonal of each [T, T] block of [B, T, T] with a
// large negative value; their gradient is zero.
Var causal_mask(const Var& a);

// Row-wise normalization over the last axis with gain and bias of length N.
Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps = 1e-5);

Var tanh(const Var& a);
Var sigmoid(const Var& a);
Var gelu(const Var& a); // tanh approximation

Var sum(const Var& a);

// Inverted dropout: zeroes each entry with probability p, scales the rest
// by 1 / (1 - p). Identity when p == 0.
Var dropout(const Var& a, double p, Random& rng);

// Mean negative log-likelihood of `targets` under row-wise softmax of
// `logits` [..., V]; rows whose target equals `ignore_id` are excluded.
Var cross_entropy(const Var& logits, std::span<const int> targets, int ignore_id);

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return mul(a, b); }
inline Var operator*(double s, const Var& a) { return scale(a, s); }
inline Var operator*(const Var& a, double s) { return scale(a, s); }

} // namespace implang

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

#include "implang/autograd.hpp"

#include <cmath>
#include <limits>

namespace implang {

namespace {

[[noreturn]] void shape_error(const char* op, const Shape& a, const Shape& b)
{
  throw RuntimeError(std::string(op) + ": shape mismatch " + shape_string(a) + " vs " +
    shape_string(b));
}

Shape with_last(Shape s, Index last)
{
  if (s.empty()) s.push_back(last);
  else s.back() = last;
  return s;
}

Shape leading(const Shape& s)
{
  return Shape(s.begin(), s.empty() ? s.end() : s.end() - 1);
}

constexpr double kMasked = -1e300;
constexpr double kExpUnderflow = -700.0;

} // namespace

///////////////////////////////////////////
// Tape
///////////////////////////////////////////

Var Tape::variable(Tensor value)
{
  value.requires_grad = true;
  _nodes.push_back({std::move(value), Matrix(), true, nullptr});
  return Var(this, _nodes.size() - 1);
}

Var Tape::constant(Tensor value)
{
  value.requires_grad = false;
  _nodes.push_back({std::move(value), Matrix(), false, nullptr});
  return Var(this, _nodes.size() - 1);
}

Var Tape::record(Tensor value, std::initializer_list<Var> inputs, Backward backward)
{
  return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()),
    std::move(backward));
}

Var Tape::record(Tensor value, std::span<const Var> inputs, Backward backward)
{
  bool needs = false;
  for (const auto& v : inputs)
    needs = needs || _nodes[v._index].requires_grad;

#ifndef NDEBUG
  bool inputs_finite = true;
  for (const auto& v : inputs)
    inputs_finite = inputs_finite && _nodes[v._index].value.all_finite();
  if (inputs_finite && !value.all_finite())
    throw RuntimeError("non-finite value produced from finite inputs");
#endif

  value.requires_grad = needs;
  _nodes.push_back({std::move(value), Matrix(), needs, needs ? std::move(backward) : nullptr});
  return Var(this, _nodes.size() - 1);
}

void Tape::attach(const Var& out, Backward backward)
{
  auto& node = _nodes[out._index];
  if (node.requires_grad) node.backward = std::move(backward);
}

Matrix& Tape::grad_buffer(const Var& v)
{
  auto& node = _nodes[v._index];
  if (node.grad.size() == 0)
    node.grad = Matrix::Zero(node.value.rows(), node.value.cols());
  return node.grad;
}

void Tape::backward(const Var& loss)
{
  auto& root = _nodes[loss._index];
  if (root.value.size() != 1)
    throw RuntimeError("backward: loss must be a scalar, got shape " +
      shape_string(root.value.shape()));

  root.grad = Matrix::Ones(1, 1);
  for (std::size_t i = loss._index + 1; i-- > 0;)
  {
    auto& node = _nodes[i];
    if (node.backward && node.grad.size() != 0)
      node.backward(*this, node.grad);
  }
}

///////////////////////////////////////////
// Linear algebra
///////////////////////////////////////////

Var matmul(const Var& a, const Var& b)
{
  const auto& A = a.value();
  const auto& B = b.value();
  if (B.rank() != 2 || A.rank() < 1 || A.cols() != B.rows()) shape_error("matmul", A.shape(), B.shape());

  Tensor y(with_last(A.shape(), B.cols()));
  y.matrix().noalias() = A.matrix() * B.matrix();

  return a.tape().record(std::move(y), {a, b}, [a, b](Tape& t, const Matrix& g) {
    if (t.requires_grad(a)) t.accumulate(a, g * b.value().matrix().transpose());
    if (t.requires_grad(b)) t.accumulate(b, a.value().matrix().transpose() * g);
  });
}

Var batched_matmul(const Var& a, const Var& b, bool transpose_b)
{
  const auto& A = a.value();
  const auto& B = b.value();
  if (A.rank() != 3 || B.rank() != 3 || A.dim(0) != B.dim(0))
    shape_error("batched_matmul", A.shape(), B.shape());

  const Index batch = A.dim(0), m = A.dim(1), k = A.dim(2);
  const Index kb = transpose_b ? B.dim(2) : B.dim(1);
  const Index n = transpose_b ? B.dim(1) : B.dim(2);
  if (k != kb) shape_error("batched_matmul", A.shape(), B.shape());
  const Index brows = B.dim(1);

  Tensor y(Shape{batch, m, n});
  for (Index i = 0; i < batch; ++i)
  {
    auto Ai = A.matrix().middleRows(i * m, m);
    auto Bi = B.matrix().middleRows(i * brows, brows);
    if (transpose_b)
      y.matrix().middleRows(i * m, m).noalias() = Ai * Bi.transpose();
    else
      y.matrix().middleRows(i * m, m).noalias() = Ai * Bi;
  }

  return a.tape().record(std::move(y), {a, b},
    [a, b, batch, m, brows, transpose_b](Tape& t, const Matrix& g) {
      const auto& A = a.value().matrix();
      const auto& B = b.value().matrix();
      if (t.requires_grad(a))
      {
        auto& ga = t.grad_buffer(a);
        for (Index i = 0; i < batch; ++i)
        {
          auto gi = g.middleRows(i * m, m);
          auto Bi = B.middleRows(i * brows, brows);
          if (transpose_b)
            ga.middleRows(i * m, m).noalias() += gi * Bi;
          else
            ga.middleRows(i * m, m).noalias() += gi * Bi.transpose();
        }
      }
      if (t.requires_grad(b))
      {
        auto& gb = t.grad_buffer(b);
        for (Index i = 0; i < batch; ++i)
        {
          auto gi = g.middleRows(i * m, m);
          auto Ai = A.middleRows(i * m, m);
          if (transpose_b)
            gb.middleRows(i * brows, brows).noalias() += gi.transpose() * Ai;
          else
            gb.middleRows(i * brows, brows).noalias() += Ai.transpose() * gi;
        }
      }
    });
}

Var transpose(const Var& a)
{
  const auto& A = a.value();
  if (A.rank() != 2) throw RuntimeError("transpose: expected rank 2, got " + shape_string(A.shape()));
  Tensor y(Shape{A.cols(), A.rows()}, A.matrix().transpose());
  return a.tape().record(std::move(y), {a}, [a](Tape& t, const Matrix& g) {
    t.accumulate(a, g.transpose());
  });
}

///////////////////////////////////////////
// Elementwise
///////////////////////////////////////////

Var add(const Var& a, const Var& b)
{
  if (a.shape() != b.shape()) shape_error("add", a.shape(), b.shape());
  Tensor y(a.shape(), a.value().matrix() + b.value().matrix());
  return a.tape().record(std::move(y), {a, b}, [a, b](Tape& t, const Matrix& g) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

Var sub(const Var& a, const Var& b)
{
  if (a.shape() != b.shape()) shape_error("sub", a.shape(), b.shape());
  Tensor y(a.shape(), a.value().matrix() - b.value().matrix());
  return a.tape().record(std::move(y), {a, b}, [a, b](Tape& t, const Matrix& g) {
    t.accumulate(a, g);
    t.accumulate(b, -g);
  });
}

Var mul(const Var& a, const Var& b)
{
  if (a.shape() != b.shape()) shape_error("mul", a.shape(), b.shape());
  Tensor y(a.shape(), a.value().matrix().cwiseProduct(b.value().matrix()));
  return a.tape().record(std::move(y), {a, b}, [a, b](Tape& t, const Matrix& g) {
    if (t.requires_grad(a)) t.accumulate(a, g.cwiseProduct(b.value().matrix()));
    if (t.requires_grad(b)) t.accumulate(b, g.cwiseProduct(a.value().matrix()));
  });
}

Var scale(const Var& a, double s)
{
  Tensor y(a.shape(), a.value().matrix() * s);
  return a.tape().record(std::move(y), {a}, [a, s](Tape& t, const Matrix& g) {
    t.accumulate(a, g * s);
  });
}

Var add_bias(const Var& a, const Var& bias)
{
  const auto& A = a.value();
  const auto& b = bias.value();
  if (b.size() != A.cols() || b.rows() != 1) shape_error("add_bias", A.shape(), b.shape());
  Tensor y(A.shape(), A.matrix().rowwise() + b.matrix().row(0));
  return a.tape().record(std::move(y), {a, bias}, [a, bias](Tape& t, const Matrix& g) {
    t.accumulate(a, g);
    if (t.requires_grad(bias)) t.accumulate(bias, g.colwise().sum());
  });
}

Var tanh(const Var& a)
{
  Tensor y(a.shape(), a.value().matrix().array().tanh().matrix());
  auto out = a.tape().record(std::move(y), {a}, nullptr);
  a.tape().attach(out, [a, out](Tape& t, const Matrix& g) {
    const auto y = out.value().matrix().array();
    t.accumulate(a, (g.array() * (1.0 - y.square())).matrix());
  });
  return out;
}

Var sigmoid(const Var& a)
{
  Tensor y(a.shape(), (1.0 / (1.0 + (-a.value().matrix().array()).exp())).matrix());
  auto out = a.tape().record(std::move(y), {a}, nullptr);
  a.tape().attach(out, [a, out](Tape& t, const Matrix& g) {
    const auto y = out.value().matrix().array();
    t.accumulate(a, (g.array() * y * (1.0 - y)).matrix());
  });
  return out;
}

namespace {

constexpr double kGeluC = 0.7978845608028654; // sqrt(2/pi)
constexpr double kGeluK = 0.044715;

} // namespace

Var gelu(const Var& a)
{
  constexpr double c = kGeluC;
  constexpr double k = kGeluK;
  const auto x = a.value().matrix().array();
  Tensor y(a.shape(), (0.5 * x * (1.0 + (c * (x + k * x.cube())).tanh())).matrix());
  return a.tape().record(std::move(y), {a}, [a](Tape& t, const Matrix& g) {
    constexpr double c = kGeluC;
    constexpr double k = kGeluK;
    const auto x = a.value().matrix().array();
    const auto th = (c * (x + k * x.cube())).tanh();
    const auto dydx = 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th.square()) * c * (1.0 + 3.0 * k * x.square());
    t.accumulate(a, (g.array() * dydx).matrix());
  });
}

Var sum(const Var& a)
{
  Tensor y = Tensor::scalar(a.value().matrix().sum());
  return a.tape().record(std::move(y), {a}, [a](Tape& t, const Matrix& g) {
    t.accumulate(a, Matrix::Constant(a.value().rows(), a.value().cols(), g(0, 0)));
  });
}

Var dropout(const Var& a, double p, Random& rng)
{
  if (p < 0.0 || p >= 1.0) throw ConfigError("dropout probability must be in [0, 1)");
  if (p == 0.0) return a;

  const auto& A = a.value();
  Matrix mask(A.rows(), A.cols());
  const double keep = 1.0 / (1.0 - p);
  for (Index i = 0; i < mask.size(); ++i) mask.data()[i] = rng.uniform() < p ? 0.0 : keep;

  Tensor y(A.shape(), A.matrix().cwiseProduct(mask));
  return a.tape().record(std::move(y), {a}, [a, mask = std::move(mask)](Tape& t, const Matrix& g) {
    t.accumulate(a, g.cwiseProduct(mask));
  });
}

///////////////////////////////////////////
// Layout
///////////////////////////////////////////

Var concat(std::span<const Var> parts)
{
  if (parts.empty()) throw RuntimeError("concat: no inputs");
  const Shape lead = leading(parts[0].shape());
  Index cols = 0;
  for (const auto& p : parts)
  {
    if (leading(p.shape()) != lead) shape_error("concat", parts[0].shape(), p.shape());
    cols += p.value().cols();
  }

  Tensor y(with_last(parts[0].shape(), cols));
  Index at = 0;
  for (const auto& p : parts)
  {
    y.matrix().middleCols(at, p.value().cols()) = p.value().matrix();
    at += p.value().cols();
  }

  std::vector<Var> inputs(parts.begin(), parts.end());
  return parts[0].tape().record(std::move(y), parts, [inputs](Tape& t, const Matrix& g) {
    Index at = 0;
    for (const auto& p : inputs)
    {
      const Index c = p.value().cols();
      t.accumulate(p, g.middleCols(at, c));
      at += c;
    }
  });
}

Var slice(const Var& a, Index begin, Index count)
{
  const auto& A = a.value();
  if (begin < 0 || count < 0 || begin + count > A.cols())
    throw RuntimeError("slice: columns [" + std::to_string(begin) + ", " +
      std::to_string(begin + count) + ") out of range for shape " + shape_string(A.shape()));

  Tensor y(with_last(A.shape(), count), A.matrix().middleCols(begin, count));
  return a.tape().record(std::move(y), {a}, [a, begin, count](Tape& t, const Matrix& g) {
    t.grad_buffer(a).middleCols(begin, count) += g;
  });
}

Var stack_steps(std::span<const Var> steps)
{
  if (steps.empty()) throw RuntimeError("stack_steps: no inputs");
  const auto& first = steps[0].value();
  if (first.rank() != 2) throw RuntimeError("stack_steps: expected [B, D], got " + shape_string(first.shape()));
  const Index batch = first.rows(), width = first.cols();
  const Index T = static_cast<Index>(steps.size());

  Tensor y(Shape{batch, T, width});
  for (Index s = 0; s < T; ++s)
  {
    const auto& v = steps[s].value();
    if (v.shape() != first.shape()) shape_error("stack_steps", first.shape(), v.shape());
    for (Index b = 0; b < batch; ++b) y.matrix().row(b * T + s) = v.matrix().row(b);
  }

  std::vector<Var> inputs(steps.begin(), steps.end());
  return steps[0].tape().record(std::move(y), steps, [inputs, batch, T](Tape& t, const Matrix& g) {
    for (Index s = 0; s < T; ++s)
    {
      if (!t.requires_grad(inputs[s])) continue;
      auto& gs = t.grad_buffer(inputs[s]);
      for (Index b = 0; b < batch; ++b) gs.row(b) += g.row(b * T + s);
    }
  });
}

Var embedding_lookup(const Var& table, std::span<const int> ids, const Shape& lead)
{
  const auto& W = table.value();
  if (W.rank() != 2) throw RuntimeError("embedding_lookup: table must be rank 2, got " + shape_string(W.shape()));

  Shape shape = lead;
  shape.push_back(W.cols());
  Tensor y(shape);
  if (y.rows() != static_cast<Index>(ids.size()))
    throw RuntimeError("embedding_lookup: " + std::to_string(ids.size()) + " ids for shape " + shape_string(shape));

  for (std::size_t i = 0; i < ids.size(); ++i)
  {
    if (ids[i] < 0 || ids[i] >= W.rows())
      throw RuntimeError("embedding_lookup: id " + std::to_string(ids[i]) + " out of range [0, " +
        std::to_string(W.rows()) + ")");
    y.matrix().row(static_cast<Index>(i)) = W.matrix().row(ids[i]);
  }

  std::vector<int> idx(ids.begin(), ids.end());
  return table.tape().record(std::move(y), {table}, [table, idx = std::move(idx)](Tape& t, const Matrix& g) {
    auto& gw = t.grad_buffer(table);
    for (std::size_t i = 0; i < idx.size(); ++i) gw.row(idx[i]) += g.row(static_cast<Index>(i));
  });
}

Var reshape(const Var& a, const Shape& shape)
{
  Tensor y = a.value().reshaped(shape);
  return a.tape().record(std::move(y), {a}, [a](Tape& t, const Matrix& g) {
    const auto& v = a.value();
    t.accumulate(a, Eigen::Map<const Matrix>(g.data(), v.rows(), v.cols()));
  });
}

namespace {

// Copies between [B, T, H*d] and [B*H, T, d] layouts.
void permute_heads(const Matrix& src, Matrix& dst, Index batch, Index T, Index heads, Index d, bool split)
{
  for (Index b = 0; b < batch; ++b)
    for (Index h = 0; h < heads; ++h)
      for (Index s = 0; s < T; ++s)
      {
        const Index merged_row = b * T + s;
        const Index split_row = (b * heads + h) * T + s;
        if (split)
          dst.row(split_row) = src.block(merged_row, h * d, 1, d);
        else
          dst.block(merged_row, h * d, 1, d) = src.row(split_row);
      }
}

} // namespace

Var split_heads(const Var& a, Index heads)
{
  const auto& A = a.value();
  if (A.rank() != 3 || heads <= 0 || A.dim(2) % heads != 0)
    throw RuntimeError("split_heads: cannot split " + shape_string(A.shape()) + " into " +
      std::to_string(heads) + " heads");
  const Index batch = A.dim(0), T = A.dim(1), d = A.dim(2) / heads;

  Tensor y(Shape{batch * heads, T, d});
  permute_heads(A.matrix(), y.matrix(), batch, T, heads, d, true);
  return a.tape().record(std::move(y), {a}, [a, batch, T, heads, d](Tape& t, const Matrix& g) {
    Matrix back(batch * T, heads * d);
    permute_heads(g, back, batch, T, heads, d, false);
    t.accumulate(a, back);
  });
}

Var merge_heads(const Var& a, Index heads)
{
  const auto& A = a.value();
  if (A.rank() != 3 || heads <= 0 || A.dim(0) % heads != 0)
    throw RuntimeError("merge_heads: cannot merge " + shape_string(A.shape()) + " from " +
      std::to_string(heads) + " heads");
  const Index batch = A.dim(0) / heads, T = A.dim(1), d = A.dim(2);

  Tensor y(Shape{batch, T, heads * d});
  permute_heads(A.matrix(), y.matrix(), batch, T, heads, d, false);
  return a.tape().record(std::move(y), {a}, [a, batch, T, heads, d](Tape& t, const Matrix& g) {
    Matrix back(batch * heads * T, d);
    permute_heads(g, back, batch, T, heads, d, true);
    t.accumulate(a, back);
  });
}

///////////////////////////////////////////
// Normalization
///////////////////////////////////////////

Var softmax(const Var& a)
{
  const auto& X = a.value().matrix();
  Matrix Y(X.rows(), X.cols());
  for (Index r = 0; r < X.rows(); ++r)
  {
    const double m = X.row(r).maxCoeff();
    // Eigen's vectorized exp clamps large negative arguments to a tiny
    // nonzero value; masked entries must be exactly zero, not subnormal.
    const auto shifted = X.row(r).array() - m;
    Y.row(r) = (shifted < kExpUnderflow).select(0.0, shifted.exp());
    Y.row(r) /= Y.row(r).sum();
  }

  auto out = a.tape().record(Tensor(a.shape(), std::move(Y)), {a}, nullptr);
  a.tape().attach(out, [a, out](Tape& t, const Matrix& g) {
    const auto& Y = out.value().matrix();
    // dx = y * (g - <g, y>) per row
    Eigen::VectorXd dots = g.cwiseProduct(Y).rowwise().sum();
    t.accumulate(a, (Y.array() * (g.colwise() - dots).array()).matrix());
  });
  return out;
}

Var causal_mask(const Var& a)
{
  const auto& A = a.value();
  if (A.rank() != 3 || A.dim(1) != A.dim(2))
    throw RuntimeError("causal_mask: expected [B, T, T], got " + shape_string(A.shape()));
  const Index batch = A.dim(0), T = A.dim(1);

  Tensor y = A;
  for (Index b = 0; b < batch; ++b)
    for (Index i = 0; i < T; ++i)
      for (Index j = i + 1; j < T; ++j) y.matrix()(b * T + i, j) = kMasked;

  return a.tape().record(std::move(y), {a}, [a, batch, T](Tape& t, const Matrix& g) {
    Matrix masked = g;
    for (Index b = 0; b < batch; ++b)
      for (Index i = 0; i < T; ++i)
        for (Index j = i + 1; j < T; ++j) masked(b * T + i, j) = 0.0;
    t.accumulate(a, masked);
  });
}

Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps)
{
  const auto& X = x.value().matrix();
  const Index n = X.cols();
  if (gain.value().size() != n || bias.value().size() != n)
    shape_error("layer_norm", x.shape(), gain.shape());

  Matrix xhat(X.rows(), n);
  Eigen::VectorXd inv_std(X.rows());
  for (Index r = 0; r < X.rows(); ++r)
  {
    const double mean = X.row(r).mean();
    const double var = (X.row(r).array() - mean).square().sum() / static_cast<double>(n);
    inv_std(r) = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = (X.row(r).array() - mean) * inv_std(r);
  }

  const auto g = gain.value().matrix().row(0).array();
  const auto b = bias.value().matrix().row(0).array();
  Matrix Y = (xhat.array().rowwise() * g).rowwise() + b;

  return x.tape().record(Tensor(x.shape(), std::move(Y)), {x, gain, bias},
    [x, gain, bias, xhat = std::move(xhat), inv_std = std::move(inv_std), n](Tape& t, const Matrix& G) {
      if (t.requires_grad(gain))
        t.accumulate(gain, G.cwiseProduct(xhat).colwise().sum());
      if (t.requires_grad(bias))
        t.accumulate(bias, G.colwise().sum());
      if (t.requires_grad(x))
      {
        const auto g = gain.value().matrix().row(0).array();
        Matrix dxhat = (G.array().rowwise() * g).matrix();
        Matrix dx(dxhat.rows(), n);
        for (Index r = 0; r < dxhat.rows(); ++r)
        {
          const double mean_d = dxhat.row(r).mean();
          const double mean_dx = dxhat.row(r).dot(xhat.row(r)) / static_cast<double>(n);
          dx.row(r) = inv_std(r) * (dxhat.row(r).array() - mean_d - xhat.row(r).array() * mean_dx);
        }
        t.accumulate(x, dx);
      }
    });
}

///////////////////////////////////////////
// Loss
///////////////////////////////////////////

Var cross_entropy(const Var& logits, std::span<const int> targets, int ignore_id)
{
  const auto& Z = logits.value().matrix();
  if (static_cast<Index>(targets.size()) != Z.rows())
    throw RuntimeError("cross_entropy: " + std::to_string(targets.size()) + " targets for logits " +
      shape_string(logits.shape()));

  double total = 0.0;
  Index count = 0;
  for (Index r = 0; r < Z.rows(); ++r)
  {
    const int target = targets[r];
    if (target == ignore_id) continue;
    if (target < 0 || target >= Z.cols())
      throw RuntimeError("cross_entropy: target " + std::to_string(target) + " out of range [0, " +
        std::to_string(Z.cols()) + ")");
    const double m = Z.row(r).maxCoeff();
    const double lse = m + std::log((Z.row(r).array() - m).exp().sum());
    total += lse - Z(r, target);
    ++count;
  }
  if (count == 0) throw RuntimeError("cross_entropy: every target is ignored");

  std::vector<int> tgt(targets.begin(), targets.end());
  const double inv_n = 1.0 / static_cast<double>(count);
  return logits.tape().record(Tensor::scalar(total * inv_n), {logits},
    [logits, tgt = std::move(tgt), ignore_id, inv_n](Tape& t, const Matrix& g) {
      const auto& Z = logits.value().matrix();
      auto& gz = t.grad_buffer(logits);
      const double s = g(0, 0) * inv_n;
      for (Index r = 0; r < Z.rows(); ++r)
      {
        if (tgt[r] == ignore_id) continue;
        const double m = Z.row(r).maxCoeff();
        Eigen::RowVectorXd p = (Z.row(r).array() - m).exp();
        p /= p.sum();
        p(tgt[r]) -= 1.0;
        gz.row(r) += s * p;
      }
    });
}

} // namespace implang

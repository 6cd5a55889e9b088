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
#include <initializer_list>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "implang/error.hpp"

namespace implang {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

std::string shape_string(const Shape& shape);

// Dense row-major tensor. Storage is a (rows x cols) Eigen matrix where cols
// is the last dimension and rows the product of the leading ones; rank-0 and
// rank-1 tensors are a single row.
template <typename Scalar>
class BasicTensor
{
public:
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  BasicTensor() : BasicTensor(Shape{}) {}

  explicit BasicTensor(Shape shape)
  : _shape(std::move(shape)), _data(Matrix::Zero(rows_of(_shape), cols_of(_shape))) {}

  BasicTensor(Shape shape, Matrix data) : _shape(std::move(shape)), _data(std::move(data))
  {
    if (_data.rows() != rows_of(_shape) || _data.cols() != cols_of(_shape))
      throw RuntimeError("tensor data " + std::to_string(_data.rows()) + "x" +
        std::to_string(_data.cols()) + " does not fit shape " + shape_string(_shape));
  }

  static BasicTensor scalar(Scalar value)
  {
    BasicTensor t;
    t._data(0, 0) = value;
    return t;
  }

  static BasicTensor from(Shape shape, std::initializer_list<Scalar> values)
  {
    BasicTensor t(std::move(shape));
    if (static_cast<Index>(values.size()) != t.size())
      throw RuntimeError("tensor initializer has " + std::to_string(values.size()) +
        " values for shape " + shape_string(t._shape));
    std::copy(values.begin(), values.end(), t.data());
    return t;
  }

  const Shape& shape() const { return _shape; }
  Index rank() const { return static_cast<Index>(_shape.size()); }
  Index dim(Index i) const { return _shape.at(static_cast<std::size_t>(i)); }
  Index size() const { return _data.size(); }
  Index rows() const { return _data.rows(); }
  Index cols() const { return _data.cols(); }

  Matrix& matrix() { return _data; }
  const Matrix& matrix() const { return _data; }

  Scalar* data() { return _data.data(); }
  const Scalar* data() const { return _data.data(); }

  Scalar& operator[](Index i) { return _data.data()[i]; }
  Scalar operator[](Index i) const { return _data.data()[i]; }

  Scalar item() const
  {
    if (size() != 1)
      throw RuntimeError("item() on tensor of shape " + shape_string(_shape));
    return _data(0, 0);
  }

  BasicTensor reshaped(Shape shape) const
  {
    BasicTensor t(std::move(shape));
    if (t.size() != size())
      throw RuntimeError("cannot reshape " + shape_string(_shape) + " to " + shape_string(t._shape));
    std::copy(data(), data() + size(), t.data());
    return t;
  }

  bool all_finite() const { return _data.allFinite(); }

  bool operator==(const BasicTensor& other) const
  {
    return _shape == other._shape && _data == other._data;
  }

  bool requires_grad = false;

  static Index rows_of(const Shape& s)
  {
    Index r = 1;
    for (std::size_t i = 0; i + 1 < s.size(); ++i) r *= s[i];
    return r;
  }

  static Index cols_of(const Shape& s) { return s.empty() ? 1 : s.back(); }

private:
  Shape _shape;
  Matrix _data;
};

using Tensor = BasicTensor<double>;
using Matrix = Tensor::Matrix;

inline std::string shape_string(const Shape& shape)
{
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i)
  {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

} // namespace implang

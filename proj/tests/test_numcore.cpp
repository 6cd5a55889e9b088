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

#include "doctest.h"

#include <cmath>

#include "implang/autograd.hpp"
#include "implang/gradcheck.hpp"

using namespace implang;

namespace {

Tensor random_tensor(Shape shape, std::uint64_t seed, double scale = 1.0)
{
  Random rng(seed);
  Tensor t(std::move(shape));
  for (Index i = 0; i < t.size(); ++i) t[i] = rng.normal(0.0, scale);
  return t;
}

// Contract an op's output with fixed random weights so every output entry
// contributes to the checked scalar.
ScalarFunction weighted(std::function<Var(Tape&, const Var&)> op, std::uint64_t seed = 99)
{
  return [op, seed](Tape& tape, const Var& x) {
    Var y = op(tape, x);
    Var w = tape.constant(random_tensor(y.shape(), seed));
    return sum(y * w);
  };
}

constexpr double kPrimitiveTol = 1e-6;

} // namespace

TEST_CASE("forward values")
{
  Tape tape;

  SUBCASE("softmax of a constant row is uniform")
  {
    auto y = softmax(tape.constant(Tensor::from({1, 3}, {0, 0, 0}))).value();
    for (Index i = 0; i < 3; ++i) CHECK(y[i] == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  }

  SUBCASE("softmax rows sum to one with entries in (0, 1)")
  {
    auto y = softmax(tape.constant(random_tensor({5, 9}, 3, 4.0))).value();
    for (Index r = 0; r < y.rows(); ++r)
    {
      CHECK(std::abs(y.matrix().row(r).sum() - 1.0) < 1e-12);
      CHECK(y.matrix().row(r).minCoeff() > 0.0);
      CHECK(y.matrix().row(r).maxCoeff() < 1.0);
    }
  }

  SUBCASE("identity matmul")
  {
    Tensor eye({3, 3});
    eye.matrix().setIdentity();
    Tensor a = random_tensor({3, 4}, 5);
    CHECK(matmul(tape.constant(eye), tape.constant(a)).value() == a);
  }

  SUBCASE("layer norm against a one-off mean/variance computation")
  {
    Var g = tape.constant(Tensor::from({3}, {1, 1, 1}));
    Var b = tape.constant(Tensor::from({3}, {0, 0, 0}));
    auto y = layer_norm(tape.constant(Tensor::from({1, 3}, {1, 2, 3})), g, b, 1e-5).value();

    const double mean = (1.0 + 2.0 + 3.0) / 3.0;
    const double var = ((1 - mean) * (1 - mean) + (2 - mean) * (2 - mean) + (3 - mean) * (3 - mean)) / 3.0;
    const double denom = std::sqrt(var + 1e-5);
    CHECK(std::abs(y[0] - (1 - mean) / denom) < 1e-12);
    CHECK(std::abs(y[1] - (2 - mean) / denom) < 1e-12);
    CHECK(std::abs(y[2] - (3 - mean) / denom) < 1e-12);
  }

  SUBCASE("shape mismatch names both shapes")
  {
    Var a = tape.constant(Tensor({2, 3}));
    Var b = tape.constant(Tensor({4, 5}));
    CHECK_THROWS_WITH(matmul(a, b), "matmul: shape mismatch [2x3] vs [4x5]");
    CHECK_THROWS_WITH(add(a, b), "add: shape mismatch [2x3] vs [4x5]");
  }

  SUBCASE("causal mask hides the future only")
  {
    auto y = causal_mask(tape.constant(random_tensor({2, 3, 3}, 8))).value();
    CHECK(y.matrix()(0, 1) < -1e299);
    CHECK(y.matrix()(2, 0) > -10.0);
    CHECK(y.all_finite());
  }
}

TEST_CASE("cross entropy")
{
  Tape tape;

  SUBCASE("uniform logits give ln V")
  {
    std::vector<int> targets = {3, 7};
    auto loss = cross_entropy(tape.constant(Tensor({1, 2, 10})), targets, -1);
    CHECK(std::abs(loss.value().item() - std::log(10.0)) < 1e-12);
  }

  SUBCASE("near one-hot")
  {
    Tensor z({1, 1, 5});
    z[2] = 100.0;
    std::vector<int> targets = {2};
    CHECK(cross_entropy(tape.constant(z), targets, -1).value().item() < 1e-12);
  }

  SUBCASE("random logits against softmax-then-log")
  {
    Tensor z = random_tensor({2, 3, 7}, 17, 2.0);
    std::vector<int> targets = {1, 6, 0, 3, 5, 2};
    // ignore id -1 so every row counts
    const double loss = cross_entropy(tape.constant(z), targets, -1).value().item();

    double oracle = 0.0;
    for (int r = 0; r < 6; ++r)
    {
      double denom = 0.0;
      for (int c = 0; c < 7; ++c) denom += std::exp(z.matrix()(r, c));
      oracle += -std::log(std::exp(z.matrix()(r, targets[r])) / denom);
    }
    oracle /= 6.0;
    CHECK(std::abs(loss - oracle) < 1e-12);
  }

  SUBCASE("ignored rows drop out of N")
  {
    Tensor z = random_tensor({3, 4}, 18);
    std::vector<int> all = {1, 0, 2};
    std::vector<int> kept = {1, 2};
    Tensor z2({2, 4});
    z2.matrix().row(0) = z.matrix().row(0);
    z2.matrix().row(1) = z.matrix().row(2);
    const double a = cross_entropy(tape.constant(z), all, 0).value().item();
    const double b = cross_entropy(tape.constant(z2), kept, -1).value().item();
    CHECK(a == b);
  }

  SUBCASE("every target ignored")
  {
    std::vector<int> targets = {0, 0};
    CHECK_THROWS_AS(cross_entropy(tape.constant(Tensor({2, 4})), targets, 0), RuntimeError);
  }

  SUBCASE("non-negative")
  {
    for (std::uint64_t s = 0; s < 20; ++s)
    {
      std::vector<int> targets = {static_cast<int>(s % 6), 2, 4};
      CHECK(cross_entropy(tape.constant(random_tensor({3, 6}, s, 3.0)), targets, -1).value().item() >= 0.0);
    }
  }
}

TEST_CASE("backward")
{
  SUBCASE("sum gives ones")
  {
    Tape tape;
    Var x = tape.variable(random_tensor({2, 3}, 1));
    tape.backward(sum(x));
    CHECK(x.grad() == Matrix::Ones(2, 3));
  }

  SUBCASE("x dot x gives 2x")
  {
    Tape tape;
    Tensor v = random_tensor({4}, 2);
    Var x = tape.variable(v);
    tape.backward(sum(x * x));
    CHECK(x.grad() == (2.0 * v.matrix()).eval());
  }

  SUBCASE("seed gradient is one")
  {
    Tape tape;
    Var x = tape.variable(random_tensor({3}, 3));
    Var loss = sum(x);
    tape.backward(loss);
    CHECK(loss.grad()(0, 0) == 1.0);
  }

  SUBCASE("non-scalar loss is rejected")
  {
    Tape tape;
    Var x = tape.variable(random_tensor({3}, 3));
    CHECK_THROWS_AS(tape.backward(x), RuntimeError);
  }

  SUBCASE("constants receive no gradient")
  {
    Tape tape;
    Var c = tape.constant(random_tensor({3}, 4));
    Var x = tape.variable(random_tensor({3}, 5));
    tape.backward(sum(c * x));
    CHECK(c.grad().size() == 0);
    CHECK(x.grad() == c.value().matrix());
  }
}

TEST_CASE("finite difference checker")
{
  auto squares = [](Tape&, const Var& x) { return sum(x * x); };
  CHECK(finite_difference_check(squares, random_tensor({3, 4}, 6)) < 1e-9);

  std::vector<int> targets = {1, 4, 0};
  auto ce = [&](Tape&, const Var& x) { return cross_entropy(x, targets, -1); };
  CHECK(finite_difference_check(ce, random_tensor({3, 5}, 7)) < 1e-6);

  CHECK_THROWS_WITH(finite_difference_check(squares, random_tensor({2}, 6), 0.0), "step must be positive");
}

TEST_CASE("every primitive passes a finite difference check")
{
  const Tensor m34 = random_tensor({3, 4}, 10);
  const Tensor b3x4 = random_tensor({2, 3, 4}, 11);

  auto check = [](const char* name, const ScalarFunction& f, const Tensor& x) {
    const double err = finite_difference_check(f, x);
    INFO(name << " error " << err);
    CHECK(err < kPrimitiveTol);
  };

  check("matmul lhs", weighted([](Tape& t, const Var& x) {
    return matmul(x, t.constant(random_tensor({4, 5}, 20)));
  }), b3x4);
  check("matmul rhs", weighted([](Tape& t, const Var& x) {
    return matmul(t.constant(random_tensor({2, 3, 3}, 21)), x);
  }), m34);
  check("batched_matmul lhs", weighted([](Tape& t, const Var& x) {
    return batched_matmul(x, t.constant(random_tensor({2, 4, 2}, 22)));
  }), b3x4);
  check("batched_matmul rhs", weighted([](Tape& t, const Var& x) {
    return batched_matmul(t.constant(random_tensor({2, 5, 3}, 23)), x);
  }), b3x4);
  check("batched_matmul rhs transposed", weighted([](Tape& t, const Var& x) {
    return batched_matmul(t.constant(random_tensor({2, 5, 4}, 24)), x, true);
  }), b3x4);
  check("transpose", weighted([](Tape&, const Var& x) { return transpose(x); }), m34);
  check("add", weighted([](Tape& t, const Var& x) { return x + t.constant(random_tensor({3, 4}, 25)); }), m34);
  check("sub", weighted([](Tape& t, const Var& x) { return t.constant(random_tensor({3, 4}, 26)) - x; }), m34);
  check("mul", weighted([](Tape& t, const Var& x) { return x * t.constant(random_tensor({3, 4}, 27)); }), m34);
  check("mul self", weighted([](Tape&, const Var& x) { return x * x; }), m34);
  check("scale", weighted([](Tape&, const Var& x) { return 0.37 * x; }), m34);
  check("add_bias input", weighted([](Tape& t, const Var& x) {
    return add_bias(x, t.constant(random_tensor({4}, 28)));
  }), b3x4);
  check("add_bias bias", weighted([](Tape& t, const Var& x) {
    return add_bias(t.constant(random_tensor({2, 3, 4}, 29)), x);
  }), random_tensor({4}, 30));
  check("concat", weighted([](Tape& t, const Var& x) {
    const Var parts[] = {t.constant(random_tensor({3, 2}, 31)), x, x};
    return concat(parts);
  }), m34);
  check("slice", weighted([](Tape&, const Var& x) { return slice(x, 1, 2); }), b3x4);
  check("stack_steps", weighted([](Tape& t, const Var& x) {
    const Var steps[] = {x, t.constant(random_tensor({3, 4}, 32)), x * x};
    return stack_steps(steps);
  }), m34);
  check("embedding_lookup", weighted([](Tape&, const Var& x) {
    const std::vector<int> ids = {2, 0, 2, 1, 2, 0};
    return embedding_lookup(x, ids, {2, 3});
  }), m34);
  check("reshape", weighted([](Tape&, const Var& x) { return reshape(x, {4, 3}); }), m34);
  check("split_heads", weighted([](Tape&, const Var& x) { return split_heads(x, 2); }), b3x4);
  check("merge_heads", weighted([](Tape&, const Var& x) { return merge_heads(x, 2); }), b3x4);
  check("softmax", weighted([](Tape&, const Var& x) { return softmax(x); }), b3x4);
  check("causal_mask + softmax", weighted([](Tape&, const Var& x) {
    return softmax(causal_mask(x));
  }), random_tensor({2, 3, 3}, 33));
  check("causal_mask", [](Tape& t, const Var& x) {
    // Zero weight above the diagonal so the masked constants drop out.
    Tensor w = random_tensor({2, 3, 3}, 34);
    for (Index b = 0; b < 2; ++b)
      for (Index i = 0; i < 3; ++i)
        for (Index j = i + 1; j < 3; ++j) w.matrix()(b * 3 + i, j) = 0.0;
    return sum(causal_mask(x) * t.constant(w));
  }, random_tensor({2, 3, 3}, 44));
  check("layer_norm input", weighted([](Tape& t, const Var& x) {
    return layer_norm(x, t.constant(random_tensor({4}, 35)), t.constant(random_tensor({4}, 36)));
  }), b3x4);
  check("layer_norm gain", weighted([](Tape& t, const Var& x) {
    return layer_norm(t.constant(random_tensor({2, 3, 4}, 37)), x, t.constant(random_tensor({4}, 36)));
  }), random_tensor({4}, 38));
  check("layer_norm bias", weighted([](Tape& t, const Var& x) {
    return layer_norm(t.constant(random_tensor({2, 3, 4}, 37)), t.constant(random_tensor({4}, 35)), x);
  }), random_tensor({4}, 39));
  check("tanh", weighted([](Tape&, const Var& x) { return tanh(x); }), m34);
  check("sigmoid", weighted([](Tape&, const Var& x) { return sigmoid(x); }), m34);
  check("gelu", weighted([](Tape&, const Var& x) { return gelu(x); }), m34);
  check("sum", [](Tape&, const Var& x) { return sum(x * x); }, m34);
  check("cross_entropy", [](Tape&, const Var& x) {
    const std::vector<int> targets = {1, 0, 3, 2, 0, 1};
    return cross_entropy(x, targets, 0);
  }, b3x4);
  check("dropout", weighted([](Tape&, const Var& x) {
    Random rng(5);
    return dropout(x, 0.3, rng);
  }), m34);
}

TEST_CASE("forward passes are bit-deterministic")
{
  auto run = [] {
    Tape tape;
    Var x = tape.constant(random_tensor({2, 3, 4}, 40));
    Var g = tape.constant(random_tensor({4}, 41));
    Var b = tape.constant(random_tensor({4}, 42));
    return softmax(layer_norm(gelu(matmul(x, tape.constant(random_tensor({4, 4}, 43)))), g, b)).value();
  };
  CHECK(run() == run());
}

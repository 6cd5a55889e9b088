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

#include "implang/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace implang {

double finite_difference_check(const ScalarFunction& f, const Tensor& x, double h)
{
  if (!(h > 0.0)) throw ConfigError("step must be positive");

  Matrix analytic;
  {
    Tape tape;
    Var xv = tape.variable(x);
    Var y = f(tape, xv);
    tape.backward(y);
    analytic = xv.grad().size() ? xv.grad() : Matrix::Zero(x.rows(), x.cols());
  }

  auto eval = [&](const Tensor& at) {
    Tape tape;
    return f(tape, tape.constant(at)).value().item();
  };

  double worst = 0.0;
  Tensor probe = x;
  for (Index i = 0; i < x.size(); ++i)
  {
    const double orig = probe[i];
    probe[i] = orig + h;
    const double up = eval(probe);
    probe[i] = orig - h;
    const double down = eval(probe);
    probe[i] = orig;

    const double numeric = (up - down) / (2.0 * h);
    const double a = analytic.data()[i];
    const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
    worst = std::max(worst, std::abs(a - numeric) / denom);
  }
  return worst;
}

} // namespace implang

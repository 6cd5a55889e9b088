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

#include <functional>

#include "implang/autograd.hpp"

namespace implang {

// A scalar-valued function of one tensor, built on the given tape.
using ScalarFunction = std::function<Var(Tape&, const Var&)>;

// Worst relative error between the tape gradient of `f` at `x` and central
// differences (f(x + h e_i) - f(x - h e_i)) / 2h, using the denominator
// max(|analytic|, |numeric|, 1e-8). Throws ConfigError unless h > 0.
double finite_difference_check(const ScalarFunction& f, const Tensor& x, double h = 1e-5);

} // namespace implang

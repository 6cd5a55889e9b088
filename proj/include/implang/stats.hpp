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
#include <span>
#include <string>
#include <vector>

#include "implang/training.hpp"

namespace implang {

struct TTestResult
{
  double t = 0.0;
  double df = 0.0;          // Welch-Satterthwaite, fractional
  double p_two_sided = 1.0;
  double cohen_d = 0.0;
  std::size_t n1 = 0, n2 = 0;
  double mean1 = 0.0, mean2 = 0.0;
  double var1 = 0.0, var2 = 0.0; // unbiased sample variances
};

double mean(std::span<const double> x);
double sample_variance(std::span<const double> x);

// Two-sample Welch test of a against b. Throws InputError for fewer than two
// samples per group. Both variances zero: equal means give t = 0, p = 1;
// unequal means throw.
TTestResult welch_t_test(std::span<const double> a, std::span<const double> b);

// (mean_a - mean_b) / pooled SD. Throws InputError("zero pooled variance")
// when the pooled SD is zero but the means differ.
double cohen_d(std::span<const double> a, std::span<const double> b);

// Regularized incomplete beta I_x(a, b) by Lentz's continued fraction.
double regularized_incomplete_beta(double x, double a, double b);

// Two-sided tail P(|T| >= |t|) of Student's t with df degrees of freedom.
double student_t_sf(double t, double df);

enum class Metric { Loss, Perplexity };

// Values of the records at 0-based indices >= floor(start_fraction * n).
std::vector<double> stabilized_window(const MetricSeries& series, double start_fraction,
  Metric metric = Metric::Loss);

// Concatenated windows of several runs, in the given order.
std::vector<double> stabilized_window(std::span<const MetricSeries> runs, double start_fraction,
  Metric metric = Metric::Loss);

} // namespace implang

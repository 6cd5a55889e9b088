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

#include "implang/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace implang {

double mean(std::span<const double> x)
{
  double s = 0.0;
  for (double v : x) s += v;
  return s / static_cast<double>(x.size());
}

double sample_variance(std::span<const double> x)
{
  const double m = mean(x);
  double s = 0.0;
  for (double v : x) s += (v - m) * (v - m);
  return s / static_cast<double>(x.size() - 1);
}

TTestResult welch_t_test(std::span<const double> a, std::span<const double> b)
{
  if (a.size() < 2 || b.size() < 2)
    throw InputError("welch_t_test needs at least 2 samples per group, got " +
      std::to_string(a.size()) + " and " + std::to_string(b.size()));

  TTestResult r;
  r.n1 = a.size();
  r.n2 = b.size();
  r.mean1 = mean(a);
  r.mean2 = mean(b);
  r.var1 = sample_variance(a);
  r.var2 = sample_variance(b);

  const double n1 = static_cast<double>(r.n1), n2 = static_cast<double>(r.n2);
  const double se1 = r.var1 / n1, se2 = r.var2 / n2;

  if (se1 + se2 == 0.0)
  {
    if (r.mean1 != r.mean2) throw InputError("welch_t_test: both groups have zero variance");
    r.t = 0.0;
    r.df = n1 + n2 - 2.0;
    r.p_two_sided = 1.0;
    r.cohen_d = 0.0;
    return r;
  }

  r.t = (r.mean1 - r.mean2) / std::sqrt(se1 + se2);
  r.df = (se1 + se2) * (se1 + se2) / (se1 * se1 / (n1 - 1.0) + se2 * se2 / (n2 - 1.0));
  r.p_two_sided = student_t_sf(r.t, r.df);
  r.cohen_d = cohen_d(a, b);
  return r;
}

double cohen_d(std::span<const double> a, std::span<const double> b)
{
  if (a.size() < 2 || b.size() < 2)
    throw InputError("cohen_d needs at least 2 samples per group");

  const double n1 = static_cast<double>(a.size()), n2 = static_cast<double>(b.size());
  const double pooled = std::sqrt(((n1 - 1.0) * sample_variance(a) + (n2 - 1.0) * sample_variance(b)) /
    (n1 + n2 - 2.0));
  const double diff = mean(a) - mean(b);
  if (pooled == 0.0)
  {
    if (diff != 0.0) throw InputError("zero pooled variance");
    return 0.0;
  }
  return diff / pooled;
}

namespace {

// Continued fraction for I_x(a, b), modified Lentz.
double beta_continued_fraction(double x, double a, double b)
{
  constexpr int kMaxIter = 200000;
  constexpr double kEps = 1e-16;
  constexpr double kTiny = 1e-300;

  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;

  for (int m = 1; m <= kMaxIter; ++m)
  {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;

    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < kEps) return h;
  }
  throw RuntimeError("incomplete beta continued fraction did not converge");
}

} // namespace

double regularized_incomplete_beta(double x, double a, double b)
{
  if (!(a > 0.0) || !(b > 0.0)) throw ConfigError("incomplete beta needs a, b > 0");
  if (x < 0.0 || x > 1.0) throw ConfigError("incomplete beta needs x in [0, 1]");
  if (x == 0.0 || x == 1.0) return x;

  const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
    a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(log_front);

  if (x < (a + 1.0) / (a + b + 2.0))
    return front * beta_continued_fraction(x, a, b) / a;
  return 1.0 - front * beta_continued_fraction(1.0 - x, b, a) / b;
}

double student_t_sf(double t, double df)
{
  if (!(df > 0.0)) throw ConfigError("student_t_sf: degrees of freedom must be positive");
  if (std::isinf(t)) return 0.0;
  if (t == 0.0) return 1.0;
  const double x = df / (df + t * t);
  return std::min(1.0, std::max(0.0, regularized_incomplete_beta(x, 0.5 * df, 0.5)));
}

std::vector<double> stabilized_window(const MetricSeries& series, double start_fraction,
  Metric metric)
{
  if (!(start_fraction >= 0.0 && start_fraction < 1.0))
    throw ConfigError("stabilized window start fraction must be in [0, 1)");
  if (series.records.empty()) throw InputError("stabilized window of an empty series");

  const std::size_t n = series.records.size();
  const auto start = static_cast<std::size_t>(std::floor(start_fraction * static_cast<double>(n)));

  std::vector<double> out;
  for (std::size_t i = start; i < n; ++i)
    out.push_back(metric == Metric::Loss ? series.records[i].loss : series.records[i].perplexity);
  if (out.empty()) throw InputError("stabilized window is empty");
  return out;
}

std::vector<double> stabilized_window(std::span<const MetricSeries> runs, double start_fraction,
  Metric metric)
{
  std::vector<double> out;
  for (const auto& s : runs)
  {
    auto w = stabilized_window(s, start_fraction, metric);
    out.insert(out.end(), w.begin(), w.end());
  }
  if (out.empty()) throw InputError("stabilized window is empty");
  return out;
}

} // namespace implang

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

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <random>

namespace implang {

// Seeded random stream. The engine is std::mt19937_64, whose output sequence
// is fixed by the standard; the distributions below are written out by hand
// because the std:: distributions differ between library implementations.
class Random
{
public:
  explicit Random(std::uint64_t seed) : _engine(seed) {}

  std::uint64_t next() { return _engine(); }

  // Uniform double in [0, 1) with 53 random bits.
  double uniform()
  {
    return static_cast<double>(_engine() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n), unbiased by rejection.
  std::size_t index(std::size_t n)
  {
    const std::uint64_t range = n;
    const std::uint64_t limit =
      std::numeric_limits<std::uint64_t>::max() -
      std::numeric_limits<std::uint64_t>::max() % range;
    std::uint64_t x;
    do { x = _engine(); } while (x >= limit);
    return static_cast<std::size_t>(x % range);
  }

  // Box-Muller, no caching of the second variate.
  double normal(double mean = 0.0, double stddev = 1.0)
  {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    return mean + stddev * r * std::cos(2.0 * M_PI * u2);
  }

  template <typename Container>
  void shuffle(Container& c)
  {
    for (std::size_t i = c.size(); i > 1; --i)
    {
      std::size_t j = index(i);
      std::swap(c[i - 1], c[j]);
    }
  }

  // Derive an independent stream seed from this seed and a label.
  static std::uint64_t mix(std::uint64_t seed, std::uint64_t salt)
  {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

private:
  std::mt19937_64 _engine;
};

} // namespace implang

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

#include "implang/transforms.hpp"

#include <algorithm>
#include <cctype>
#include <istream>
#include <ostream>
#include <vector>

namespace implang {

std::string to_string(TransformKind kind)
{
  switch (kind)
  {
    case TransformKind::Identity: return "identity";
    case TransformKind::Reverse: return "reverse";
    case TransformKind::ParityNegation: return "parity-negation";
  }
  return "unknown";
}

std::optional<TransformKind> parse_transform_kind(std::string_view name)
{
  if (name == "identity") return TransformKind::Identity;
  if (name == "reverse") return TransformKind::Reverse;
  if (name == "parity-negation") return TransformKind::ParityNegation;
  return std::nullopt;
}

Sentence apply_transform(TransformKind kind, const Sentence& s)
{
  if (s.empty()) throw TransformError("empty input");
  if (std::find(s.words.begin(), s.words.end(), kNegationToken) != s.words.end())
    throw TransformError("reserved token present");

  Sentence out;
  switch (kind)
  {
    case TransformKind::Identity:
      out.words = s.words;
      break;

    case TransformKind::Reverse:
      out.words.assign(s.words.rbegin(), s.words.rend());
      break;

    case TransformKind::ParityNegation:
      out.words.reserve(s.size() + 1);
      if (s.size() % 2 == 0) out.words.emplace_back(kNegationToken);
      out.words.insert(out.words.end(), s.words.begin(), s.words.end());
      if (s.size() % 2 == 1) out.words.emplace_back(kNegationToken);
      break;
  }
  return out;
}

Sentence invert_parity_negation(const Sentence& s)
{
  const auto n = std::count(s.words.begin(), s.words.end(), kNegationToken);
  if (n != 1 || (s.words.front() != kNegationToken && s.words.back() != kNegationToken))
    throw TransformError("not a parity-negation sentence");

  Sentence out;
  if (s.words.front() == kNegationToken)
    out.words.assign(s.words.begin() + 1, s.words.end());
  else
    out.words.assign(s.words.begin(), s.words.end() - 1);
  return out;
}

std::string render(const Sentence& s)
{
  Sentence shown = s;
  for (auto& w : shown.words)
  {
    if (w == kNegationToken || w.empty()) continue;
    w[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(w[0])));
    break;
  }
  return shown.text();
}

Sentence normalize_external(std::string_view line)
{
  Sentence raw = Sentence::parse(line);
  Sentence out;
  for (auto& w : raw.words)
  {
    std::string clean;
    for (unsigned char c : w)
      if (!std::ispunct(c) || c == '\'' || c == '-') clean += static_cast<char>(std::tolower(c));
    // Trim apostrophes and hyphens left dangling at the edges.
    while (!clean.empty() && (clean.back() == '\'' || clean.back() == '-')) clean.pop_back();
    while (!clean.empty() && (clean.front() == '\'' || clean.front() == '-')) clean.erase(0, 1);
    if (!clean.empty()) out.words.push_back(std::move(clean));
  }
  return out;
}

std::size_t transform_corpus(TransformKind kind, std::istream& in,
  std::ostream& out, std::size_t chunk_size, bool normalize)
{
  if (chunk_size == 0) throw ConfigError("chunk size must be at least 1");

  std::vector<std::string> chunk;
  chunk.reserve(chunk_size);
  std::size_t lineno = 0;
  std::size_t written = 0;

  auto flush = [&] {
    std::string buffer;
    for (std::size_t i = 0; i < chunk.size(); ++i)
    {
      const std::size_t at = lineno - chunk.size() + i + 1;
      try
      {
        Sentence s = normalize ? normalize_external(chunk[i]) : Sentence::parse(chunk[i]);
        buffer += apply_transform(kind, s).text();
        buffer += '\n';
      }
      catch (const TransformError& e)
      {
        throw TransformError("line " + std::to_string(at) + ": " + e.what());
      }
    }
    out << buffer;
    written += chunk.size();
    chunk.clear();
  };

  std::string line;
  while (std::getline(in, line))
  {
    ++lineno;
    chunk.push_back(std::move(line));
    if (chunk.size() == chunk_size) flush();
  }
  flush();
  return written;
}

} // namespace implang

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
#include <iosfwd>
#include <string>
#include <unordered_map>
#include <vector>

#include "implang/grammar.hpp"

namespace implang {

using TokenId = int;

inline constexpr TokenId kPad = 0;
inline constexpr TokenId kBos = 1;
inline constexpr TokenId kEos = 2;
inline constexpr TokenId kUnk = 3;
inline constexpr TokenId kFirstWordId = 4;

struct EncodedSequence
{
  std::vector<TokenId> ids;  // BOS ... EOS
  std::size_t unknown = 0;   // words mapped to UNK

  std::size_t length() const { return ids.size(); }
};

// Closed word-level vocabulary. Ids: specials 0..3, then words in order of
// first appearance in the corpus it was built from.
class Vocabulary
{
public:
  Vocabulary();

  static Vocabulary build(const std::vector<Sentence>& corpus);

  std::size_t size() const { return _words.size(); }
  bool contains(const std::string& word) const { return _ids.count(word) > 0; }

  // kUnk for unknown words.
  TokenId id(const std::string& word) const;
  const std::string& word(TokenId id) const;

  const std::vector<std::string>& words() const { return _words; }

  EncodedSequence encode(const Sentence& s) const;
  Sentence decode(const EncodedSequence& e) const;

  // Four special header lines, then one word per line (line k = id k + 4).
  void save(std::ostream& out) const;
  static Vocabulary load(std::istream& in);

  bool operator==(const Vocabulary& other) const { return _words == other._words; }

private:
  void add(const std::string& word);

  std::unordered_map<std::string, TokenId> _ids;
  std::vector<std::string> _words;
};

std::vector<EncodedSequence> encode_corpus(const Vocabulary& vocab,
  const std::vector<Sentence>& corpus);

} // namespace implang

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

#include "implang/tokenizer.hpp"

#include <istream>
#include <ostream>

#include "implang/error.hpp"

namespace implang {

namespace {

const char* const kSpecialNames[] = {"<pad>", "<bos>", "<eos>", "<unk>"};

} // namespace

Vocabulary::Vocabulary()
{
  for (const char* name : kSpecialNames) _words.emplace_back(name);
}

void Vocabulary::add(const std::string& word)
{
  if (_ids.count(word)) return;
  _ids.emplace(word, static_cast<TokenId>(_words.size()));
  _words.push_back(word);
}

Vocabulary Vocabulary::build(const std::vector<Sentence>& corpus)
{
  if (corpus.empty()) throw InputError("cannot build a vocabulary from an empty corpus");
  Vocabulary v;
  for (const auto& s : corpus)
    for (const auto& w : s.words) v.add(w);
  return v;
}

TokenId Vocabulary::id(const std::string& word) const
{
  auto it = _ids.find(word);
  return it == _ids.end() ? kUnk : it->second;
}

const std::string& Vocabulary::word(TokenId id) const
{
  if (id < 0 || static_cast<std::size_t>(id) >= _words.size())
    throw InputError("token id " + std::to_string(id) + " out of range for vocabulary of size " +
      std::to_string(_words.size()));
  return _words[id];
}

EncodedSequence Vocabulary::encode(const Sentence& s) const
{
  EncodedSequence e;
  e.ids.reserve(s.size() + 2);
  e.ids.push_back(kBos);
  for (const auto& w : s.words)
  {
    TokenId t = id(w);
    if (t == kUnk) ++e.unknown;
    e.ids.push_back(t);
  }
  e.ids.push_back(kEos);
  return e;
}

Sentence Vocabulary::decode(const EncodedSequence& e) const
{
  Sentence s;
  for (TokenId t : e.ids)
  {
    const auto& w = word(t);
    if (t >= kFirstWordId) s.words.push_back(w);
  }
  return s;
}

void Vocabulary::save(std::ostream& out) const
{
  for (const auto& w : _words) out << w << '\n';
}

Vocabulary Vocabulary::load(std::istream& in)
{
  Vocabulary v;
  std::string line;
  for (int i = 0; i < kFirstWordId; ++i)
  {
    if (!std::getline(in, line) || line != kSpecialNames[i])
      throw InputError("vocabulary file: expected special token header '" +
        std::string(kSpecialNames[i]) + "' on line " + std::to_string(i + 1));
  }
  while (std::getline(in, line))
  {
    if (line.empty()) continue;
    if (v._ids.count(line)) throw InputError("vocabulary file: duplicate word '" + line + "'");
    v.add(line);
  }
  return v;
}

std::vector<EncodedSequence> encode_corpus(const Vocabulary& vocab,
  const std::vector<Sentence>& corpus)
{
  std::vector<EncodedSequence> out;
  out.reserve(corpus.size());
  for (const auto& s : corpus) out.push_back(vocab.encode(s));
  return out;
}

} // namespace implang

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
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "implang/random.hpp"

namespace implang {

// Grammatical number carried by a rule alternative; Any means untagged.
enum class Number { Any, Singular, Plural };

struct RewriteRule
{
  std::string lhs;
  std::vector<std::string> rhs; // empty only for the null singular morpheme
  Number number = Number::Any;
};

struct Sentence
{
  std::vector<std::string> words;
  std::vector<std::size_t> derivation; // rule indices, pre-order

  Sentence() = default;
  explicit Sentence(std::vector<std::string> w) : words(std::move(w)) {}

  std::size_t size() const { return words.size(); }
  bool empty() const { return words.empty(); }

  // Single-space separated surface form.
  std::string text() const;

  // Whitespace tokenization of one corpus line.
  static Sentence parse(std::string_view line);

  bool operator==(const Sentence& other) const { return words == other.words; }
};

// Context-free grammar (V, Sigma, R, S) plus a subject-auxiliary number
// agreement constraint: the first expansion of `agreement_controller` fixes
// the sentence number, and every later Number-tagged rule whose lhs is not
// the controller must carry that number.
struct Grammar
{
  std::set<std::string> nonterminals;
  std::set<std::string> terminals;
  std::vector<RewriteRule> rules;
  std::string start;
  std::string agreement_controller;

  // Throws ConfigError when an invariant is broken.
  void validate() const;

  bool is_nonterminal(const std::string& s) const { return nonterminals.count(s) > 0; }

  // Rule indices with the given lhs, in rule order.
  const std::vector<std::size_t>& alternatives(const std::string& lhs) const;

  // Rebuild the lhs index; call after editing `rules`.
  void reindex();

private:
  std::map<std::string, std::vector<std::size_t>> _index;
};

// Lexical categories of the default grammar.
namespace category {
inline constexpr const char* sentence = "Sentence";
inline constexpr const char* noun_singular = "N_sing";
inline constexpr const char* noun_plural = "N_pl";
inline constexpr const char* verb_progressive = "V_ing";
inline constexpr const char* verb_perfect = "V_en";
inline constexpr const char* modal = "M";
} // namespace category

struct VerbForms
{
  std::string base;
  std::string progressive; // present participle
  std::string perfect;     // past participle
};

struct Lexicon
{
  std::vector<std::string> nouns; // singular
  std::vector<VerbForms> verbs;
  std::vector<std::string> modals;

  // The bundled word lists.
  static const Lexicon& builtin();

  // Parses the `noun|verb|modal` line format of data/lexicon.txt.
  static Lexicon parse(std::string_view text);
};

// English plural with a table of irregular nouns.
std::string pluralize(const std::string& singular);

struct GenerationConfig
{
  std::size_t count = 10000;
  std::uint64_t seed = 1;
  // Leading entries of each word list that may be used; 0 means the whole list.
  std::size_t nouns = 0;
  std::size_t verbs = 0;
  std::size_t modals = 0;
};

Grammar make_grammar(const Lexicon& lexicon);

// The English SVO rule set over the builtin lexicon.
Grammar default_grammar();

// Keep only the first `nouns`/`verbs`/`modals` lexical alternatives.
Grammar restrict_lexicon(const Grammar& grammar, std::size_t nouns,
  std::size_t verbs, std::size_t modals);

Sentence generate_sentence(const Grammar& grammar, Random& rng);

std::vector<Sentence> generate_corpus(const Grammar& grammar,
  const GenerationConfig& config);

// Membership by exhaustive top-down parse, agreement included.
bool derives(const Grammar& grammar, const Sentence& sentence);

// Corpus file I/O: one sentence per line, single spaces, '\n' terminated.
void write_corpus(std::ostream& out, const std::vector<Sentence>& corpus);
std::vector<Sentence> read_corpus(std::istream& in);

} // namespace implang

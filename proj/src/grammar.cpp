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

#include "implang/grammar.hpp"

#include <algorithm>
#include <cctype>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <unordered_map>

#include "implang/error.hpp"

namespace implang {

namespace {

#include "lexicon_data.inc"

const char* const kNullMorpheme = "Null";

} // namespace

///////////////////////////////////////////
// Sentence
///////////////////////////////////////////

std::string Sentence::text() const
{
  std::string out;
  for (std::size_t i = 0; i < words.size(); ++i)
  {
    if (i) out += ' ';
    out += words[i];
  }
  return out;
}

Sentence Sentence::parse(std::string_view line)
{
  Sentence s;
  std::size_t i = 0;
  while (i < line.size())
  {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    std::size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
    if (j > i) s.words.emplace_back(line.substr(i, j - i));
    i = j;
  }
  return s;
}

///////////////////////////////////////////
// Grammar
///////////////////////////////////////////

void Grammar::reindex()
{
  _index.clear();
  for (std::size_t i = 0; i < rules.size(); ++i)
    _index[rules[i].lhs].push_back(i);
}

const std::vector<std::size_t>& Grammar::alternatives(const std::string& lhs) const
{
  static const std::vector<std::size_t> none;
  auto it = _index.find(lhs);
  return it == _index.end() ? none : it->second;
}

void Grammar::validate() const
{
  for (const auto& t : terminals)
    if (nonterminals.count(t))
      throw ConfigError("grammar symbol '" + t + "' is both terminal and nonterminal");

  if (!nonterminals.count(start))
    throw ConfigError("start symbol '" + start + "' is not a nonterminal");

  for (const auto& r : rules)
  {
    if (!nonterminals.count(r.lhs))
      throw ConfigError("rule lhs '" + r.lhs + "' is not a nonterminal");
    if (r.rhs.empty() && r.lhs != kNullMorpheme)
      throw ConfigError("empty expansion for '" + r.lhs + "'");
    for (const auto& s : r.rhs)
      if (!nonterminals.count(s) && !terminals.count(s))
        throw ConfigError("rule symbol '" + s + "' is undeclared");
  }

  for (const auto& n : nonterminals)
    if (alternatives(n).empty())
      throw ConfigError("nonterminal '" + n + "' has no rules");
}

///////////////////////////////////////////
// Lexicon
///////////////////////////////////////////

Lexicon Lexicon::parse(std::string_view text)
{
  Lexicon lex;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line))
  {
    ++lineno;
    auto s = Sentence::parse(line);
    if (s.empty() || s.words[0][0] == '#') continue;

    const auto& kind = s.words[0];
    if (kind == "noun" && s.size() == 2)
      lex.nouns.push_back(s.words[1]);
    else if (kind == "verb" && s.size() == 4)
      lex.verbs.push_back({s.words[1], s.words[2], s.words[3]});
    else if (kind == "modal" && s.size() == 2)
      lex.modals.push_back(s.words[1]);
    else
      throw InputError("lexicon line " + std::to_string(lineno) + ": cannot parse '" + line + "'");
  }
  return lex;
}

const Lexicon& Lexicon::builtin()
{
  static const Lexicon lex = parse(kLexiconText);
  return lex;
}

std::string pluralize(const std::string& singular)
{
  static const std::unordered_map<std::string, std::string> irregular = {
    {"child", "children"}, {"man", "men"}, {"woman", "women"},
    {"person", "people"}, {"mouse", "mice"}, {"foot", "feet"},
    {"tooth", "teeth"}, {"goose", "geese"}, {"knife", "knives"},
    {"wife", "wives"}, {"life", "lives"}, {"wolf", "wolves"},
    {"leaf", "leaves"}, {"half", "halves"}, {"ox", "oxen"},
  };

  if (auto it = irregular.find(singular); it != irregular.end())
    return it->second;

  auto ends_with = [&](std::string_view suffix) {
    return singular.size() >= suffix.size() &&
      singular.compare(singular.size() - suffix.size(), suffix.size(), suffix) == 0;
  };

  if (ends_with("s") || ends_with("x") || ends_with("z") ||
      ends_with("ch") || ends_with("sh"))
    return singular + "es";

  if (singular.size() >= 2 && singular.back() == 'y' &&
      std::string_view("aeiou").find(singular[singular.size() - 2]) == std::string_view::npos)
    return singular.substr(0, singular.size() - 1) + "ies";

  return singular + "s";
}

///////////////////////////////////////////
// Rule set
///////////////////////////////////////////

Grammar make_grammar(const Lexicon& lexicon)
{
  Grammar g;
  g.start = category::sentence;
  g.agreement_controller = "NP";

  auto rule = [&](std::string lhs, std::vector<std::string> rhs, Number n = Number::Any) {
    g.rules.push_back({std::move(lhs), std::move(rhs), n});
  };

  rule("Sentence", {"NP", "VP"});
  rule("VP", {"Verb", "NP"});
  rule("VP", {"Verb", "NP_bare"});
  rule("NP", {"NP_sing"}, Number::Singular);
  rule("NP", {"NP_pl"}, Number::Plural);
  rule("NP_sing", {"T", "N_sing", kNullMorpheme});
  rule("NP_pl", {"T", "N_pl"});
  rule("NP_bare", {"N_pl"});
  rule(kNullMorpheme, {});
  rule("T", {"the"});
  rule("Verb", {"Aux_prog", "V_ing"});
  rule("Verb", {"Aux_prog", "V_en"});
  rule("Verb", {"Aux_perf", "V_en"});
  rule("Aux_prog", {"C_prog"});
  rule("Aux_prog", {"M", "be"});
  rule("Aux_perf", {"C_perf"});
  rule("Aux_perf", {"M", "have"});
  rule("C_prog", {"is"}, Number::Singular);
  rule("C_prog", {"was"}, Number::Singular);
  rule("C_prog", {"are"}, Number::Plural);
  rule("C_prog", {"were"}, Number::Plural);
  rule("C_perf", {"has"}, Number::Singular);
  rule("C_perf", {"have"}, Number::Plural);

  for (const auto& m : lexicon.modals) rule("M", {m});
  for (const auto& n : lexicon.nouns) rule("N_sing", {n});
  for (const auto& n : lexicon.nouns) rule("N_pl", {pluralize(n)});
  for (const auto& v : lexicon.verbs) rule("V_ing", {v.progressive});
  for (const auto& v : lexicon.verbs) rule("V_en", {v.perfect});

  for (const auto& r : g.rules) g.nonterminals.insert(r.lhs);
  for (const auto& r : g.rules)
    for (const auto& s : r.rhs)
      if (!g.nonterminals.count(s)) g.terminals.insert(s);

  g.reindex();
  g.validate();
  return g;
}

Grammar default_grammar()
{
  static const Grammar g = make_grammar(Lexicon::builtin());
  return g;
}

Grammar restrict_lexicon(const Grammar& grammar, std::size_t nouns,
  std::size_t verbs, std::size_t modals)
{
  const std::map<std::string, std::size_t> limits = {
    {category::noun_singular, nouns}, {category::noun_plural, nouns},
    {category::verb_progressive, verbs}, {category::verb_perfect, verbs},
    {category::modal, modals},
  };

  for (const auto& [lhs, limit] : limits)
    if (limit > grammar.alternatives(lhs).size())
      throw ConfigError("lexicon size " + std::to_string(limit) + " for " + lhs +
        " exceeds the " + std::to_string(grammar.alternatives(lhs).size()) + " available words");

  Grammar g;
  g.start = grammar.start;
  g.agreement_controller = grammar.agreement_controller;
  g.nonterminals = grammar.nonterminals;

  std::map<std::string, std::size_t> seen;
  for (const auto& r : grammar.rules)
  {
    auto it = limits.find(r.lhs);
    if (it != limits.end() && it->second != 0 && seen[r.lhs]++ >= it->second) continue;
    g.rules.push_back(r);
  }
  for (const auto& r : g.rules)
    for (const auto& s : r.rhs)
      if (!g.nonterminals.count(s)) g.terminals.insert(s);

  g.reindex();
  g.validate();
  return g;
}

///////////////////////////////////////////
// Generation
///////////////////////////////////////////

namespace {

struct Agreement
{
  Number number = Number::Any;
  bool fixed = false;

  bool admits(const Grammar& g, const RewriteRule& r) const
  {
    if (r.number == Number::Any || r.lhs == g.agreement_controller || !fixed)
      return true;
    return r.number == number;
  }

  void apply(const Grammar& g, const RewriteRule& r)
  {
    if (!fixed && r.lhs == g.agreement_controller)
    {
      number = r.number;
      fixed = true;
    }
  }
};

void expand(const Grammar& g, const std::string& symbol, Random& rng,
  Agreement& agreement, Sentence& out)
{
  if (!g.is_nonterminal(symbol))
  {
    out.words.push_back(symbol);
    return;
  }

  const auto& alts = g.alternatives(symbol);
  std::vector<std::size_t> admissible;
  admissible.reserve(alts.size());
  for (auto i : alts)
    if (agreement.admits(g, g.rules[i])) admissible.push_back(i);

  const std::size_t chosen = admissible[rng.index(admissible.size())];
  const auto& r = g.rules[chosen];
  agreement.apply(g, r);
  out.derivation.push_back(chosen);
  for (const auto& s : r.rhs) expand(g, s, rng, agreement, out);
}

} // namespace

Sentence generate_sentence(const Grammar& grammar, Random& rng)
{
  Sentence s;
  Agreement agreement;
  expand(grammar, grammar.start, rng, agreement, s);
  return s;
}

std::vector<Sentence> generate_corpus(const Grammar& grammar,
  const GenerationConfig& config)
{
  Grammar g = (config.nouns || config.verbs || config.modals)
    ? restrict_lexicon(grammar, config.nouns, config.verbs, config.modals)
    : grammar;

  Random rng(config.seed);
  std::vector<Sentence> corpus;
  corpus.reserve(config.count);
  for (std::size_t i = 0; i < config.count; ++i)
    corpus.push_back(generate_sentence(g, rng));
  return corpus;
}

///////////////////////////////////////////
// Membership
///////////////////////////////////////////

namespace {

class Recognizer
{
public:
  Recognizer(const Grammar& g, const std::vector<std::string>& words)
  : _g(g), _words(words)
  {
    // Shortest yield of every nonterminal, by fixpoint over the rules.
    const std::size_t inf = std::numeric_limits<std::size_t>::max() / 2;
    for (const auto& n : g.nonterminals) _min_yield[n] = inf;
    for (bool changed = true; changed;)
    {
      changed = false;
      for (const auto& r : g.rules)
      {
        std::size_t len = 0;
        for (const auto& s : r.rhs) len += min_yield(s);
        if (len < _min_yield[r.lhs])
        {
          _min_yield[r.lhs] = len;
          changed = true;
        }
      }
    }
  }

  bool run()
  {
    _stack.push_back(&_g.start);
    return step(0, Agreement{});
  }

private:
  // _stack holds pending symbols, top = leftmost.
  bool step(std::size_t pos, Agreement agreement)
  {
    if (_stack.empty()) return pos == _words.size();
    if (pending_min_yield() > _words.size() - pos) return false;

    const std::string* sym = _stack.back();
    _stack.pop_back();
    bool ok = false;

    if (!_g.is_nonterminal(*sym))
    {
      ok = pos < _words.size() && _words[pos] == *sym && step(pos + 1, agreement);
    }
    else
    {
      for (auto i : _g.alternatives(*sym))
      {
        const auto& r = _g.rules[i];
        if (!agreement.admits(_g, r)) continue;
        // Cheap lookahead for lexical rules.
        if (r.rhs.size() == 1 && !_g.is_nonterminal(r.rhs[0]) &&
            (pos >= _words.size() || _words[pos] != r.rhs[0]))
          continue;

        Agreement next = agreement;
        next.apply(_g, r);
        for (auto it = r.rhs.rbegin(); it != r.rhs.rend(); ++it) _stack.push_back(&*it);
        ok = step(pos, next);
        _stack.resize(_stack.size() - r.rhs.size());
        if (ok) break;
      }
    }

    _stack.push_back(sym);
    return ok;
  }

  std::size_t min_yield(const std::string& s) const
  {
    auto it = _min_yield.find(s);
    return it == _min_yield.end() ? 1 : it->second;
  }

  std::size_t pending_min_yield() const
  {
    std::size_t n = 0;
    for (auto* s : _stack) n += min_yield(*s);
    return n;
  }

  const Grammar& _g;
  const std::vector<std::string>& _words;
  std::vector<const std::string*> _stack;
  std::unordered_map<std::string, std::size_t> _min_yield;
};

} // namespace

bool derives(const Grammar& grammar, const Sentence& sentence)
{
  if (sentence.empty()) return false;
  return Recognizer(grammar, sentence.words).run();
}

///////////////////////////////////////////
// Corpus files
///////////////////////////////////////////

void write_corpus(std::ostream& out, const std::vector<Sentence>& corpus)
{
  for (const auto& s : corpus) out << s.text() << '\n';
}

std::vector<Sentence> read_corpus(std::istream& in)
{
  std::vector<Sentence> corpus;
  std::string line;
  while (std::getline(in, line)) corpus.push_back(Sentence::parse(line));
  return corpus;
}

} // namespace implang

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
#include <optional>
#include <string>
#include <string_view>

#include "implang/error.hpp"
#include "implang/grammar.hpp"

namespace implang {

// One transform per experimental group.
enum class TransformKind { Identity, Reverse, ParityNegation };

inline constexpr std::string_view kNegationToken = "NOT";

std::string to_string(TransformKind kind);             // identity|reverse|parity-negation
std::optional<TransformKind> parse_transform_kind(std::string_view name);

class TransformError : public InputError
{
public:
  using InputError::InputError;
};

// Throws TransformError("empty input") or ("reserved token present").
Sentence apply_transform(TransformKind kind, const Sentence& s);

// Removes the single boundary NOT of a parity-negation sentence.
// Throws TransformError("not a parity-negation sentence") otherwise.
Sentence invert_parity_negation(const Sentence& s);

// Display form: first word other than NOT gets an initial capital.
std::string render(const Sentence& s);

// Lowercases and strips punctuation from external text so that NOT stays
// reserved and parity counts words only. Punctuation-only tokens are dropped.
Sentence normalize_external(std::string_view line);

// Streams `in` to `out` line by line, holding at most `chunk_size` lines in
// memory. Errors are rethrown as TransformError prefixed with "line N: ".
// Returns the number of lines written.
std::size_t transform_corpus(TransformKind kind, std::istream& in,
  std::ostream& out, std::size_t chunk_size, bool normalize = false);

} // namespace implang

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
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "implang/autograd.hpp"
#include "implang/tokenizer.hpp"

namespace implang {

enum class Architecture { Transformer, Lstm };

std::string to_string(Architecture arch);
std::optional<Architecture> parse_architecture(std::string_view name);

// Decoder-only transformer, pre-layer-norm, learned positions.
struct TransformerConfig
{
  Index layers = 2;
  Index model_dim = 64;
  Index heads = 2;
  Index ff_dim = 256;
  Index max_seq = 32;
  Index vocab = 0;
  std::uint64_t seed = 0;
  bool tie_weights = true;
  double dropout = 0.0;

  // Throws ConfigError.
  void validate() const;
};

struct LstmConfig
{
  Index layers = 1;
  Index embed_dim = 64;
  Index hidden_dim = 128;
  Index vocab = 0;
  std::uint64_t seed = 0;
  double dropout = 0.0;

  void validate() const;
};

using ModelConfig = std::variant<TransformerConfig, LstmConfig>;

struct ModelParameters
{
  ModelConfig config;
  std::map<std::string, Tensor> tensors;

  Architecture architecture() const;
  Index vocab() const;
  std::size_t count() const;
  bool all_finite() const;
};

// Closed-form parameter counts.
std::size_t parameter_count(const TransformerConfig& c);
std::size_t parameter_count(const LstmConfig& c);

// Projections N(0, 0.02^2) for the transformer; LSTM weights U(-1/sqrt(H),
// 1/sqrt(H)) with forget-gate bias 1. Deterministic per config seed.
ModelParameters init_model(const ModelConfig& config);

// Right-padded next-token batch: inputs are ids[0..n-2], targets ids[1..n-1],
// both padded with kPad to the longest sequence.
struct TokenBatch
{
  Index batch = 0;
  Index positions = 0;
  std::vector<int> inputs;  // batch x positions, row-major
  std::vector<int> targets;
};

TokenBatch make_batch(std::span<const EncodedSequence> sequences);
TokenBatch make_batch(const std::vector<EncodedSequence>& corpus,
  std::span<const std::size_t> indices);

using ParameterVars = std::map<std::string, Var>;

// Registers every parameter tensor on the tape as a variable.
ParameterVars bind(Tape& tape, const ModelParameters& params);

// Logits [batch, positions, vocab]. `dropout_rng` enables dropout at the
// configured rate; pass nullptr for evaluation.
Var transformer_forward(Tape& tape, const ModelParameters& params,
  const ParameterVars& vars, const TokenBatch& batch, Random* dropout_rng = nullptr);
Var lstm_forward(Tape& tape, const ModelParameters& params,
  const ParameterVars& vars, const TokenBatch& batch, Random* dropout_rng = nullptr);
Var forward(Tape& tape, const ModelParameters& params,
  const ParameterVars& vars, const TokenBatch& batch, Random* dropout_rng = nullptr);

// Gradient-free conveniences.
Tensor transformer_forward(const ModelParameters& params, const TokenBatch& batch);
Tensor lstm_forward(const ModelParameters& params, const TokenBatch& batch);
Tensor logits(const ModelParameters& params, const TokenBatch& batch);

// Binary checkpoint:
//   "ILCK" u32 version
//   u32 len, architecture tag
//   u32 n, then n x (u32 len, key, u32 len, value)       config
//   u32 n, then n x (u32 len, name, u32 rank, u64 dims[rank], f64 data[])
// All integers and doubles little-endian.
void save_checkpoint(std::ostream& out, const ModelParameters& params);
ModelParameters load_checkpoint(std::istream& in);

} // namespace implang

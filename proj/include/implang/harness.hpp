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

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "implang/grammar.hpp"
#include "implang/models.hpp"
#include "implang/report.hpp"
#include "implang/training.hpp"
#include "implang/transforms.hpp"

namespace implang {

enum class CorpusSource { Generated, External };

// "natural", "reversed", "parity-negation"
std::string group_name(TransformKind kind);
TransformKind parse_group(const std::string& name);

struct ExperimentSpec
{
  std::string experiment = "custom";
  CorpusSource corpus = CorpusSource::Generated;
  std::string corpus_path;
  std::size_t sentences = 10000;
  std::vector<TransformKind> groups{
    TransformKind::Identity, TransformKind::Reverse, TransformKind::ParityNegation};
  Architecture arch = Architecture::Transformer;
  std::uint64_t seed = 1;
  std::vector<std::uint64_t> seeds{1, 2, 3};
  double heldout_fraction = 0.05;
  double window_fraction = 0.5;
  bool compare = true;
  std::string output = "implang-out";
  unsigned threads = 1;
  bool save_checkpoints = true;

  TrainingConfig training;
  TransformerConfig transformer;
  LstmConfig lstm;

  ExperimentSpec();

  // Vocabulary is filled in per group.
  ModelConfig model_config(Index vocab, std::uint64_t seed) const;

  // Throws ConfigError.
  void validate() const;
};

// Preset for the experiment analogs 1-4 (1, 3: generated corpus; 2, 4:
// external text; 1, 2: transformer; 3, 4: LSTM).
void apply_preset(ExperimentSpec& spec, const std::string& id);

// One `key = value` setting. Throws ConfigError for unknown keys and bad values.
void apply_setting(ExperimentSpec& spec, const std::string& key, const std::string& value);

// Lines of `key = value`; '#' starts a comment. An `experiment` key is applied
// first regardless of its position so the remaining keys override the preset.
ExperimentSpec parse_spec(std::istream& in);
ExperimentSpec load_spec(const std::filesystem::path& path);

// Canonical form; parse_spec(write_spec(s)) reproduces s.
void write_spec(std::ostream& out, const ExperimentSpec& spec);

// Seed for replicate `replicate` of an experiment with master seed `seed`.
std::uint64_t run_seed(std::uint64_t seed, std::uint64_t replicate);

// Sentences for the spec's corpus source (generated, or a normalized text file).
std::vector<Sentence> load_corpus(const ExperimentSpec& spec);

struct Split
{
  std::vector<Sentence> train;
  std::vector<Sentence> heldout;
};

// Seeded held-out split; both parts keep corpus order.
Split split_corpus(const std::vector<Sentence>& corpus, double heldout_fraction, std::uint64_t seed);

// Runs every (group, seed) pair, writes corpora, vocabularies, metrics,
// checkpoints, curves, plots and the report under spec.output. Progress lines
// go to `log` when given.
RunReport run_experiment(const ExperimentSpec& spec, std::ostream* log = nullptr);

} // namespace implang

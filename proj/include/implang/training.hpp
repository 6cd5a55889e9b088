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
#include <functional>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "implang/models.hpp"

namespace implang {

enum class SequenceGrouping { PerSentence, Pack };

struct TrainingConfig
{
  long total_steps = 1000;
  double warmup_fraction = 0.14;
  double peak_lr = 1e-3;
  long batch_size = 64;
  SequenceGrouping grouping = SequenceGrouping::PerSentence;
  long pack_length = 32;  // window length in Pack mode
  long eval_every = 1;
  std::uint64_t seed = 1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;

  long warmup_steps() const;

  // Throws ConfigError.
  void validate() const;
};

struct MetricRecord
{
  long step = 0;
  double loss = 0.0;
  double perplexity = 0.0; // exp(loss)
  double lr = 0.0;
};

struct MetricSeries
{
  std::string group;
  std::string arch;
  std::uint64_t seed = 0;
  std::vector<MetricRecord> records;

  // Appends with perplexity = exp(loss).
  void append(long step, double loss, double lr);
};

// Header: step,loss,perplexity,lr,group,arch,seed. Reals use 17 significant
// digits so a read-back series is bit-identical.
void write_metrics_csv(std::ostream& out, const MetricSeries& series);
MetricSeries read_metrics_csv(std::istream& in);

// Linear warmup from 0 to peak at ceil(warmup_fraction * total), then linear
// decay to 0 at total. Throws ConfigError for steps outside [0, total].
double lr_schedule(long step, const TrainingConfig& config);

using Gradients = std::map<std::string, Matrix>;

struct AdamState
{
  std::map<std::string, Matrix> m;
  std::map<std::string, Matrix> v;
};

// One bias-corrected Adam update; `step` counts from 1. Parameters without
// a gradient entry are left untouched.
void adam_step(std::map<std::string, Tensor>& params, const Gradients& grads,
  AdamState& state, long step, double lr, const TrainingConfig& config);

struct TrainResult
{
  MetricSeries series;
  ModelParameters params;
};

// Records are logged at steps 0, eval_every, 2 * eval_every, ...; each holds
// the loss of the batch at that step before its update and the lr applied.
TrainResult train(ModelParameters params, const std::vector<EncodedSequence>& corpus,
  const TrainingConfig& config, const std::string& group = "",
  const std::function<void(const MetricRecord&)>& on_record = {});

struct Evaluation
{
  double loss = 0.0;
  double perplexity = 0.0; // exp(loss)
  std::size_t tokens = 0;
};

// Mean next-token cross-entropy over all non-PAD targets of `heldout`.
Evaluation evaluate_perplexity(const ModelParameters& params,
  const std::vector<EncodedSequence>& heldout, long batch_size = 64);

} // namespace implang

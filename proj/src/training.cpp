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

#include "implang/training.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

namespace implang {

long TrainingConfig::warmup_steps() const
{
  // Guard against 0.14 * 1000 landing a hair above 140.
  return static_cast<long>(std::ceil(warmup_fraction * static_cast<double>(total_steps) - 1e-9));
}

void TrainingConfig::validate() const
{
  if (total_steps < 1) throw ConfigError("total_steps must be at least 1");
  if (!(warmup_fraction > 0.0 && warmup_fraction < 1.0))
    throw ConfigError("warmup_fraction must be in (0, 1)");
  if (!(peak_lr > 0.0)) throw ConfigError("peak_lr must be positive");
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (eval_every < 1) throw ConfigError("eval_every must be at least 1");
  if (pack_length < 1) throw ConfigError("pack_length must be at least 1");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0) || !(eps > 0.0))
    throw ConfigError("adam hyperparameters out of range");
}

///////////////////////////////////////////
// Metrics
///////////////////////////////////////////

void MetricSeries::append(long step, double loss, double lr)
{
  records.push_back({step, loss, std::exp(loss), lr});
}

void write_metrics_csv(std::ostream& out, const MetricSeries& series)
{
  std::ostringstream os;
  os << std::setprecision(17);
  os << "step,loss,perplexity,lr,group,arch,seed\n";
  for (const auto& r : series.records)
    os << r.step << ',' << r.loss << ',' << r.perplexity << ',' << r.lr << ','
       << series.group << ',' << series.arch << ',' << series.seed << '\n';
  out << os.str();
}

MetricSeries read_metrics_csv(std::istream& in)
{
  MetricSeries s;
  std::string line;
  if (!std::getline(in, line) || line != "step,loss,perplexity,lr,group,arch,seed")
    throw InputError("metrics csv: unexpected header");

  std::size_t lineno = 1;
  while (std::getline(in, line))
  {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(cell);
    if (cells.size() != 7)
      throw InputError("metrics csv line " + std::to_string(lineno) + ": expected 7 fields");
    try
    {
      s.records.push_back({std::stol(cells[0]), std::stod(cells[1]), std::stod(cells[2]),
        std::stod(cells[3])});
      s.group = cells[4];
      s.arch = cells[5];
      s.seed = std::stoull(cells[6]);
    }
    catch (const std::logic_error&)
    {
      throw InputError("metrics csv line " + std::to_string(lineno) + ": malformed number");
    }
  }
  return s;
}

///////////////////////////////////////////
// Schedule and optimizer
///////////////////////////////////////////

double lr_schedule(long step, const TrainingConfig& config)
{
  const long total = config.total_steps;
  if (step < 0 || step > total)
    throw ConfigError("lr_schedule: step " + std::to_string(step) + " outside [0, " +
      std::to_string(total) + "]");

  const long warmup = std::max(1L, config.warmup_steps());
  if (step <= warmup)
    return config.peak_lr * static_cast<double>(step) / static_cast<double>(warmup);
  return config.peak_lr * static_cast<double>(total - step) / static_cast<double>(total - warmup);
}

void adam_step(std::map<std::string, Tensor>& params, const Gradients& grads,
  AdamState& state, long step, double lr, const TrainingConfig& config)
{
  if (step < 1) throw ConfigError("adam_step: step counts from 1");

  const double b1 = config.beta1, b2 = config.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(step));

  for (const auto& [name, g] : grads)
  {
    auto it = params.find(name);
    if (it == params.end()) throw RuntimeError("adam_step: no parameter '" + name + "'");
    auto& w = it->second.matrix();
    if (g.rows() != w.rows() || g.cols() != w.cols())
      throw RuntimeError("adam_step: gradient of '" + name + "' has shape " +
        std::to_string(g.rows()) + "x" + std::to_string(g.cols()) + ", parameter " +
        shape_string(it->second.shape()));

    auto& m = state.m[name];
    auto& v = state.v[name];
    if (m.size() == 0)
    {
      m = Matrix::Zero(w.rows(), w.cols());
      v = Matrix::Zero(w.rows(), w.cols());
    }

    m = b1 * m + (1.0 - b1) * g;
    v = b2 * v + (1.0 - b2) * g.cwiseProduct(g);
    w.array() -= lr * ((m.array() / c1) / ((v.array() / c2).sqrt() + config.eps) +
      config.weight_decay * w.array());
  }
}

///////////////////////////////////////////
// Training loop
///////////////////////////////////////////

namespace {

// Produces batches epoch by epoch, reshuffling with a seeded stream.
class BatchStream
{
public:
  BatchStream(const std::vector<EncodedSequence>& corpus, const TrainingConfig& config)
  : _corpus(corpus), _config(config), _rng(Random::mix(config.seed, 1))
  {
    _order.resize(corpus.size());
    std::iota(_order.begin(), _order.end(), std::size_t{0});
  }

  TokenBatch next()
  {
    if (_batches.empty() || _cursor == _batches.size()) refill();
    return _batches[_cursor++];
  }

private:
  void refill()
  {
    _rng.shuffle(_order);
    _batches.clear();
    _cursor = 0;

    const std::size_t bs = static_cast<std::size_t>(_config.batch_size);
    if (_config.grouping == SequenceGrouping::PerSentence)
    {
      // A trailing partial batch is dropped unless it is the only one.
      const std::size_t full = std::max<std::size_t>(1, _order.size() / bs);
      for (std::size_t b = 0; b < full; ++b)
      {
        const std::size_t lo = b * bs;
        const std::size_t hi = std::min(_order.size(), lo + bs);
        _batches.push_back(make_batch(_corpus, std::span(_order).subspan(lo, hi - lo)));
      }
      return;
    }

    std::vector<int> stream;
    for (auto i : _order) stream.insert(stream.end(), _corpus[i].ids.begin(), _corpus[i].ids.end());
    const std::size_t w = static_cast<std::size_t>(_config.pack_length);
    if (stream.size() < w + 1)
      throw InputError("corpus too small for pack length " + std::to_string(w));

    const std::size_t windows = (stream.size() - 1) / w;
    for (std::size_t lo = 0; lo < windows; lo += bs)
    {
      const std::size_t n = std::min(bs, windows - lo);
      TokenBatch b;
      b.batch = static_cast<Index>(n);
      b.positions = static_cast<Index>(w);
      for (std::size_t k = 0; k < n; ++k)
      {
        const std::size_t start = (lo + k) * w;
        b.inputs.insert(b.inputs.end(), stream.begin() + start, stream.begin() + start + w);
        b.targets.insert(b.targets.end(), stream.begin() + start + 1, stream.begin() + start + w + 1);
      }
      _batches.push_back(std::move(b));
    }
  }

  const std::vector<EncodedSequence>& _corpus;
  const TrainingConfig& _config;
  Random _rng;
  std::vector<std::size_t> _order;
  std::vector<TokenBatch> _batches;
  std::size_t _cursor = 0;
};

void check_vocab(const ModelParameters& params, const std::vector<EncodedSequence>& corpus)
{
  const Index vocab = params.vocab();
  for (const auto& s : corpus)
    for (int id : s.ids)
      if (id < 0 || id >= vocab)
        throw InputError("vocabulary mismatch: corpus token id " + std::to_string(id) +
          " does not fit model vocabulary of " + std::to_string(vocab));
}

} // namespace

TrainResult train(ModelParameters params, const std::vector<EncodedSequence>& corpus,
  const TrainingConfig& config, const std::string& group,
  const std::function<void(const MetricRecord&)>& on_record)
{
  config.validate();
  if (corpus.empty()) throw InputError("training corpus is empty");
  check_vocab(params, corpus);

  TrainResult result;
  result.series.group = group;
  result.series.arch = to_string(params.architecture());
  result.series.seed = config.seed;

  BatchStream batches(corpus, config);
  Random dropout_rng(Random::mix(config.seed, 2));
  AdamState adam;

  for (long step = 0; step < config.total_steps; ++step)
  {
    const TokenBatch batch = batches.next();
    const double lr = lr_schedule(step, config);

    Tape tape;
    ParameterVars vars = bind(tape, params);
    Var loss = cross_entropy(forward(tape, params, vars, batch, &dropout_rng), batch.targets, kPad);
    tape.backward(loss);

    if (step % config.eval_every == 0)
    {
      result.series.append(step, loss.value().item(), lr);
      if (on_record) on_record(result.series.records.back());
    }

    Gradients grads;
    for (const auto& [name, v] : vars)
      if (v.grad().size()) grads.emplace(name, v.grad());
    adam_step(params.tensors, grads, adam, step + 1, lr, config);
  }

  if (!params.all_finite()) throw RuntimeError("training diverged: non-finite parameters");
  result.params = std::move(params);
  return result;
}

Evaluation evaluate_perplexity(const ModelParameters& params,
  const std::vector<EncodedSequence>& heldout, long batch_size)
{
  if (heldout.empty()) throw InputError("held-out set is empty");
  check_vocab(params, heldout);

  double total = 0.0;
  std::size_t tokens = 0;
  for (std::size_t lo = 0; lo < heldout.size(); lo += static_cast<std::size_t>(batch_size))
  {
    const std::size_t n = std::min(heldout.size() - lo, static_cast<std::size_t>(batch_size));
    const TokenBatch batch = make_batch(std::span(heldout).subspan(lo, n));
    const auto count = static_cast<std::size_t>(
      std::count_if(batch.targets.begin(), batch.targets.end(), [](int t) { return t != kPad; }));

    Tape tape;
    ParameterVars vars;
    for (const auto& [name, t] : params.tensors) vars.emplace(name, tape.constant(t));
    const double mean = cross_entropy(forward(tape, params, vars, batch), batch.targets, kPad)
      .value().item();
    total += mean * static_cast<double>(count);
    tokens += count;
  }

  Evaluation e;
  e.tokens = tokens;
  e.loss = total / static_cast<double>(tokens);
  e.perplexity = std::exp(e.loss);
  return e;
}

} // namespace implang

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

#include "doctest.h"

#include <cmath>
#include <sstream>

#include "implang/grammar.hpp"
#include "implang/tokenizer.hpp"
#include "implang/training.hpp"

using namespace implang;

namespace {

struct Encoded
{
  Vocabulary vocab;
  std::vector<EncodedSequence> corpus;
};

Encoded small_corpus(std::size_t count, std::uint64_t seed)
{
  GenerationConfig g;
  g.count = count;
  g.seed = seed;
  auto sentences = generate_corpus(restrict_lexicon(default_grammar(), 4, 3, 1), g);
  Encoded e;
  e.vocab = Vocabulary::build(sentences);
  e.corpus = encode_corpus(e.vocab, sentences);
  return e;
}

ModelParameters tiny_model(Index vocab, std::uint64_t seed = 1)
{
  TransformerConfig c;
  c.layers = 1;
  c.model_dim = 16;
  c.heads = 2;
  c.ff_dim = 32;
  c.max_seq = 16;
  c.vocab = vocab;
  c.seed = seed;
  return init_model(c);
}

TrainingConfig quick(long steps)
{
  TrainingConfig t;
  t.total_steps = steps;
  t.batch_size = 8;
  t.peak_lr = 5e-3;
  return t;
}

} // namespace

TEST_CASE("learning rate schedule")
{
  TrainingConfig c;
  c.total_steps = 1000;
  c.warmup_fraction = 0.14;
  c.peak_lr = 3e-4;
  CHECK(lr_schedule(0, c) == 0.0);
  CHECK(lr_schedule(140, c) == doctest::Approx(3e-4).epsilon(1e-15));
  CHECK(lr_schedule(70, c) == doctest::Approx(1.5e-4).epsilon(1e-15));
  CHECK(lr_schedule(1000, c) == 0.0);
  CHECK(lr_schedule(570, c) == doctest::Approx(1.5e-4).epsilon(1e-12));
  CHECK_THROWS_AS(lr_schedule(-1, c), ConfigError);
  CHECK_THROWS_AS(lr_schedule(1001, c), ConfigError);

  // Single maximum at the end of warmup.
  long argmax = 0;
  int at_peak = 0;
  for (long s = 0; s <= 1000; ++s)
  {
    if (lr_schedule(s, c) > lr_schedule(argmax, c)) argmax = s;
    if (lr_schedule(s, c) == c.peak_lr) ++at_peak;
  }
  CHECK(argmax == 140);
  CHECK(at_peak == 1);

  c.total_steps = 7;
  CHECK(c.warmup_steps() == 1); // ceil(0.98)
  c.warmup_fraction = 1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("adam")
{
  TrainingConfig c;
  std::map<std::string, Tensor> params{{"w", Tensor::from({3}, {0.5, -1.0, 2.0})}};
  const auto before = params;

  SUBCASE("zero gradient is a fixed point")
  {
    AdamState state;
    Gradients g{{"w", Matrix::Zero(1, 3)}};
    for (long s = 1; s <= 5; ++s) adam_step(params, g, state, s, 1e-2, c);
    CHECK(params == before);
  }

  SUBCASE("first step moves by lr against the sign")
  {
    AdamState state;
    Matrix g(1, 3);
    g << 0.3, -2.0, 1e-3;
    adam_step(params, {{"w", g}}, state, 1, 1e-2, c);
    for (Index i = 0; i < 3; ++i)
    {
      const double update = params.at("w")[i] - before.at("w")[i];
      const double gi = g(0, i);
      CHECK(std::abs(update + 1e-2 * gi / (std::abs(gi) + c.eps)) < 1e-9);
    }
  }

  SUBCASE("converges on a quadratic")
  {
    Random rng(17);
    Tensor target({5});
    Tensor w({5});
    for (Index i = 0; i < 5; ++i)
    {
      target[i] = rng.normal(0.0, 1.0);
      w[i] = rng.normal(0.0, 1.0);
    }
    std::map<std::string, Tensor> p{{"w", w}};
    AdamState state;
    TrainingConfig q;
    q.total_steps = 200;
    q.peak_lr = 0.1;
    for (long s = 0; s < 200; ++s)
    {
      Matrix g = 2.0 * (p.at("w").matrix() - target.matrix());
      adam_step(p, {{"w", g}}, state, s + 1, lr_schedule(s, q), q);
    }
    CHECK((p.at("w").matrix() - target.matrix()).norm() < 1e-3);
  }

  SUBCASE("shape mismatch")
  {
    AdamState state;
    CHECK_THROWS(adam_step(params, {{"w", Matrix::Zero(2, 2)}}, state, 1, 1e-2, c));
    CHECK_THROWS(adam_step(params, {{"w", Matrix::Zero(1, 3)}}, state, 0, 1e-2, c));
  }
}

TEST_CASE("train smoke contract")
{
  auto e = small_corpus(200, 3);
  const auto V = static_cast<Index>(e.vocab.size());
  auto result = train(tiny_model(V), e.corpus, quick(2), "natural");
  REQUIRE(result.series.records.size() == 2);
  CHECK(result.series.records[0].step == 0);
  CHECK(result.series.records[1].step == 1);
  CHECK(result.series.group == "natural");
  CHECK(result.series.arch == "transformer");
  for (const auto& r : result.series.records)
  {
    CHECK(std::isfinite(r.loss));
    CHECK(r.perplexity == std::exp(r.loss));
  }
  CHECK(std::abs(result.series.records[0].loss - std::log(double(V))) < 0.05 * std::log(double(V)));
  CHECK(result.series.records[0].lr == 0.0);
  CHECK(result.params.tensors != tiny_model(V).tensors);
}

TEST_CASE("train is deterministic and logs every eval_every steps")
{
  auto e = small_corpus(300, 4);
  const auto V = static_cast<Index>(e.vocab.size());
  auto cfg = quick(30);
  cfg.eval_every = 3;
  std::vector<long> streamed;
  auto a = train(tiny_model(V), e.corpus, cfg, "g", [&](const MetricRecord& r) { streamed.push_back(r.step); });
  auto b = train(tiny_model(V), e.corpus, cfg, "g");
  REQUIRE(a.series.records.size() == 10);
  CHECK(streamed.size() == 10);
  for (std::size_t i = 0; i < 10; ++i)
  {
    CHECK(a.series.records[i].step == static_cast<long>(3 * i));
    CHECK(a.series.records[i].loss == b.series.records[i].loss);
    CHECK(a.series.records[i].lr == b.series.records[i].lr);
  }
  CHECK(a.params.tensors == b.params.tensors);

  std::ostringstream ca, cb;
  write_metrics_csv(ca, a.series);
  write_metrics_csv(cb, b.series);
  CHECK(ca.str() == cb.str());

  cfg.seed = 99;
  auto c = train(tiny_model(V), e.corpus, cfg, "g");
  CHECK(c.series.records.back().loss != a.series.records.back().loss);
}

TEST_CASE("training lowers the loss")
{
  auto e = small_corpus(500, 5);
  const auto V = static_cast<Index>(e.vocab.size());
  auto r = train(tiny_model(V), e.corpus, quick(150), "natural");
  const auto& rec = r.series.records;
  CHECK(rec.back().loss < rec.front().loss - 0.5);

  auto pack = quick(40);
  pack.grouping = SequenceGrouping::Pack;
  pack.pack_length = 12;
  auto p = train(tiny_model(V), e.corpus, pack, "natural");
  CHECK(p.series.records.back().loss < p.series.records.front().loss);
}

TEST_CASE("train rejects a vocabulary mismatch")
{
  auto e = small_corpus(50, 6);
  const auto V = static_cast<Index>(e.vocab.size());
  CHECK_THROWS_AS(train(tiny_model(V - 2), e.corpus, quick(2)), InputError);
  CHECK_THROWS_AS(train(tiny_model(V), {}, quick(2)), InputError);
}

TEST_CASE("uniform model has perplexity equal to the vocabulary size")
{
  auto e = small_corpus(100, 7);
  LstmConfig c;
  c.vocab = static_cast<Index>(e.vocab.size());
  c.embed_dim = 8;
  c.hidden_dim = 8;
  auto p = init_model(c);
  p.tensors.at("head.w").matrix().setZero();
  p.tensors.at("head.b").matrix().setZero();
  auto ev = evaluate_perplexity(p, e.corpus, 16);
  CHECK(ev.perplexity == doctest::Approx(double(c.vocab)).epsilon(1e-12));
  CHECK(ev.perplexity == std::exp(ev.loss));

  std::size_t tokens = 0;
  for (const auto& s : e.corpus) tokens += s.ids.size() - 1;
  CHECK(ev.tokens == tokens);
  CHECK_THROWS_AS(evaluate_perplexity(p, {}, 16), InputError);
}

TEST_CASE("a memorizer reaches perplexity near one")
{
  auto e = small_corpus(1, 8);
  std::vector<EncodedSequence> repeated(64, e.corpus.front());
  auto cfg = quick(200);
  cfg.peak_lr = 1e-2;
  auto r = train(tiny_model(static_cast<Index>(e.vocab.size())), repeated, cfg);
  auto ev = evaluate_perplexity(r.params, repeated, 16);
  CHECK(ev.perplexity <= 1.01);
  CHECK(ev.perplexity == std::exp(ev.loss));
}

TEST_CASE("metrics csv round trip")
{
  MetricSeries s;
  s.group = "parity-negation";
  s.arch = "lstm";
  s.seed = 12345678901234ULL;
  s.append(0, 5.298317366548036, 0.0);
  s.append(1, 1.0 / 3.0, 7.142857142857143e-06);
  s.append(2, 0.1, 1e-3);
  std::stringstream buf;
  write_metrics_csv(buf, s);
  CHECK(buf.str().rfind("step,loss,perplexity,lr,group,arch,seed\n", 0) == 0);
  auto t = read_metrics_csv(buf);
  REQUIRE(t.records.size() == 3);
  CHECK(t.group == s.group);
  CHECK(t.arch == s.arch);
  CHECK(t.seed == s.seed);
  for (std::size_t i = 0; i < 3; ++i)
  {
    CHECK(t.records[i].step == s.records[i].step);
    CHECK(t.records[i].loss == s.records[i].loss);
    CHECK(t.records[i].perplexity == s.records[i].perplexity);
    CHECK(t.records[i].lr == s.records[i].lr);
  }

  std::stringstream bad("step,loss\n");
  CHECK_THROWS_AS(read_metrics_csv(bad), InputError);
}

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
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "implang/gradcheck.hpp"
#include "implang/models.hpp"

using namespace implang;

namespace {

TransformerConfig small_transformer(Index vocab = 100)
{
  TransformerConfig c;
  c.layers = 2;
  c.model_dim = 64;
  c.heads = 2;
  c.ff_dim = 256;
  c.vocab = vocab;
  c.seed = 7;
  return c;
}

TransformerConfig tiny_transformer()
{
  TransformerConfig c;
  c.layers = 2;
  c.model_dim = 16;
  c.heads = 2;
  c.ff_dim = 32;
  c.max_seq = 8;
  c.vocab = 16;
  c.seed = 3;
  return c;
}

LstmConfig tiny_lstm()
{
  LstmConfig c;
  c.layers = 2;
  c.embed_dim = 16;
  c.hidden_dim = 16;
  c.vocab = 16;
  c.seed = 4;
  return c;
}

TokenBatch random_batch(Index batch, Index positions, int vocab, std::uint64_t seed)
{
  Random rng(seed);
  TokenBatch b;
  b.batch = batch;
  b.positions = positions;
  for (Index i = 0; i < batch * positions; ++i)
  {
    b.inputs.push_back(1 + static_cast<int>(rng.index(static_cast<std::size_t>(vocab - 1))));
    b.targets.push_back(1 + static_cast<int>(rng.index(static_cast<std::size_t>(vocab - 1))));
  }
  return b;
}

double sigmoid_of(double x) { return 1.0 / (1.0 + std::exp(-x)); }

} // namespace

TEST_CASE("transformer parameter count against a hand tally")
{
  auto p = init_model(small_transformer());
  // wte, wpe, 2 x block, ln_f; tied head.
  const std::size_t block = (64 + 64)        // ln1
                          + (64 * 192 + 192) // qkv
                          + (64 * 64 + 64)   // attention out
                          + (64 + 64)        // ln2
                          + (64 * 256 + 256) // mlp in
                          + (256 * 64 + 64); // mlp out
  const std::size_t tally = 100 * 64 + 32 * 64 + 2 * block + 128;
  CHECK(p.count() == tally);
  CHECK(parameter_count(small_transformer()) == tally);

  auto untied = small_transformer();
  untied.tie_weights = false;
  CHECK(init_model(untied).count() == tally + 64 * 100);
}

TEST_CASE("lstm parameter count against a hand tally")
{
  LstmConfig c;
  c.vocab = 50;
  auto p = init_model(c);
  const std::size_t tally = 50 * 64 + (64 + 128) * 512 + 512 + 128 * 50 + 50;
  CHECK(p.count() == tally);
  CHECK(parameter_count(c) == tally);

  c.layers = 2;
  CHECK(init_model(c).count() == tally + (128 + 128) * 512 + 512);
}

TEST_CASE("initialization")
{
  CHECK(init_model(small_transformer()).tensors == init_model(small_transformer()).tensors);

  auto other = small_transformer();
  other.seed = 8;
  CHECK(init_model(other).tensors != init_model(small_transformer()).tensors);

  auto bad = small_transformer();
  bad.heads = 3;
  CHECK_THROWS_AS(init_model(bad), ConfigError);

  LstmConfig zero;
  zero.vocab = 10;
  zero.hidden_dim = 0;
  CHECK_THROWS_AS(init_model(zero), ConfigError);

  LstmConfig lc;
  lc.vocab = 10;
  auto lp = init_model(lc);
  const auto& b = lp.tensors.at("lstm0.b");
  for (Index i = 0; i < 512; ++i) CHECK(b[i] == (i >= 128 && i < 256 ? 1.0 : 0.0));
  const double bound = 1.0 / std::sqrt(128.0);
  CHECK(lp.tensors.at("lstm0.w").matrix().cwiseAbs().maxCoeff() <= bound);
}

TEST_CASE("causality by perturbation")
{
  for (ModelConfig config : {ModelConfig{tiny_transformer()}, ModelConfig{tiny_lstm()}})
  {
    auto p = init_model(config);
    TokenBatch a = random_batch(2, 7, 16, 11);
    for (Index j = 0; j < 7; ++j)
    {
      TokenBatch b = a;
      b.inputs[static_cast<std::size_t>(j)] = (a.inputs[static_cast<std::size_t>(j)] % 15) + 1;
      const Tensor la = logits(p, a);
      const Tensor lb = logits(p, b);
      for (Index i = 0; i < j; ++i) CHECK(la.matrix().row(i) == lb.matrix().row(i));
      CHECK(la.matrix().row(j) != lb.matrix().row(j));
      // The second sequence is untouched.
      CHECK(la.matrix().middleRows(7, 7) == lb.matrix().middleRows(7, 7));
    }
  }
}

TEST_CASE("identical sequences in a batch give identical logits")
{
  for (ModelConfig config : {ModelConfig{tiny_transformer()}, ModelConfig{tiny_lstm()}})
  {
    auto p = init_model(config);
    TokenBatch b = random_batch(1, 6, 16, 12);
    TokenBatch twice = b;
    twice.batch = 2;
    twice.inputs.insert(twice.inputs.end(), b.inputs.begin(), b.inputs.end());
    twice.targets.insert(twice.targets.end(), b.targets.begin(), b.targets.end());
    const Tensor l = logits(p, twice);
    CHECK(l.shape() == Shape{2, 6, 16});
    CHECK(l.matrix().topRows(6) == l.matrix().bottomRows(6));
  }
}

TEST_CASE("transformer rejects overlong sequences")
{
  auto p = init_model(tiny_transformer());
  CHECK_THROWS_AS(logits(p, random_batch(1, 9, 16, 1)), InputError);
  CHECK_NOTHROW(logits(p, random_batch(1, 8, 16, 1)));
}

TEST_CASE("transformer logits match the golden file")
{
  auto p = init_model(tiny_transformer());
  const Tensor l = transformer_forward(p, random_batch(2, 8, 16, 2024));
  const std::string path = std::string(IMPLANG_TEST_DATA) + "/transformer_golden.txt";

  if (std::getenv("IMPLANG_WRITE_GOLDEN"))
  {
    std::ofstream out(path);
    out << std::setprecision(17);
    for (Index i = 0; i < l.size(); ++i) out << l[i] << '\n';
  }

  std::ifstream in(path);
  REQUIRE_MESSAGE(in.good(), "missing golden file " << path);
  std::vector<double> golden;
  for (double v; in >> v;) golden.push_back(v);
  REQUIRE(golden.size() == static_cast<std::size_t>(l.size()));
  double worst = 0.0;
  for (Index i = 0; i < l.size(); ++i) worst = std::max(worst, std::abs(l[i] - golden[static_cast<std::size_t>(i)]));
  CHECK(worst <= 1e-12);
}

TEST_CASE("lstm gates against a scalar hand computation")
{
  LstmConfig c;
  c.layers = 1;
  c.embed_dim = 1;
  c.hidden_dim = 1;
  c.vocab = 2;
  auto p = init_model(c);
  p.tensors["embed"] = Tensor::from({2, 1}, {0.3, -0.8});
  // rows: input, recurrent; columns: i, f, g, o
  p.tensors["lstm0.w"] = Tensor::from({2, 4}, {0.5, -0.4, 0.9, 0.2, -0.7, 0.6, 0.1, -0.3});
  p.tensors["lstm0.b"] = Tensor::from({4}, {0.05, 1.0, -0.1, 0.2});
  p.tensors["head.w"] = Tensor::from({1, 2}, {1.5, -2.0});
  p.tensors["head.b"] = Tensor::from({2}, {0.1, 0.2});

  TokenBatch b;
  b.batch = 1;
  b.positions = 2;
  b.inputs = {1, 0};
  b.targets = {0, 1};
  const Tensor out = lstm_forward(p, b);
  REQUIRE(out.shape() == Shape{1, 2, 2});

  double h = 0.0, cell = 0.0;
  const double xs[] = {-0.8, 0.3};
  for (int t = 0; t < 2; ++t)
  {
    const double x = xs[t];
    const double i = sigmoid_of(0.5 * x - 0.7 * h + 0.05);
    const double f = sigmoid_of(-0.4 * x + 0.6 * h + 1.0);
    const double g = std::tanh(0.9 * x + 0.1 * h - 0.1);
    const double o = sigmoid_of(0.2 * x - 0.3 * h + 0.2);
    cell = f * cell + i * g;
    h = o * std::tanh(cell);
    CHECK(std::abs(out.matrix()(t, 0) - (1.5 * h + 0.1)) < 1e-12);
    CHECK(std::abs(out.matrix()(t, 1) - (-2.0 * h + 0.2)) < 1e-12);
  }
}

TEST_CASE("lstm single token")
{
  auto p = init_model(tiny_lstm());
  const Tensor l = lstm_forward(p, random_batch(1, 1, 16, 3));
  CHECK(l.shape() == Shape{1, 1, 16});
}

TEST_CASE("fresh models start near the uniform loss")
{
  for (ModelConfig config : {ModelConfig{small_transformer(200)}, ModelConfig{[] {
         LstmConfig c;
         c.vocab = 200;
         return c;
       }()}})
  {
    auto p = init_model(config);
    TokenBatch b = random_batch(16, 8, 200, 5);
    Tape tape;
    const double loss = cross_entropy(forward(tape, p, bind(tape, p), b), b.targets, kPad).value().item();
    CHECK(std::abs(loss - std::log(200.0)) < 0.05 * std::log(200.0));
  }
}

TEST_CASE("full model gradients against central differences")
{
  for (ModelConfig config : {ModelConfig{tiny_transformer()}, ModelConfig{tiny_lstm()}})
  {
    // Off the initialization, where many gradients sit near the roundoff floor.
    auto p = init_model(config);
    Random noise(9);
    for (auto& [name, tensor] : p.tensors)
      for (Index i = 0; i < tensor.size(); ++i) tensor[i] += noise.normal(0.0, 0.3);
    TokenBatch b = random_batch(2, 8, 16, 6);
    b.targets[15] = kPad; // exercise masking

    for (const auto& [name, tensor] : p.tensors)
    {
      // Softmax ignores a key bias (it shifts a whole score row), so that slice has a
      // zero gradient and only roundoff for a numeric one. Hold it fixed here.
      const bool key_bias = name.find("attn.b_qkv") != std::string::npos;
      const Index D = tensor.size() / 3;
      Tensor keep(tensor.shape());
      Tensor fixed(tensor.shape());
      for (Index i = 0; i < tensor.size(); ++i)
      {
        const bool frozen = key_bias && i >= D && i < 2 * D;
        keep[i] = frozen ? 0.0 : 1.0;
        fixed[i] = frozen ? tensor[i] : 0.0;
      }
      auto loss_of = [&, name = name](Tape& tape, const Var& x) {
        ParameterVars vars;
        for (const auto& [n, t] : p.tensors) vars.emplace(n, tape.constant(t));
        vars.at(name) = key_bias ? x * tape.constant(keep) + tape.constant(fixed) : x;
        return cross_entropy(forward(tape, p, vars, b), b.targets, kPad);
      };
      if (key_bias)
      {
        Tape tape;
        ParameterVars vars = bind(tape, p);
        tape.backward(cross_entropy(forward(tape, p, vars, b), b.targets, kPad));
        CHECK(vars.at(name).grad().middleCols(D, D).cwiseAbs().maxCoeff() < 1e-12);
      }
      const double err = finite_difference_check(loss_of, tensor, 1e-5);
      INFO(to_string(p.architecture()) << " " << name << " error " << err);
      CHECK(err < 1e-4);
    }
  }
}

TEST_CASE("checkpoint round trip")
{
  for (ModelConfig config : {ModelConfig{tiny_transformer()}, ModelConfig{tiny_lstm()}})
  {
    auto p = init_model(config);
    std::stringstream buf;
    save_checkpoint(buf, p);
    auto q = load_checkpoint(buf);
    CHECK(q.tensors == p.tensors);
    CHECK(q.architecture() == p.architecture());
    CHECK(q.vocab() == p.vocab());

    std::stringstream again;
    save_checkpoint(again, q);
    std::stringstream first;
    save_checkpoint(first, p);
    CHECK(again.str() == first.str());
  }

  std::stringstream junk("XXXX");
  CHECK_THROWS_AS(load_checkpoint(junk), InputError);

  std::stringstream truncated;
  save_checkpoint(truncated, init_model(tiny_lstm()));
  std::string s = truncated.str();
  std::stringstream cut(s.substr(0, s.size() / 2));
  CHECK_THROWS_AS(load_checkpoint(cut), InputError);
}

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

#include <filesystem>
#include <fstream>
#include <sstream>

#include "implang/harness.hpp"

using namespace implang;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name)
{
  const fs::path p = fs::temp_directory_path() / ("implang_test_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p)
{
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

ExperimentSpec tiny_spec(const fs::path& out)
{
  ExperimentSpec s;
  s.sentences = 200;
  s.seeds = {1, 2};
  s.output = out.string();
  s.training.total_steps = 12;
  s.training.batch_size = 16;
  s.transformer.model_dim = 16;
  s.transformer.ff_dim = 32;
  s.transformer.layers = 1;
  return s;
}

GroupResult fake_group(const std::string& name, double loss)
{
  GroupResult g;
  g.group = name;
  g.mean_stabilized_loss = loss;
  return g;
}

} // namespace

TEST_CASE("p-value rendering")
{
  CHECK(format_p(0.0004) == "p<.001");
  CHECK(format_p(0.223) == "p=.223");
  CHECK(format_p(0.001) == "p=.001");
  CHECK(format_p(0.00099) == "p<.001");
  CHECK(format_p(0.05) == "p=.050");
  CHECK(format_p(1.0) == "p=1.000");
  CHECK(format_p(0.0) == "p<.001");
}

TEST_CASE("test line rendering")
{
  TTestResult a;
  a.t = -19.66;
  a.df = 305.0;
  a.p_two_sided = 1e-40;
  a.cohen_d = -2.20;
  CHECK(format_test(a) == "p<.001, t(305.0)=-19.66, Cohen's d=-2.20");

  TTestResult b;
  b.t = 1.22;
  b.df = 799.9;
  b.p_two_sided = 0.223;
  b.cohen_d = 0.086;
  CHECK(format_test(b) == "p=.223, t(799.9)=1.22, Cohen's d=0.09");

  Comparison c{"natural", "reversed", Metric::Perplexity, b};
  CHECK(c.name() == "natural vs reversed (perplexity)");
}

TEST_CASE("linearity gradient summary")
{
  RunReport r;
  r.groups = {fake_group("natural", 1.2), fake_group("reversed", 3.1), fake_group("parity-negation", 2.0)};
  auto lg = linearity_gradient_summary(r);
  REQUIRE(lg.ranking.size() == 3);
  CHECK(lg.ranking[0].first == "natural");
  CHECK(lg.ranking[1].first == "parity-negation");
  CHECK(lg.ranking[2].first == "reversed");
  CHECK(lg.parity_below_reversed);

  r.groups = {fake_group("reversed", 2.0), fake_group("parity-negation", 2.0), fake_group("natural", 2.0)};
  lg = linearity_gradient_summary(r);
  CHECK(lg.ranking[0].first == "natural");
  CHECK(lg.ranking[1].first == "parity-negation");
  CHECK(lg.ranking[2].first == "reversed");
  CHECK_FALSE(lg.parity_below_reversed);

  r.groups = {fake_group("natural", 1.0), fake_group("reversed", 2.0)};
  CHECK_THROWS_AS(linearity_gradient_summary(r), InputError);
}

TEST_CASE("text report without comparisons has tables only")
{
  RunReport r;
  r.experiment = "custom";
  r.groups = {fake_group("natural", 1.5)};
  const auto text = report_text(r);
  CHECK(text.find("natural") != std::string::npos);
  CHECK(text.find(" vs ") == std::string::npos);
  CHECK(text.find("Cohen") == std::string::npos);
  CHECK(text.find("Linearity") == std::string::npos);
}

TEST_CASE("spec parsing")
{
  std::istringstream in(R"(# experiment 3 analog with overrides
train.steps = 50
experiment = 3
seeds = 4, 5
groups = natural, parity-negation
lstm.hidden = 32   # smaller
)");
  auto s = parse_spec(in);
  CHECK(s.experiment == "3");
  CHECK(s.arch == Architecture::Lstm);
  CHECK(s.corpus == CorpusSource::Generated);
  CHECK(s.training.total_steps == 50);
  CHECK(s.seeds == std::vector<std::uint64_t>{4, 5});
  CHECK(s.groups == std::vector<TransformKind>{TransformKind::Identity, TransformKind::ParityNegation});
  CHECK(s.lstm.hidden_dim == 32);

  std::ostringstream canon;
  write_spec(canon, s);
  std::istringstream back(canon.str());
  auto t = parse_spec(back);
  std::ostringstream again;
  write_spec(again, t);
  CHECK(again.str() == canon.str());

  ExperimentSpec e;
  apply_preset(e, "2");
  CHECK(e.corpus == CorpusSource::External);
  CHECK(e.training.grouping == SequenceGrouping::Pack);

  CHECK_THROWS_AS(apply_setting(e, "nope", "1"), ConfigError);
  CHECK_THROWS_AS(apply_setting(e, "train.steps", "ten"), ConfigError);
  CHECK_THROWS_AS(apply_setting(e, "train.lr", "1e-3x"), ConfigError);
  CHECK_THROWS_AS(apply_setting(e, "groups", "natural,sideways"), ConfigError);
  CHECK_THROWS_AS(apply_preset(e, "5"), ConfigError);
  std::istringstream bad("just words\n");
  CHECK_THROWS_AS(parse_spec(bad), ConfigError);
}

TEST_CASE("spec validation")
{
  ExperimentSpec s;
  CHECK_NOTHROW(s.validate());
  s.groups = {TransformKind::Reverse, TransformKind::ParityNegation};
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s.compare = false;
  CHECK_NOTHROW(s.validate());

  ExperimentSpec t;
  t.groups = {};
  CHECK_THROWS_AS(t.validate(), ConfigError);
  t = ExperimentSpec{};
  t.seeds = {1, 1};
  CHECK_THROWS_AS(t.validate(), ConfigError);
  t = ExperimentSpec{};
  t.corpus = CorpusSource::External;
  CHECK_THROWS_AS(t.validate(), ConfigError);
  t = ExperimentSpec{};
  t.transformer.heads = 3;
  CHECK_THROWS_AS(t.validate(), ConfigError);
}

TEST_CASE("held-out split")
{
  GenerationConfig g;
  g.count = 1000;
  const auto corpus = generate_corpus(default_grammar(), g);
  const auto a = split_corpus(corpus, 0.05, 9);
  const auto b = split_corpus(corpus, 0.05, 9);
  CHECK(a.heldout.size() == 50);
  CHECK(a.train.size() == 950);
  CHECK(a.heldout == b.heldout);
  CHECK(a.train == b.train);
  CHECK(split_corpus(corpus, 0.05, 10).heldout != a.heldout);
}

TEST_CASE("degenerate single-group experiment")
{
  const auto dir = scratch("single");
  auto spec = tiny_spec(dir);
  spec.groups = {TransformKind::Identity};
  spec.seeds = {1};
  const auto report = run_experiment(spec);
  CHECK(report.comparisons.empty());
  REQUIRE(report.groups.size() == 1);
  CHECK(report.groups[0].runs.size() == 1);
  CHECK(report.groups[0].runs[0].series.records.size() == 12);

  const auto json = slurp(dir / "report.json");
  CHECK(json.find("\"comparisons\": []") != std::string::npos);
  CHECK(json.find("linearity") == std::string::npos);
  CHECK(slurp(dir / "report.txt").find(" vs ") == std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("experiment outputs are deterministic and consistent")
{
  const auto d1 = scratch("det1");
  const auto d2 = scratch("det2");
  const auto r1 = run_experiment(tiny_spec(d1));
  run_experiment(tiny_spec(d2));

  std::size_t compared = 0;
  for (const auto& entry : fs::recursive_directory_iterator(d1))
  {
    if (!entry.is_regular_file()) continue;
    const auto rel = fs::relative(entry.path(), d1);
    if (rel == "spec.txt") continue; // names its own output directory
    INFO(rel.string());
    CHECK(slurp(entry.path()) == slurp(d2 / rel));
    ++compared;
  }
  CHECK(compared > 20);

  // Two comparisons per impossible group, loss then perplexity.
  REQUIRE(r1.comparisons.size() == 4);
  CHECK(r1.comparisons[0].name() == "natural vs reversed (loss)");
  CHECK(r1.comparisons[1].name() == "natural vs reversed (perplexity)");
  CHECK(r1.comparisons[2].other == "parity-negation");
  for (const auto& c : r1.comparisons)
  {
    CHECK(c.test.n1 == 12); // 6 stabilized records from each of 2 seeds
    CHECK(c.test.p_two_sided >= 0.0);
    CHECK(c.test.p_two_sided <= 1.0);
  }

  for (const auto& g : r1.groups)
  {
    double lowest = 1e300;
    for (const auto& run : g.runs)
      for (const auto& rec : run.series.records)
      {
        lowest = std::min(lowest, rec.perplexity);
        CHECK(rec.perplexity == std::exp(rec.loss));
      }
    CHECK(g.min_perplexity == lowest);
    CHECK(g.min_perplexity <= g.final_perplexity);
  }

  // Group corpora are the natural corpus under their transform.
  std::ifstream nat(d1 / "corpus" / "natural.train.txt");
  std::ifstream rev(d1 / "corpus" / "reversed.train.txt");
  std::ifstream par(d1 / "corpus" / "parity-negation.train.txt");
  const auto n = read_corpus(nat), r = read_corpus(rev), p = read_corpus(par);
  REQUIRE(n.size() == r.size());
  REQUIRE(n.size() == p.size());
  for (std::size_t i = 0; i < n.size(); i += 7)
  {
    CHECK(apply_transform(TransformKind::Reverse, r[i]) == n[i]);
    CHECK(invert_parity_negation(p[i]) == n[i]);
  }

  // The report survives a round trip through its files.
  const auto back = read_report(d1);
  CHECK(report_json(back) == report_json(r1));
  CHECK(report_text(back) == report_text(r1));

  fs::remove_all(d1);
  fs::remove_all(d2);
}

TEST_CASE("experiment error paths")
{
  auto spec = tiny_spec(scratch("errors"));
  spec.corpus = CorpusSource::External;
  spec.corpus_path = "/nonexistent/corpus.txt";
  CHECK_THROWS_WITH_AS(run_experiment(spec), doctest::Contains("corpus file not found"), InputError);

  auto unwritable = tiny_spec("/proc/implang-cannot-write");
  CHECK_THROWS_WITH_AS(run_experiment(unwritable), doctest::Contains("not writable"), RuntimeError);

  auto small = tiny_spec(scratch("maxseq"));
  small.transformer.max_seq = 4;
  CHECK_THROWS_WITH_AS(run_experiment(small), doctest::Contains("max_seq"), ConfigError);
  fs::remove_all(scratch("errors"));
  fs::remove_all(scratch("maxseq"));
}

TEST_CASE("external corpus experiment")
{
  const auto dir = scratch("external");
  fs::create_directories(dir);
  {
    std::ofstream out(dir / "text.txt");
    for (int i = 0; i < 60; ++i)
      out << "The cat sat on the mat, number " << (i % 7) << "!\n"
          << "Dogs don't like rain.\n\n";
  }
  auto spec = tiny_spec(dir / "out");
  apply_preset(spec, "4");
  spec.corpus_path = (dir / "text.txt").string();
  spec.training.pack_length = 8;
  spec.lstm.hidden_dim = 8;
  spec.lstm.embed_dim = 8;
  const auto report = run_experiment(spec);
  CHECK(report.arch == Architecture::Lstm);
  CHECK(report.comparisons.size() == 4);
  // the cat sat on mat number, 0-6, dogs don't like rain; plus four specials
  CHECK(report.groups[0].vocab_size == 4 + 17);
  fs::remove_all(dir);
}

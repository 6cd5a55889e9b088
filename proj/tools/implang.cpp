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

// implang command-line driver.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <json.hpp>

#include "implang/error.hpp"
#include "implang/harness.hpp"
#include "implang/stats.hpp"
#include "implang/tokenizer.hpp"

using namespace implang;

namespace {

constexpr int kExitInternal = 1;

std::ifstream open_in(const std::string& path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot read " + path);
  return in;
}

std::ofstream open_out(const std::string& path)
{
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeError("cannot write " + path);
  return out;
}

// Spec file, then --set overrides in order, then --seed.
struct SpecOptions
{
  std::string file;
  std::vector<std::string> settings;
  std::optional<std::uint64_t> seed;

  void add(CLI::App* cmd)
  {
    cmd->add_option("--spec", file, "key = value spec file");
    cmd->add_option("--set", settings, "override a spec key (key=value), repeatable");
    cmd->add_option("--seed", seed, "master seed");
  }

  ExperimentSpec build() const
  {
    ExperimentSpec spec;
    if (!file.empty()) spec = load_spec(file);
    for (const auto& kv : settings)
    {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
      auto trim = [](std::string s) {
        s.erase(0, s.find_first_not_of(' '));
        s.erase(s.find_last_not_of(' ') + 1);
        return s;
      };
      apply_setting(spec, trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
    }
    if (seed) spec.seed = *seed;
    return spec;
  }
};

std::vector<double> read_samples(const std::string& path, double window, Metric metric)
{
  auto in = open_in(path);
  std::string first;
  std::getline(in, first);
  in.clear();
  in.seekg(0);
  if (first.rfind("step,", 0) == 0) return stabilized_window(read_metrics_csv(in), window, metric);

  std::vector<double> xs;
  std::string line;
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno)
  {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ss(line);
    double v;
    if (!(ss >> v)) throw InputError(path + " line " + std::to_string(lineno) + ": not a number");
    xs.push_back(v);
  }
  return xs;
}

} // namespace

int main(int argc, char** argv)
{
  CLI::App app{"Possible and impossible language learning experiments"};
  app.require_subcommand(1);

  // generate
  auto* gen = app.add_subcommand("generate", "Generate a corpus from the grammar");
  GenerationConfig gcfg;
  std::string gen_out;
  gen->add_option("--count", gcfg.count, "number of sentences")->capture_default_str();
  gen->add_option("--seed", gcfg.seed, "random seed")->capture_default_str();
  gen->add_option("--nouns", gcfg.nouns, "restrict to the first N nouns (0: all)");
  gen->add_option("--verbs", gcfg.verbs, "restrict to the first N verbs (0: all)");
  gen->add_option("--modals", gcfg.modals, "restrict to the first N modals (0: all)");
  gen->add_option("--out", gen_out, "output file (default: stdout)");

  // transform
  auto* tr = app.add_subcommand("transform", "Apply a transformation to a corpus, one sentence per line");
  std::string tr_kind, tr_in, tr_out;
  std::size_t tr_chunk = 4096;
  bool tr_normalize = false;
  tr->add_option("--kind", tr_kind, "identity | reverse | parity-negation")->required();
  tr->add_option("--in", tr_in, "input file (default: stdin)");
  tr->add_option("--out", tr_out, "output file (default: stdout)");
  tr->add_option("--chunk", tr_chunk, "sentences held in memory at once")->capture_default_str();
  tr->add_flag("--normalize", tr_normalize, "lowercase and strip punctuation first (external text)");

  // train
  auto* trn = app.add_subcommand("train", "Train one model on a corpus file");
  SpecOptions trn_spec;
  trn_spec.add(trn);
  std::string trn_corpus, trn_out = "implang-train";
  trn->add_option("--corpus", trn_corpus, "corpus, one sentence per line")->required();
  trn->add_option("--out", trn_out, "output directory")->capture_default_str();

  // eval
  auto* ev = app.add_subcommand("eval", "Perplexity of a checkpoint on a corpus");
  std::string ev_ckpt, ev_vocab, ev_corpus;
  long ev_batch = 64;
  ev->add_option("--checkpoint", ev_ckpt)->required();
  ev->add_option("--vocab", ev_vocab)->required();
  ev->add_option("--corpus", ev_corpus)->required();
  ev->add_option("--batch", ev_batch)->capture_default_str();

  // stats
  auto* st = app.add_subcommand("stats", "Welch's t-test between two sample files or metric CSVs");
  std::string st_a, st_b, st_metric = "loss";
  double st_window = 0.5;
  bool st_json = false;
  st->add_option("a", st_a, "first sample file")->required();
  st->add_option("b", st_b, "second sample file")->required();
  st->add_option("--window", st_window, "stabilized window start for metric CSVs")->capture_default_str();
  st->add_option("--metric", st_metric, "loss | perplexity")->capture_default_str();
  st->add_flag("--json", st_json, "print JSON instead of text");

  // experiment
  auto* ex = app.add_subcommand("experiment", "Run a full experiment from a spec");
  SpecOptions ex_spec;
  ex_spec.add(ex);
  std::string ex_output;
  std::optional<unsigned> ex_threads;
  bool ex_quiet = false;
  ex->add_option("--output", ex_output, "output directory (overrides the spec)");
  ex->add_option("--threads", ex_threads, "parallel runs (overrides the spec)");
  ex->add_flag("--quiet", ex_quiet, "no progress lines");

  // report
  auto* rep = app.add_subcommand("report", "Re-render the report of a finished experiment");
  std::string rep_dir, rep_format = "text", rep_out;
  rep->add_option("dir", rep_dir, "experiment output directory")->required();
  rep->add_option("--format", rep_format, "text | json")->capture_default_str();
  rep->add_option("--out", rep_out, "write files here instead of printing");

  try
  {
    app.parse(argc, argv);
  }
  catch (const CLI::ParseError& e)
  {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(ErrorCategory::Config);
  }

  try
  {
    if (*gen)
    {
      const auto corpus = generate_corpus(default_grammar(), gcfg);
      if (gen_out.empty()) write_corpus(std::cout, corpus);
      else
      {
        auto out = open_out(gen_out);
        write_corpus(out, corpus);
      }
    }
    else if (*tr)
    {
      const auto kind = parse_transform_kind(tr_kind);
      if (!kind) throw ConfigError("unknown transform '" + tr_kind + "'");
      std::ifstream fin;
      std::ofstream fout;
      if (!tr_in.empty()) fin = open_in(tr_in);
      if (!tr_out.empty()) fout = open_out(tr_out);
      std::istream& in = tr_in.empty() ? std::cin : fin;
      std::ostream& out = tr_out.empty() ? std::cout : fout;
      const auto n = transform_corpus(*kind, in, out, tr_chunk, tr_normalize);
      std::cerr << n << " sentences\n";
    }
    else if (*trn)
    {
      ExperimentSpec spec = trn_spec.build();
      spec.validate();
      auto in = open_in(trn_corpus);
      const auto sentences = read_corpus(in);
      const auto vocab = Vocabulary::build(sentences);
      const auto encoded = encode_corpus(vocab, sentences);

      std::filesystem::create_directories(trn_out);
      TrainingConfig cfg = spec.training;
      cfg.seed = spec.seed;
      auto model = init_model(spec.model_config(static_cast<Index>(vocab.size()), spec.seed));
      auto result = train(std::move(model), encoded, cfg, "custom", [&](const MetricRecord& r) {
        if (r.step % 100 == 0) std::cerr << "step " << r.step << " loss " << r.loss << '\n';
      });

      auto vout = open_out(trn_out + "/vocab.txt");
      vocab.save(vout);
      auto mout = open_out(trn_out + "/metrics.csv");
      write_metrics_csv(mout, result.series);
      auto cout_ = open_out(trn_out + "/model.ilck");
      save_checkpoint(cout_, result.params);
      std::cout << "final loss " << result.series.records.back().loss << ", perplexity "
                << result.series.records.back().perplexity << '\n';
    }
    else if (*ev)
    {
      auto cin_ = open_in(ev_ckpt);
      const auto params = load_checkpoint(cin_);
      auto vin = open_in(ev_vocab);
      const auto vocab = Vocabulary::load(vin);
      if (static_cast<Index>(vocab.size()) != params.vocab())
        throw InputError("vocabulary of " + std::to_string(vocab.size()) + " words does not match model vocabulary " +
          std::to_string(params.vocab()));
      auto in = open_in(ev_corpus);
      const auto e = evaluate_perplexity(params, encode_corpus(vocab, read_corpus(in)), ev_batch);
      nlohmann::ordered_json j{{"loss", e.loss}, {"perplexity", e.perplexity}, {"tokens", e.tokens}};
      std::cout << j.dump(2) << '\n';
    }
    else if (*st)
    {
      const Metric metric = parse_metric(st_metric);
      const auto a = read_samples(st_a, st_window, metric);
      const auto b = read_samples(st_b, st_window, metric);
      const auto r = welch_t_test(a, b);
      if (st_json)
      {
        nlohmann::ordered_json j{{"t", r.t}, {"df", r.df}, {"p", r.p_two_sided}, {"d", r.cohen_d}, {"n1", r.n1},
          {"n2", r.n2}, {"means", {r.mean1, r.mean2}}, {"variances", {r.var1, r.var2}}};
        std::cout << j.dump(2) << '\n';
      }
      else std::cout << format_test(r) << '\n';
    }
    else if (*ex)
    {
      ExperimentSpec spec = ex_spec.build();
      if (!ex_output.empty()) spec.output = ex_output;
      if (ex_threads) spec.threads = *ex_threads;
      const auto report = run_experiment(spec, ex_quiet ? nullptr : &std::cerr);
      std::cout << report_text(report);
    }
    else if (*rep)
    {
      const auto report = read_report(rep_dir);
      const auto format = rep_format == "json" ? ReportFormat::Json
                        : rep_format == "text" ? ReportFormat::Text
                                               : throw ConfigError("unknown format '" + rep_format + "'");
      if (rep_out.empty()) std::cout << (format == ReportFormat::Json ? report_json(report) : report_text(report));
      else emit_report(report, format, rep_out);
    }
  }
  catch (const Error& e)
  {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(e.category());
  }
  catch (const std::exception& e)
  {
    std::cerr << "internal error: " << e.what() << '\n';
    return kExitInternal;
  }
  return 0;
}

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

#include "implang/harness.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <exception>
#include <fstream>
#include <mutex>
#include <numeric>
#include <ostream>
#include <sstream>
#include <thread>

#include "implang/error.hpp"
#include "implang/tokenizer.hpp"

namespace fs = std::filesystem;

namespace implang {

std::string group_name(TransformKind kind)
{
  switch (kind)
  {
  case TransformKind::Identity: return "natural";
  case TransformKind::Reverse: return "reversed";
  case TransformKind::ParityNegation: return "parity-negation";
  }
  return "?";
}

TransformKind parse_group(const std::string& name)
{
  if (name == "natural") return TransformKind::Identity;
  if (name == "reversed") return TransformKind::Reverse;
  if (name == "parity-negation") return TransformKind::ParityNegation;
  if (auto k = parse_transform_kind(name)) return *k;
  throw ConfigError("unknown group '" + name + "' (natural, reversed, parity-negation)");
}

///////////////////////////////////////////
// Spec
///////////////////////////////////////////

ExperimentSpec::ExperimentSpec()
{
  // Desk-scale defaults: a 9-run transformer experiment fits in ~15 minutes on one core.
  training.total_steps = 800;
  training.peak_lr = 1e-3;
  training.batch_size = 64;
}

ModelConfig ExperimentSpec::model_config(Index vocab, std::uint64_t run) const
{
  if (arch == Architecture::Transformer)
  {
    TransformerConfig c = transformer;
    c.vocab = vocab;
    c.seed = run;
    return c;
  }
  LstmConfig c = lstm;
  c.vocab = vocab;
  c.seed = run;
  return c;
}

void ExperimentSpec::validate() const
{
  training.validate();
  if (groups.empty()) throw ConfigError("at least one group is required");
  for (std::size_t i = 0; i < groups.size(); ++i)
    for (std::size_t j = i + 1; j < groups.size(); ++j)
      if (groups[i] == groups[j]) throw ConfigError("group '" + group_name(groups[i]) + "' listed twice");
  if (compare && groups.size() > 1 &&
      std::find(groups.begin(), groups.end(), TransformKind::Identity) == groups.end())
    throw ConfigError("comparisons need the natural group");
  if (seeds.empty()) throw ConfigError("at least one seed is required");
  for (std::size_t i = 0; i < seeds.size(); ++i)
    for (std::size_t j = i + 1; j < seeds.size(); ++j)
      if (seeds[i] == seeds[j]) throw ConfigError("seed " + std::to_string(seeds[i]) + " listed twice");
  if (corpus == CorpusSource::External && corpus_path.empty())
    throw ConfigError("external corpus needs corpus.path");
  if (corpus == CorpusSource::Generated && sentences < 2) throw ConfigError("corpus.sentences must be at least 2");
  if (!(heldout_fraction > 0.0 && heldout_fraction < 1.0)) throw ConfigError("heldout must be in (0, 1)");
  if (!(window_fraction >= 0.0 && window_fraction < 1.0)) throw ConfigError("window must be in [0, 1)");
  if (threads < 1) throw ConfigError("threads must be at least 1");
  if (output.empty()) throw ConfigError("output must not be empty");
  if (arch == Architecture::Transformer)
  {
    TransformerConfig probe = transformer;
    probe.vocab = 8;
    probe.validate();
    if (training.grouping == SequenceGrouping::Pack && training.pack_length > transformer.max_seq)
      throw ConfigError("train.pack_length exceeds transformer.max_seq");
  }
  else
  {
    LstmConfig probe = lstm;
    probe.vocab = 8;
    probe.validate();
  }
}

void apply_preset(ExperimentSpec& spec, const std::string& id)
{
  if (id == "custom")
  {
    spec.experiment = id;
    return;
  }
  if (id != "1" && id != "2" && id != "3" && id != "4")
    throw ConfigError("unknown experiment '" + id + "' (1, 2, 3, 4 or custom)");
  spec.experiment = id;
  const bool external = id == "2" || id == "4";
  spec.corpus = external ? CorpusSource::External : CorpusSource::Generated;
  spec.arch = (id == "1" || id == "2") ? Architecture::Transformer : Architecture::Lstm;
  spec.training.grouping = external ? SequenceGrouping::Pack : SequenceGrouping::PerSentence;
}

namespace {

std::string trim(std::string_view s)
{
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(const std::string& value)
{
  std::vector<std::string> out;
  std::stringstream ss(value);
  for (std::string item; std::getline(ss, item, ',');)
  {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* want)
{
  throw ConfigError("bad value '" + value + "' for " + key + " (expected " + want + ")");
}

template <class Int>
Int to_int(const std::string& key, const std::string& value)
{
  Int v{};
  auto [end, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (ec != std::errc() || end != value.data() + value.size()) bad_value(key, value, "an integer");
  return v;
}

double to_real(const std::string& key, const std::string& value)
{
  double v = 0.0;
  auto [end, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (ec != std::errc() || end != value.data() + value.size() || !std::isfinite(v))
    bad_value(key, value, "a number");
  return v;
}

bool to_bool(const std::string& key, const std::string& value)
{
  if (value == "true" || value == "yes" || value == "1") return true;
  if (value == "false" || value == "no" || value == "0") return false;
  bad_value(key, value, "true or false");
}

std::string real_text(double v)
{
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  (void)ec;
  return std::string(buf, end);
}

} // namespace

void apply_setting(ExperimentSpec& s, const std::string& key, const std::string& value)
{
  auto& t = s.training;
  if (key == "experiment") apply_preset(s, value);
  else if (key == "corpus")
  {
    if (value == "generated") s.corpus = CorpusSource::Generated;
    else if (value == "external") s.corpus = CorpusSource::External;
    else bad_value(key, value, "generated or external");
  }
  else if (key == "corpus.path") s.corpus_path = value;
  else if (key == "corpus.sentences") s.sentences = to_int<std::size_t>(key, value);
  else if (key == "groups")
  {
    s.groups.clear();
    for (const auto& g : split_list(value)) s.groups.push_back(parse_group(g));
  }
  else if (key == "arch")
  {
    auto a = parse_architecture(value);
    if (!a) bad_value(key, value, "transformer or lstm");
    s.arch = *a;
  }
  else if (key == "seed") s.seed = to_int<std::uint64_t>(key, value);
  else if (key == "seeds")
  {
    s.seeds.clear();
    for (const auto& v : split_list(value)) s.seeds.push_back(to_int<std::uint64_t>(key, v));
  }
  else if (key == "heldout") s.heldout_fraction = to_real(key, value);
  else if (key == "window") s.window_fraction = to_real(key, value);
  else if (key == "compare") s.compare = to_bool(key, value);
  else if (key == "output") s.output = value;
  else if (key == "threads") s.threads = to_int<unsigned>(key, value);
  else if (key == "checkpoints") s.save_checkpoints = to_bool(key, value);
  else if (key == "train.steps") t.total_steps = to_int<long>(key, value);
  else if (key == "train.warmup") t.warmup_fraction = to_real(key, value);
  else if (key == "train.lr") t.peak_lr = to_real(key, value);
  else if (key == "train.batch") t.batch_size = to_int<long>(key, value);
  else if (key == "train.grouping")
  {
    if (value == "per-sentence") t.grouping = SequenceGrouping::PerSentence;
    else if (value == "pack") t.grouping = SequenceGrouping::Pack;
    else bad_value(key, value, "per-sentence or pack");
  }
  else if (key == "train.pack_length") t.pack_length = to_int<long>(key, value);
  else if (key == "train.eval_every") t.eval_every = to_int<long>(key, value);
  else if (key == "train.beta1") t.beta1 = to_real(key, value);
  else if (key == "train.beta2") t.beta2 = to_real(key, value);
  else if (key == "train.eps") t.eps = to_real(key, value);
  else if (key == "train.weight_decay") t.weight_decay = to_real(key, value);
  else if (key == "transformer.layers") s.transformer.layers = to_int<Index>(key, value);
  else if (key == "transformer.dim") s.transformer.model_dim = to_int<Index>(key, value);
  else if (key == "transformer.heads") s.transformer.heads = to_int<Index>(key, value);
  else if (key == "transformer.ff") s.transformer.ff_dim = to_int<Index>(key, value);
  else if (key == "transformer.max_seq") s.transformer.max_seq = to_int<Index>(key, value);
  else if (key == "transformer.tie") s.transformer.tie_weights = to_bool(key, value);
  else if (key == "transformer.dropout") s.transformer.dropout = to_real(key, value);
  else if (key == "lstm.layers") s.lstm.layers = to_int<Index>(key, value);
  else if (key == "lstm.embed") s.lstm.embed_dim = to_int<Index>(key, value);
  else if (key == "lstm.hidden") s.lstm.hidden_dim = to_int<Index>(key, value);
  else if (key == "lstm.dropout") s.lstm.dropout = to_real(key, value);
  else throw ConfigError("unknown key '" + key + "'");
}

ExperimentSpec parse_spec(std::istream& in)
{
  std::vector<std::pair<std::string, std::string>> settings;
  std::string line;
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno)
  {
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("spec line " + std::to_string(lineno) + ": expected key = value");
    settings.emplace_back(trim(std::string_view(line).substr(0, eq)), trim(std::string_view(line).substr(eq + 1)));
  }

  ExperimentSpec spec;
  for (const auto& [k, v] : settings)
    if (k == "experiment") apply_preset(spec, v);
  for (const auto& [k, v] : settings)
    if (k != "experiment") apply_setting(spec, k, v);
  return spec;
}

ExperimentSpec load_spec(const fs::path& path)
{
  std::ifstream in(path);
  if (!in) throw InputError("cannot read spec file " + path.string());
  return parse_spec(in);
}

void write_spec(std::ostream& out, const ExperimentSpec& s)
{
  const auto& t = s.training;
  auto list = [](const auto& items, auto&& fn) {
    std::string r;
    for (const auto& i : items) r += (r.empty() ? "" : ",") + fn(i);
    return r;
  };
  out << "experiment = " << s.experiment << '\n'
      << "corpus = " << (s.corpus == CorpusSource::Generated ? "generated" : "external") << '\n';
  if (!s.corpus_path.empty()) out << "corpus.path = " << s.corpus_path << '\n';
  out << "corpus.sentences = " << s.sentences << '\n'
      << "groups = " << list(s.groups, group_name) << '\n'
      << "arch = " << to_string(s.arch) << '\n'
      << "seed = " << s.seed << '\n'
      << "seeds = " << list(s.seeds, [](std::uint64_t v) { return std::to_string(v); }) << '\n'
      << "heldout = " << real_text(s.heldout_fraction) << '\n'
      << "window = " << real_text(s.window_fraction) << '\n'
      << "compare = " << (s.compare ? "true" : "false") << '\n'
      << "output = " << s.output << '\n'
      << "threads = " << s.threads << '\n'
      << "checkpoints = " << (s.save_checkpoints ? "true" : "false") << '\n'
      << "train.steps = " << t.total_steps << '\n'
      << "train.warmup = " << real_text(t.warmup_fraction) << '\n'
      << "train.lr = " << real_text(t.peak_lr) << '\n'
      << "train.batch = " << t.batch_size << '\n'
      << "train.grouping = " << (t.grouping == SequenceGrouping::Pack ? "pack" : "per-sentence") << '\n'
      << "train.pack_length = " << t.pack_length << '\n'
      << "train.eval_every = " << t.eval_every << '\n'
      << "train.beta1 = " << real_text(t.beta1) << '\n'
      << "train.beta2 = " << real_text(t.beta2) << '\n'
      << "train.eps = " << real_text(t.eps) << '\n'
      << "train.weight_decay = " << real_text(t.weight_decay) << '\n'
      << "transformer.layers = " << s.transformer.layers << '\n'
      << "transformer.dim = " << s.transformer.model_dim << '\n'
      << "transformer.heads = " << s.transformer.heads << '\n'
      << "transformer.ff = " << s.transformer.ff_dim << '\n'
      << "transformer.max_seq = " << s.transformer.max_seq << '\n'
      << "transformer.tie = " << (s.transformer.tie_weights ? "true" : "false") << '\n'
      << "transformer.dropout = " << real_text(s.transformer.dropout) << '\n'
      << "lstm.layers = " << s.lstm.layers << '\n'
      << "lstm.embed = " << s.lstm.embed_dim << '\n'
      << "lstm.hidden = " << s.lstm.hidden_dim << '\n'
      << "lstm.dropout = " << real_text(s.lstm.dropout) << '\n';
}

std::uint64_t run_seed(std::uint64_t seed, std::uint64_t replicate)
{
  return Random::mix(seed, 0x5EED0000ULL + replicate);
}

///////////////////////////////////////////
// Corpus
///////////////////////////////////////////

std::vector<Sentence> load_corpus(const ExperimentSpec& spec)
{
  if (spec.corpus == CorpusSource::Generated)
  {
    GenerationConfig g;
    g.count = spec.sentences;
    g.seed = spec.seed;
    return generate_corpus(default_grammar(), g);
  }

  if (!fs::exists(spec.corpus_path)) throw InputError("corpus file not found: " + spec.corpus_path);
  std::ifstream in(spec.corpus_path);
  if (!in) throw InputError("cannot read corpus file " + spec.corpus_path);
  std::vector<Sentence> corpus;
  for (std::string line; std::getline(in, line);)
  {
    Sentence s = normalize_external(line);
    if (s.words.empty()) continue;
    if (std::find(s.words.begin(), s.words.end(), kNegationToken) != s.words.end()) continue;
    corpus.push_back(std::move(s));
  }
  if (corpus.size() < 2) throw InputError("corpus file " + spec.corpus_path + " has fewer than two sentences");
  return corpus;
}

Split split_corpus(const std::vector<Sentence>& corpus, double heldout_fraction, std::uint64_t seed)
{
  const std::size_t n = corpus.size();
  std::size_t held = static_cast<std::size_t>(std::llround(heldout_fraction * static_cast<double>(n)));
  held = std::clamp<std::size_t>(held, 1, n - 1);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Random rng(Random::mix(seed, 0x5B117ULL));
  rng.shuffle(order);
  std::vector<bool> is_held(n, false);
  for (std::size_t i = 0; i < held; ++i) is_held[order[i]] = true;

  Split s;
  for (std::size_t i = 0; i < n; ++i) (is_held[i] ? s.heldout : s.train).push_back(corpus[i]);
  return s;
}

///////////////////////////////////////////
// Experiment
///////////////////////////////////////////

namespace {

std::ofstream open_output(const fs::path& path, bool binary = false)
{
  std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
  if (!out) throw RuntimeError("cannot write " + path.string());
  return out;
}

void prepare_output(const fs::path& root)
{
  std::error_code ec;
  for (const char* sub : {"", "corpus", "vocab", "metrics", "checkpoints", "curves", "plots"})
  {
    fs::create_directories(root / sub, ec);
    if (ec) throw RuntimeError("output directory is not writable: " + root.string() + " (" + ec.message() + ")");
  }
  const fs::path probe = root / ".write-test";
  {
    std::ofstream out(probe);
    if (!out) throw RuntimeError("output directory is not writable: " + root.string());
  }
  fs::remove(probe, ec);
}

struct GroupData
{
  TransformKind kind;
  Vocabulary vocab;
  std::vector<EncodedSequence> train;
  std::vector<EncodedSequence> heldout;
  std::size_t train_sentences = 0;
  std::size_t heldout_sentences = 0;
};

std::vector<Sentence> transformed(TransformKind kind, const std::vector<Sentence>& in)
{
  std::vector<Sentence> out;
  out.reserve(in.size());
  for (const auto& s : in) out.push_back(apply_transform(kind, s));
  return out;
}

} // namespace

RunReport run_experiment(const ExperimentSpec& spec, std::ostream* log)
{
  spec.validate();
  const fs::path root(spec.output);
  prepare_output(root);
  {
    auto out = open_output(root / "spec.txt");
    write_spec(out, spec);
  }

  const Split split = split_corpus(load_corpus(spec), spec.heldout_fraction, spec.seed);

  std::vector<GroupData> groups;
  for (TransformKind kind : spec.groups)
  {
    const std::string name = group_name(kind);
    const auto train = transformed(kind, split.train);
    const auto heldout = transformed(kind, split.heldout);
    {
      auto out = open_output(root / "corpus" / (name + ".train.txt"));
      write_corpus(out, train);
      auto held = open_output(root / "corpus" / (name + ".heldout.txt"));
      write_corpus(held, heldout);
    }

    GroupData g{kind, Vocabulary::build(train), {}, {}, train.size(), heldout.size()};
    g.train = encode_corpus(g.vocab, train);
    g.heldout = encode_corpus(g.vocab, heldout);
    {
      auto out = open_output(root / "vocab" / (name + ".txt"));
      g.vocab.save(out);
    }

    if (spec.arch == Architecture::Transformer && spec.training.grouping == SequenceGrouping::PerSentence)
      for (const auto* part : {&g.train, &g.heldout})
        for (const auto& e : *part)
          if (static_cast<Index>(e.ids.size()) - 1 > spec.transformer.max_seq)
            throw ConfigError("group " + name + " has a sentence of " + std::to_string(e.ids.size() - 2) +
              " words; raise transformer.max_seq or use train.grouping = pack");
    groups.push_back(std::move(g));
  }

  struct Job
  {
    std::size_t group;
    std::size_t replicate;
  };
  std::vector<Job> jobs;
  for (std::size_t g = 0; g < groups.size(); ++g)
    for (std::size_t r = 0; r < spec.seeds.size(); ++r) jobs.push_back({g, r});

  std::vector<RunRecord> records(jobs.size());
  std::vector<std::exception_ptr> errors(jobs.size());
  std::atomic<std::size_t> next{0};
  std::mutex log_mutex;

  auto worker = [&] {
    for (std::size_t j; (j = next.fetch_add(1)) < jobs.size();)
    {
      try
      {
        const auto& g = groups[jobs[j].group];
        const std::string name = group_name(g.kind);
        const std::uint64_t seed = run_seed(spec.seed, spec.seeds[jobs[j].replicate]);

        TrainingConfig cfg = spec.training;
        cfg.seed = seed;
        auto model = init_model(spec.model_config(static_cast<Index>(g.vocab.size()), seed));
        auto result = train(std::move(model), g.train, cfg, name);

        RunRecord& rec = records[j];
        rec.group = name;
        rec.seed = spec.seeds[jobs[j].replicate];
        rec.series = std::move(result.series);
        rec.series.seed = rec.seed;
        rec.heldout = evaluate_perplexity(result.params, g.heldout, spec.training.batch_size);

        const std::string stem = name + ".seed" + std::to_string(rec.seed);
        rec.metrics_file = "metrics/" + stem + ".csv";
        {
          auto out = open_output(root / rec.metrics_file);
          write_metrics_csv(out, rec.series);
        }
        if (spec.save_checkpoints)
        {
          rec.checkpoint_file = "checkpoints/" + stem + ".ilck";
          auto out = open_output(root / rec.checkpoint_file, true);
          save_checkpoint(out, result.params);
        }
        if (log)
        {
          std::lock_guard lock(log_mutex);
          *log << to_string(spec.arch) << ' ' << name << " seed " << rec.seed << ": final loss "
               << rec.series.records.back().loss << ", held-out perplexity " << rec.heldout.perplexity << '\n';
        }
      }
      catch (...)
      {
        errors[j] = std::current_exception();
      }
    }
  };

  const unsigned n_threads = std::min<unsigned>(spec.threads, static_cast<unsigned>(jobs.size()));
  if (n_threads <= 1) worker();
  else
  {
    std::vector<std::thread> pool;
    for (unsigned i = 0; i < n_threads; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  RunReport report;
  report.experiment = spec.experiment;
  report.arch = spec.arch;
  report.seed = spec.seed;
  report.window_fraction = spec.window_fraction;
  for (std::size_t g = 0; g < groups.size(); ++g)
  {
    GroupResult res;
    res.group = group_name(groups[g].kind);
    res.vocab_size = groups[g].vocab.size();
    res.train_sentences = groups[g].train_sentences;
    res.heldout_sentences = groups[g].heldout_sentences;
    for (std::size_t j = 0; j < jobs.size(); ++j)
      if (jobs[j].group == g) res.runs.push_back(std::move(records[j]));
    summarize(res, spec.window_fraction);
    report.groups.push_back(std::move(res));
  }

  if (spec.compare)
  {
    auto window = [&](const GroupResult& g, Metric m) {
      std::vector<MetricSeries> runs;
      for (const auto& r : g.runs) runs.push_back(r.series);
      return stabilized_window(runs, spec.window_fraction, m);
    };
    for (const auto& g : report.groups)
    {
      if (g.group == "natural") continue;
      for (Metric m : {Metric::Loss, Metric::Perplexity})
      {
        const auto a = window(report.group("natural"), m);
        const auto b = window(g, m);
        report.comparisons.push_back({"natural", g.group, m, welch_t_test(a, b)});
      }
    }
  }

  emit_report(report, ReportFormat::Json, root);
  emit_report(report, ReportFormat::Text, root);
  return report;
}

} // namespace implang

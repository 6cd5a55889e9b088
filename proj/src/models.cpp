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

#include "implang/models.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>
#include <sstream>

namespace implang {

std::string to_string(Architecture arch)
{
  return arch == Architecture::Transformer ? "transformer" : "lstm";
}

std::optional<Architecture> parse_architecture(std::string_view name)
{
  if (name == "transformer") return Architecture::Transformer;
  if (name == "lstm") return Architecture::Lstm;
  return std::nullopt;
}

void TransformerConfig::validate() const
{
  if (layers <= 0 || model_dim <= 0 || heads <= 0 || ff_dim <= 0 || max_seq <= 0 || vocab <= 0)
    throw ConfigError("transformer dimensions must be positive");
  if (model_dim % heads != 0)
    throw ConfigError("model_dim " + std::to_string(model_dim) + " is not divisible by heads " +
      std::to_string(heads));
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must be in [0, 1)");
}

void LstmConfig::validate() const
{
  if (layers <= 0 || embed_dim <= 0 || hidden_dim <= 0 || vocab <= 0)
    throw ConfigError("lstm dimensions must be positive");
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must be in [0, 1)");
}

Architecture ModelParameters::architecture() const
{
  return std::holds_alternative<TransformerConfig>(config) ? Architecture::Transformer
                                                           : Architecture::Lstm;
}

Index ModelParameters::vocab() const
{
  return std::visit([](const auto& c) { return c.vocab; }, config);
}

std::size_t ModelParameters::count() const
{
  std::size_t n = 0;
  for (const auto& [name, t] : tensors) n += static_cast<std::size_t>(t.size());
  return n;
}

bool ModelParameters::all_finite() const
{
  for (const auto& [name, t] : tensors)
    if (!t.all_finite()) return false;
  return true;
}

std::size_t parameter_count(const TransformerConfig& c)
{
  const std::size_t D = c.model_dim, F = c.ff_dim, V = c.vocab, S = c.max_seq;
  const std::size_t block = 2 * D          // ln1
    + D * 3 * D + 3 * D                    // qkv
    + D * D + D                            // attention output
    + 2 * D                                // ln2
    + D * F + F + F * D + D;               // mlp
  return V * D + S * D + c.layers * block + 2 * D + (c.tie_weights ? 0 : D * V);
}

std::size_t parameter_count(const LstmConfig& c)
{
  const std::size_t E = c.embed_dim, H = c.hidden_dim, V = c.vocab;
  std::size_t n = V * E + H * V + V;
  for (Index l = 0; l < c.layers; ++l)
  {
    const std::size_t in = l == 0 ? E : H;
    n += (in + H) * 4 * H + 4 * H;
  }
  return n;
}

///////////////////////////////////////////
// Initialization
///////////////////////////////////////////

namespace {

std::string layer_name(Index l, const char* leaf)
{
  return "h" + std::to_string(l) + "." + leaf;
}

Tensor normal(Shape shape, double std, Random& rng)
{
  Tensor t(std::move(shape));
  for (Index i = 0; i < t.size(); ++i) t[i] = rng.normal(0.0, std);
  return t;
}

Tensor uniform(Shape shape, double bound, Random& rng)
{
  Tensor t(std::move(shape));
  for (Index i = 0; i < t.size(); ++i) t[i] = rng.uniform(-bound, bound);
  return t;
}

Tensor filled(Shape shape, double value)
{
  Tensor t(std::move(shape));
  t.matrix().setConstant(value);
  return t;
}

ModelParameters init_transformer(const TransformerConfig& c)
{
  c.validate();
  Random rng(c.seed);
  ModelParameters p{c, {}};
  auto& w = p.tensors;
  const Index D = c.model_dim, F = c.ff_dim;
  constexpr double std = 0.02;

  w["wte"] = normal({c.vocab, D}, std, rng);
  w["wpe"] = normal({c.max_seq, D}, std, rng);
  for (Index l = 0; l < c.layers; ++l)
  {
    w[layer_name(l, "ln1.g")] = filled({D}, 1.0);
    w[layer_name(l, "ln1.b")] = filled({D}, 0.0);
    w[layer_name(l, "attn.w_qkv")] = normal({D, 3 * D}, std, rng);
    w[layer_name(l, "attn.b_qkv")] = filled({3 * D}, 0.0);
    w[layer_name(l, "attn.w_out")] = normal({D, D}, std, rng);
    w[layer_name(l, "attn.b_out")] = filled({D}, 0.0);
    w[layer_name(l, "ln2.g")] = filled({D}, 1.0);
    w[layer_name(l, "ln2.b")] = filled({D}, 0.0);
    w[layer_name(l, "mlp.w_in")] = normal({D, F}, std, rng);
    w[layer_name(l, "mlp.b_in")] = filled({F}, 0.0);
    w[layer_name(l, "mlp.w_out")] = normal({F, D}, std, rng);
    w[layer_name(l, "mlp.b_out")] = filled({D}, 0.0);
  }
  w["ln_f.g"] = filled({D}, 1.0);
  w["ln_f.b"] = filled({D}, 0.0);
  if (!c.tie_weights) w["w_head"] = normal({D, c.vocab}, std, rng);
  return p;
}

ModelParameters init_lstm(const LstmConfig& c)
{
  c.validate();
  Random rng(c.seed);
  ModelParameters p{c, {}};
  auto& w = p.tensors;
  const Index H = c.hidden_dim;
  const double bound = 1.0 / std::sqrt(static_cast<double>(H));

  w["embed"] = uniform({c.vocab, c.embed_dim}, bound, rng);
  for (Index l = 0; l < c.layers; ++l)
  {
    const Index in = l == 0 ? c.embed_dim : H;
    w["lstm" + std::to_string(l) + ".w"] = uniform({in + H, 4 * H}, bound, rng);
    Tensor b({4 * H});
    b.matrix().middleCols(H, H).setConstant(1.0); // gate order i, f, g, o
    w["lstm" + std::to_string(l) + ".b"] = std::move(b);
  }
  w["head.w"] = uniform({H, c.vocab}, bound, rng);
  w["head.b"] = filled({c.vocab}, 0.0);
  return p;
}

} // namespace

ModelParameters init_model(const ModelConfig& config)
{
  return std::visit([](const auto& c) -> ModelParameters {
    if constexpr (std::is_same_v<std::decay_t<decltype(c)>, TransformerConfig>)
      return init_transformer(c);
    else
      return init_lstm(c);
  }, config);
}

///////////////////////////////////////////
// Batching
///////////////////////////////////////////

TokenBatch make_batch(std::span<const EncodedSequence> sequences)
{
  TokenBatch b;
  b.batch = static_cast<Index>(sequences.size());
  for (const auto& s : sequences)
  {
    if (s.ids.size() < 2) throw InputError("sequence shorter than two tokens cannot be batched");
    b.positions = std::max<Index>(b.positions, static_cast<Index>(s.ids.size()) - 1);
  }

  b.inputs.assign(static_cast<std::size_t>(b.batch * b.positions), kPad);
  b.targets.assign(b.inputs.size(), kPad);
  for (Index r = 0; r < b.batch; ++r)
  {
    const auto& ids = sequences[r].ids;
    for (std::size_t i = 0; i + 1 < ids.size(); ++i)
    {
      b.inputs[r * b.positions + i] = ids[i];
      b.targets[r * b.positions + i] = ids[i + 1];
    }
  }
  return b;
}

TokenBatch make_batch(const std::vector<EncodedSequence>& corpus,
  std::span<const std::size_t> indices)
{
  std::vector<EncodedSequence> picked;
  picked.reserve(indices.size());
  for (auto i : indices) picked.push_back(corpus.at(i));
  return make_batch(picked);
}

ParameterVars bind(Tape& tape, const ModelParameters& params)
{
  ParameterVars vars;
  for (const auto& [name, t] : params.tensors) vars.emplace(name, tape.variable(t));
  return vars;
}

///////////////////////////////////////////
// Forward passes
///////////////////////////////////////////

namespace {

const Var& get(const ParameterVars& vars, const std::string& name)
{
  auto it = vars.find(name);
  if (it == vars.end()) throw RuntimeError("model parameter '" + name + "' is missing");
  return it->second;
}

Var maybe_dropout(const Var& x, double p, Random* rng)
{
  return rng && p > 0.0 ? dropout(x, p, *rng) : x;
}

void check_ids(const TokenBatch& batch, Index vocab)
{
  for (int id : batch.inputs)
    if (id < 0 || id >= vocab)
      throw InputError("token id " + std::to_string(id) + " does not fit model vocabulary of " +
        std::to_string(vocab));
}

} // namespace

Var transformer_forward(Tape&, const ModelParameters& params,
  const ParameterVars& vars, const TokenBatch& batch, Random* rng)
{
  const auto& c = std::get<TransformerConfig>(params.config);
  const Index B = batch.batch, T = batch.positions, D = c.model_dim;
  if (T > c.max_seq)
    throw InputError("sequence of " + std::to_string(T) + " positions exceeds max_seq " +
      std::to_string(c.max_seq));
  check_ids(batch, c.vocab);

  std::vector<int> pos(static_cast<std::size_t>(B * T));
  for (Index i = 0; i < B * T; ++i) pos[i] = static_cast<int>(i % T);

  Var x = embedding_lookup(get(vars, "wte"), batch.inputs, {B, T}) +
          embedding_lookup(get(vars, "wpe"), pos, {B, T});
  x = maybe_dropout(x, c.dropout, rng);

  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(D / c.heads));
  for (Index l = 0; l < c.layers; ++l)
  {
    auto p = [&](const char* leaf) -> const Var& { return get(vars, layer_name(l, leaf)); };

    Var h = layer_norm(x, p("ln1.g"), p("ln1.b"));
    Var qkv = add_bias(matmul(h, p("attn.w_qkv")), p("attn.b_qkv"));
    Var q = split_heads(slice(qkv, 0, D), c.heads);
    Var k = split_heads(slice(qkv, D, D), c.heads);
    Var v = split_heads(slice(qkv, 2 * D, D), c.heads);

    Var att = softmax(causal_mask(batched_matmul(q, k, true) * inv_sqrt_d));
    Var ctx = merge_heads(batched_matmul(att, v), c.heads);
    x = x + maybe_dropout(add_bias(matmul(ctx, p("attn.w_out")), p("attn.b_out")), c.dropout, rng);

    h = layer_norm(x, p("ln2.g"), p("ln2.b"));
    Var ff = gelu(add_bias(matmul(h, p("mlp.w_in")), p("mlp.b_in")));
    x = x + maybe_dropout(add_bias(matmul(ff, p("mlp.w_out")), p("mlp.b_out")), c.dropout, rng);
  }

  x = layer_norm(x, get(vars, "ln_f.g"), get(vars, "ln_f.b"));
  return c.tie_weights ? matmul(x, transpose(get(vars, "wte")))
                       : matmul(x, get(vars, "w_head"));
}

Var lstm_forward(Tape& tape, const ModelParameters& params,
  const ParameterVars& vars, const TokenBatch& batch, Random* rng)
{
  const auto& c = std::get<LstmConfig>(params.config);
  const Index B = batch.batch, T = batch.positions, H = c.hidden_dim;
  check_ids(batch, c.vocab);

  std::vector<Var> h(static_cast<std::size_t>(c.layers)), cell(h.size());
  for (auto& v : h) v = tape.constant(Tensor({B, H}));
  for (auto& v : cell) v = tape.constant(Tensor({B, H}));

  std::vector<Var> outputs;
  outputs.reserve(static_cast<std::size_t>(T));
  std::vector<int> ids(static_cast<std::size_t>(B));
  for (Index t = 0; t < T; ++t)
  {
    for (Index b = 0; b < B; ++b) ids[b] = batch.inputs[b * T + t];
    Var x = maybe_dropout(embedding_lookup(get(vars, "embed"), ids, {B}), c.dropout, rng);

    for (Index l = 0; l < c.layers; ++l)
    {
      const std::string prefix = "lstm" + std::to_string(l);
      const Var in[] = {x, h[l]};
      Var z = add_bias(matmul(concat(in), get(vars, prefix + ".w")), get(vars, prefix + ".b"));
      Var i_gate = sigmoid(slice(z, 0, H));
      Var f_gate = sigmoid(slice(z, H, H));
      Var g_gate = tanh(slice(z, 2 * H, H));
      Var o_gate = sigmoid(slice(z, 3 * H, H));
      cell[l] = f_gate * cell[l] + i_gate * g_gate;
      h[l] = o_gate * tanh(cell[l]);
      x = h[l];
    }
    outputs.push_back(maybe_dropout(x, c.dropout, rng));
  }

  Var seq = stack_steps(outputs);
  return add_bias(matmul(seq, get(vars, "head.w")), get(vars, "head.b"));
}

Var forward(Tape& tape, const ModelParameters& params,
  const ParameterVars& vars, const TokenBatch& batch, Random* rng)
{
  return params.architecture() == Architecture::Transformer
    ? transformer_forward(tape, params, vars, batch, rng)
    : lstm_forward(tape, params, vars, batch, rng);
}

namespace {

ParameterVars bind_constants(Tape& tape, const ModelParameters& params)
{
  ParameterVars vars;
  for (const auto& [name, t] : params.tensors) vars.emplace(name, tape.constant(t));
  return vars;
}

} // namespace

Tensor transformer_forward(const ModelParameters& params, const TokenBatch& batch)
{
  Tape tape;
  return transformer_forward(tape, params, bind_constants(tape, params), batch).value();
}

Tensor lstm_forward(const ModelParameters& params, const TokenBatch& batch)
{
  Tape tape;
  return lstm_forward(tape, params, bind_constants(tape, params), batch).value();
}

Tensor logits(const ModelParameters& params, const TokenBatch& batch)
{
  Tape tape;
  return forward(tape, params, bind_constants(tape, params), batch).value();
}

///////////////////////////////////////////
// Checkpoints
///////////////////////////////////////////

namespace {

constexpr char kMagic[4] = {'I', 'L', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& out, T v)
{
  static_assert(std::is_integral_v<T> || std::is_same_v<T, double>);
  std::uint64_t bits = 0;
  if constexpr (std::is_same_v<T, double>) bits = std::bit_cast<std::uint64_t>(v);
  else bits = static_cast<std::uint64_t>(v);
  for (std::size_t i = 0; i < sizeof(T); ++i)
    out.put(static_cast<char>((bits >> (8 * i)) & 0xff));
}

template <typename T>
T take(std::istream& in)
{
  std::uint64_t bits = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i)
  {
    const int c = in.get();
    if (c == std::char_traits<char>::eof()) throw InputError("checkpoint: unexpected end of file");
    bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(c)) << (8 * i);
  }
  if constexpr (std::is_same_v<T, double>) return std::bit_cast<double>(bits);
  else return static_cast<T>(bits);
}

void put_string(std::ostream& out, const std::string& s)
{
  put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string take_string(std::istream& in)
{
  const auto n = take<std::uint32_t>(in);
  if (n > (1u << 20)) throw InputError("checkpoint: implausible string length");
  std::string s(n, '\0');
  if (!in.read(s.data(), n)) throw InputError("checkpoint: unexpected end of file");
  return s;
}

std::string format_double(double v)
{
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

std::map<std::string, std::string> config_entries(const ModelConfig& config)
{
  std::map<std::string, std::string> kv;
  std::visit([&](const auto& c) {
    using C = std::decay_t<decltype(c)>;
    kv["layers"] = std::to_string(c.layers);
    kv["vocab"] = std::to_string(c.vocab);
    kv["seed"] = std::to_string(c.seed);
    kv["dropout"] = format_double(c.dropout);
    if constexpr (std::is_same_v<C, TransformerConfig>)
    {
      kv["model_dim"] = std::to_string(c.model_dim);
      kv["heads"] = std::to_string(c.heads);
      kv["ff_dim"] = std::to_string(c.ff_dim);
      kv["max_seq"] = std::to_string(c.max_seq);
      kv["tie_weights"] = c.tie_weights ? "1" : "0";
    }
    else
    {
      kv["embed_dim"] = std::to_string(c.embed_dim);
      kv["hidden_dim"] = std::to_string(c.hidden_dim);
    }
  }, config);
  return kv;
}

Index entry(const std::map<std::string, std::string>& kv, const std::string& key)
{
  auto it = kv.find(key);
  if (it == kv.end()) throw InputError("checkpoint: config key '" + key + "' missing");
  return std::stoll(it->second);
}

} // namespace

void save_checkpoint(std::ostream& out, const ModelParameters& params)
{
  out.write(kMagic, 4);
  put<std::uint32_t>(out, kVersion);
  put_string(out, to_string(params.architecture()));

  const auto kv = config_entries(params.config);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(kv.size()));
  for (const auto& [k, v] : kv)
  {
    put_string(out, k);
    put_string(out, v);
  }

  put<std::uint32_t>(out, static_cast<std::uint32_t>(params.tensors.size()));
  for (const auto& [name, t] : params.tensors)
  {
    put_string(out, name);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (Index d : t.shape()) put<std::uint64_t>(out, static_cast<std::uint64_t>(d));
    for (Index i = 0; i < t.size(); ++i) put<double>(out, t[i]);
  }
  if (!out) throw RuntimeError("checkpoint: write failed");
}

ModelParameters load_checkpoint(std::istream& in)
{
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
    throw InputError("checkpoint: bad magic");
  if (take<std::uint32_t>(in) != kVersion) throw InputError("checkpoint: unsupported version");

  const auto arch = parse_architecture(take_string(in));
  if (!arch) throw InputError("checkpoint: unknown architecture tag");

  std::map<std::string, std::string> kv;
  for (auto n = take<std::uint32_t>(in); n > 0; --n)
  {
    auto k = take_string(in);
    kv[k] = take_string(in);
  }

  ModelParameters p;
  if (*arch == Architecture::Transformer)
  {
    TransformerConfig c;
    c.layers = entry(kv, "layers");
    c.model_dim = entry(kv, "model_dim");
    c.heads = entry(kv, "heads");
    c.ff_dim = entry(kv, "ff_dim");
    c.max_seq = entry(kv, "max_seq");
    c.vocab = entry(kv, "vocab");
    c.seed = std::stoull(kv.at("seed"));
    c.tie_weights = entry(kv, "tie_weights") != 0;
    c.dropout = std::stod(kv.at("dropout"));
    c.validate();
    p.config = c;
  }
  else
  {
    LstmConfig c;
    c.layers = entry(kv, "layers");
    c.embed_dim = entry(kv, "embed_dim");
    c.hidden_dim = entry(kv, "hidden_dim");
    c.vocab = entry(kv, "vocab");
    c.seed = std::stoull(kv.at("seed"));
    c.dropout = std::stod(kv.at("dropout"));
    c.validate();
    p.config = c;
  }

  for (auto n = take<std::uint32_t>(in); n > 0; --n)
  {
    auto name = take_string(in);
    const auto rank = take<std::uint32_t>(in);
    if (rank > 8) throw InputError("checkpoint: implausible rank for '" + name + "'");
    Shape shape(rank);
    for (auto& d : shape) d = static_cast<Index>(take<std::uint64_t>(in));
    Tensor t(shape);
    for (Index i = 0; i < t.size(); ++i) t[i] = take<double>(in);
    p.tensors.emplace(std::move(name), std::move(t));
  }

  const auto expected = init_model(p.config);
  for (const auto& [name, t] : expected.tensors)
  {
    auto it = p.tensors.find(name);
    if (it == p.tensors.end() || it->second.shape() != t.shape())
      throw InputError("checkpoint: tensor '" + name + "' missing or mis-shaped");
  }
  return p;
}

} // namespace implang

#include "vld/captioner/model.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <set>

#include "vld/tensor/checkpoint.hpp"
#include "vld/tensor/errors.hpp"

namespace vld::captioner {

using features::Channel;
using features::FeatureSequence;
using features::RegionFeaturizerKind;
using nlohmann::json;

void CaptionerConfig::validate() const {
  if (num_layers == 0) throw ConfigError("captioner: num_layers must be positive");
  if (num_heads == 0 || d_model == 0 || d_model % num_heads != 0) {
    throw ConfigError("captioner: d_model " + std::to_string(d_model) + " is not divisible by num_heads " +
                      std::to_string(num_heads));
  }
  if (d_ff == 0) throw ConfigError("captioner: d_ff must be positive");
  if (beam_width == 0) throw ConfigError("captioner: beam_width must be at least 1");
  if (max_decode_len == 0) throw ConfigError("captioner: max_decode_len must be positive");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ConfigError("captioner: dropout_rate must be in [0,1)");
  if (frcnn_bottleneck == 0) throw ConfigError("captioner: frcnn_bottleneck must be positive");
  if (vocab_size < 5) throw ConfigError("captioner: vocabulary needs at least one token beyond the reserved four");
  channels.validate();
}

json to_json(const CaptionerConfig& c) {
  json j;
  j["num_layers"] = c.num_layers;
  j["num_heads"] = c.num_heads;
  j["d_model"] = c.d_model;
  j["d_ff"] = c.d_ff;
  j["use_positional_encoding"] = c.use_positional_encoding;
  j["decoder_positional_encoding"] = c.decoder_positional_encoding;
  j["beam_width"] = c.beam_width;
  j["max_decode_len"] = c.max_decode_len;
  j["dropout_rate"] = c.dropout_rate;
  j["frcnn_bottleneck"] = c.frcnn_bottleneck;
  j["condition"] = c.channels.condition_name();
  j["k_max"] = c.channels.k_max;
  j["b_score_threshold"] = c.channels.b_score_threshold;
  j["l_max"] = c.channels.l_max;
  j["vocab_size"] = c.vocab_size;
  return j;
}

namespace {

template <typename V>
void read_field(const json& j, const char* key, V& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<V>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("captioner config: bad value for '") + key + "': " + e.what());
  }
}

}  // namespace

CaptionerConfig captioner_config_from_json(const json& j) {
  static const std::set<std::string> known = {
      "num_layers",   "num_heads",  "d_model",         "d_ff",          "use_positional_encoding",
      "decoder_positional_encoding", "beam_width", "max_decode_len", "dropout_rate", "frcnn_bottleneck",
      "condition",    "k_max",      "b_score_threshold", "l_max",       "vocab_size"};
  if (!j.is_object()) throw ConfigError("captioner config must be a JSON object");
  for (const auto& [k, _] : j.items()) {
    if (!known.count(k)) throw ConfigError("captioner config: unknown key '" + k + "'");
  }
  CaptionerConfig c;
  read_field(j, "num_layers", c.num_layers);
  read_field(j, "num_heads", c.num_heads);
  read_field(j, "d_model", c.d_model);
  read_field(j, "d_ff", c.d_ff);
  read_field(j, "use_positional_encoding", c.use_positional_encoding);
  read_field(j, "decoder_positional_encoding", c.decoder_positional_encoding);
  read_field(j, "beam_width", c.beam_width);
  read_field(j, "max_decode_len", c.max_decode_len);
  read_field(j, "dropout_rate", c.dropout_rate);
  read_field(j, "frcnn_bottleneck", c.frcnn_bottleneck);
  if (j.contains("condition")) {
    if (!j["condition"].is_string()) throw ConfigError("captioner config: condition must be a string");
    c.channels = features::parse_condition(j["condition"].get<std::string>());
  }
  read_field(j, "k_max", c.channels.k_max);
  read_field(j, "b_score_threshold", c.channels.b_score_threshold);
  read_field(j, "l_max", c.channels.l_max);
  read_field(j, "vocab_size", c.vocab_size);
  return c;
}

template <typename T>
Tensor<T> sinusoidal_positions(std::size_t rows, std::size_t d) {
  Tensor<T> pe({rows, d});
  for (std::size_t pos = 0; pos < rows; ++pos) {
    for (std::size_t i = 0; i < d; ++i) {
      const double freq = std::pow(10000.0, -static_cast<double>(i - i % 2) / static_cast<double>(d));
      const double angle = static_cast<double>(pos) * freq;
      pe.at(pos, i) = static_cast<T>(i % 2 == 0 ? std::sin(angle) : std::cos(angle));
    }
  }
  return pe;
}

template <typename T>
CaptionerModel<T>::CaptionerModel(const CaptionerConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  std::mt19937_64 rng(seed);
  build(rng);
}

template <typename T>
CaptionerModel<T>::CaptionerModel(const CaptionerConfig& config, ParameterSet<T> params) : config_(config) {
  config_.validate();
  std::mt19937_64 rng(0);
  build(rng);
  params_.assign_from(params);
}

template <typename T>
typename CaptionerModel<T>::Linear CaptionerModel<T>::add_linear(std::mt19937_64& rng, const std::string& name,
                                                                 std::size_t in, std::size_t out, bool zero) {
  Tensor<T> w({in, out});
  if (!zero) {
    const double a = std::sqrt(6.0 / static_cast<double>(in + out));
    std::uniform_real_distribution<double> u(-a, a);
    for (auto& x : w.data()) x = static_cast<T>(u(rng));
  }
  Linear l;
  l.w = params_.add(name + ".w", std::move(w)).index;
  l.b = params_.add(name + ".b", Tensor<T>({out})).index;
  return l;
}

template <typename T>
typename CaptionerModel<T>::Norm CaptionerModel<T>::add_norm(const std::string& name) {
  Norm n;
  n.gain = params_.add(name + ".gain", Tensor<T>({config_.d_model}, std::vector<T>(config_.d_model, T{1}))).index;
  n.bias = params_.add(name + ".bias", Tensor<T>({config_.d_model})).index;
  return n;
}

template <typename T>
void CaptionerModel<T>::build(std::mt19937_64& rng) {
  const std::size_t d = config_.d_model;
  const auto& ch = config_.channels;
  if (ch.use_global) proj_g_ = add_linear(rng, "proj.G", features::kGlobalDim, d);
  if (ch.use_boxes) {
    if (ch.b_featurizer == RegionFeaturizerKind::frcnn_style) {
      proj_b_bottleneck_ = add_linear(rng, "proj.B.bottleneck", features::kFrcnnDim, config_.frcnn_bottleneck);
      proj_b_ = add_linear(rng, "proj.B", config_.frcnn_bottleneck, d);
    } else {
      proj_b_ = add_linear(rng, "proj.B", features::kUltraDim, d);
    }
  }
  if (ch.use_labels) proj_l_ = add_linear(rng, "proj.L", features::kLabelDim, d);
  {
    Tensor<T> e({1, d});
    std::normal_distribution<double> n(0.0, 1.0);
    for (auto& x : e.data()) x = static_cast<T>(n(rng));
    empty_token_ = params_.add("enc.empty_token", std::move(e)).index;
  }

  auto attention = [&](const std::string& name) {
    Attention a;
    a.q = add_linear(rng, name + ".q", d, d);
    a.k = add_linear(rng, name + ".k", d, d);
    a.v = add_linear(rng, name + ".v", d, d);
    a.o = add_linear(rng, name + ".o", d, d);
    return a;
  };
  for (std::size_t l = 0; l < config_.num_layers; ++l) {
    const std::string p = "enc." + std::to_string(l);
    EncoderLayer layer;
    layer.self = attention(p + ".self");
    layer.n1 = add_norm(p + ".norm1");
    layer.ff1 = add_linear(rng, p + ".ff1", d, config_.d_ff);
    layer.ff2 = add_linear(rng, p + ".ff2", config_.d_ff, d);
    layer.n2 = add_norm(p + ".norm2");
    encoder_.push_back(layer);
  }

  {
    Tensor<T> emb({config_.vocab_size, d});
    std::normal_distribution<double> n(0.0, 1.0);
    for (auto& x : emb.data()) x = static_cast<T>(n(rng));
    embedding_ = params_.add("dec.embedding", std::move(emb)).index;
  }
  for (std::size_t l = 0; l < config_.num_layers; ++l) {
    const std::string p = "dec." + std::to_string(l);
    DecoderLayer layer;
    layer.self = attention(p + ".self");
    layer.n1 = add_norm(p + ".norm1");
    layer.cross = attention(p + ".cross");
    layer.n2 = add_norm(p + ".norm2");
    layer.ff1 = add_linear(rng, p + ".ff1", d, config_.d_ff);
    layer.ff2 = add_linear(rng, p + ".ff2", config_.d_ff, d);
    layer.n3 = add_norm(p + ".norm3");
    decoder_.push_back(layer);
  }
  // Zero-initialized so a fresh model predicts the uniform distribution.
  output_ = add_linear(rng, "dec.output", d, config_.vocab_size, true);
}

template <typename T>
Var<T> CaptionerModel<T>::apply(Tape<T>& tape, const Linear& l, Var<T> x) const {
  return ops::linear(x, tape.parameter(params_[l.w]), tape.parameter(params_[l.b]));
}

template <typename T>
Var<T> CaptionerModel<T>::apply(Tape<T>& tape, const Norm& n, Var<T> x) const {
  return ops::layer_norm(x, tape.parameter(params_[n.gain]), tape.parameter(params_[n.bias]));
}

template <typename T>
Var<T> CaptionerModel<T>::attend(Tape<T>& tape, const Attention& a, Var<T> q_in, Var<T> kv_in, bool causal,
                                 std::vector<ops::AttentionTrace>* trace) const {
  ops::AttentionOptions o;
  o.heads = config_.num_heads;
  o.causal = causal;
  o.trace = trace;
  auto mixed = ops::multi_head_attention(apply(tape, a.q, q_in), apply(tape, a.k, kv_in), apply(tape, a.v, kv_in), o);
  return apply(tape, a.o, mixed);
}

template <typename T>
Var<T> CaptionerModel<T>::feed_forward(Tape<T>& tape, const Linear& l1, const Linear& l2, Var<T> x) const {
  return apply(tape, l2, ops::relu(apply(tape, l1, x)));
}

template <typename T>
Var<T> CaptionerModel<T>::drop(Var<T> x, const ForwardOptions& opt) const {
  if (!opt.dropout_rng || config_.dropout_rate == 0.0) return x;
  return ops::dropout(x, config_.dropout_rate, *opt.dropout_rng);
}

template <typename T>
Var<T> CaptionerModel<T>::project_channels(Tape<T>& tape, const FeatureSequence& seq) const {
  if (seq.tokens.empty()) return tape.parameter(params_[empty_token_]);
  std::vector<Var<T>> blocks;
  std::size_t i = 0;
  while (i < seq.tokens.size()) {
    const Channel c = seq.tokens[i].channel;
    std::size_t j = i;
    while (j < seq.tokens.size() && seq.tokens[j].channel == c) ++j;
    const std::size_t dim = seq.tokens[i].vector.size();

    const std::optional<Linear>* first = nullptr;
    std::size_t expect = 0;
    switch (c) {
      case Channel::global:
        first = &proj_g_;
        expect = features::kGlobalDim;
        break;
      case Channel::box:
        first = proj_b_bottleneck_ ? &proj_b_bottleneck_ : &proj_b_;
        expect = features::feature_dim(config_.channels.b_featurizer);
        break;
      case Channel::label:
        first = &proj_l_;
        expect = features::kLabelDim;
        break;
    }
    if (!*first) {
      throw ConfigError(std::string("captioner has no projection for channel ") + features::channel_letter(c) +
                        " (model condition " + config_.channels.condition_name() + ")");
    }
    Tensor<T> block({j - i, dim});
    for (std::size_t r = i; r < j; ++r) {
      const auto& v = seq.tokens[r].vector;
      if (v.size() != expect) {
        throw DimensionError(std::string("channel ") + features::channel_letter(c) + " token has " +
                             std::to_string(v.size()) + " values, projection expects " + std::to_string(expect));
      }
      for (std::size_t k = 0; k < dim; ++k) block.at(r - i, k) = static_cast<T>(v[k]);
    }
    auto x = apply(tape, **first, tape.constant(std::move(block)));
    if (c == Channel::box && proj_b_bottleneck_) x = apply(tape, *proj_b_, x);
    blocks.push_back(x);
    i = j;
  }
  return blocks.size() == 1 ? blocks.front() : ops::concat_rows(blocks);
}

template <typename T>
Var<T> CaptionerModel<T>::encode(Tape<T>& tape, Var<T> inputs, const ForwardOptions& opt) const {
  Var<T> x = inputs;
  if (config_.use_positional_encoding) {
    x = ops::add(x, tape.constant(sinusoidal_positions<T>(x.rows(), config_.d_model)));
  }
  x = drop(x, opt);
  for (const auto& layer : encoder_) {
    x = apply(tape, layer.n1, ops::add(x, drop(attend(tape, layer.self, x, x, false, opt.encoder_trace), opt)));
    x = apply(tape, layer.n2, ops::add(x, drop(feed_forward(tape, layer.ff1, layer.ff2, x), opt)));
  }
  return x;
}

template <typename T>
Var<T> CaptionerModel<T>::decoder_logits(Tape<T>& tape, Var<T> memory, const std::vector<std::size_t>& inputs,
                                         const ForwardOptions& opt) const {
  if (inputs.empty()) throw DataError("decoder input is empty");
  for (auto t : inputs) {
    if (t >= config_.vocab_size) {
      throw DataError("token id " + std::to_string(t) + " outside vocabulary of size " +
                      std::to_string(config_.vocab_size));
    }
  }
  Var<T> y = ops::gather_rows(tape.parameter(params_[embedding_]), std::span<const std::size_t>(inputs));
  if (config_.decoder_positional_encoding) {
    y = ops::add(y, tape.constant(sinusoidal_positions<T>(inputs.size(), config_.d_model)));
  }
  y = drop(y, opt);
  for (const auto& layer : decoder_) {
    y = apply(tape, layer.n1, ops::add(y, drop(attend(tape, layer.self, y, y, opt.causal, nullptr), opt)));
    y = apply(tape, layer.n2, ops::add(y, drop(attend(tape, layer.cross, y, memory, false, nullptr), opt)));
    y = apply(tape, layer.n3, ops::add(y, drop(feed_forward(tape, layer.ff1, layer.ff2, y), opt)));
  }
  return apply(tape, output_, y);
}

template <typename T>
Var<T> CaptionerModel<T>::decode_train(Tape<T>& tape, Var<T> memory, const std::vector<std::size_t>& target,
                                       const ForwardOptions& opt) const {
  if (target.size() < 2 || target.front() != features::Vocabulary::bos) {
    throw DataError("caption target must start with <bos> and hold at least one more token");
  }
  if (target.size() - 1 > config_.max_decode_len) {
    throw DataError("caption target of " + std::to_string(target.size() - 1) + " tokens exceeds max_decode_len " +
                    std::to_string(config_.max_decode_len));
  }
  const std::vector<std::size_t> inputs(target.begin(), target.end() - 1);
  const std::vector<std::size_t> next(target.begin() + 1, target.end());
  for (auto t : next) {
    if (t >= config_.vocab_size) throw DataError("target token id " + std::to_string(t) + " outside vocabulary");
  }
  auto logits = decoder_logits(tape, memory, inputs, opt);
  return ops::cross_entropy(logits, std::span<const std::size_t>(next), features::Vocabulary::pad);
}

template <typename T>
Var<T> CaptionerModel<T>::loss(Tape<T>& tape, const FeatureSequence& seq, const std::vector<std::size_t>& target,
                               const ForwardOptions& opt) const {
  auto memory = encode(tape, project_channels(tape, seq), opt);
  return decode_train(tape, memory, target, opt);
}

template <typename T>
BeamResult CaptionerModel<T>::decode(const FeatureSequence& seq, std::size_t beam_width) const {
  Tensor<T> memory;
  {
    Tape<T> tape(false);
    memory = encode(tape, project_channels(tape, seq)).tensor();
  }
  const NextTokenScorer scorer = [&](const std::vector<std::size_t>& prefix) {
    Tape<T> tape(false);
    auto logits = decoder_logits(tape, tape.constant(memory), prefix);
    const auto v = logits.value();
    const std::size_t vocab = config_.vocab_size;
    const T* last = v.data() + (prefix.size() - 1) * vocab;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < vocab; ++k) mx = std::max(mx, static_cast<double>(last[k]));
    double z = 0.0;
    for (std::size_t k = 0; k < vocab; ++k) z += std::exp(static_cast<double>(last[k]) - mx);
    const double log_z = mx + std::log(z);
    std::vector<double> lp(vocab);
    for (std::size_t k = 0; k < vocab; ++k) lp[k] = static_cast<double>(last[k]) - log_z;
    lp[features::Vocabulary::pad] = -std::numeric_limits<double>::infinity();
    lp[features::Vocabulary::bos] = -std::numeric_limits<double>::infinity();
    return lp;
  };
  BeamOptions bo;
  bo.beam_width = beam_width;
  bo.max_len = config_.max_decode_len;
  bo.bos = features::Vocabulary::bos;
  bo.eos = features::Vocabulary::eos;
  return beam_search(scorer, bo);
}

template class CaptionerModel<float>;
template class CaptionerModel<double>;
template Tensor<float> sinusoidal_positions<float>(std::size_t, std::size_t);
template Tensor<double> sinusoidal_positions<double>(std::size_t, std::size_t);

void save_captioner(const std::filesystem::path& path, const CaptionerModel<float>& model,
                    const features::Vocabulary& vocab) {
  if (vocab.size() != model.config().vocab_size) {
    throw ConfigError("vocabulary size " + std::to_string(vocab.size()) + " does not match model vocab_size " +
                      std::to_string(model.config().vocab_size));
  }
  save_checkpoint(path, to_named_tensors(model.params()));
  nlohmann::ordered_json side;
  side["kind"] = "captioner";
  side["config"] = to_json(model.config());
  side["vocabulary"] = vocab.tokens();
  std::ofstream out(path.string() + ".json", std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string() + ".json");
  out << side.dump(2) << '\n';
}

LoadedCaptioner load_captioner(const std::filesystem::path& path) {
  const std::string side_path = path.string() + ".json";
  std::ifstream in(side_path);
  if (!in) throw DataError("missing checkpoint sidecar " + side_path);
  json side;
  try {
    side = json::parse(in);
  } catch (const json::parse_error& e) {
    throw CorruptionError(side_path + ": " + e.what());
  }
  if (side.value("kind", "") != "captioner") throw SchemaError(side_path + " does not describe a captioner");
  const auto cfg = captioner_config_from_json(side.at("config"));
  auto vocab = features::Vocabulary::from_list(side.at("vocabulary").get<std::vector<std::string>>());
  CaptionerModel<float> model(cfg, 0);
  assign_named_tensors(model.params(), load_checkpoint(path));
  return {std::move(model), std::move(vocab)};
}

}  // namespace vld::captioner

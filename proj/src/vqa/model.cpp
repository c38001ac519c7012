#include "vld/vqa/model.hpp"

#include <cmath>
#include <fstream>
#include <set>

#include "vld/tensor/checkpoint.hpp"
#include "vld/tensor/errors.hpp"

namespace vld::vqa {

using features::Channel;
using features::FeatureSequence;
using nlohmann::json;

void VqaConfig::validate() const {
  if (hidden_dim == 0) throw ConfigError("vqa: hidden_dim must be positive");
  if (question_embed_dim == 0) throw ConfigError("vqa: question_embed_dim must be positive");
  if (answer_space_size < 2) throw ConfigError("vqa: answer_space_size must be at least 2");
  if (question_vocab_size < 5) throw ConfigError("vqa: question vocabulary needs a token beyond the reserved four");
  if (region_input_dim != features::kUltraDim && region_input_dim != features::kFrcnnDim) {
    throw ConfigError("vqa: region_input_dim must be 64 or 2048, got " + std::to_string(region_input_dim));
  }
  channels().validate();
}

std::size_t VqaConfig::region_dim() const {
  return region_input_dim == features::kUltraDim && ultra_expansion ? features::kFrcnnDim : region_input_dim;
}

features::ChannelConfig VqaConfig::channels() const {
  features::ChannelConfig c;
  c.use_global = false;
  c.use_boxes = true;
  c.use_labels = false;
  c.b_featurizer = region_input_dim == features::kFrcnnDim ? features::RegionFeaturizerKind::frcnn_style
                                                         : features::RegionFeaturizerKind::ultra_style;
  c.k_max = k_max;
  c.b_score_threshold = b_score_threshold;
  return c;
}

json to_json(const VqaConfig& c) {
  json j;
  j["hidden_dim"] = c.hidden_dim;
  j["answer_space_size"] = c.answer_space_size;
  j["question_embed_dim"] = c.question_embed_dim;
  j["question_vocab_size"] = c.question_vocab_size;
  j["region_input_dim"] = c.region_input_dim;
  j["ultra_expansion"] = c.ultra_expansion;
  j["k_max"] = c.k_max;
  j["b_score_threshold"] = c.b_score_threshold;
  return j;
}

VqaConfig vqa_config_from_json(const json& j) {
  static const std::set<std::string> known = {"hidden_dim",          "answer_space_size", "question_embed_dim",
                                              "question_vocab_size", "region_input_dim",  "ultra_expansion",
                                              "k_max",               "b_score_threshold"};
  if (!j.is_object()) throw ConfigError("vqa config must be a JSON object");
  for (const auto& [k, _] : j.items()) {
    if (!known.count(k)) throw ConfigError("vqa config: unknown key '" + k + "'");
  }
  VqaConfig c;
  auto read = [&](const char* key, auto& out) {
    if (!j.contains(key)) return;
    try {
      out = j.at(key).get<std::decay_t<decltype(out)>>();
    } catch (const json::exception& e) {
      throw ConfigError(std::string("vqa config: bad value for '") + key + "': " + e.what());
    }
  };
  read("hidden_dim", c.hidden_dim);
  read("answer_space_size", c.answer_space_size);
  read("question_embed_dim", c.question_embed_dim);
  read("question_vocab_size", c.question_vocab_size);
  read("region_input_dim", c.region_input_dim);
  read("ultra_expansion", c.ultra_expansion);
  read("k_max", c.k_max);
  read("b_score_threshold", c.b_score_threshold);
  return c;
}

template <typename T>
VqaModel<T>::VqaModel(const VqaConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  std::mt19937_64 rng(seed);
  build(rng);
}

template <typename T>
VqaModel<T>::VqaModel(const VqaConfig& config, ParameterSet<T> params) : config_(config) {
  config_.validate();
  std::mt19937_64 rng(0);
  build(rng);
  params_.assign_from(params);
}

template <typename T>
typename VqaModel<T>::Linear VqaModel<T>::add_linear(std::mt19937_64& rng, const std::string& name, std::size_t in,
                                                     std::size_t out) {
  Tensor<T> w({in, out});
  const double a = std::sqrt(6.0 / static_cast<double>(in + out));
  std::uniform_real_distribution<double> u(-a, a);
  for (auto& x : w.data()) x = static_cast<T>(u(rng));
  Linear l;
  l.w = params_.add(name + ".w", std::move(w)).index;
  l.b = params_.add(name + ".b", Tensor<T>({out})).index;
  return l;
}

// Direction rows drawn like a Xavier weight; gains start at the row norms so
// the initial effective weight equals the direction.
template <typename T>
typename VqaModel<T>::WnLinear VqaModel<T>::add_wn(std::mt19937_64& rng, const std::string& name, std::size_t in,
                                                   std::size_t out) {
  Tensor<T> v({out, in});
  Tensor<T> g({out});
  const double a = std::sqrt(6.0 / static_cast<double>(in + out));
  std::uniform_real_distribution<double> u(-a, a);
  for (std::size_t i = 0; i < out; ++i) {
    double sq = 0.0;
    for (std::size_t j = 0; j < in; ++j) {
      const double x = u(rng);
      v.at(i, j) = static_cast<T>(x);
      sq += x * x;
    }
    g.data()[i] = static_cast<T>(std::sqrt(sq));
  }
  WnLinear l;
  l.v = params_.add(name + ".v", std::move(v)).index;
  l.g = params_.add(name + ".g", std::move(g)).index;
  l.b = params_.add(name + ".b", Tensor<T>({out})).index;
  return l;
}

template <typename T>
void VqaModel<T>::build(std::mt19937_64& rng) {
  const std::size_t e = config_.question_embed_dim, h = config_.hidden_dim, r = config_.region_dim();
  {
    Tensor<T> emb({config_.question_vocab_size, e});
    std::normal_distribution<double> n(0.0, 1.0);
    for (auto& x : emb.data()) x = static_cast<T>(n(rng));
    embedding_ = params_.add("q.embedding", std::move(emb)).index;
  }
  gru_xz_ = add_linear(rng, "q.gru.xz", e, h);
  gru_xr_ = add_linear(rng, "q.gru.xr", e, h);
  gru_xh_ = add_linear(rng, "q.gru.xh", e, h);
  auto recurrent = [&](const std::string& name) {
    Tensor<T> u({h, h});
    const double a = std::sqrt(3.0 / static_cast<double>(h));
    std::uniform_real_distribution<double> d(-a, a);
    for (auto& x : u.data()) x = static_cast<T>(d(rng));
    return params_.add(name, std::move(u)).index;
  };
  gru_hz_ = recurrent("q.gru.hz");
  gru_hr_ = recurrent("q.gru.hr");
  gru_hh_ = recurrent("q.gru.hh");

  expand_ = config_.region_input_dim == features::kUltraDim && config_.ultra_expansion;
  if (expand_) expansion_ = add_linear(rng, "img.expand", features::kUltraDim, features::kFrcnnDim);
  att_region_ = add_wn(rng, "att.region", r, h);
  att_question_ = add_wn(rng, "att.question", h, h);
  att_logit_ = add_linear(rng, "att.logit", h, 1);
  q_branch_ = add_wn(rng, "fuse.question", h, h);
  img_branch_ = add_wn(rng, "fuse.image", r, h);
  classifier_ = add_wn(rng, "classifier", h, config_.answer_space_size);
}

template <typename T>
Var<T> VqaModel<T>::apply(Tape<T>& tape, const Linear& l, Var<T> x) const {
  return ops::linear(x, p(tape, l.w), p(tape, l.b));
}

template <typename T>
Var<T> VqaModel<T>::apply(Tape<T>& tape, const WnLinear& l, Var<T> x) const {
  return ops::weight_norm_linear(x, p(tape, l.v), p(tape, l.g), p(tape, l.b));
}

template <typename T>
Var<T> VqaModel<T>::encode_question(Tape<T>& tape, const std::vector<std::size_t>& tokens) const {
  if (tokens.empty()) throw DataError("question is empty");
  for (auto t : tokens) {
    if (t >= config_.question_vocab_size) {
      throw DataError("question token id " + std::to_string(t) + " outside vocabulary of size " +
                      std::to_string(config_.question_vocab_size));
    }
  }
  auto emb = ops::gather_rows(p(tape, embedding_), std::span<const std::size_t>(tokens));
  // Input-side gate terms for every step at once.
  auto xz = apply(tape, gru_xz_, emb), xr = apply(tape, gru_xr_, emb), xh = apply(tape, gru_xh_, emb);
  Var<T> h = tape.constant(Tensor<T>({1, config_.hidden_dim}));
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    const std::size_t row[] = {t};
    auto pick = [&](Var<T> m) { return ops::gather_rows(m, std::span<const std::size_t>(row)); };
    auto z = ops::sigmoid(ops::add(pick(xz), ops::matmul(h, p(tape, gru_hz_))));
    auto r = ops::sigmoid(ops::add(pick(xr), ops::matmul(h, p(tape, gru_hr_))));
    auto cand = ops::tanh(ops::add(pick(xh), ops::matmul(ops::mul(r, h), p(tape, gru_hh_))));
    h = ops::add(h, ops::mul(z, ops::sub(cand, h)));
  }
  return h;
}

template <typename T>
Var<T> VqaModel<T>::region_matrix(Tape<T>& tape, const FeatureSequence& seq) const {
  const std::size_t k = seq.count(Channel::box);
  const std::size_t in = config_.region_input_dim;
  Tensor<T> m({std::max<std::size_t>(k, 1), in});
  std::size_t row = 0;
  for (const auto& tok : seq.tokens) {
    if (tok.channel != Channel::box) continue;
    if (tok.vector.size() != in) {
      throw DimensionError("region vector has " + std::to_string(tok.vector.size()) + " values, model expects " +
                           std::to_string(in));
    }
    for (std::size_t j = 0; j < in; ++j) m.at(row, j) = static_cast<T>(tok.vector[j]);
    ++row;
  }
  auto x = tape.constant(std::move(m));
  return expand_ ? ops::relu(apply(tape, expansion_, x)) : x;
}

template <typename T>
Var<T> VqaModel<T>::attend(Tape<T>& tape, Var<T> question, Var<T> regions, std::vector<double>* weights) const {
  if (regions.size() == 0) throw DataError("attention over zero regions");
  if (regions.cols() != config_.region_dim()) {
    throw DimensionError("attention: regions have width " + std::to_string(regions.cols()) + ", expected " +
                         std::to_string(config_.region_dim()));
  }
  auto rv = ops::relu(apply(tape, att_region_, regions));
  auto qv = ops::relu(apply(tape, att_question_, question));
  auto joint = ops::mul_row(rv, ops::reshape(qv, Shape{config_.hidden_dim}));
  auto scores = apply(tape, att_logit_, joint);  // [K x 1]
  auto probs = ops::softmax(ops::reshape(scores, Shape{1, regions.rows()}));
  if (weights) {
    const auto v = probs.value();
    weights->assign(v.begin(), v.end());
  }
  return ops::matmul(probs, regions);
}

template <typename T>
Var<T> VqaModel<T>::fuse(Tape<T>& tape, Var<T> question, Var<T> attended) const {
  return ops::mul(ops::relu(apply(tape, q_branch_, question)), ops::relu(apply(tape, img_branch_, attended)));
}

template <typename T>
Var<T> VqaModel<T>::classify(Tape<T>& tape, Var<T> fused) const {
  return apply(tape, classifier_, fused);
}

template <typename T>
Var<T> VqaModel<T>::logits(Tape<T>& tape, const std::vector<std::size_t>& question, const FeatureSequence& seq) const {
  auto q = encode_question(tape, question);
  return classify(tape, fuse(tape, q, attend(tape, q, region_matrix(tape, seq))));
}

template <typename T>
Var<T> VqaModel<T>::loss(Tape<T>& tape, const std::vector<std::size_t>& question, const FeatureSequence& seq,
                         const std::vector<T>& soft_targets) const {
  if (soft_targets.size() != config_.answer_space_size) {
    throw DimensionError("vqa loss: " + std::to_string(soft_targets.size()) + " targets for " +
                         std::to_string(config_.answer_space_size) + " answers");
  }
  return ops::bce_with_logits(logits(tape, question, seq), std::span<const T>(soft_targets));
}

template <typename T>
std::size_t VqaModel<T>::predict(const std::vector<std::size_t>& question, const FeatureSequence& seq) const {
  Tape<T> tape(false);
  const auto v = logits(tape, question, seq).value();
  return argmax_lowest(std::vector<double>(v.begin(), v.end()));
}

template class VqaModel<float>;
template class VqaModel<double>;

std::size_t argmax_lowest(const std::vector<double>& values) {
  if (values.empty()) throw DataError("argmax over no values");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (std::isnan(values[i])) throw NonFiniteError("NaN logit at class " + std::to_string(i));
    if (values[i] > values[best]) best = i;
  }
  return best;
}

void save_vqa(const std::filesystem::path& path, const VqaModel<float>& model, const features::Vocabulary& vocab,
              const AnswerSpace& answers) {
  if (vocab.size() != model.config().question_vocab_size || answers.size() != model.config().answer_space_size) {
    throw ConfigError("vocabulary or answer space does not match the vqa model");
  }
  save_checkpoint(path, to_named_tensors(model.params()));
  nlohmann::ordered_json side;
  side["kind"] = "vqa";
  side["config"] = to_json(model.config());
  side["vocabulary"] = vocab.tokens();
  side["answers"] = answers.answers();
  std::ofstream out(path.string() + ".json", std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string() + ".json");
  out << side.dump(2) << '\n';
}

LoadedVqa load_vqa(const std::filesystem::path& path) {
  const std::string side_path = path.string() + ".json";
  std::ifstream in(side_path);
  if (!in) throw DataError("missing checkpoint sidecar " + side_path);
  json side;
  try {
    side = json::parse(in);
  } catch (const json::parse_error& e) {
    throw CorruptionError(side_path + ": " + e.what());
  }
  if (side.value("kind", "") != "vqa") throw SchemaError(side_path + " does not describe a vqa model");
  const auto cfg = vqa_config_from_json(side.at("config"));
  auto vocab = features::Vocabulary::from_list(side.at("vocabulary").get<std::vector<std::string>>());
  auto answers = AnswerSpace::from_list(side.at("answers").get<std::vector<std::string>>());
  VqaModel<float> model(cfg, 0);
  assign_named_tensors(model.params(), load_checkpoint(path));
  return {std::move(model), std::move(vocab), std::move(answers)};
}

}  // namespace vld::vqa

#include "vld/harness/gradsuite.hpp"

#include <algorithm>
#include <random>

#include "vld/captioner/train.hpp"
#include "vld/features/synth.hpp"
#include "vld/tensor/errors.hpp"
#include "vld/tensor/gradcheck.hpp"
#include "vld/tensor/ops.hpp"
#include "vld/tensor/random.hpp"
#include "vld/vqa/train.hpp"

namespace vld::harness {

using Rng = std::mt19937_64;
using V = Var<double>;
using Inputs = std::vector<V>;

GradTarget parse_grad_target(const std::string& name) {
  if (name == "primitives") return GradTarget::primitives;
  if (name == "captioner") return GradTarget::captioner;
  if (name == "vqa") return GradTarget::vqa;
  if (name == "all") return GradTarget::all;
  throw ConfigError("unknown gradcheck model '" + name + "' (primitives, captioner, vqa, all)");
}

bool GradSuiteResult::passed() const {
  return std::all_of(cases.begin(), cases.end(), [](const auto& c) { return c.passed(); });
}

double GradSuiteResult::max_rel_error() const {
  double m = 0.0;
  for (const auto& c : cases) m = std::max(m, c.max_rel_error);
  return m;
}

namespace {

Tensor<double> randn(Shape shape, Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Tensor<double> t(std::move(shape));
  for (auto& v : t.data()) v = n(rng);
  return t;
}

// Contract the op output against a fixed random weight so no coordinate of
// the gradient is trivially constant.
V probe(Tape<double>& t, V y, std::uint64_t seed) {
  Rng rng(mix_seed({seed, 0x9e37}));
  return ops::sum(ops::mul(y, t.constant(randn(y.tensor().shape(), rng))));
}

struct PrimitiveCase {
  std::string name;
  std::function<GradCheckReport(std::uint64_t seed, const GradCheckOptions&)> run;
};

// Binds an op over freshly drawn operands.
template <typename Make, typename Fn>
PrimitiveCase primitive(std::string name, Make make_inputs, Fn fn) {
  return {name, [make_inputs, fn](std::uint64_t seed, const GradCheckOptions& o) {
            Rng rng(seed);
            std::vector<Tensor<double>> inputs = make_inputs(rng);
            return grad_check([&](Tape<double>& t, const Inputs& in) { return probe(t, fn(t, in), seed); },
                              std::move(inputs), o);
          }};
}

std::vector<PrimitiveCase> primitive_cases() {
  std::vector<PrimitiveCase> c;
  auto pair = [](Shape s) {
    return [s](Rng& r) { return std::vector<Tensor<double>>{randn(s, r), randn(s, r)}; };
  };
  auto one = [](Shape s, double scale = 1.0) {
    return [s, scale](Rng& r) { return std::vector<Tensor<double>>{randn(s, r, scale)}; };
  };
  c.push_back(primitive("add", pair({3, 4}), [](auto&, const Inputs& in) { return ops::add(in[0], in[1]); }));
  c.push_back(primitive("sub", pair({3, 4}), [](auto&, const Inputs& in) { return ops::sub(in[0], in[1]); }));
  c.push_back(primitive("mul", pair({3, 4}), [](auto&, const Inputs& in) { return ops::mul(in[0], in[1]); }));
  c.push_back(primitive("scale", one({3, 4}), [](auto&, const Inputs& in) { return ops::scale(in[0], -1.7); }));
  auto matrix_and_row = [](Rng& r) { return std::vector<Tensor<double>>{randn({3, 5}, r), randn({5}, r)}; };
  c.push_back(primitive("add_row", matrix_and_row, [](auto&, const Inputs& in) { return ops::add_row(in[0], in[1]); }));
  c.push_back(primitive("mul_row", matrix_and_row, [](auto&, const Inputs& in) { return ops::mul_row(in[0], in[1]); }));
  c.push_back(primitive(
      "matmul", [](Rng& r) { return std::vector<Tensor<double>>{randn({3, 4}, r), randn({4, 2}, r)}; },
      [](auto&, const Inputs& in) { return ops::matmul(in[0], in[1]); }));
  c.push_back(primitive("transpose", one({3, 5}), [](auto&, const Inputs& in) { return ops::transpose(in[0]); }));
  c.push_back(primitive("reshape", one({3, 4}),
                        [](auto&, const Inputs& in) { return ops::reshape(in[0], Shape{2, 6}); }));
  c.push_back(primitive("relu", one({4, 5}), [](auto&, const Inputs& in) { return ops::relu(in[0]); }));
  c.push_back(primitive("sigmoid", one({4, 5}, 2.0), [](auto&, const Inputs& in) { return ops::sigmoid(in[0]); }));
  c.push_back(primitive("tanh", one({4, 5}, 2.0), [](auto&, const Inputs& in) { return ops::tanh(in[0]); }));
  c.push_back(primitive("softmax", one({3, 6}, 2.0), [](auto&, const Inputs& in) { return ops::softmax(in[0]); }));
  c.push_back(primitive(
      "layer_norm", [](Rng& r) { return std::vector<Tensor<double>>{randn({3, 6}, r), randn({6}, r), randn({6}, r)}; },
      [](auto&, const Inputs& in) { return ops::layer_norm(in[0], in[1], in[2]); }));
  c.push_back(primitive(
      "weight_norm_linear",
      [](Rng& r) {
        return std::vector<Tensor<double>>{randn({3, 8}, r), randn({4, 8}, r), randn({4}, r), randn({4}, r)};
      },
      [](auto&, const Inputs& in) { return ops::weight_norm_linear(in[0], in[1], in[2], in[3]); }));
  c.push_back(primitive(
      "linear", [](Rng& r) { return std::vector<Tensor<double>>{randn({3, 5}, r), randn({5, 4}, r), randn({4}, r)}; },
      [](auto&, const Inputs& in) { return ops::linear(in[0], in[1], in[2]); }));
  c.push_back(primitive("gather_rows", one({5, 3}), [](auto&, const Inputs& in) {
    static const std::size_t ids[] = {4, 1, 4, 0};
    return ops::gather_rows(in[0], std::span<const std::size_t>(ids));
  }));
  c.push_back(primitive(
      "concat_rows", [](Rng& r) { return std::vector<Tensor<double>>{randn({2, 3}, r), randn({3, 3}, r)}; },
      [](auto&, const Inputs& in) { return ops::concat_rows<double>({in[0], in[1], in[0]}); }));
  c.push_back(primitive("sum", one({3, 4}), [](auto&, const Inputs& in) {
    auto s = ops::sum(in[0]);
    return ops::mul(s, s);
  }));
  c.push_back(primitive("mean", one({3, 4}), [](auto&, const Inputs& in) {
    auto m = ops::mean(in[0]);
    return ops::mul(m, m);
  }));
  c.push_back(primitive("dropout", one({4, 5}), [](auto&, const Inputs& in) {
    Rng mask(17);  // same mask on every evaluation
    return ops::dropout(in[0], 0.3, mask);
  }));
  for (bool causal : {false, true}) {
    c.push_back(primitive(
        causal ? "attention (causal)" : "attention",
        [](Rng& r) { return std::vector<Tensor<double>>{randn({4, 8}, r), randn({5, 8}, r), randn({5, 8}, r)}; },
        [causal](auto&, const Inputs& in) {
          if (!causal) return ops::multi_head_attention(in[0], in[1], in[2], {.heads = 2});
          // Causal masking needs square attention.
          auto k = ops::gather_rows(in[1], std::vector<std::size_t>{0, 1, 2, 3});
          auto v = ops::gather_rows(in[2], std::vector<std::size_t>{4, 3, 2, 1});
          return ops::multi_head_attention(in[0], k, v, {.heads = 2, .causal = true});
        }));
  }
  c.push_back({"cross_entropy", [](std::uint64_t seed, const GradCheckOptions& o) {
                 Rng rng(seed);
                 auto logits = randn({5, 6}, rng, 2.0);
                 std::vector<std::size_t> targets(5);
                 for (auto& x : targets) x = std::uniform_int_distribution<std::size_t>(1, 5)(rng);
                 targets[2] = 0;  // at least one ignored row
                 return grad_check(
                     [&](Tape<double>&, const Inputs& in) { return ops::cross_entropy(in[0], targets, 0); }, {logits},
                     o);
               }});
  c.push_back({"bce_with_logits", [](std::uint64_t seed, const GradCheckOptions& o) {
                 Rng rng(seed);
                 auto logits = randn({3, 7}, rng, 2.0);
                 std::vector<double> targets(21);
                 for (auto& x : targets) x = std::uniform_int_distribution<int>(0, 3)(rng) / 3.0;
                 return grad_check(
                     [&](Tape<double>&, const Inputs& in) { return ops::bce_with_logits<double>(in[0], targets); },
                     {logits}, o);
               }});
  return c;
}

V batch_mean(const std::vector<V>& losses) {
  if (losses.empty()) throw DataError("gradient suite: empty micro-batch");
  V total = losses.front();
  for (std::size_t i = 1; i < losses.size(); ++i) total = ops::add(total, losses[i]);
  return ops::scale(total, 1.0 / static_cast<double>(losses.size()));
}

features::SynthSpec micro_spec(std::uint64_t seed) {
  features::SynthSpec s;
  s.num_images = 6;
  s.num_object_types = 4;
  s.k_regions = 5;
  s.max_objects = 2;
  s.seed = seed;
  return s;
}

GradCheckReport captioner_case(const std::string& condition, std::uint64_t seed, const GradCheckOptions& o) {
  const auto channels = features::parse_condition(condition);
  features::SyntheticWorld world(micro_spec(seed));
  const auto data = features::synth_generate(world, channels.b_featurizer);
  captioner::CaptionerConfig cfg;
  cfg.num_layers = 2;
  cfg.num_heads = 2;
  cfg.d_model = 8;
  cfg.d_ff = 12;
  cfg.frcnn_bottleneck = 4;
  cfg.max_decode_len = 10;
  cfg.dropout_rate = 0.0;
  cfg.channels = channels;
  cfg.vocab_size = data.vocabulary.size();
  auto examples = captioner::make_caption_examples(data.records, cfg, data.vocabulary);
  examples.resize(std::min<std::size_t>(examples.size(), 2));

  captioner::CaptionerModel<double> model(cfg, seed);
  // The output layer starts at zero, which would hide every other gradient.
  Rng rng(mix_seed({seed, 77}));
  for (auto& p : model.params()) {
    if (p.name.rfind("dec.output", 0) == 0) {
      for (auto& x : p.value.data()) x = std::normal_distribution<double>(0.0, 0.5)(rng);
    }
  }
  return grad_check_parameters(
      model.params(),
      [&](Tape<double>& t) {
        std::vector<V> losses;
        for (const auto& e : examples) losses.push_back(model.loss(t, e.sequence, e.target));
        return batch_mean(losses);
      },
      o);
}

GradCheckReport vqa_case(features::RegionFeaturizerKind kind, std::uint64_t seed, const GradCheckOptions& o) {
  features::SyntheticWorld world(micro_spec(seed));
  const auto data = features::synth_generate(world, kind);
  const auto space = vqa::AnswerSpace::from_list(data.answer_space.size() >= 2
                                                     ? data.answer_space
                                                     : std::vector<std::string>{"yes", "no"});
  vqa::VqaConfig cfg;
  cfg.hidden_dim = 6;
  cfg.question_embed_dim = 5;
  cfg.question_vocab_size = data.vocabulary.size();
  cfg.answer_space_size = space.size();
  cfg.region_input_dim = features::feature_dim(kind);
  cfg.ultra_expansion = kind == features::RegionFeaturizerKind::ultra_style;
  auto set = vqa::make_vqa_examples(data.records, cfg, data.vocabulary, space);
  set.examples.resize(std::min<std::size_t>(set.examples.size(), 2));

  vqa::VqaModel<double> model(cfg, seed);
  return grad_check_parameters(
      model.params(),
      [&](Tape<double>& t) {
        std::vector<V> losses;
        for (const auto& e : set.examples) {
          const std::vector<double> targets(e.targets.begin(), e.targets.end());
          losses.push_back(model.loss(t, e.question, e.sequence, targets));
        }
        return batch_mean(losses);
      },
      o);
}

}  // namespace

GradSuiteResult run_gradient_suite(const GradSuiteOptions& options,
                                   const std::function<void(const GradCaseResult&)>& on_case) {
  if (options.seeds == 0) throw ConfigError("gradient suite needs at least one seed");
  if (!(options.tolerance > 0.0) || !(options.step > 0.0)) throw ConfigError("gradient suite: bad tolerance or step");

  std::vector<PrimitiveCase> cases;
  const bool all = options.target == GradTarget::all;
  if (all || options.target == GradTarget::primitives) cases = primitive_cases();
  if (all || options.target == GradTarget::captioner) {
    for (const char* cond : {"G+B-Ultra+L", "G+B-FRCNN+L"}) {
      cases.push_back({std::string("captioner ") + cond,
                       [cond](std::uint64_t s, const GradCheckOptions& o) { return captioner_case(cond, s, o); }});
    }
  }
  if (all || options.target == GradTarget::vqa) {
    for (auto kind : {features::RegionFeaturizerKind::ultra_style, features::RegionFeaturizerKind::frcnn_style}) {
      cases.push_back({"vqa B-" + std::string(features::featurizer_name(kind)),
                       [kind](std::uint64_t s, const GradCheckOptions& o) { return vqa_case(kind, s, o); }});
    }
  }

  GradSuiteResult result;
  for (const auto& c : cases) {
    const bool model = c.name.rfind("captioner", 0) == 0 || c.name.rfind("vqa", 0) == 0;
    GradCaseResult r;
    r.name = c.name;
    for (std::size_t i = 0; i < options.seeds; ++i) {
      const std::uint64_t seed = options.first_seed + i;
      GradCheckOptions o;
      o.step = options.step;
      o.tolerance = options.tolerance;
      o.seed = seed;
      o.max_coords_per_tensor = model ? options.model_coords_per_tensor : 0;
      const auto rep = c.run(seed, o);
      ++r.seeds;
      if (!rep.passed) ++r.failures;
      if (rep.max_rel_error >= r.max_rel_error) {
        r.max_rel_error = rep.max_rel_error;
        r.worst = "seed " + std::to_string(seed) + ": " + rep.worst;
      }
    }
    if (on_case) on_case(r);
    result.cases.push_back(std::move(r));
  }
  return result;
}

}  // namespace vld::harness

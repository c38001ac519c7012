#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "fixtures.hpp"
#include "oracles/metric_oracles.hpp"
#include "vld/features/synth.hpp"
#include "vld/tensor/errors.hpp"
#include "vld/tensor/gradcheck.hpp"
#include "vld/vqa/train.hpp"

using namespace vld;
using namespace vld::vqa;
using features::FeatureSequence;

namespace {

VqaConfig tiny_config(std::size_t region_dim = features::kUltraDim, bool expand = false) {
  VqaConfig c;
  c.hidden_dim = 6;
  c.question_embed_dim = 5;
  c.question_vocab_size = 10;
  c.answer_space_size = 7;
  c.region_input_dim = region_dim;
  c.ultra_expansion = expand;
  return c;
}

FeatureSequence region_sequence(std::mt19937_64& rng, std::size_t k, std::size_t dim) {
  FeatureSequence seq;
  for (std::size_t i = 0; i < k; ++i) {
    features::FeatureToken t;
    t.channel = features::Channel::box;
    t.vector = testing::random_vector(rng, dim);
    t.source_index = i;
    seq.tokens.push_back(std::move(t));
  }
  return seq;
}

template <typename T>
Parameter<T>& param(VqaModel<T>& m, const std::string& name) {
  auto* p = m.params().find(name);
  REQUIRE(p != nullptr);
  return *p;
}

template <typename T>
void fill(Parameter<T>& p, T value) {
  std::fill(p.value.data().begin(), p.value.data().end(), value);
}

std::vector<std::string> answers_with(const std::string& a, std::size_t matches, const std::string& other = "no") {
  std::vector<std::string> v(10, other);
  std::fill(v.begin(), v.begin() + static_cast<long>(matches), a);
  return v;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

TEST_CASE("answer normalization") {
  CHECK(normalize_answer("  Yes. ") == "yes");
  CHECK(normalize_answer("Two   Dogs!") == "two dogs");
  CHECK(normalize_answer("what?!") == "what");
  CHECK(normalize_answer("3.5") == "3.5");
  CHECK(normalize_answer("...") == "");
  for (const char* s : {"A b  C.", " x ", "12"}) CHECK(normalize_answer(normalize_answer(s)) == normalize_answer(s));
}

TEST_CASE("answer space") {
  auto s = AnswerSpace::from_answer_sets({{"no", "yes", "Yes", "2"}, {"yes.", "no", "blue"}}, 3);
  CHECK(s.answers() == std::vector<std::string>{"yes", "no", "2"});
  CHECK(s.index("YES") == 0);
  CHECK(s.index("blue") == AnswerSpace::out_of_space);
  CHECK_THROWS_AS(AnswerSpace::from_list({"yes", "Yes."}), SchemaError);
  CHECK_THROWS_AS(s.answer(3), DataError);

  testing::TempDir dir("answers");
  s.save(dir / "a.txt");
  CHECK(AnswerSpace::load(dir / "a.txt") == s);
}

TEST_CASE("consensus accuracy fixed cases") {
  CHECK(vqa_accuracy("yes", answers_with("yes", 10)) == 1.0);
  CHECK(vqa_accuracy("yes", answers_with("yes", 3)) == 0.9);
  CHECK(vqa_accuracy("yes", answers_with("yes", 1)) == 0.3);
  CHECK(vqa_accuracy("yes", answers_with("yes", 0)) == 0.0);
  CHECK(vqa_accuracy("Yes!", answers_with("yes", 4)) == 1.0);
  CHECK_THROWS_AS(vqa_accuracy("yes", {"yes"}), DataError);
}

TEST_CASE("consensus accuracy matches leave-one-out enumeration") {
  std::mt19937_64 rng(17);
  const std::vector<std::string> pool{"yes", "no", "2", "3", "red"};
  std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<std::string> answers(10);
    for (auto& a : answers) a = pool[pick(rng)];
    const auto& predicted = pool[pick(rng)];
    const double got = vqa_accuracy(predicted, answers);
    CHECK(got == doctest::Approx(oracle::vqa_accuracy_brute(predicted, answers)).epsilon(1e-12));
    std::shuffle(answers.begin(), answers.end(), rng);
    CHECK(vqa_accuracy(predicted, answers) == got);
    // Values are averages of multiples of 1/3.
    CHECK(std::abs(got * 30.0 - std::round(got * 30.0)) < 1e-9);
  }
}

TEST_CASE("soft scores and answer types") {
  auto space = AnswerSpace::from_list({"yes", "no", "2"});
  auto s = soft_scores({"yes", "yes", "no", "yes", "yes", "2", "cat", "cat", "cat", "cat"}, space);
  CHECK(s == std::vector<float>{1.0f, 1.0f / 3.0f, 1.0f / 3.0f});
  CHECK(classify_answer("yes") == AnswerType::yes_no);
  CHECK(classify_answer("12") == AnswerType::number);
  CHECK(classify_answer("1,5") == AnswerType::number);
  CHECK(classify_answer("1.") == AnswerType::other);
  CHECK(classify_answer("unanswerable") == AnswerType::unanswerable);
  CHECK(classify_answer("red") == AnswerType::other);
  CHECK(question_type(answers_with("3", 6, "yes")) == AnswerType::number);
  CHECK(question_type(answers_with("3", 4, "yes")) == AnswerType::yes_no);
}

TEST_CASE("argmax tie break") {
  CHECK(argmax_lowest({0.1, 0.2, 0.9, 0.3}) == 2);
  CHECK(argmax_lowest({0.0, 0.0, 0.0, 5.0, 1.0, 5.0}) == 3);
  CHECK_THROWS_AS(argmax_lowest({}), DataError);
}

TEST_CASE("config validation") {
  auto c = tiny_config();
  CHECK_NOTHROW(c.validate());
  CHECK(vqa_config_from_json(to_json(c)).region_input_dim == c.region_input_dim);
  c.answer_space_size = 1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = tiny_config();
  c.region_input_dim = 100;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  auto j = to_json(tiny_config());
  j["layers"] = 2;
  CHECK_THROWS_AS(vqa_config_from_json(j), ConfigError);
}

TEST_CASE("single-token question is one recurrent step") {
  VqaModel<double> m(tiny_config(), 3);
  Tape<double> tape(false);
  const auto h = m.encode_question(tape, {6}).tensor();

  auto& ps = m.params();
  auto lin = [&](const std::string& name, std::size_t j) {
    const auto& w = ps.find(name + ".w")->value;
    double s = ps.find(name + ".b")->value.data()[j];
    for (std::size_t i = 0; i < w.shape()[0]; ++i) s += ps.find("q.embedding")->value.at(6, i) * w.at(i, j);
    return s;
  };
  for (std::size_t j = 0; j < 6; ++j) {
    const double z = sigmoid(lin("q.gru.xz", j));
    const double cand = std::tanh(lin("q.gru.xh", j));
    CHECK(h.data()[j] == doctest::Approx(z * cand).epsilon(1e-12));
  }
}

TEST_CASE("zero recurrent weights give a zero state") {
  VqaModel<double> m(tiny_config(), 4);
  for (auto& p : m.params()) {
    if (p.name.rfind("q.gru.", 0) == 0) fill(p, 0.0);
  }
  Tape<double> tape(false);
  for (double v : m.encode_question(tape, {4, 7, 9, 5}).value()) CHECK(v == 0.0);
  CHECK_THROWS_AS(m.encode_question(tape, {}), DataError);
  CHECK_THROWS_AS(m.encode_question(tape, {10}), DataError);
}

TEST_CASE("question embedding gradients match finite differences") {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    VqaModel<double> m(tiny_config(), seed);
    std::mt19937_64 rng(seed);
    const auto w = testing::random_vector(rng, 6);
    const std::vector<std::size_t> q{4, 5, 6, 5};
    GradCheckOptions o;
    o.step = 1e-6;
    auto r = grad_check_parameters(
        m.params(),
        [&](Tape<double>& t) {
          Tensor<double> weights({1, 6}, std::vector<double>(w.begin(), w.end()));
          return ops::sum(ops::mul(m.encode_question(t, q), t.constant(weights)));
        },
        o);
    CHECK_MESSAGE(r.passed, r.worst, " rel ", r.max_rel_error);
  }
}

TEST_CASE("attention over one region returns it") {
  std::mt19937_64 rng(2);
  VqaModel<float> m(tiny_config(), 1);
  Tape<float> tape(false);
  auto seq = region_sequence(rng, 1, features::kUltraDim);
  std::vector<double> w;
  auto att = m.attend(tape, m.encode_question(tape, {5, 6}), m.region_matrix(tape, seq), &w);
  CHECK(w == std::vector<double>{1.0});
  for (std::size_t j = 0; j < features::kUltraDim; ++j) CHECK(att.value()[j] == seq.tokens[0].vector[j]);
}

TEST_CASE("attention over identical regions returns that region") {
  std::mt19937_64 rng(3);
  VqaModel<double> m(tiny_config(), 2);
  auto seq = region_sequence(rng, 1, features::kUltraDim);
  for (int i = 0; i < 4; ++i) seq.tokens.push_back(seq.tokens[0]);
  Tape<double> tape(false);
  auto att = m.attend(tape, m.encode_question(tape, {7}), m.region_matrix(tape, seq));
  for (std::size_t j = 0; j < features::kUltraDim; ++j) {
    CHECK(att.value()[j] == doctest::Approx(seq.tokens[0].vector[j]).epsilon(1e-12));
  }
}

TEST_CASE("attention weights are a distribution inside the convex hull") {
  std::mt19937_64 rng(4);
  VqaModel<float> m(tiny_config(), 3);
  for (int trial = 0; trial < 20; ++trial) {
    auto seq = region_sequence(rng, 1 + trial % 7, features::kUltraDim);
    Tape<float> tape(false);
    std::vector<double> w;
    auto regions = m.region_matrix(tape, seq);
    auto att = m.attend(tape, m.encode_question(tape, {4, 8}), regions, &w);
    double s = 0.0;
    for (double x : w) s += x;
    CHECK(std::abs(s - 1.0) <= 1e-6);
    for (std::size_t j = 0; j < features::kUltraDim; ++j) {
      float lo = seq.tokens[0].vector[j], hi = lo;
      for (const auto& t : seq.tokens) {
        lo = std::min(lo, t.vector[j]);
        hi = std::max(hi, t.vector[j]);
      }
      CHECK(att.value()[j] >= lo - 1e-5f);
      CHECK(att.value()[j] <= hi + 1e-5f);
    }
  }
}

TEST_CASE("a 20-logit gap concentrates attention on one region") {
  VqaModel<double> m(tiny_config(), 5);
  // Score of region i = relu(region_i[0]) through hidden unit 0 only.
  auto& v = param(m, "att.region.v");
  fill(v, 1.0);
  v.value.at(0, 0) = 1.0;
  for (std::size_t j = 1; j < features::kUltraDim; ++j) v.value.at(0, j) = 0.0;
  fill(param(m, "att.region.g"), 0.0);
  param(m, "att.region.g").value.data()[0] = 1.0;
  fill(param(m, "att.region.b"), 0.0);
  fill(param(m, "att.question.g"), 0.0);
  fill(param(m, "att.question.b"), 1.0);
  fill(param(m, "att.logit.w"), 0.0);
  param(m, "att.logit.w").value.data()[0] = 1.0;
  fill(param(m, "att.logit.b"), 0.0);

  FeatureSequence seq;
  for (double first : {20.0, 0.0}) {
    features::FeatureToken t;
    t.channel = features::Channel::box;
    t.vector.assign(features::kUltraDim, 0.5f);
    t.vector[0] = static_cast<float>(first);
    seq.tokens.push_back(t);
  }
  Tape<double> tape(false);
  std::vector<double> w;
  m.attend(tape, m.encode_question(tape, {5}), m.region_matrix(tape, seq), &w);
  REQUIRE(w.size() == 2);
  CHECK(w[0] >= 0.9999);
  CHECK(w[0] == doctest::Approx(1.0 / (1.0 + std::exp(-20.0))).epsilon(1e-12));
}

TEST_CASE("zero regions are padded with one zero row") {
  VqaModel<float> m(tiny_config(), 1);
  Tape<float> tape(false);
  auto regions = m.region_matrix(tape, FeatureSequence{});
  CHECK(regions.rows() == 1);
  for (float x : regions.value()) CHECK(x == 0.0f);

  std::mt19937_64 rng(1);
  auto wide = region_sequence(rng, 2, features::kFrcnnDim);
  CHECK_THROWS_AS(m.region_matrix(tape, wide), DimensionError);
}

TEST_CASE("expansion lifts 64-D regions to non-negative 2048-D vectors") {
  std::mt19937_64 rng(6);
  VqaModel<float> m(tiny_config(features::kUltraDim, true), 2);
  CHECK(m.config().region_dim() == features::kFrcnnDim);
  Tape<float> tape(false);
  auto seq = region_sequence(rng, 3, features::kUltraDim);
  auto r = m.region_matrix(tape, seq);
  CHECK(r.rows() == 3);
  CHECK(r.cols() == features::kFrcnnDim);
  for (float x : r.value()) CHECK(x >= 0.0f);
  auto logits = m.logits(tape, {4, 5}, seq);
  CHECK(logits.size() == m.config().answer_space_size);
}

TEST_CASE("a silent branch leaves only the classifier bias") {
  std::mt19937_64 rng(7);
  VqaModel<double> m(tiny_config(), 8);
  for (auto& x : param(m, "classifier.b").value.data()) x = std::normal_distribution<double>()(rng);
  fill(param(m, "fuse.question.g"), 0.0);
  fill(param(m, "fuse.question.b"), -1.0);
  Tape<double> tape(false);
  auto q = m.encode_question(tape, {4, 9});
  auto fused = m.fuse(tape, q, m.attend(tape, q, m.region_matrix(tape, region_sequence(rng, 4, 64))));
  CHECK(fused.cols() == 6);
  for (double x : fused.value()) CHECK(x == 0.0);
  auto logits = m.classify(tape, fused).value();
  const auto& bias = param(m, "classifier.b").value.data();
  for (std::size_t i = 0; i < bias.size(); ++i) CHECK(logits[i] == bias[i]);
}

TEST_CASE("end-to-end vqa gradients match finite differences") {
  for (bool expand : {false, true}) {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      CAPTURE(expand);
      VqaModel<double> m(tiny_config(features::kUltraDim, expand), seed);
      std::mt19937_64 rng(seed + 9);
      auto seq = region_sequence(rng, 3, features::kUltraDim);
      std::vector<double> targets{1.0, 0.0, 1.0 / 3.0, 0.0, 0.0, 2.0 / 3.0, 0.0};
      GradCheckOptions o;
      o.step = 1e-6;
      o.max_coords_per_tensor = 6;
      o.seed = seed;
      auto r = grad_check_parameters(
          m.params(), [&](Tape<double>& t) { return m.loss(t, {4, 7, 5}, seq, targets); }, o);
      CHECK_MESSAGE(r.passed, r.worst, " rel ", r.max_rel_error);
    }
  }
}

TEST_CASE("checkpoint round trip") {
  testing::TempDir dir("vqa");
  std::mt19937_64 rng(10);
  auto cfg = tiny_config(features::kUltraDim, true);
  auto vocab = features::Vocabulary::from_tokens({"is", "there", "a", "cat", "?", "how"});
  auto space = AnswerSpace::from_list({"yes", "no", "0", "1", "2", "3", "unanswerable"});
  cfg.question_vocab_size = vocab.size();
  VqaModel<float> m(cfg, 5);
  save_vqa(dir / "v.ckpt", m, vocab, space);
  auto loaded = load_vqa(dir / "v.ckpt");
  CHECK(loaded.vocabulary == vocab);
  CHECK(loaded.answers == space);
  auto seq = region_sequence(rng, 4, 64);
  Tape<float> a(false), b(false);
  const auto la = m.logits(a, {4, 5, 6}, seq).value();
  const auto lb = loaded.model.logits(b, {4, 5, 6}, seq).value();
  for (std::size_t i = 0; i < la.size(); ++i) CHECK(std::abs(la[i] - lb[i]) <= 1e-6);
  save_vqa(dir / "w.ckpt", loaded.model, loaded.vocabulary, loaded.answers);
  CHECK(testing::slurp(dir / "v.ckpt") == testing::slurp(dir / "w.ckpt"));
  CHECK(testing::slurp(dir / "v.ckpt.json") == testing::slurp(dir / "w.ckpt.json"));
}

TEST_CASE("examples, training and evaluation on synthetic data") {
  features::SynthSpec spec;
  spec.num_images = 24;
  spec.seed = 3;
  const auto data = features::synth_generate(spec, features::RegionFeaturizerKind::ultra_style);
  auto space = AnswerSpace::from_list(data.answer_space);
  VqaConfig cfg;
  cfg.hidden_dim = 16;
  cfg.question_embed_dim = 8;
  cfg.question_vocab_size = data.vocabulary.size();
  cfg.answer_space_size = space.size();
  const auto set = make_vqa_examples(data.records, cfg, data.vocabulary, space);
  CHECK(set.examples.size() == 24);
  CHECK(set.without_target == 0);

  VqaTrainOptions opt;
  opt.epochs = 4;
  opt.batch_size = 8;
  opt.seed = 2;
  opt.schedule.peak_lr = 5e-3;
  auto run = [&] {
    VqaModel<float> m(cfg, 1);
    auto r = train_vqa(m, set, opt);
    return std::make_pair(r.epoch_losses, evaluate_vqa(m, set.examples, space).accuracy);
  };
  const auto first = run();
  CHECK(first.first.back() < first.first.front());
  CHECK(run() == first);

  VqaModel<float> m(cfg, 1);
  const auto ev = evaluate_vqa(m, set.examples, space, 3);
  const auto ev1 = evaluate_vqa(m, set.examples, space, 1);
  CHECK(ev.accuracy == ev1.accuracy);
  std::size_t counted = 0;
  for (const auto& [t, n] : ev.count_by_type) counted += n;
  CHECK(counted == set.examples.size());

  testing::TempDir dir("pred");
  write_predictions_jsonl(dir / "p.jsonl", ev.predictions);
  const auto text = testing::slurp(dir / "p.jsonl");
  CHECK(text.rfind("{\"id\":\"img000000\",\"answer\":", 0) == 0);

  auto wrong = cfg;
  wrong.answer_space_size += 1;
  CHECK_THROWS_AS(make_vqa_examples(data.records, wrong, data.vocabulary, space), ConfigError);
}

TEST_CASE("examples without an in-space answer are skipped in training") {
  features::SynthSpec spec;
  spec.num_images = 10;
  const auto data = features::synth_generate(spec, features::RegionFeaturizerKind::frcnn_style);
  auto space = AnswerSpace::from_list({"zebra", "giraffe"});
  VqaConfig cfg;
  cfg.hidden_dim = 4;
  cfg.question_embed_dim = 4;
  cfg.region_input_dim = features::kFrcnnDim;
  cfg.question_vocab_size = data.vocabulary.size();
  cfg.answer_space_size = 2;
  const auto set = make_vqa_examples(data.records, cfg, data.vocabulary, space);
  CHECK(set.without_target == 10);
  VqaModel<float> m(cfg, 1);
  CHECK_THROWS_AS(train_vqa(m, set, {}), ConfigError);
}

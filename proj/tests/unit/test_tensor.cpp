#include <cmath>
#include <limits>
#include <random>

#include "doctest.h"
#include "vld/tensor/checkpoint.hpp"
#include "vld/tensor/gradcheck.hpp"
#include "vld/tensor/ops.hpp"
#include "vld/tensor/optim.hpp"
#include "vld/tensor/trainer.hpp"

using namespace vld;
using doctest::Approx;

namespace {

Tensor<double> random_tensor(Shape shape, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Tensor<double> t(std::move(shape));
  for (auto& v : t.data()) v = n(rng);
  return t;
}

template <typename T>
Tensor<T> make(Shape shape, std::vector<T> data) {
  return Tensor<T>(std::move(shape), std::move(data));
}

}  // namespace

TEST_CASE("matmul forward values") {
  Tape<double> tape;
  auto id = tape.constant(make<double>({2, 2}, {1, 0, 0, 1}));
  auto m = tape.constant(make<double>({2, 2}, {1, 2, 3, 4}));
  auto out = ops::matmul(id, m).tensor();
  CHECK(out == make<double>({2, 2}, {1, 2, 3, 4}));

  auto row = tape.constant(make<double>({1, 2}, {1, 2}));
  auto col = tape.constant(make<double>({2, 1}, {3, 4}));
  CHECK(ops::matmul(row, col).item() == 11.0);
}

TEST_CASE("matmul shape mismatch names both shapes") {
  Tape<float> tape;
  auto a = tape.constant(Tensor<float>({2, 3}));
  auto b = tape.constant(Tensor<float>({2, 3}));
  try {
    ops::matmul(a, b);
    FAIL("expected a dimension error");
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2x3] . [2x3]") != std::string::npos);
  }
}

TEST_CASE("matmul gradients match finite differences") {
  std::mt19937_64 rng(7);
  auto a = random_tensor({3, 4}, rng);
  auto b = random_tensor({4, 2}, rng);
  auto w = random_tensor({3, 2}, rng);
  auto report = grad_check(
      [&](Tape<double>& t, const std::vector<Var<double>>& in) {
        return ops::sum(ops::mul(ops::matmul(in[0], in[1]), t.constant(w)));
      },
      {a, b}, {.step = 1e-3, .tolerance = 1e-3});
  CHECK(report.passed);
  CHECK(report.checked == 20);
}

TEST_CASE("softmax examples") {
  Tape<double> tape;
  auto u = ops::softmax(tape.constant(make<double>({4}, {0, 0, 0, 0}))).tensor();
  for (auto v : u.data()) CHECK(v == 0.25);

  auto big = ops::softmax(tape.constant(make<double>({2}, {1000, 0}))).tensor();
  CHECK(big[0] == Approx(1.0).epsilon(1e-6));
  CHECK(big[1] == Approx(0.0).epsilon(1e-6));

  auto s = ops::softmax(tape.constant(make<double>({3}, {1, 2, 3}))).tensor();
  CHECK(s[0] == Approx(0.09003).epsilon(1e-4));
  CHECK(s[1] == Approx(0.24473).epsilon(1e-4));
  CHECK(s[2] == Approx(0.66524).epsilon(1e-4));
}

TEST_CASE("softmax rows sum to one for large magnitudes") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<float> u(-1e4f, 1e4f);
  for (int trial = 0; trial < 50; ++trial) {
    Tensor<float> x({5, 9});
    for (auto& v : x.data()) v = u(rng);
    Tape<float> tape;
    auto y = ops::softmax(tape.constant(x)).tensor();
    for (std::size_t r = 0; r < 5; ++r) {
      double total = 0.0;
      for (std::size_t c = 0; c < 9; ++c) {
        CHECK(y.at(r, c) >= 0.0f);
        total += y.at(r, c);
      }
      CHECK(std::abs(total - 1.0) <= 1e-6);
    }
  }
}

TEST_CASE("zero-size dimensions are rejected") {
  CHECK_THROWS_AS(Tensor<float>(Shape{3, 0}), DimensionError);
  CHECK_THROWS_AS(Tensor<float>(Shape{2}, {1.0f}), DimensionError);
}

TEST_CASE("weight_norm_linear examples") {
  Tape<double> tape;
  auto x = tape.constant(make<double>({1, 2}, {1, 0}));
  auto v = tape.constant(make<double>({1, 2}, {3, 4}));
  auto g = tape.constant(make<double>({1}, {1}));
  auto b = tape.constant(make<double>({1}, {0}));
  CHECK(ops::weight_norm_linear(x, v, g, b).item() == Approx(0.6));

  auto x2 = tape.constant(make<double>({1, 2}, {5, -7}));
  CHECK(ops::weight_norm_linear(x2, v, tape.constant(make<double>({1}, {0})), b).item() == 0.0);

  auto zero_v = tape.constant(make<double>({2, 2}, {1, 1, 0, 0}));
  auto g2 = tape.constant(make<double>({2}, {1, 1}));
  auto b2 = tape.constant(make<double>({2}, {0, 0}));
  CHECK_THROWS_AS(ops::weight_norm_linear(x, zero_v, g2, b2), DegenerateParameterError);
}

TEST_CASE("weight_norm_linear gradients match finite differences") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    std::mt19937_64 rng(seed);
    auto x = random_tensor({3, 8}, rng);
    auto v = random_tensor({4, 8}, rng);
    auto g = random_tensor({4}, rng);
    auto b = random_tensor({4}, rng);
    auto w = random_tensor({3, 4}, rng);
    auto report = grad_check(
        [&](Tape<double>& t, const std::vector<Var<double>>& in) {
          return ops::sum(ops::mul(ops::weight_norm_linear(in[0], in[1], in[2], in[3]), t.constant(w)));
        },
        {x, v, g, b}, {.step = 1e-4, .tolerance = 1e-3});
    CHECK_MESSAGE(report.passed, report.worst, " rel ", report.max_rel_error);
  }
}

TEST_CASE("weight_norm_linear is invariant to positive row rescaling") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> c(0.1, 10.0);
  for (int trial = 0; trial < 20; ++trial) {
    auto x = random_tensor({2, 6}, rng).cast<float>();
    auto v = random_tensor({5, 6}, rng).cast<float>();
    auto g = random_tensor({5}, rng).cast<float>();
    auto b = random_tensor({5}, rng).cast<float>();
    auto scaled = v;
    for (std::size_t i = 0; i < 5; ++i) {
      const float s = static_cast<float>(c(rng));
      for (std::size_t j = 0; j < 6; ++j) scaled.at(i, j) *= s;
    }
    Tape<float> tape;
    auto y1 = ops::weight_norm_linear(tape.constant(x), tape.constant(v), tape.constant(g), tape.constant(b)).tensor();
    auto y2 =
        ops::weight_norm_linear(tape.constant(x), tape.constant(scaled), tape.constant(g), tape.constant(b)).tensor();
    for (std::size_t i = 0; i < y1.size(); ++i) CHECK(std::abs(y1[i] - y2[i]) <= 1e-5f * (1.0f + std::abs(y1[i])));
  }
}

TEST_CASE("backward basics") {
  Tape<double> tape;
  auto x = tape.variable(make<double>({2, 3}, {1, -2, 3, 0.5, 5, 6}));
  tape.backward(ops::sum(x));
  const auto gx = tape.gradient(x);
  for (auto v : gx.data()) CHECK(v == 1.0);

  Tape<double> tape2;
  auto y = tape2.variable(make<double>({3}, {1, 2, 3}));
  tape2.backward(ops::sum(ops::mul(y, y)));
  CHECK(tape2.gradient(y) == make<double>({3}, {2, 4, 6}));
}

TEST_CASE("gradients from multiple consumers sum") {
  Tape<double> tape;
  auto x = tape.variable(make<double>({2}, {1, 2}));
  auto loss = ops::add(ops::sum(x), ops::sum(ops::scale(x, 3.0)));
  tape.backward(loss);
  CHECK(tape.gradient(x) == make<double>({2}, {4, 4}));
}

TEST_CASE("backward rejects a non-scalar loss") {
  Tape<double> tape;
  auto x = tape.variable(make<double>({2}, {1, 2}));
  CHECK_THROWS_AS(tape.backward(ops::relu(x)), ContractError);
}

TEST_CASE("two-layer MLP gradients match finite differences") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    std::mt19937_64 rng(100 + seed);
    auto x = random_tensor({4, 5}, rng);
    auto w1 = random_tensor({5, 7}, rng);
    auto b1 = random_tensor({7}, rng);
    auto w2 = random_tensor({7, 3}, rng);
    auto b2 = random_tensor({3}, rng);
    auto report = grad_check(
        [](Tape<double>&, const std::vector<Var<double>>& in) {
          auto h = ops::relu(ops::linear(in[0], in[1], in[2]));
          auto y = ops::linear(h, in[3], in[4]);
          return ops::mean(ops::mul(y, y));
        },
        {x, w1, b1, w2, b2}, {.step = 1e-6, .tolerance = 1e-3});
    CHECK_MESSAGE(report.passed, report.worst, " rel ", report.max_rel_error);
  }
}

TEST_CASE("fused primitives pass gradient checks") {
  std::mt19937_64 rng(5);
  const GradCheckOptions opts{.step = 1e-5, .tolerance = 1e-4};
  SUBCASE("layer_norm") {
    auto x = random_tensor({3, 6}, rng), g = random_tensor({6}, rng), b = random_tensor({6}, rng);
    auto w = random_tensor({3, 6}, rng);
    auto r = grad_check(
        [&](Tape<double>& t, const std::vector<Var<double>>& in) {
          return ops::sum(ops::mul(ops::layer_norm(in[0], in[1], in[2]), t.constant(w)));
        },
        {x, g, b}, opts);
    CHECK_MESSAGE(r.passed, r.worst, " rel ", r.max_rel_error);
  }
  SUBCASE("attention, causal and full") {
    for (bool causal : {false, true}) {
      auto q = random_tensor({4, 8}, rng), k = random_tensor({4, 8}, rng), v = random_tensor({4, 8}, rng);
      auto w = random_tensor({4, 8}, rng);
      auto r = grad_check(
          [&](Tape<double>& t, const std::vector<Var<double>>& in) {
            return ops::sum(ops::mul(ops::multi_head_attention(in[0], in[1], in[2], {.heads = 2, .causal = causal}),
                                     t.constant(w)));
          },
          {q, k, v}, opts);
      CHECK_MESSAGE(r.passed, r.worst, " rel ", r.max_rel_error);
    }
  }
  SUBCASE("cross entropy with ignored rows") {
    auto logits = random_tensor({4, 5}, rng);
    std::vector<std::size_t> targets{1, 0, 4, 2};
    auto r = grad_check(
        [&](Tape<double>&, const std::vector<Var<double>>& in) { return ops::cross_entropy(in[0], targets, 0); },
        {logits}, opts);
    CHECK_MESSAGE(r.passed, r.worst, " rel ", r.max_rel_error);
  }
  SUBCASE("bce with soft targets") {
    auto logits = random_tensor({2, 6}, rng, 3.0);
    std::vector<double> targets{0, 1.0 / 3, 2.0 / 3, 1, 0, 1, 0.5, 0, 0, 1, 1, 0};
    auto r = grad_check(
        [&](Tape<double>&, const std::vector<Var<double>>& in) { return ops::bce_with_logits<double>(in[0], targets); },
        {logits}, opts);
    CHECK_MESSAGE(r.passed, r.worst, " rel ", r.max_rel_error);
  }
  SUBCASE("gather, concat, transpose, sigmoid, tanh, broadcast rows") {
    auto table = random_tensor({5, 3}, rng), row = random_tensor({3}, rng), other = random_tensor({2, 3}, rng);
    std::vector<std::size_t> ids{4, 1, 4};
    auto r = grad_check(
        [&](Tape<double>&, const std::vector<Var<double>>& in) {
          auto e = ops::gather_rows(in[0], ids);
          auto s = ops::concat_rows<double>({ops::sigmoid(e), ops::tanh(in[2])});
          auto z = ops::mul_row(ops::add_row(s, in[1]), in[1]);
          return ops::sum(ops::softmax(ops::transpose(z)));
        },
        {table, row, other}, opts);
    // softmax rows sum to a constant, so the true gradient is ~0 everywhere.
    CHECK(r.max_rel_error < 1e-4);
    auto r2 = grad_check(
        [&](Tape<double>& t, const std::vector<Var<double>>& in) {
          auto e = ops::gather_rows(in[0], ids);
          auto s = ops::concat_rows<double>({ops::sigmoid(e), ops::tanh(in[2])});
          auto z = ops::mul_row(ops::add_row(s, in[1]), in[1]);
          auto p = ops::softmax(ops::transpose(z));
          return ops::sum(ops::mul(p, ops::transpose(z)));
        },
        {table, row, other}, opts);
    CHECK_MESSAGE(r2.passed, r2.worst, " rel ", r2.max_rel_error);
  }
}

TEST_CASE("dropout with zero rate is the identity and with nonzero rate scales survivors") {
  Tape<float> tape;
  Rng rng(1);
  auto x = tape.constant(make<float>({4}, {1, 2, 3, 4}));
  CHECK(ops::dropout(x, 0.0, rng).id() == x.id());
  auto y = ops::dropout(x, 0.5, rng).tensor();
  for (std::size_t i = 0; i < 4; ++i) CHECK((y[i] == 0.0f || y[i] == 2.0f * x.value()[i]));
}

TEST_CASE("non-finite values are rejected at op boundaries") {
  set_finite_checks(true);
  Tape<float> tape;
  CHECK_THROWS_AS(tape.constant(make<float>({2}, {1.0f, std::numeric_limits<float>::infinity()})), NonFiniteError);
  auto x = tape.constant(make<float>({2}, {1.0f, 1e30f}));
  try {
    ops::scale(x, 1e30f);
    FAIL("expected non-finite error");
  } catch (const NonFiniteError& e) {
    CHECK(std::string(e.what()).find("'scale'") != std::string::npos);
  }
}

TEST_CASE("grad_check reports") {
  std::mt19937_64 rng(9);
  auto x = random_tensor({3, 3}, rng);
  auto r = grad_check([](Tape<double>&, const std::vector<Var<double>>& in) { return ops::sum(in[0]); }, {x},
                      {.step = 1e-3});
  CHECK(r.max_rel_error < 1e-9);

  auto r3 = grad_check(
      [](Tape<double>&, const std::vector<Var<double>>& in) { return ops::sum(ops::mul(ops::mul(in[0], in[0]), in[0])); },
      {x}, {.step = 1e-3, .tolerance = 1e-4});
  CHECK(r3.passed);
}

TEST_CASE("adam update rule") {
  ParameterSet<float> params;
  params.add("w", make<float>({1}, {1.0f}));
  GradientBuffer<float> grads(params);

  SUBCASE("zero gradient leaves the parameter unchanged") {
    AdamState<float> state(params, {});
    adam_step(params, grads, state, 0.1);
    CHECK(params[0].value[0] == 1.0f);
    CHECK(state.step == 1);
  }
  SUBCASE("first step with a constant gradient moves by about lr") {
    AdamState<float> state(params, {});
    grads[0][0] = 1.0f;
    adam_step(params, grads, state, 0.1);
    CHECK(1.0f - params[0].value[0] == Approx(0.1).epsilon(1e-6));
  }
  SUBCASE("NaN gradient names the parameter") {
    AdamState<float> state(params, {});
    grads[0][0] = std::numeric_limits<float>::quiet_NaN();
    try {
      adam_step(params, grads, state, 0.1);
      FAIL("expected failure");
    } catch (const NonFiniteError& e) {
      CHECK(std::string(e.what()).find("'w'") != std::string::npos);
    }
  }
}

TEST_CASE("adam minimizes w^2 like a scalar reference simulation") {
  // Independent scalar transcription of the published update rule.
  double w_ref = 1.0, m = 0.0, v = 0.0;
  for (int t = 1; t <= 100; ++t) {
    const double g = 2.0 * w_ref;
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    const double mh = m / (1.0 - std::pow(0.9, t));
    const double vh = v / (1.0 - std::pow(0.999, t));
    w_ref -= 0.1 * mh / (std::sqrt(vh) + 1e-8);
  }
  CHECK(std::abs(w_ref) < 0.2);

  ParameterSet<double> params;
  params.add("w", make<double>({1}, {1.0}));
  AdamState<double> state(params, {});
  for (int t = 0; t < 100; ++t) {
    GradientBuffer<double> g(params);
    g[0][0] = 2.0 * params[0].value[0];
    adam_step(params, g, state, 0.1);
  }
  CHECK(params[0].value[0] == Approx(w_ref).epsilon(1e-12));
  CHECK(std::abs(params[0].value[0]) < 0.2);
}

TEST_CASE("gradient clipping by global norm") {
  ParameterSet<double> params;
  params.add("a", make<double>({2}, {0, 0}));
  GradientBuffer<double> g(params);
  g[0][0] = 30.0;
  g[0][1] = 40.0;
  CHECK(clip_global_norm(g, 10.0) == Approx(50.0));
  CHECK(g.l2_norm() == Approx(10.0));
}

TEST_CASE("learning-rate schedules") {
  const auto cap = captioner_reference_schedule();
  CHECK(lr_at(cap, 20) == 3.2e-5);
  CHECK(lr_at(cap, 10) == 1.6e-5);
  CHECK(lr_at(cap, 45) == 3.2e-5 * 0.95);
  CHECK(lr_at(cap, 0) == 0.0);
  CHECK(std::abs(lr_at(cap, 45) - 3.04e-5) < 1e-18);

  const auto vqa = vqa_reference_schedule(1e-3);
  CHECK(lr_at(vqa, 10) == 1e-3);
  CHECK(lr_at(vqa, 30) == 0.5e-3);

  double prev = lr_at(cap, 20);
  for (double e = 20; e < 400; e += 0.37) {
    const double cur = lr_at(cap, e);
    CHECK(cur <= prev);
    prev = cur;
  }
  CHECK(lr_at(cap, 20 - 1e-9) == Approx(3.2e-5));
  CHECK_THROWS_AS((LrSchedule{0, 1e-3, 1.5, 1}.validate()), ConfigError);
}

TEST_CASE("checkpoint layout and round trip") {
  std::vector<NamedTensor> ts{{"ab", make<float>({2}, {1.0f, -2.0f})}};
  auto bytes = encode_checkpoint(ts);
  const std::vector<std::uint8_t> expected{'V', 'L', 'D', 'C', 1, 1, 0, 0, 0,  2, 0,    'a',  'b',  1,
                                           2,   0,   0,   0,   0, 0, 0x80, 0x3f, 0, 0, 0, 0xc0};
  CHECK(bytes == expected);
  CHECK(decode_checkpoint(bytes) == ts);

  auto bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_AS(decode_checkpoint(bad), CorruptionError);
  auto truncated = bytes;
  truncated.pop_back();
  CHECK_THROWS_AS(decode_checkpoint(truncated), CorruptionError);

  std::vector<NamedTensor> scalar{{"s", Tensor<float>::scalar(3.5f)}};
  CHECK(decode_checkpoint(encode_checkpoint(scalar)) == scalar);
}

TEST_CASE("train_loop is deterministic for a fixed seed") {
  auto run = [](std::size_t threads) {
    ParameterSet<float> params;
    params.add("w", make<float>({3, 1}, {0.1f, -0.2f, 0.3f}));
    std::vector<std::array<float, 4>> data;
    std::mt19937_64 rng(4);
    std::normal_distribution<float> n;
    for (int i = 0; i < 20; ++i) data.push_back({n(rng), n(rng), n(rng), n(rng)});
    ExampleLossFn<float> loss = [&](Tape<float>& t, std::size_t ex, Rng& r) {
      auto x = t.constant(make<float>({1, 3}, {data[ex][0], data[ex][1], data[ex][2]}));
      auto y = ops::matmul(x, t.parameter(params[0]));
      auto d = ops::sub(ops::dropout(y, 0.1, r), t.constant(make<float>({1, 1}, {data[ex][3]})));
      return ops::sum(ops::mul(d, d));
    };
    TrainLoopOptions opts;
    opts.epochs = 5;
    opts.batch_size = 4;
    opts.seed = 42;
    opts.threads = threads;
    auto res = train_loop(params, data.size(), loss, LrSchedule{1, 0.05, 1.0, 1}, opts);
    return std::make_pair(res.epoch_losses, params[0].value);
  };
  auto a = run(1), b = run(1);
  CHECK(a.first == b.first);
  CHECK(a.second == b.second);
  auto c = run(3), d = run(3);
  CHECK(c.second == d.second);
  CHECK(a.first.back() < a.first.front());
}

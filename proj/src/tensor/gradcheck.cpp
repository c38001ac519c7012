#include "vld/tensor/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace vld {

namespace {

std::vector<std::size_t> pick_coords(std::size_t n, const GradCheckOptions& o, std::mt19937_64& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  if (o.max_coords_per_tensor == 0 || n <= o.max_coords_per_tensor) return idx;
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(o.max_coords_per_tensor);
  std::sort(idx.begin(), idx.end());
  return idx;
}

void compare(GradCheckReport& report, const GradCheckOptions& o, const std::string& name, std::size_t k,
             double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), o.abs_floor});
  const double rel = std::abs(analytic - numeric) / denom;
  ++report.checked;
  if (rel > report.max_rel_error || !std::isfinite(rel)) {
    report.max_rel_error = std::isfinite(rel) ? rel : std::numeric_limits<double>::infinity();
    report.worst = name + "[" + std::to_string(k) + "]";
    report.worst_analytic = analytic;
    report.worst_numeric = numeric;
  }
}

}  // namespace

GradCheckReport grad_check(const InputLossFn& loss, std::vector<Tensor<double>> inputs,
                           const GradCheckOptions& options) {
  std::vector<Tensor<double>> analytic;
  {
    Tape<double> tape;
    std::vector<Var<double>> vars;
    for (const auto& x : inputs) vars.push_back(tape.variable(x));
    auto out = loss(tape, vars);
    tape.backward(out);
    for (const auto& v : vars) analytic.push_back(tape.gradient(v));
  }
  auto evaluate = [&]() {
    Tape<double> tape(false);
    std::vector<Var<double>> vars;
    for (const auto& x : inputs) vars.push_back(tape.constant(x));
    return loss(tape, vars).item();
  };

  GradCheckReport report;
  std::mt19937_64 rng(options.seed);
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    for (auto k : pick_coords(inputs[i].size(), options, rng)) {
      const double orig = inputs[i][k];
      inputs[i][k] = orig + options.step;
      const double up = evaluate();
      inputs[i][k] = orig - options.step;
      const double down = evaluate();
      inputs[i][k] = orig;
      compare(report, options, "input" + std::to_string(i), k, analytic[i][k], (up - down) / (2.0 * options.step));
    }
  }
  report.passed = report.max_rel_error <= options.tolerance;
  return report;
}

GradCheckReport grad_check_parameters(ParameterSet<double>& params, const ParameterLossFn& loss,
                                      const GradCheckOptions& options) {
  GradientBuffer<double> analytic(params);
  {
    Tape<double> tape;
    auto out = loss(tape);
    tape.backward(out);
    tape.accumulate_parameter_grads(analytic);
  }
  auto evaluate = [&]() {
    Tape<double> tape(false);
    return loss(tape).item();
  };

  GradCheckReport report;
  std::mt19937_64 rng(options.seed);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    for (auto k : pick_coords(p.value.size(), options, rng)) {
      const double orig = p.value[k];
      p.value[k] = orig + options.step;
      const double up = evaluate();
      p.value[k] = orig - options.step;
      const double down = evaluate();
      p.value[k] = orig;
      compare(report, options, p.name, k, analytic[i][k], (up - down) / (2.0 * options.step));
    }
  }
  report.passed = report.max_rel_error <= options.tolerance;
  return report;
}

}  // namespace vld

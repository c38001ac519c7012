#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "vld/tensor/tape.hpp"

namespace vld {

struct GradCheckOptions {
  double step = 1e-3;
  double tolerance = 5e-3;
  // Denominator floor of the relative error so that pairs of near-zero
  // gradients compare by absolute difference.
  double abs_floor = 1e-6;
  // Coordinates sampled per tensor; 0 checks every coordinate.
  std::size_t max_coords_per_tensor = 0;
  std::uint64_t seed = 0;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst;  // "<tensor>[<flat index>]" of the worst coordinate
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t checked = 0;
  bool passed = true;
};

// Central differences (f(x+h) - f(x-h)) / 2h against reverse-mode gradients,
// evaluated in 64-bit arithmetic.
using InputLossFn = std::function<Var<double>(Tape<double>&, const std::vector<Var<double>>&)>;
GradCheckReport grad_check(const InputLossFn& loss, std::vector<Tensor<double>> inputs, const GradCheckOptions& options);

// Same check over the entries of a parameter set. `loss` must bind parameters
// through Tape::parameter.
using ParameterLossFn = std::function<Var<double>(Tape<double>&)>;
GradCheckReport grad_check_parameters(ParameterSet<double>& params, const ParameterLossFn& loss,
                                      const GradCheckOptions& options);

}  // namespace vld

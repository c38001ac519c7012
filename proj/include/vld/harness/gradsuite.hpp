#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace vld::harness {

enum class GradTarget { primitives, captioner, vqa, all };

// Throws ConfigError on anything but primitives / captioner / vqa / all.
GradTarget parse_grad_target(const std::string& name);

struct GradSuiteOptions {
  GradTarget target = GradTarget::all;
  double tolerance = 5e-3;
  std::size_t seeds = 10;
  std::uint64_t first_seed = 0;
  double step = 1e-6;
  // Coordinates sampled per parameter tensor in the model checks.
  std::size_t model_coords_per_tensor = 4;
};

struct GradCaseResult {
  std::string name;
  std::size_t seeds = 0;
  std::size_t failures = 0;
  double max_rel_error = 0.0;
  std::string worst;  // "seed N: <coordinate>"
  bool passed() const { return failures == 0; }
};

struct GradSuiteResult {
  std::vector<GradCaseResult> cases;
  bool passed() const;
  double max_rel_error() const;
};

// Primitives on random operands; the captioner and the VQA model end to end
// on micro-batches of synthetic records (mean loss over the batch).
GradSuiteResult run_gradient_suite(const GradSuiteOptions& options,
                                   const std::function<void(const GradCaseResult&)>& on_case = {});

}  // namespace vld::harness

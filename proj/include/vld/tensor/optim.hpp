#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "vld/tensor/parameters.hpp"

namespace vld {

// Linear warm-up from zero to `peak_lr`, then step decay by `decay_factor`
// every `decay_every_epochs`.
struct LrSchedule {
  std::uint32_t warmup_epochs = 0;
  double peak_lr = 1e-3;
  double decay_factor = 1.0;
  std::uint32_t decay_every_epochs = 1;

  void validate() const;
};

// Schedule used for the captioner: 20 warm-up epochs to 3.2e-5, x0.95 every 25.
LrSchedule captioner_reference_schedule();
// Schedule shape used for VQA: 10 warm-up epochs, x0.5 every 20.
LrSchedule vqa_reference_schedule(double peak_lr);

double lr_at(const LrSchedule& schedule, double epoch);

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  // Global-norm clipping threshold; disabled when empty.
  std::optional<double> clip_norm;
};

template <typename T>
struct AdamState {
  AdamOptions options;
  std::uint64_t step = 0;
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;

  AdamState() = default;
  AdamState(const ParameterSet<T>& params, AdamOptions opts);
};

// One bias-corrected Adam update. Rejects NaN/Inf gradients, naming the
// offending parameter.
template <typename T>
void adam_step(ParameterSet<T>& params, const GradientBuffer<T>& grads, AdamState<T>& state, double lr);

// Rescales `grads` in place so their global L2 norm is at most `max_norm`.
// Returns the norm before clipping.
template <typename T>
double clip_global_norm(GradientBuffer<T>& grads, double max_norm);

}  // namespace vld

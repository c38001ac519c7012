#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "vld/tensor/optim.hpp"
#include "vld/tensor/random.hpp"
#include "vld/tensor/tape.hpp"

namespace vld {

struct TrainLoopOptions {
  std::size_t epochs = 1;
  std::size_t batch_size = 16;
  std::uint64_t seed = 0;
  // Examples of one batch are split into contiguous chunks, one per thread;
  // per-thread gradients are summed in thread order.
  std::size_t threads = 1;
  AdamOptions adam;
  // Hard cap on optimizer steps; 0 means no cap.
  std::size_t max_steps = 0;
};

struct TrainLoopResult {
  std::vector<double> epoch_losses;  // mean example loss per completed epoch
  std::size_t steps = 0;
  bool stopped_by_hook = false;
};

// Loss of one example. `rng` is seeded from (seed, epoch, example index), so
// results do not depend on thread partitioning.
template <typename T>
using ExampleLossFn = std::function<Var<T>(Tape<T>& tape, std::size_t example, Rng& rng)>;

// Called after each epoch; returning true stops training.
using EpochHook = std::function<bool(std::size_t epoch, double mean_loss, std::size_t steps)>;

// Minibatch Adam over `num_examples` examples with the learning rate taken
// from `schedule` at fractional epoch (epoch + batch / batches_per_epoch).
template <typename T>
TrainLoopResult train_loop(ParameterSet<T>& params, std::size_t num_examples, const ExampleLossFn<T>& loss,
                           const LrSchedule& schedule, const TrainLoopOptions& options, const EpochHook& hook = {});

}  // namespace vld

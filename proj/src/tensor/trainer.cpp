#include "vld/tensor/trainer.hpp"

#include <algorithm>
#include <numeric>
#include <thread>

namespace vld {

namespace {

template <typename T>
struct ChunkResult {
  GradientBuffer<T> grads;
  double loss = 0.0;
  std::exception_ptr error;
};

template <typename T>
void run_chunk(const ParameterSet<T>& params, const ExampleLossFn<T>& loss, std::span<const std::size_t> examples,
               std::uint64_t seed, std::size_t epoch, ChunkResult<T>& result) {
  try {
    result.grads = GradientBuffer<T>(params);
    for (auto ex : examples) {
      Rng rng(mix_seed({seed, epoch, ex}));
      Tape<T> tape;
      auto l = loss(tape, ex, rng);
      result.loss += static_cast<double>(l.item());
      tape.backward(l);
      tape.accumulate_parameter_grads(result.grads);
    }
  } catch (...) {
    result.error = std::current_exception();
  }
}

}  // namespace

template <typename T>
TrainLoopResult train_loop(ParameterSet<T>& params, std::size_t num_examples, const ExampleLossFn<T>& loss,
                           const LrSchedule& schedule, const TrainLoopOptions& options, const EpochHook& hook) {
  if (num_examples == 0) throw ConfigError("training set is empty");
  if (options.batch_size == 0) throw ConfigError("batch size must be positive");
  schedule.validate();
  const std::size_t threads = std::max<std::size_t>(1, options.threads);
  const std::size_t batches = (num_examples + options.batch_size - 1) / options.batch_size;

  AdamState<T> adam(params, options.adam);
  TrainLoopResult result;
  std::vector<std::size_t> order(num_examples);

  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng(mix_seed({options.seed, epoch, 0x5eedull}));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double epoch_loss = 0.0;
    std::size_t seen = 0;
    bool capped = false;
    for (std::size_t b = 0; b < batches; ++b) {
      const std::size_t begin = b * options.batch_size;
      const std::size_t end = std::min(num_examples, begin + options.batch_size);
      std::span<const std::size_t> batch(order.data() + begin, end - begin);

      const std::size_t workers = std::min(threads, batch.size());
      std::vector<ChunkResult<T>> chunks(workers);
      const std::size_t per = (batch.size() + workers - 1) / workers;
      if (workers == 1) {
        run_chunk(params, loss, batch, options.seed, epoch, chunks[0]);
      } else {
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w) {
          const std::size_t lo = std::min(batch.size(), w * per);
          const std::size_t hi = std::min(batch.size(), lo + per);
          pool.emplace_back(run_chunk<T>, std::cref(params), std::cref(loss), batch.subspan(lo, hi - lo), options.seed,
                            epoch, std::ref(chunks[w]));
        }
        for (auto& t : pool) t.join();
      }
      for (auto& c : chunks) {
        if (c.error) std::rethrow_exception(c.error);
      }
      GradientBuffer<T> total = std::move(chunks[0].grads);
      double batch_loss = chunks[0].loss;
      for (std::size_t w = 1; w < chunks.size(); ++w) {
        total.add(chunks[w].grads);
        batch_loss += chunks[w].loss;
      }
      total.scale(1.0 / static_cast<double>(batch.size()));
      if (options.adam.clip_norm) clip_global_norm(total, *options.adam.clip_norm);

      const double frac_epoch = static_cast<double>(epoch) + static_cast<double>(b) / static_cast<double>(batches);
      adam_step(params, total, adam, lr_at(schedule, frac_epoch));
      ++result.steps;
      epoch_loss += batch_loss;
      seen += batch.size();
      if (options.max_steps && result.steps >= options.max_steps) {
        capped = true;
        break;
      }
    }
    const double mean = epoch_loss / static_cast<double>(seen);
    result.epoch_losses.push_back(mean);
    if (hook && hook(epoch, mean, result.steps)) {
      result.stopped_by_hook = true;
      break;
    }
    if (capped) break;
  }
  return result;
}

template TrainLoopResult train_loop<float>(ParameterSet<float>&, std::size_t, const ExampleLossFn<float>&,
                                           const LrSchedule&, const TrainLoopOptions&, const EpochHook&);
template TrainLoopResult train_loop<double>(ParameterSet<double>&, std::size_t, const ExampleLossFn<double>&,
                                            const LrSchedule&, const TrainLoopOptions&, const EpochHook&);

}  // namespace vld

#include "vld/captioner/train.hpp"

#include <fstream>
#include <thread>

#include "vld/tensor/errors.hpp"
#include "vld/tensor/trainer.hpp"

namespace vld::captioner {

std::vector<CaptionExample> make_caption_examples(const std::vector<features::ImageRecord>& records,
                                                  const CaptionerConfig& config, const features::Vocabulary& vocab) {
  if (vocab.size() != config.vocab_size) {
    throw ConfigError("vocabulary has " + std::to_string(vocab.size()) + " tokens but the captioner expects " +
                      std::to_string(config.vocab_size));
  }
  std::vector<CaptionExample> out;
  for (const auto& rec : records) {
    if (!rec.caption) continue;
    CaptionExample ex;
    ex.id = rec.id;
    ex.sequence = features::assemble_sequence(rec, config.channels);
    ex.reference = *rec.caption;
    ex.target.push_back(features::Vocabulary::bos);
    for (const auto& w : *rec.caption) {
      if (ex.target.size() == config.max_decode_len) break;
      ex.target.push_back(vocab.id(w));
    }
    ex.target.push_back(features::Vocabulary::eos);
    out.push_back(std::move(ex));
  }
  return out;
}

double mean_caption_loss(const CaptionerModel<float>& model, const std::vector<CaptionExample>& examples) {
  if (examples.empty()) throw ConfigError("no caption examples");
  double total = 0.0;
  for (const auto& ex : examples) {
    Tape<float> tape(false);
    total += static_cast<double>(model.loss(tape, ex.sequence, ex.target).item());
  }
  return total / static_cast<double>(examples.size());
}

CaptionTrainResult train_captioner(CaptionerModel<float>& model, const std::vector<CaptionExample>& examples,
                                   const CaptionTrainOptions& options) {
  if (examples.empty()) throw ConfigError("caption training set is empty");
  TrainLoopOptions loop;
  loop.epochs = options.epochs;
  loop.batch_size = options.batch_size;
  loop.seed = options.seed;
  loop.threads = options.threads;
  loop.adam = options.adam;
  loop.max_steps = options.max_steps;

  const ExampleLossFn<float> loss = [&](Tape<float>& tape, std::size_t i, Rng& rng) {
    ForwardOptions fo;
    fo.dropout_rng = &rng;
    return model.loss(tape, examples[i].sequence, examples[i].target, fo);
  };

  CaptionTrainResult result;
  const EpochHook hook = [&](std::size_t epoch, double mean, std::size_t) {
    if (options.on_epoch) options.on_epoch(epoch, mean, lr_at(options.schedule, static_cast<double>(epoch)));
    if (!options.stop_below_loss) return false;
    result.final_eval_loss = mean_caption_loss(model, examples);
    return *result.final_eval_loss < *options.stop_below_loss;
  };
  const auto r = train_loop(model.params(), examples.size(), loss, options.schedule, loop, hook);
  result.epoch_losses = r.epoch_losses;
  result.steps = r.steps;
  result.reached_target = r.stopped_by_hook;
  return result;
}

std::vector<DecodedCaption> decode_captions(const CaptionerModel<float>& model,
                                            const std::vector<CaptionExample>& examples,
                                            const features::Vocabulary& vocab, std::size_t beam_width,
                                            std::size_t threads) {
  std::vector<DecodedCaption> out(examples.size());
  auto work = [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      const auto r = model.decode(examples[i].sequence, beam_width);
      out[i].id = examples[i].id;
      out[i].tokens = vocab.decode(r.best.tokens);
      out[i].logprob = r.best.logprob;
      out[i].truncated = r.truncated;
    }
  };
  threads = std::max<std::size_t>(1, std::min(threads, examples.size()));
  if (threads == 1) {
    work(0, examples.size());
  } else {
    std::vector<std::thread> pool;
    const std::size_t per = (examples.size() + threads - 1) / threads;
    for (std::size_t t = 0; t < threads; ++t) {
      pool.emplace_back(work, std::min(examples.size(), t * per), std::min(examples.size(), (t + 1) * per));
    }
    for (auto& th : pool) th.join();
  }
  return out;
}

void write_decoded_jsonl(const std::filesystem::path& path, const std::vector<DecodedCaption>& decoded) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& d : decoded) {
    nlohmann::ordered_json j;
    j["id"] = d.id;
    j["caption"] = d.tokens;
    j["logprob"] = d.logprob;
    if (d.truncated) j["truncated"] = true;
    out << j.dump() << '\n';
  }
}

}  // namespace vld::captioner

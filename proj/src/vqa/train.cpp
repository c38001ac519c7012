#include "vld/vqa/train.hpp"

#include <fstream>
#include <thread>

#include "vld/tensor/errors.hpp"
#include "vld/tensor/trainer.hpp"

namespace vld::vqa {

VqaExampleSet make_vqa_examples(const std::vector<features::ImageRecord>& records, const VqaConfig& config,
                                const features::Vocabulary& vocab, const AnswerSpace& space) {
  if (vocab.size() != config.question_vocab_size) {
    throw ConfigError("question vocabulary has " + std::to_string(vocab.size()) + " tokens, model expects " +
                      std::to_string(config.question_vocab_size));
  }
  if (space.size() != config.answer_space_size) {
    throw ConfigError("answer space has " + std::to_string(space.size()) + " entries, model expects " +
                      std::to_string(config.answer_space_size));
  }
  const auto channels = config.channels();
  VqaExampleSet set;
  set.space = space;
  for (const auto& rec : records) {
    if (!rec.question) continue;
    if (!rec.answers) throw IngestionError("record '" + rec.id + "' has a question but no answers");
    VqaExample ex;
    ex.id = rec.id;
    ex.question = vocab.encode(*rec.question);
    if (ex.question.empty()) throw DataError("record '" + rec.id + "' has an empty question");
    ex.sequence = features::assemble_sequence(rec, channels);
    ex.answers = *rec.answers;
    ex.targets = soft_scores(ex.answers, space);
    for (float t : ex.targets) ex.has_target |= t > 0.0f;
    ex.padded = ex.sequence.count(features::Channel::box) == 0;
    set.without_target += !ex.has_target;
    set.padded += ex.padded;
    set.examples.push_back(std::move(ex));
  }
  return set;
}

VqaTrainResult train_vqa(VqaModel<float>& model, const VqaExampleSet& data, const VqaTrainOptions& options) {
  std::vector<const VqaExample*> usable;
  for (const auto& ex : data.examples) {
    if (ex.has_target) usable.push_back(&ex);
  }
  if (usable.empty()) throw ConfigError("vqa training set has no example with an in-space answer");

  TrainLoopOptions loop;
  loop.epochs = options.epochs;
  loop.batch_size = options.batch_size;
  loop.seed = options.seed;
  loop.threads = options.threads;
  loop.adam = options.adam;
  loop.max_steps = options.max_steps;

  const ExampleLossFn<float> loss = [&](Tape<float>& tape, std::size_t i, Rng&) {
    const auto& ex = *usable[i];
    return model.loss(tape, ex.question, ex.sequence, ex.targets);
  };

  VqaTrainResult result;
  result.skipped = data.examples.size() - usable.size();
  const EpochHook hook = [&](std::size_t epoch, double mean, std::size_t) {
    if (options.on_epoch) options.on_epoch(epoch, mean, lr_at(options.schedule, static_cast<double>(epoch)));
    if (!options.stop_at_accuracy) return false;
    double total = 0.0;
    for (const auto* ex : usable) {
      total += vqa_accuracy(data.space.answer(model.predict(ex->question, ex->sequence)), ex->answers);
    }
    result.final_accuracy = total / static_cast<double>(usable.size());
    return *result.final_accuracy >= *options.stop_at_accuracy;
  };
  const auto r = train_loop(model.params(), usable.size(), loss, options.schedule, loop, hook);
  result.epoch_losses = r.epoch_losses;
  result.steps = r.steps;
  result.reached_target = r.stopped_by_hook;
  return result;
}

VqaEvaluation evaluate_vqa(const VqaModel<float>& model, const std::vector<VqaExample>& examples,
                           const AnswerSpace& space, std::size_t threads) {
  VqaEvaluation ev;
  ev.predictions.resize(examples.size());
  auto work = [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      const auto& ex = examples[i];
      auto& p = ev.predictions[i];
      p.id = ex.id;
      p.answer = space.answer(model.predict(ex.question, ex.sequence));
      p.accuracy = vqa_accuracy(p.answer, ex.answers);
      p.type = question_type(ex.answers);
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
  double total = 0.0;
  for (const auto& p : ev.predictions) {
    total += p.accuracy;
    ev.accuracy_by_type[p.type] += p.accuracy;
    ++ev.count_by_type[p.type];
  }
  if (!examples.empty()) ev.accuracy = total / static_cast<double>(examples.size());
  for (auto& [t, acc] : ev.accuracy_by_type) acc /= static_cast<double>(ev.count_by_type[t]);
  return ev;
}

void write_predictions_jsonl(const std::filesystem::path& path, const std::vector<VqaPrediction>& predictions) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& p : predictions) {
    nlohmann::ordered_json j;
    j["id"] = p.id;
    j["answer"] = p.answer;
    out << j.dump() << '\n';
  }
}

}  // namespace vld::vqa

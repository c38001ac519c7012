#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "vld/features/record.hpp"
#include "vld/tensor/optim.hpp"
#include "vld/vqa/model.hpp"

namespace vld::vqa {

struct VqaExample {
  std::string id;
  std::vector<std::size_t> question;
  features::FeatureSequence sequence;
  std::vector<std::string> answers;
  std::vector<float> targets;  // soft scores over the answer space
  bool has_target = false;     // some human answer is inside the space
  bool padded = false;         // no B tokens survived assembly
};

struct VqaExampleSet {
  AnswerSpace space;
  std::vector<VqaExample> examples;
  std::size_t without_target = 0;
  std::size_t padded = 0;
};

// Records without a question are skipped.
VqaExampleSet make_vqa_examples(const std::vector<features::ImageRecord>& records, const VqaConfig& config,
                                const features::Vocabulary& vocab, const AnswerSpace& space);

struct VqaTrainOptions {
  std::size_t epochs = 10;
  std::size_t batch_size = 16;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  LrSchedule schedule;
  AdamOptions adam;
  std::size_t max_steps = 0;
  // Stop once consensus accuracy on the training examples reaches this.
  std::optional<double> stop_at_accuracy;
  std::function<void(std::size_t epoch, double train_loss, double lr)> on_epoch;
};

struct VqaTrainResult {
  std::vector<double> epoch_losses;
  std::optional<double> final_accuracy;
  std::size_t steps = 0;
  std::size_t skipped = 0;  // examples without an in-space answer
  bool reached_target = false;
};

VqaTrainResult train_vqa(VqaModel<float>& model, const VqaExampleSet& data, const VqaTrainOptions& options);

struct VqaPrediction {
  std::string id;
  std::string answer;
  double accuracy = 0.0;
  AnswerType type = AnswerType::other;
};

struct VqaEvaluation {
  std::vector<VqaPrediction> predictions;
  double accuracy = 0.0;
  std::map<AnswerType, double> accuracy_by_type;
  std::map<AnswerType, std::size_t> count_by_type;
};

VqaEvaluation evaluate_vqa(const VqaModel<float>& model, const std::vector<VqaExample>& examples,
                           const AnswerSpace& space, std::size_t threads = 1);

// {"id", "answer"} per line.
void write_predictions_jsonl(const std::filesystem::path& path, const std::vector<VqaPrediction>& predictions);

}  // namespace vld::vqa

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "vld/captioner/model.hpp"
#include "vld/features/record.hpp"
#include "vld/tensor/optim.hpp"

namespace vld::captioner {

struct CaptionExample {
  std::string id;
  features::FeatureSequence sequence;
  std::vector<std::size_t> target;  // <bos> ... <eos>
  std::vector<std::string> reference;
};

// Assembles the configured channels and encodes the caption of each record.
// Records without a caption are skipped; captions longer than the decoder
// allows are cut before <eos>.
std::vector<CaptionExample> make_caption_examples(const std::vector<features::ImageRecord>& records,
                                                  const CaptionerConfig& config, const features::Vocabulary& vocab);

struct CaptionTrainOptions {
  std::size_t epochs = 10;
  std::size_t batch_size = 16;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  LrSchedule schedule;
  AdamOptions adam;
  std::size_t max_steps = 0;  // 0: no cap
  // Stop once the eval-mode loss over the training set falls below this.
  std::optional<double> stop_below_loss;
  std::function<void(std::size_t epoch, double train_loss, double lr)> on_epoch;
};

struct CaptionTrainResult {
  std::vector<double> epoch_losses;
  std::optional<double> final_eval_loss;
  std::size_t steps = 0;
  bool reached_target = false;
};

CaptionTrainResult train_captioner(CaptionerModel<float>& model, const std::vector<CaptionExample>& examples,
                                   const CaptionTrainOptions& options);

// Mean teacher-forced loss without dropout.
double mean_caption_loss(const CaptionerModel<float>& model, const std::vector<CaptionExample>& examples);

struct DecodedCaption {
  std::string id;
  std::vector<std::string> tokens;
  double logprob = 0.0;
  bool truncated = false;
};

std::vector<DecodedCaption> decode_captions(const CaptionerModel<float>& model,
                                            const std::vector<CaptionExample>& examples,
                                            const features::Vocabulary& vocab, std::size_t beam_width,
                                            std::size_t threads = 1);

// {"id", "caption": [tokens], "logprob"} per line; readable as metric candidates.
void write_decoded_jsonl(const std::filesystem::path& path, const std::vector<DecodedCaption>& decoded);

}  // namespace vld::captioner

#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "vld/features/record.hpp"
#include "vld/features/synth.hpp"
#include "vld/features/vocabulary.hpp"
#include "vld/vqa/answers.hpp"

namespace vld::harness {

// Dataset directory layout written by the synth command:
//   vocab.txt, answers.txt, synth.json
//   <ultra|frcnn>/train/{manifest.jsonl, features.bin}
//   <ultra|frcnn>/eval/{manifest.jsonl, features.bin}   (when eval images > 0)
inline constexpr const char* kVocabFile = "vocab.txt";
inline constexpr const char* kAnswersFile = "answers.txt";
inline constexpr const char* kSynthFile = "synth.json";

const char* featurizer_dir(features::RegionFeaturizerKind kind);  // "ultra" / "frcnn"

struct SynthWriteOptions {
  features::SynthSpec spec;  // spec.num_images = training images
  std::size_t eval_images = 0;
  bool write_ultra = true;
  bool write_frcnn = true;
  bool force = false;  // replace an existing dataset in `out`
};

struct SynthSummary {
  std::size_t train_records = 0;
  std::size_t eval_records = 0;
  std::size_t vocabulary = 0;
  std::size_t answers = 0;
};

// Both splits come from one world so they share codes and the lift matrix.
// The answer space is built from the training split only.
SynthSummary write_synth_dataset(const std::filesystem::path& out, const SynthWriteOptions& options);

// Manifest directory for a split. `data` may itself be a manifest directory;
// otherwise <data>/<featurizer>/<split> and then <data>/<split> are tried.
std::filesystem::path split_dir(const std::filesystem::path& data, features::RegionFeaturizerKind kind,
                                const std::string& split);
std::vector<features::ImageRecord> load_split(const std::filesystem::path& data, features::RegionFeaturizerKind kind,
                                              const std::string& split);

// The eval split with its name, or the train split when there is none.
std::pair<std::vector<features::ImageRecord>, std::string> load_eval_split(const std::filesystem::path& data,
                                                                         features::RegionFeaturizerKind kind);

// vocab.txt / answers.txt next to the manifests or in a parent directory
// (up to two levels above `data`).
features::Vocabulary load_vocabulary(const std::filesystem::path& data);
vqa::AnswerSpace load_answer_space(const std::filesystem::path& data);

}  // namespace vld::harness

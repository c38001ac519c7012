#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "vld/captioner/train.hpp"
#include "vld/harness/config.hpp"
#include "vld/harness/report.hpp"
#include "vld/vqa/train.hpp"

namespace vld::harness {

struct CaptionScores {
  double cider_d = 0.0;
  double rouge_l = 0.0;
  std::size_t images = 0;
  std::vector<captioner::DecodedCaption> decoded;
};

// Beam-decodes every record with a caption and scores against that caption.
CaptionScores evaluate_captioner(const captioner::CaptionerModel<float>& model, const features::Vocabulary& vocab,
                                 const std::vector<features::ImageRecord>& records, std::size_t threads = 1);

struct CaptionRun {
  captioner::CaptionerModel<float> model;
  features::Vocabulary vocabulary;
  captioner::CaptionTrainResult training;
  CaptionScores scores;
  std::string eval_split;
};

// Trains on the train split and evaluates on the eval split (the train split
// when the dataset has none).
CaptionRun run_captioning(const ExperimentConfig& config);

// One fresh captioner per condition, identical seed, one row per condition
// with CIDEr-D and ROUGE-L.
EvalReport run_ablation(const ExperimentConfig& config, const std::vector<std::string>& conditions,
                        const std::function<void(const std::string&, const CaptionRun&)>& on_condition = {});

struct VqaRun {
  vqa::VqaModel<float> model;
  features::Vocabulary vocabulary;
  vqa::AnswerSpace answers;
  vqa::VqaTrainResult training;
  vqa::VqaEvaluation evaluation;
  std::string eval_split;
};

VqaRun run_vqa(const ExperimentConfig& config);

// Accuracy overall ("all") and per answer type (y/n, number, unanswerable,
// other); "all" is the example-weighted mean of the typed rows.
EvalReport vqa_type_report(const vqa::VqaEvaluation& evaluation, const std::string& title);

}  // namespace vld::harness

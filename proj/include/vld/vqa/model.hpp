#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <vector>

#include <json.hpp>

#include "vld/features/sequence.hpp"
#include "vld/features/vocabulary.hpp"
#include "vld/tensor/ops.hpp"
#include "vld/tensor/parameters.hpp"
#include "vld/vqa/answers.hpp"

namespace vld::vqa {

struct VqaConfig {
  std::size_t hidden_dim = 64;
  std::size_t answer_space_size = 0;
  std::size_t question_embed_dim = 32;
  std::size_t question_vocab_size = 0;
  std::size_t region_input_dim = features::kUltraDim;  // 64 or 2048
  // With 64-D regions: learned 64 -> 2048 projection plus ReLU before use.
  bool ultra_expansion = true;
  std::size_t k_max = 100;
  double b_score_threshold = 0.001;

  void validate() const;  // throws ConfigError
  // Width of the region vectors seen by attention.
  std::size_t region_dim() const;
  // B-only channel selection matching region_input_dim.
  features::ChannelConfig channels() const;
};

nlohmann::json to_json(const VqaConfig& c);
VqaConfig vqa_config_from_json(const nlohmann::json& j);

// Up-down style model: GRU question encoder, question-guided soft attention
// over regions, multiplicative fusion, one weight-normalized classifier.
template <typename T>
class VqaModel {
 public:
  VqaModel(const VqaConfig& config, std::uint64_t seed);
  VqaModel(const VqaConfig& config, ParameterSet<T> params);

  const VqaConfig& config() const { return config_; }
  ParameterSet<T>& params() { return params_; }
  const ParameterSet<T>& params() const { return params_; }

  template <typename U>
  VqaModel<U> cast() const {
    return VqaModel<U>(config_, params_.template cast<U>());
  }

  // [1 x hidden_dim] final GRU state.
  Var<T> encode_question(Tape<T>& tape, const std::vector<std::size_t>& tokens) const;
  // [K x region_dim] from the B tokens; a single zero row when there are none.
  Var<T> region_matrix(Tape<T>& tape, const features::FeatureSequence& seq) const;
  // [1 x region_dim]; `weights` receives the K attention probabilities.
  Var<T> attend(Tape<T>& tape, Var<T> question, Var<T> regions, std::vector<double>* weights = nullptr) const;
  // [1 x hidden_dim]
  Var<T> fuse(Tape<T>& tape, Var<T> question, Var<T> attended) const;
  // [1 x answer_space_size]
  Var<T> classify(Tape<T>& tape, Var<T> fused) const;

  Var<T> logits(Tape<T>& tape, const std::vector<std::size_t>& question, const features::FeatureSequence& seq) const;
  // Binary cross-entropy summed over classes against soft scores.
  Var<T> loss(Tape<T>& tape, const std::vector<std::size_t>& question, const features::FeatureSequence& seq,
              const std::vector<T>& soft_targets) const;

  // Class id of the largest logit, lowest id on ties.
  std::size_t predict(const std::vector<std::size_t>& question, const features::FeatureSequence& seq) const;

 private:
  struct Linear {
    std::size_t w = 0, b = 0;
  };
  struct WnLinear {
    std::size_t v = 0, g = 0, b = 0;
  };

  void build(std::mt19937_64& rng);
  Linear add_linear(std::mt19937_64& rng, const std::string& name, std::size_t in, std::size_t out);
  WnLinear add_wn(std::mt19937_64& rng, const std::string& name, std::size_t in, std::size_t out);
  Var<T> apply(Tape<T>& tape, const Linear& l, Var<T> x) const;
  Var<T> apply(Tape<T>& tape, const WnLinear& l, Var<T> x) const;
  Var<T> p(Tape<T>& tape, std::size_t index) const { return tape.parameter(params_[index]); }

  VqaConfig config_;
  ParameterSet<T> params_;

  std::size_t embedding_ = 0;
  Linear gru_xz_, gru_xr_, gru_xh_;
  std::size_t gru_hz_ = 0, gru_hr_ = 0, gru_hh_ = 0;
  bool expand_ = false;
  Linear expansion_;
  WnLinear att_region_, att_question_;
  Linear att_logit_;
  WnLinear q_branch_, img_branch_, classifier_;
};

// Argmax with ties going to the lowest index.
std::size_t argmax_lowest(const std::vector<double>& values);

// Checkpoint plus "<path>.json" holding config, question vocabulary and answers.
void save_vqa(const std::filesystem::path& path, const VqaModel<float>& model, const features::Vocabulary& vocab,
              const AnswerSpace& answers);
struct LoadedVqa {
  VqaModel<float> model;
  features::Vocabulary vocabulary;
  AnswerSpace answers;
};
LoadedVqa load_vqa(const std::filesystem::path& path);

}  // namespace vld::vqa

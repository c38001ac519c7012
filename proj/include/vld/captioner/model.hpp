#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "vld/captioner/beam.hpp"
#include "vld/features/sequence.hpp"
#include "vld/features/vocabulary.hpp"
#include "vld/tensor/ops.hpp"
#include "vld/tensor/parameters.hpp"

namespace vld::captioner {

struct CaptionerConfig {
  std::size_t num_layers = 6;
  std::size_t num_heads = 8;
  std::size_t d_model = 64;
  std::size_t d_ff = 256;
  // Encoder side only; the encoder sees an unordered set of features.
  bool use_positional_encoding = false;
  // Sinusoidal positions on the decoder's token embeddings.
  bool decoder_positional_encoding = true;
  std::size_t beam_width = 5;
  std::size_t max_decode_len = 20;
  double dropout_rate = 0.1;
  std::size_t frcnn_bottleneck = 64;
  features::ChannelConfig channels;
  std::size_t vocab_size = 0;

  void validate() const;  // throws ConfigError
};

nlohmann::json to_json(const CaptionerConfig& c);
// Rejects unknown keys; missing keys keep their defaults.
CaptionerConfig captioner_config_from_json(const nlohmann::json& j);

// Training-time switches for one forward pass.
struct ForwardOptions {
  std::mt19937_64* dropout_rng = nullptr;  // null disables dropout
  bool causal = true;                      // decoder self-attention mask
  std::vector<ops::AttentionTrace>* encoder_trace = nullptr;
};

template <typename T>
class CaptionerModel {
 public:
  CaptionerModel(const CaptionerConfig& config, std::uint64_t seed);
  CaptionerModel(const CaptionerConfig& config, ParameterSet<T> params);

  const CaptionerConfig& config() const { return config_; }
  ParameterSet<T>& params() { return params_; }
  const ParameterSet<T>& params() const { return params_; }

  template <typename U>
  CaptionerModel<U> cast() const {
    return CaptionerModel<U>(config_, params_.template cast<U>());
  }

  // [T x d_model] encoder input; rows follow the sequence order.
  Var<T> project_channels(Tape<T>& tape, const features::FeatureSequence& seq) const;
  Var<T> encode(Tape<T>& tape, Var<T> inputs, const ForwardOptions& opt = {}) const;
  // Next-token logits [len x V] for decoder input tokens (starting with <bos>).
  Var<T> decoder_logits(Tape<T>& tape, Var<T> memory, const std::vector<std::size_t>& inputs,
                        const ForwardOptions& opt = {}) const;
  // Teacher-forced mean cross-entropy of target[1..] given target[..n-1].
  // `target` starts with <bos> and ends with <eos>; <pad> positions are skipped.
  Var<T> decode_train(Tape<T>& tape, Var<T> memory, const std::vector<std::size_t>& target,
                      const ForwardOptions& opt = {}) const;
  Var<T> loss(Tape<T>& tape, const features::FeatureSequence& seq, const std::vector<std::size_t>& target,
              const ForwardOptions& opt = {}) const;

  BeamResult decode(const features::FeatureSequence& seq, std::size_t beam_width) const;

 private:
  struct Linear {
    std::size_t w = 0;
    std::size_t b = 0;
  };
  struct Norm {
    std::size_t gain = 0;
    std::size_t bias = 0;
  };
  struct Attention {
    Linear q, k, v, o;
  };
  struct EncoderLayer {
    Attention self;
    Norm n1, n2;
    Linear ff1, ff2;
  };
  struct DecoderLayer {
    Attention self, cross;
    Norm n1, n2, n3;
    Linear ff1, ff2;
  };

  void build(std::mt19937_64& rng);
  Linear add_linear(std::mt19937_64& rng, const std::string& name, std::size_t in, std::size_t out,
                    bool zero = false);
  Norm add_norm(const std::string& name);

  Var<T> apply(Tape<T>& tape, const Linear& l, Var<T> x) const;
  Var<T> apply(Tape<T>& tape, const Norm& n, Var<T> x) const;
  Var<T> attend(Tape<T>& tape, const Attention& a, Var<T> q_in, Var<T> kv_in, bool causal,
                std::vector<ops::AttentionTrace>* trace) const;
  Var<T> feed_forward(Tape<T>& tape, const Linear& l1, const Linear& l2, Var<T> x) const;
  Var<T> drop(Var<T> x, const ForwardOptions& opt) const;

  CaptionerConfig config_;
  ParameterSet<T> params_;

  std::optional<Linear> proj_g_, proj_b_, proj_b_bottleneck_, proj_l_;
  std::size_t empty_token_ = 0;
  std::size_t embedding_ = 0;
  std::vector<EncoderLayer> encoder_;
  std::vector<DecoderLayer> decoder_;
  Linear output_;
};

// [rows x d] sinusoidal position table.
template <typename T>
Tensor<T> sinusoidal_positions(std::size_t rows, std::size_t d);

// Checkpoint plus "<path>.json" sidecar holding the config and vocabulary.
void save_captioner(const std::filesystem::path& path, const CaptionerModel<float>& model,
                    const features::Vocabulary& vocab);
struct LoadedCaptioner {
  CaptionerModel<float> model;
  features::Vocabulary vocabulary;
};
LoadedCaptioner load_captioner(const std::filesystem::path& path);

}  // namespace vld::captioner

#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "vld/features/record.hpp"

namespace vld::features {

struct ChannelConfig {
  bool use_global = true;
  bool use_boxes = false;
  bool use_labels = false;
  RegionFeaturizerKind b_featurizer = RegionFeaturizerKind::ultra_style;
  std::size_t k_max = 100;
  double b_score_threshold = 0.001;
  std::size_t l_max = 16;

  void validate() const;  // throws ConfigError
  // Compact condition string, e.g. "G+B-Ultra+L".
  std::string condition_name() const;
  std::size_t max_tokens() const;

  bool operator==(const ChannelConfig&) const = default;
};

// Parses "G", "B-FRCNN", "G + B-Ultra + L" and so on (spaces and case are
// ignored). Other fields keep their defaults.
ChannelConfig parse_condition(std::string_view text);

// The nine channel combinations of the ablation, in reporting order.
const std::vector<std::string>& ablation_conditions();

struct FeatureToken {
  Channel channel = Channel::global;
  std::vector<float> vector;
  float score = 1.0f;
  std::size_t source_index = 0;  // position in the record's region/label list

  bool operator==(const FeatureToken&) const = default;
};

struct FeatureSequence {
  std::vector<FeatureToken> tokens;

  std::size_t size() const { return tokens.size(); }
  std::size_t count(Channel c) const;

  bool operator==(const FeatureSequence&) const = default;
};

// Builds the G|B|L token sequence for one record. Vectors are copied raw;
// projection belongs to the consuming model.
FeatureSequence assemble_sequence(const ImageRecord& record, const ChannelConfig& config);

}  // namespace vld::features

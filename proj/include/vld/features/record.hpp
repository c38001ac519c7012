#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace vld::features {

inline constexpr std::size_t kGlobalDim = 64;
inline constexpr std::size_t kUltraDim = 64;
inline constexpr std::size_t kFrcnnDim = 2048;
inline constexpr std::size_t kLabelDim = 512;
inline constexpr std::size_t kAnswersPerQuestion = 10;

// G: whole-image vector, B: box-region vectors, L: label embeddings.
enum class Channel : std::uint8_t { global, box, label };

char channel_letter(Channel c);

// Which network featurized the proposed boxes. Both consume the same
// proposals; only the vector (and its width) differs.
enum class RegionFeaturizerKind : std::uint8_t { frcnn_style, ultra_style };

std::size_t feature_dim(RegionFeaturizerKind kind);
std::string_view featurizer_name(RegionFeaturizerKind kind);  // "FRCNN" / "Ultra"
// Inverse of feature_dim for the two supported widths.
std::optional<RegionFeaturizerKind> featurizer_for_dim(std::size_t dim);

// Normalized box corners plus proposer confidence.
struct RegionBox {
  float x1 = 0.0f;
  float y1 = 0.0f;
  float x2 = 1.0f;
  float y2 = 1.0f;
  float score = 0.0f;

  void validate() const;
  bool operator==(const RegionBox&) const = default;
};

struct Region {
  RegionBox box;
  std::vector<float> feature;

  bool operator==(const Region&) const = default;
};

struct Label {
  std::string text;
  float score = 1.0f;
  std::vector<float> embedding;

  bool operator==(const Label&) const = default;
};

// One image with whatever channel payloads its producers supplied. An absent
// optional means "not provided"; an empty list means "provided, nothing found".
struct ImageRecord {
  std::string id;
  std::optional<std::vector<float>> global;
  std::optional<std::vector<Region>> regions;
  std::optional<std::vector<Label>> labels;
  std::optional<std::vector<std::string>> caption;
  std::optional<std::vector<std::string>> question;
  std::optional<std::vector<std::string>> answers;

  // Width shared by all region vectors; empty when there are none.
  std::optional<std::size_t> region_dim() const;

  // Throws SchemaError when an invariant is broken (including NaN/Inf).
  void validate() const;

  bool operator==(const ImageRecord&) const = default;
};

}  // namespace vld::features

#include "vld/features/record.hpp"

#include <cmath>

#include "vld/tensor/errors.hpp"

namespace vld::features {

namespace {

void require_finite(const std::vector<float>& v, const std::string& what) {
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!std::isfinite(v[i])) throw SchemaError("non-finite value in " + what + " at index " + std::to_string(i));
  }
}

}  // namespace

char channel_letter(Channel c) {
  switch (c) {
    case Channel::global: return 'G';
    case Channel::box: return 'B';
    case Channel::label: return 'L';
  }
  return '?';
}

std::size_t feature_dim(RegionFeaturizerKind kind) {
  return kind == RegionFeaturizerKind::frcnn_style ? kFrcnnDim : kUltraDim;
}

std::string_view featurizer_name(RegionFeaturizerKind kind) {
  return kind == RegionFeaturizerKind::frcnn_style ? "FRCNN" : "Ultra";
}

std::optional<RegionFeaturizerKind> featurizer_for_dim(std::size_t dim) {
  if (dim == kFrcnnDim) return RegionFeaturizerKind::frcnn_style;
  if (dim == kUltraDim) return RegionFeaturizerKind::ultra_style;
  return std::nullopt;
}

void RegionBox::validate() const {
  const bool in_unit = x1 >= 0.0f && y1 >= 0.0f && x2 <= 1.0f && y2 <= 1.0f;
  if (!in_unit || !(x1 < x2) || !(y1 < y2)) {
    throw SchemaError("box [" + std::to_string(x1) + "," + std::to_string(y1) + "," + std::to_string(x2) + "," +
                      std::to_string(y2) + "] is not a non-empty box in the unit square");
  }
  if (!(score >= 0.0f && score <= 1.0f)) throw SchemaError("box score " + std::to_string(score) + " outside [0,1]");
}

std::optional<std::size_t> ImageRecord::region_dim() const {
  if (!regions || regions->empty()) return std::nullopt;
  return regions->front().feature.size();
}

void ImageRecord::validate() const {
  const std::string where = "record '" + id + "'";
  if (id.empty()) throw SchemaError("record with empty id");
  if (global) {
    if (global->size() != kGlobalDim) {
      throw SchemaError(where + ": global vector has " + std::to_string(global->size()) + " values, expected " +
                        std::to_string(kGlobalDim));
    }
    require_finite(*global, where + " global vector");
  }
  if (regions) {
    const auto dim = region_dim();
    if (dim && !featurizer_for_dim(*dim)) {
      throw SchemaError(where + ": region dimension " + std::to_string(*dim) + " is neither 64 nor 2048");
    }
    for (std::size_t i = 0; i < regions->size(); ++i) {
      const auto& r = (*regions)[i];
      r.box.validate();
      if (r.feature.size() != *dim) {
        throw SchemaError(where + ": region " + std::to_string(i) + " has dimension " +
                          std::to_string(r.feature.size()) + " but region 0 has " + std::to_string(*dim));
      }
      require_finite(r.feature, where + " region " + std::to_string(i));
    }
  }
  if (labels) {
    for (const auto& l : *labels) {
      if (l.embedding.size() != kLabelDim) {
        throw SchemaError(where + ": label '" + l.text + "' embedding has " + std::to_string(l.embedding.size()) +
                          " values, expected " + std::to_string(kLabelDim));
      }
      if (!(l.score >= 0.0f && l.score <= 1.0f)) throw SchemaError(where + ": label score outside [0,1]");
      require_finite(l.embedding, where + " label '" + l.text + "'");
    }
  }
  if (answers && answers->size() != kAnswersPerQuestion) {
    throw SchemaError(where + ": " + std::to_string(answers->size()) + " answers, expected exactly 10");
  }
}

}  // namespace vld::features

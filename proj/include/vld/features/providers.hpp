#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "vld/features/record.hpp"

namespace vld::features {

class BoxProposer {
 public:
  virtual ~BoxProposer() = default;
  virtual std::vector<RegionBox> propose(const std::string& image_id) const = 0;
};

// Turns proposed boxes into vectors of a fixed width. Must return exactly one
// vector per box.
class RegionFeaturizer {
 public:
  virtual ~RegionFeaturizer() = default;
  virtual RegionFeaturizerKind kind() const = 0;
  std::size_t dim() const { return feature_dim(kind()); }
  virtual std::vector<std::vector<float>> featurize(const std::string& image_id,
                                                    const std::vector<RegionBox>& boxes) const = 0;
};

class GlobalFeaturizer {
 public:
  virtual ~GlobalFeaturizer() = default;
  virtual std::vector<float> featurize(const std::string& image_id) const = 0;
};

class Labeler {
 public:
  virtual ~Labeler() = default;
  virtual std::vector<Label> label(const std::string& image_id) const = 0;
};

struct Providers {
  const BoxProposer* proposer = nullptr;
  const RegionFeaturizer* region_featurizer = nullptr;
  const GlobalFeaturizer* global_featurizer = nullptr;
  const Labeler* labeler = nullptr;
};

// Runs whichever providers are set; the B channel needs both a proposer and a
// featurizer. Checks the featurizer contract and the record invariants.
ImageRecord build_record(const std::string& image_id, const Providers& providers);

}  // namespace vld::features

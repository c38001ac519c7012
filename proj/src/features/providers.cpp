#include "vld/features/providers.hpp"

#include "vld/tensor/errors.hpp"

namespace vld::features {

ImageRecord build_record(const std::string& image_id, const Providers& providers) {
  ImageRecord rec;
  rec.id = image_id;
  if (providers.global_featurizer) rec.global = providers.global_featurizer->featurize(image_id);
  if (providers.proposer && providers.region_featurizer) {
    const auto boxes = providers.proposer->propose(image_id);
    auto vectors = providers.region_featurizer->featurize(image_id, boxes);
    if (vectors.size() != boxes.size()) {
      throw ContractError("region featurizer returned " + std::to_string(vectors.size()) + " vectors for " +
                          std::to_string(boxes.size()) + " boxes of image '" + image_id + "'");
    }
    const std::size_t dim = providers.region_featurizer->dim();
    std::vector<Region> regions;
    regions.reserve(boxes.size());
    for (std::size_t i = 0; i < boxes.size(); ++i) {
      if (vectors[i].size() != dim) {
        throw ContractError("region featurizer produced a " + std::to_string(vectors[i].size()) +
                            "-D vector, declared width is " + std::to_string(dim));
      }
      regions.push_back({boxes[i], std::move(vectors[i])});
    }
    rec.regions = std::move(regions);
  }
  if (providers.labeler) rec.labels = providers.labeler->label(image_id);
  rec.validate();
  return rec;
}

}  // namespace vld::features

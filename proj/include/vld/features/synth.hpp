#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "vld/features/providers.hpp"
#include "vld/features/record.hpp"
#include "vld/features/vocabulary.hpp"

namespace vld::features {

struct SynthSpec {
  std::size_t num_images = 200;
  std::size_t num_object_types = 8;
  std::size_t k_regions = 12;  // proposals per image, objects included
  std::size_t max_objects = 3;
  double noise_level = 0.5;  // corruption of the 2048-D featurizer
  double annotator_noise = 0.05;
  std::uint64_t seed = 1;

  void validate() const;  // throws ConfigError
};

inline constexpr std::size_t kMaxObjectTypes = 32;

enum class QuestionKind : std::uint8_t { is_there, how_many, unanswerable };

// Latent ground truth of one image.
struct Scene {
  std::string id;
  std::vector<std::size_t> objects;       // object types, one entry per instance
  std::vector<RegionBox> proposals;       // shuffled proposer output
  std::vector<std::ptrdiff_t> covers;     // object index per proposal, -1 for clutter
  QuestionKind kind = QuestionKind::is_there;
  std::size_t subject = 0;                // type asked about
  std::string truth;
  std::vector<std::string> answers;       // 10 simulated annotators

  std::size_t count_of(std::size_t type) const;
};

// Fixed random codes and sampled scenes for one seed. Also serves as the
// set of synthetic providers.
class SyntheticWorld {
 public:
  explicit SyntheticWorld(const SynthSpec& spec);
  SyntheticWorld(const SyntheticWorld&) = delete;
  SyntheticWorld& operator=(const SyntheticWorld&) = delete;

  const SynthSpec& spec() const { return spec_; }
  std::size_t num_categories() const { return category_codes_.size(); }
  const std::vector<Scene>& scenes() const { return scenes_; }
  const Scene& scene(const std::string& id) const;

  const std::string& type_name(std::size_t type) const;
  std::size_t category_of(std::size_t type) const { return type / 2; }
  const std::string& category_name(std::size_t category) const;

  const BoxProposer& proposer() const { return proposer_; }
  const RegionFeaturizer& featurizer(RegionFeaturizerKind kind) const;
  const GlobalFeaturizer& global() const { return global_; }
  const Labeler& labeler() const { return labeler_; }

  std::vector<std::string> caption(const Scene& scene) const;
  std::vector<std::string> question(const Scene& scene) const;
  // Every token the templates can emit, independent of the sampled scenes.
  std::vector<std::string> template_tokens() const;
  const std::vector<std::string>& answer_candidates() const { return answer_candidates_; }

  // Clean 64-D code of the object under `box` (background code for clutter).
  std::vector<float> clean_region_code(const Scene& scene, const RegionBox& box, std::size_t box_index) const;
  std::vector<float> noisy_region_vector(const Scene& scene, const RegionBox& box, std::size_t box_index) const;

 private:
  struct Proposer final : BoxProposer {
    const SyntheticWorld* world = nullptr;
    std::vector<RegionBox> propose(const std::string& image_id) const override;
  };
  struct Featurizer final : RegionFeaturizer {
    const SyntheticWorld* world = nullptr;
    RegionFeaturizerKind which = RegionFeaturizerKind::ultra_style;
    RegionFeaturizerKind kind() const override { return which; }
    std::vector<std::vector<float>> featurize(const std::string& image_id,
                                              const std::vector<RegionBox>& boxes) const override;
  };
  struct Global final : GlobalFeaturizer {
    const SyntheticWorld* world = nullptr;
    std::vector<float> featurize(const std::string& image_id) const override;
  };
  struct Labels final : Labeler {
    const SyntheticWorld* world = nullptr;
    std::vector<Label> label(const std::string& image_id) const override;
  };

  std::ptrdiff_t object_under(const Scene& scene, const RegionBox& box) const;
  void sample_scene(std::size_t index);

  SynthSpec spec_;
  std::vector<std::vector<float>> type_codes_;      // 64-D
  std::vector<float> background_code_;               // 64-D
  std::vector<std::vector<float>> category_codes_;   // 64-D
  std::vector<std::vector<float>> label_codes_;      // 512-D, one per category
  std::vector<float> lift_;                          // 2048 x 64, row-major
  std::vector<Scene> scenes_;
  std::unordered_map<std::string, std::size_t> by_id_;
  std::vector<std::string> answer_candidates_;

  Proposer proposer_;
  Featurizer ultra_;
  Featurizer frcnn_;
  Global global_;
  Labels labeler_;
};

struct SynthDataset {
  std::vector<ImageRecord> records;
  Vocabulary vocabulary;
  // Distinct answers, most frequent first (ties in candidate order).
  std::vector<std::string> answer_space;
};

// Records carry all three channels with B featurized by `featurizer`.
SynthDataset synth_generate(const SynthSpec& spec, RegionFeaturizerKind featurizer);
SynthDataset synth_generate(const SyntheticWorld& world, RegionFeaturizerKind featurizer);

}  // namespace vld::features

#include "vld/features/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <random>
#include <set>

#include "vld/tensor/errors.hpp"
#include "vld/tensor/random.hpp"

namespace vld::features {

namespace {

const std::vector<std::string>& type_names() {
  static const std::vector<std::string> names = {
      "dog",   "cat",   "bird",   "horse",  "car",   "bus",    "bike",  "boat",  "tree",  "flower", "house",
      "bridge", "chair", "table",  "lamp",  "phone", "laptop", "cup",   "bottle", "apple", "cake",  "pizza",
      "banana", "guitar", "drum",  "ball",  "kite",  "shoe",   "hat",   "bag",   "clock", "tower",
  };
  return names;
}

const std::vector<std::string>& category_names() {
  static const std::vector<std::string> names = {
      "pet",       "animal",  "vehicle", "transport", "plant", "building", "furniture", "light",
      "device",    "kitchen", "fruit",   "food",      "music", "toy",      "clothing",  "landmark",
  };
  return names;
}

const char* const kCountWords[] = {"zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine"};

std::vector<float> gaussian_code(Rng& rng, std::size_t dim) {
  std::normal_distribution<float> n(0.0f, 1.0f);
  std::vector<float> v(dim);
  for (auto& x : v) x = n(rng);
  return v;
}

double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

std::size_t pick(Rng& rng, std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng); }

RegionBox random_box(Rng& rng, float score) {
  RegionBox b;
  const double w = uniform(rng, 0.1, 0.4);
  const double h = uniform(rng, 0.1, 0.4);
  const double x = uniform(rng, 0.0, 1.0 - w);
  const double y = uniform(rng, 0.0, 1.0 - h);
  b.x1 = static_cast<float>(x);
  b.y1 = static_cast<float>(y);
  b.x2 = std::min(1.0f, static_cast<float>(x + w));
  b.y2 = std::min(1.0f, static_cast<float>(y + h));
  b.score = score;
  return b;
}

}  // namespace

void SynthSpec::validate() const {
  if (num_object_types < 2 || num_object_types > kMaxObjectTypes) {
    throw ConfigError("synth: num_object_types must be in [2, " + std::to_string(kMaxObjectTypes) + "]");
  }
  if (max_objects == 0 || max_objects > 9) throw ConfigError("synth: max_objects must be in [1, 9]");
  if (k_regions < max_objects) throw ConfigError("synth: k_regions must be at least max_objects");
  if (!(noise_level >= 0.0 && noise_level <= 1.0)) throw ConfigError("synth: noise_level must be in [0, 1]");
  if (!(annotator_noise >= 0.0 && annotator_noise <= 1.0)) {
    throw ConfigError("synth: annotator_noise must be in [0, 1]");
  }
}

std::size_t Scene::count_of(std::size_t type) const {
  return static_cast<std::size_t>(std::count(objects.begin(), objects.end(), type));
}

SyntheticWorld::SyntheticWorld(const SynthSpec& spec) : spec_(spec) {
  spec_.validate();
  Rng codes(mix_seed({spec_.seed, 1}));
  for (std::size_t t = 0; t < spec_.num_object_types; ++t) type_codes_.push_back(gaussian_code(codes, kUltraDim));
  background_code_ = gaussian_code(codes, kUltraDim);
  const std::size_t categories = (spec_.num_object_types + 1) / 2;
  for (std::size_t c = 0; c < categories; ++c) category_codes_.push_back(gaussian_code(codes, kGlobalDim));
  for (std::size_t c = 0; c < categories; ++c) label_codes_.push_back(gaussian_code(codes, kLabelDim));
  lift_ = gaussian_code(codes, kFrcnnDim * kUltraDim);
  const float lift_scale = 1.0f / std::sqrt(static_cast<float>(kUltraDim));
  for (auto& x : lift_) x *= lift_scale;

  answer_candidates_ = {"yes", "no"};
  for (std::size_t k = 0; k <= spec_.max_objects; ++k) answer_candidates_.push_back(std::to_string(k));
  answer_candidates_.push_back("unanswerable");

  proposer_.world = this;
  ultra_.world = this;
  ultra_.which = RegionFeaturizerKind::ultra_style;
  frcnn_.world = this;
  frcnn_.which = RegionFeaturizerKind::frcnn_style;
  global_.world = this;
  labeler_.world = this;

  scenes_.reserve(spec_.num_images);
  for (std::size_t i = 0; i < spec_.num_images; ++i) sample_scene(i);
}

void SyntheticWorld::sample_scene(std::size_t index) {
  Rng rng(mix_seed({spec_.seed, 2, index}));
  Scene s;
  char buf[32];
  std::snprintf(buf, sizeof buf, "img%06zu", index);
  s.id = buf;

  const std::size_t n_objects = 1 + pick(rng, spec_.max_objects);
  for (std::size_t o = 0; o < n_objects; ++o) s.objects.push_back(pick(rng, spec_.num_object_types));

  for (std::size_t o = 0; o < n_objects; ++o) {
    s.proposals.push_back(random_box(rng, static_cast<float>(uniform(rng, 0.5, 1.0))));
    s.covers.push_back(static_cast<std::ptrdiff_t>(o));
  }
  // Clutter: mostly weak, a share below the 0.001 cut.
  for (std::size_t c = n_objects; c < spec_.k_regions; ++c) {
    const double u = uniform(rng, 0.0, 1.0);
    s.proposals.push_back(random_box(rng, static_cast<float>(0.3 * u * u * u)));
    s.covers.push_back(-1);
  }
  std::vector<std::size_t> perm(s.proposals.size());
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<RegionBox> boxes;
  std::vector<std::ptrdiff_t> covers;
  for (auto p : perm) {
    boxes.push_back(s.proposals[p]);
    covers.push_back(s.covers[p]);
  }
  s.proposals = std::move(boxes);
  s.covers = std::move(covers);

  std::vector<std::size_t> present, absent;
  for (std::size_t t = 0; t < spec_.num_object_types; ++t) (s.count_of(t) ? present : absent).push_back(t);

  const double r = uniform(rng, 0.0, 1.0);
  if (r < 0.4) {
    s.kind = QuestionKind::is_there;
    const bool ask_present = absent.empty() || uniform(rng, 0.0, 1.0) < 0.5;
    s.subject = ask_present ? present[pick(rng, present.size())] : absent[pick(rng, absent.size())];
    s.truth = s.count_of(s.subject) ? "yes" : "no";
  } else if (r < 0.8) {
    s.kind = QuestionKind::how_many;
    const bool ask_present = absent.empty() || uniform(rng, 0.0, 1.0) < 0.8;
    s.subject = ask_present ? present[pick(rng, present.size())] : absent[pick(rng, absent.size())];
    s.truth = std::to_string(s.count_of(s.subject));
  } else {
    s.kind = QuestionKind::unanswerable;
    s.truth = "unanswerable";
  }

  std::vector<std::string> distractors;
  for (const auto& a : answer_candidates_) {
    if (a != s.truth) distractors.push_back(a);
  }
  Rng annot(mix_seed({spec_.seed, 3, index}));
  for (std::size_t a = 0; a < kAnswersPerQuestion; ++a) {
    const bool wrong = uniform(annot, 0.0, 1.0) < spec_.annotator_noise;
    s.answers.push_back(wrong ? distractors[pick(annot, distractors.size())] : s.truth);
  }

  by_id_.emplace(s.id, scenes_.size());
  scenes_.push_back(std::move(s));
}

const Scene& SyntheticWorld::scene(const std::string& id) const {
  const auto it = by_id_.find(id);
  if (it == by_id_.end()) throw DataError("synthetic world has no image '" + id + "'");
  return scenes_[it->second];
}

const std::string& SyntheticWorld::type_name(std::size_t type) const { return type_names().at(type); }

const std::string& SyntheticWorld::category_name(std::size_t category) const {
  return category_names().at(category);
}

const RegionFeaturizer& SyntheticWorld::featurizer(RegionFeaturizerKind kind) const {
  return kind == RegionFeaturizerKind::frcnn_style ? static_cast<const RegionFeaturizer&>(frcnn_) : ultra_;
}

std::vector<std::string> SyntheticWorld::caption(const Scene& scene) const {
  std::vector<std::string> words = {"a", "photo", "of"};
  std::set<std::size_t> distinct(scene.objects.begin(), scene.objects.end());
  bool first = true;
  for (auto t : distinct) {
    if (!first) words.push_back("and");
    first = false;
    words.push_back(kCountWords[scene.count_of(t)]);
    words.push_back(type_name(t));
  }
  return words;
}

std::vector<std::string> SyntheticWorld::question(const Scene& scene) const {
  switch (scene.kind) {
    case QuestionKind::is_there: return {"is", "there", "a", type_name(scene.subject), "?"};
    case QuestionKind::how_many: return {"how", "many", type_name(scene.subject), "are", "there", "?"};
    case QuestionKind::unanswerable: break;
  }
  return {"what", "does", "the", "sign", "say", "?"};
}

std::vector<std::string> SyntheticWorld::template_tokens() const {
  std::vector<std::string> tokens = {"a",  "photo", "of",   "and", "is",  "there", "how",
                                     "many", "are", "what", "does", "the", "sign",  "say", "?"};
  for (std::size_t k = 1; k <= spec_.max_objects; ++k) tokens.push_back(kCountWords[k]);
  for (std::size_t t = 0; t < spec_.num_object_types; ++t) tokens.push_back(type_name(t));
  return tokens;
}

std::ptrdiff_t SyntheticWorld::object_under(const Scene& scene, const RegionBox& box) const {
  for (std::size_t i = 0; i < scene.proposals.size(); ++i) {
    if (scene.proposals[i] == box) return scene.covers[i];
  }
  return -1;
}

std::vector<float> SyntheticWorld::clean_region_code(const Scene& scene, const RegionBox& box,
                                                     std::size_t /*box_index*/) const {
  const auto obj = object_under(scene, box);
  return obj < 0 ? background_code_ : type_codes_[scene.objects[static_cast<std::size_t>(obj)]];
}

// relu(A z) where z blends the true code with a random other type's code and
// adds Gaussian noise, both scaled by noise_level.
std::vector<float> SyntheticWorld::noisy_region_vector(const Scene& scene, const RegionBox& box,
                                                       std::size_t box_index) const {
  const auto obj = object_under(scene, box);
  const std::size_t truth_type = obj < 0 ? spec_.num_object_types : scene.objects[static_cast<std::size_t>(obj)];
  const auto& clean = obj < 0 ? background_code_ : type_codes_[truth_type];

  Rng rng(mix_seed({spec_.seed, fnv1a64(scene.id), box_index, 0xF2CCull}));
  const double lambda = std::min(1.0, spec_.noise_level * uniform(rng, 0.0, 2.0));
  std::size_t other = 0;
  if (obj < 0) {
    other = pick(rng, spec_.num_object_types);
  } else {
    other = pick(rng, spec_.num_object_types - 1);
    if (other >= truth_type) ++other;
  }
  const auto& distractor = type_codes_[other];
  std::normal_distribution<double> n(0.0, 1.0);

  std::vector<double> z(kUltraDim);
  for (std::size_t d = 0; d < kUltraDim; ++d) {
    z[d] = (1.0 - lambda) * clean[d] + lambda * distractor[d] + 0.3 * spec_.noise_level * n(rng);
  }
  std::vector<float> out(kFrcnnDim);
  for (std::size_t r = 0; r < kFrcnnDim; ++r) {
    double acc = 0.0;
    const float* row = lift_.data() + r * kUltraDim;
    for (std::size_t d = 0; d < kUltraDim; ++d) acc += static_cast<double>(row[d]) * z[d];
    out[r] = static_cast<float>(std::max(0.0, acc));
  }
  return out;
}

std::vector<RegionBox> SyntheticWorld::Proposer::propose(const std::string& image_id) const {
  return world->scene(image_id).proposals;
}

std::vector<std::vector<float>> SyntheticWorld::Featurizer::featurize(const std::string& image_id,
                                                                      const std::vector<RegionBox>& boxes) const {
  const auto& s = world->scene(image_id);
  std::vector<std::vector<float>> out;
  out.reserve(boxes.size());
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    out.push_back(which == RegionFeaturizerKind::ultra_style ? world->clean_region_code(s, boxes[i], i)
                                                             : world->noisy_region_vector(s, boxes[i], i));
  }
  return out;
}

std::vector<float> SyntheticWorld::Global::featurize(const std::string& image_id) const {
  const auto& s = world->scene(image_id);
  std::vector<float> g(kGlobalDim, 0.0f);
  for (auto t : s.objects) {
    const auto& code = world->category_codes_[world->category_of(t)];
    for (std::size_t d = 0; d < kGlobalDim; ++d) g[d] += code[d];
  }
  return g;
}

// One label per category present, scored by its share of the objects, plus a
// weak spurious label.
std::vector<Label> SyntheticWorld::Labels::label(const std::string& image_id) const {
  const auto& s = world->scene(image_id);
  std::map<std::size_t, std::size_t> per_category;
  for (auto t : s.objects) ++per_category[world->category_of(t)];
  std::vector<Label> labels;
  for (const auto& [c, n] : per_category) {
    const double share = static_cast<double>(n) / static_cast<double>(s.objects.size());
    labels.push_back({world->category_name(c), static_cast<float>(0.5 + 0.5 * share), world->label_codes_[c]});
  }
  if (per_category.size() < world->num_categories()) {
    Rng rng(mix_seed({world->spec_.seed, fnv1a64(s.id), 0x1abe1ull}));
    std::size_t c = pick(rng, world->num_categories());
    while (per_category.count(c)) c = (c + 1) % world->num_categories();
    labels.push_back({world->category_name(c), static_cast<float>(uniform(rng, 0.05, 0.3)), world->label_codes_[c]});
  }
  return labels;
}

SynthDataset synth_generate(const SynthSpec& spec, RegionFeaturizerKind featurizer) {
  const SyntheticWorld world(spec);
  return synth_generate(world, featurizer);
}

SynthDataset synth_generate(const SyntheticWorld& world, RegionFeaturizerKind featurizer) {
  SynthDataset ds;
  Providers providers{&world.proposer(), &world.featurizer(featurizer), &world.global(), &world.labeler()};
  std::map<std::string, std::size_t> freq;
  for (const auto& s : world.scenes()) {
    auto rec = build_record(s.id, providers);
    rec.caption = world.caption(s);
    rec.question = world.question(s);
    rec.answers = s.answers;
    for (const auto& a : s.answers) ++freq[a];
    ds.records.push_back(std::move(rec));
  }
  ds.vocabulary = Vocabulary::from_tokens(world.template_tokens());

  auto candidates = world.answer_candidates();
  std::stable_sort(candidates.begin(), candidates.end(),
                   [&](const std::string& a, const std::string& b) { return freq[a] > freq[b]; });
  ds.answer_space = std::move(candidates);
  return ds;
}

}  // namespace vld::features

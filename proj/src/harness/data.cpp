#include "vld/harness/data.hpp"

#include <algorithm>
#include <fstream>
#include <map>

#include <json.hpp>
#include <spdlog/spdlog.h>

#include "vld/features/manifest.hpp"
#include "vld/tensor/errors.hpp"

namespace vld::harness {

namespace fs = std::filesystem;
using features::RegionFeaturizerKind;

const char* featurizer_dir(RegionFeaturizerKind kind) {
  return kind == RegionFeaturizerKind::frcnn_style ? "frcnn" : "ultra";
}

namespace {

std::vector<std::string> train_answer_space(const features::SyntheticWorld& world,
                                            const std::vector<features::ImageRecord>& train) {
  std::map<std::string, std::size_t> counts;
  for (const auto& r : train) {
    if (!r.answers) continue;
    for (const auto& a : *r.answers) ++counts[a];
  }
  std::vector<std::string> order;
  for (const auto& c : world.answer_candidates()) {
    if (counts.count(c)) order.push_back(c);
  }
  std::stable_sort(order.begin(), order.end(),
                   [&](const std::string& a, const std::string& b) { return counts[a] > counts[b]; });
  return order;
}

void clear_previous(const fs::path& out, bool force) {
  if (!fs::exists(out)) return;
  if (!fs::is_directory(out)) throw ConfigError(out.string() + " exists and is not a directory");
  if (fs::is_empty(out)) return;
  if (!force) throw ConfigError("output directory " + out.string() + " is not empty (use --force to replace)");
  for (const char* entry : {kVocabFile, kAnswersFile, kSynthFile, "ultra", "frcnn"}) fs::remove_all(out / entry);
}

}  // namespace

SynthSummary write_synth_dataset(const fs::path& out, const SynthWriteOptions& options) {
  if (!options.write_ultra && !options.write_frcnn) throw ConfigError("synth: no featurizer selected");
  auto spec = options.spec;
  spec.validate();
  clear_previous(out, options.force);
  fs::create_directories(out);

  const std::size_t n_train = spec.num_images;
  spec.num_images = n_train + options.eval_images;
  features::SyntheticWorld world(spec);

  SynthSummary summary;
  std::vector<std::string> answers;
  features::Vocabulary vocab;
  for (auto kind : {RegionFeaturizerKind::ultra_style, RegionFeaturizerKind::frcnn_style}) {
    if (kind == RegionFeaturizerKind::ultra_style ? !options.write_ultra : !options.write_frcnn) continue;
    auto data = features::synth_generate(world, kind);
    std::vector<features::ImageRecord> train(data.records.begin(), data.records.begin() + static_cast<long>(n_train));
    std::vector<features::ImageRecord> eval(data.records.begin() + static_cast<long>(n_train), data.records.end());
    features::write_manifest(train, out / featurizer_dir(kind) / "train");
    if (!eval.empty()) features::write_manifest(eval, out / featurizer_dir(kind) / "eval");
    answers = train_answer_space(world, train);
    vocab = data.vocabulary;
    summary.train_records = train.size();
    summary.eval_records = eval.size();
  }
  vocab.save(out / kVocabFile);
  features::write_lines(out / kAnswersFile, answers);

  nlohmann::ordered_json j;
  j["num_images"] = n_train;
  j["eval_images"] = options.eval_images;
  j["num_object_types"] = spec.num_object_types;
  j["k_regions"] = spec.k_regions;
  j["max_objects"] = spec.max_objects;
  j["noise_level"] = spec.noise_level;
  j["annotator_noise"] = spec.annotator_noise;
  j["seed"] = spec.seed;
  std::ofstream(out / kSynthFile, std::ios::trunc) << j.dump(2) << "\n";

  summary.vocabulary = vocab.size();
  summary.answers = answers.size();
  return summary;
}

fs::path split_dir(const fs::path& data, RegionFeaturizerKind kind, const std::string& split) {
  if (!fs::is_directory(data)) throw DataError("data directory " + data.string() + " does not exist");
  if (fs::exists(data / features::kManifestFile)) return data;
  for (const auto& candidate : {data / featurizer_dir(kind) / split, data / split}) {
    if (fs::exists(candidate / features::kManifestFile)) return candidate;
  }
  throw DataError("no " + split + " split for the " + featurizer_dir(kind) + " featurizer under " + data.string());
}

std::vector<features::ImageRecord> load_split(const fs::path& data, RegionFeaturizerKind kind,
                                              const std::string& split) {
  return features::load_manifest(split_dir(data, kind, split));
}

std::pair<std::vector<features::ImageRecord>, std::string> load_eval_split(const fs::path& data,
                                                                         RegionFeaturizerKind kind) {
  fs::path dir;
  try {
    dir = split_dir(data, kind, "eval");
  } catch (const DataError&) {
  }
  if (!dir.empty()) return {features::load_manifest(dir), "eval"};
  spdlog::warn("no eval split under {}; scoring on the training split", data.string());
  return {load_split(data, kind, "train"), "train"};
}

namespace {

fs::path find_upwards(const fs::path& data, const char* file) {
  fs::path dir = fs::absolute(data).lexically_normal();
  if (!dir.has_filename()) dir = dir.parent_path();
  for (int i = 0; i < 3 && !dir.empty(); ++i) {
    if (fs::exists(dir / file)) return dir / file;
    if (!dir.has_parent_path() || dir.parent_path() == dir) break;
    dir = dir.parent_path();
  }
  throw DataError("cannot find " + std::string(file) + " in or above " + data.string());
}

}  // namespace

features::Vocabulary load_vocabulary(const fs::path& data) {
  return features::Vocabulary::load(find_upwards(data, kVocabFile));
}

vqa::AnswerSpace load_answer_space(const fs::path& data) {
  return vqa::AnswerSpace::load(find_upwards(data, kAnswersFile));
}

}  // namespace vld::harness

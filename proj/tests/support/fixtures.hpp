#pragma once

#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <string>

#include "vld/features/record.hpp"

namespace vld::testing {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::mt19937_64 rng(std::random_device{}());
    path_ = std::filesystem::temp_directory_path() / ("vld_" + tag + "_" + std::to_string(rng()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& leaf) const { return path_ / leaf; }

 private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::vector<float> random_vector(std::mt19937_64& rng, std::size_t n) {
  std::normal_distribution<float> d(0.0f, 1.0f);
  std::vector<float> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

// Scores are drawn from a small grid near the threshold so that ties and
// sub-threshold boxes are common.
inline float random_score(std::mt19937_64& rng) {
  static const float grid[] = {0.0f, 0.0005f, 0.000999f, 0.001f, 0.0011f, 0.01f, 0.25f, 0.5f, 0.5f, 0.75f, 1.0f};
  std::uniform_int_distribution<std::size_t> pick(0, std::size(grid) - 1);
  if (std::uniform_int_distribution<int>(0, 3)(rng) == 0) return std::uniform_real_distribution<float>(0.0f, 1.0f)(rng);
  return grid[pick(rng)];
}

inline features::RegionBox random_box(std::mt19937_64& rng) {
  std::uniform_real_distribution<float> u(0.0f, 0.49f);
  features::RegionBox b;
  b.x1 = u(rng);
  b.y1 = u(rng);
  b.x2 = b.x1 + 0.01f + u(rng);
  b.y2 = b.y1 + 0.01f + u(rng);
  b.score = random_score(rng);
  return b;
}

struct RandomRecordOptions {
  std::size_t max_regions = 160;
  std::size_t max_labels = 24;
  std::size_t region_dim = features::kUltraDim;
  bool always_regions = true;
};

inline features::ImageRecord random_record(std::mt19937_64& rng, const std::string& id,
                                           const RandomRecordOptions& opt = {}) {
  features::ImageRecord r;
  r.id = id;
  std::uniform_int_distribution<int> coin(0, 1);
  if (coin(rng)) r.global = random_vector(rng, features::kGlobalDim);
  if (opt.always_regions || coin(rng)) {
    std::vector<features::Region> regions(std::uniform_int_distribution<std::size_t>(0, opt.max_regions)(rng));
    for (auto& reg : regions) {
      reg.box = random_box(rng);
      reg.feature = random_vector(rng, opt.region_dim);
    }
    r.regions = std::move(regions);
  }
  if (coin(rng)) {
    std::vector<features::Label> labels(std::uniform_int_distribution<std::size_t>(0, opt.max_labels)(rng));
    for (std::size_t i = 0; i < labels.size(); ++i) {
      labels[i].text = "label" + std::to_string(i);
      labels[i].score = random_score(rng);
      labels[i].embedding = random_vector(rng, features::kLabelDim);
    }
    r.labels = std::move(labels);
  }
  if (coin(rng)) r.caption = std::vector<std::string>{"a", "photo", "of", id};
  if (coin(rng)) {
    r.question = std::vector<std::string>{"is", "there", "a", "dog", "?"};
    r.answers = std::vector<std::string>(features::kAnswersPerQuestion, coin(rng) ? "yes" : "no");
  }
  return r;
}

}  // namespace vld::testing

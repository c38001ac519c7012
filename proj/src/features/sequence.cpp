#include "vld/features/sequence.hpp"

#include <algorithm>
#include <cctype>
#include <numeric>

#include "vld/tensor/errors.hpp"

namespace vld::features {

void ChannelConfig::validate() const {
  if (!use_global && !use_boxes && !use_labels) throw ConfigError("channel config enables no channel");
  if (k_max == 0) throw ConfigError("k_max must be at least 1");
  if (b_score_threshold < 0.0 || b_score_threshold > 1.0) throw ConfigError("b_score_threshold must lie in [0,1]");
}

std::string ChannelConfig::condition_name() const {
  std::string out;
  auto append = [&](std::string_view part) {
    if (!out.empty()) out += '+';
    out += part;
  };
  if (use_global) append("G");
  if (use_boxes) append(std::string("B-") + std::string(featurizer_name(b_featurizer)));
  if (use_labels) append("L");
  return out;
}

std::size_t ChannelConfig::max_tokens() const {
  return (use_global ? 1 : 0) + (use_boxes ? k_max : 0) + (use_labels ? l_max : 0);
}

ChannelConfig parse_condition(std::string_view text) {
  std::string compact;
  for (char c : text) {
    if (!std::isspace(static_cast<unsigned char>(c))) compact += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  }
  ChannelConfig cfg;
  cfg.use_global = false;
  std::size_t pos = 0;
  bool any = false;
  while (pos <= compact.size()) {
    const auto next = compact.find('+', pos);
    const std::string part = compact.substr(pos, next == std::string::npos ? std::string::npos : next - pos);
    bool dup = false;
    if (part == "G") {
      dup = cfg.use_global;
      cfg.use_global = true;
    } else if (part == "L") {
      dup = cfg.use_labels;
      cfg.use_labels = true;
    } else if (part == "B-FRCNN" || part == "B-ULTRA") {
      dup = cfg.use_boxes;
      cfg.use_boxes = true;
      cfg.b_featurizer = part == "B-FRCNN" ? RegionFeaturizerKind::frcnn_style : RegionFeaturizerKind::ultra_style;
    } else {
      throw ConfigError("unknown channel '" + part + "' in condition '" + std::string(text) +
                        "' (expected G, B-FRCNN, B-Ultra or L)");
    }
    if (dup) throw ConfigError("channel repeated in condition '" + std::string(text) + "'");
    any = true;
    if (next == std::string::npos) break;
    pos = next + 1;
  }
  if (!any) throw ConfigError("empty condition");
  cfg.validate();
  return cfg;
}

const std::vector<std::string>& ablation_conditions() {
  static const std::vector<std::string> conditions = {
      "G", "B-FRCNN", "B-Ultra", "L", "G+B-FRCNN", "G+B-Ultra", "G+L", "G+B-FRCNN+L", "G+B-Ultra+L",
  };
  return conditions;
}

std::size_t FeatureSequence::count(Channel c) const {
  return static_cast<std::size_t>(
      std::count_if(tokens.begin(), tokens.end(), [c](const FeatureToken& t) { return t.channel == c; }));
}

namespace {

// Indices ordered by descending score; equal scores keep their original order.
template <typename ScoreFn>
std::vector<std::size_t> rank_by_score(std::size_t n, ScoreFn score) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return score(a) > score(b); });
  return idx;
}

[[noreturn]] void missing(Channel c, const ImageRecord& record) {
  throw IngestionError(std::string("channel ") + channel_letter(c) + " is enabled but record '" + record.id +
                       "' does not provide it");
}

}  // namespace

FeatureSequence assemble_sequence(const ImageRecord& record, const ChannelConfig& config) {
  config.validate();
  FeatureSequence seq;

  if (config.use_global) {
    if (!record.global) missing(Channel::global, record);
    if (record.global->size() != kGlobalDim) {
      throw DimensionError("record '" + record.id + "': global vector has " + std::to_string(record.global->size()) +
                           " values, expected 64");
    }
    seq.tokens.push_back({Channel::global, *record.global, 1.0f, 0});
  }

  if (config.use_boxes) {
    if (!record.regions) missing(Channel::box, record);
    const auto& regions = *record.regions;
    const std::size_t want = feature_dim(config.b_featurizer);
    if (const auto dim = record.region_dim(); dim && *dim != want) {
      throw FeaturizerMismatchError("record '" + record.id + "' carries " + std::to_string(*dim) +
                                    "-D region vectors but the condition asks for B-" +
                                    std::string(featurizer_name(config.b_featurizer)) + " (" + std::to_string(want) +
                                    "-D)");
    }
    const auto order = rank_by_score(regions.size(), [&](std::size_t i) { return regions[i].box.score; });
    std::size_t kept = 0;
    for (auto i : order) {
      if (kept == config.k_max) break;
      const auto& r = regions[i];
      if (static_cast<double>(r.box.score) < config.b_score_threshold) continue;
      seq.tokens.push_back({Channel::box, r.feature, r.box.score, i});
      ++kept;
    }
  }

  if (config.use_labels) {
    if (!record.labels) missing(Channel::label, record);
    const auto& labels = *record.labels;
    const auto order = rank_by_score(labels.size(), [&](std::size_t i) { return labels[i].score; });
    for (std::size_t k = 0; k < order.size() && k < config.l_max; ++k) {
      const auto& l = labels[order[k]];
      seq.tokens.push_back({Channel::label, l.embedding, l.score, order[k]});
    }
  }
  return seq;
}

}  // namespace vld::features

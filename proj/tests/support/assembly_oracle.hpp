#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "vld/features/sequence.hpp"

namespace vld::testing {

// Checks one assembled sequence against the contract by rank counting:
// region i survives iff its score clears the threshold and fewer than k_max
// eligible regions outrank it (higher score, or equal score and lower index).
// Returns an empty string when everything holds, else a description.
inline std::string check_assembly(const features::ImageRecord& rec, const features::ChannelConfig& cfg,
                                  const features::FeatureSequence& seq) {
  using features::Channel;
  std::size_t pos = 0;
  auto fail = [&](const std::string& what) { return "record " + rec.id + ": " + what; };

  if (seq.size() > cfg.max_tokens()) return fail("sequence longer than 1 + k_max + l_max");
  if (cfg.use_global) {
    if (pos >= seq.size() || seq.tokens[pos].channel != Channel::global) return fail("missing leading G token");
    if (seq.tokens[pos].vector != *rec.global) return fail("G vector altered");
    ++pos;
  }
  if (cfg.use_boxes) {
    const auto& regs = *rec.regions;
    auto outranks = [&](std::size_t j, std::size_t i) {
      return regs[j].box.score > regs[i].box.score || (regs[j].box.score == regs[i].box.score && j < i);
    };
    auto eligible = [&](std::size_t i) { return static_cast<double>(regs[i].box.score) >= cfg.b_score_threshold; };
    // rank[i] = number of eligible regions ahead of i
    std::vector<std::size_t> expected;
    for (std::size_t i = 0; i < regs.size(); ++i) {
      if (!eligible(i)) continue;
      std::size_t ahead = 0;
      for (std::size_t j = 0; j < regs.size(); ++j) ahead += (j != i && eligible(j) && outranks(j, i)) ? 1 : 0;
      if (ahead < cfg.k_max) {
        if (expected.size() <= ahead) expected.resize(ahead + 1, SIZE_MAX);
        expected[ahead] = i;
      }
    }
    for (std::size_t r = 0; r < expected.size(); ++r) {
      if (pos >= seq.size()) return fail("too few B tokens");
      const auto& tok = seq.tokens[pos++];
      if (tok.channel != Channel::box) return fail("channel order broken inside B block");
      if (tok.source_index != expected[r]) {
        return fail("B rank " + std::to_string(r) + " holds region " + std::to_string(tok.source_index) +
                    ", expected " + std::to_string(expected[r]));
      }
      if (tok.score != regs[expected[r]].box.score || tok.vector != regs[expected[r]].feature) {
        return fail("B token payload differs from its region");
      }
      if (static_cast<double>(tok.score) < cfg.b_score_threshold) return fail("B token below threshold");
    }
    if (expected.size() > cfg.k_max) return fail("more than k_max B tokens");
  }
  if (cfg.use_labels) {
    const auto& labs = *rec.labels;
    std::size_t emitted = 0;
    float prev = 2.0f;
    std::size_t prev_index = 0;
    while (pos < seq.size()) {
      const auto& tok = seq.tokens[pos++];
      if (tok.channel != Channel::label) return fail("unexpected token after L block start");
      if (tok.score > prev || (tok.score == prev && tok.source_index < prev_index)) return fail("L order broken");
      if (tok.vector != labs[tok.source_index].embedding) return fail("L payload differs from its label");
      prev = tok.score;
      prev_index = tok.source_index;
      ++emitted;
    }
    if (emitted != std::min(cfg.l_max, labs.size())) return fail("wrong L token count");
    std::vector<bool> taken(labs.size(), false);
    for (const auto& tok : seq.tokens) {
      if (tok.channel == Channel::label) taken[tok.source_index] = true;
    }
    for (std::size_t i = 0; i < labs.size(); ++i) {
      if (!taken[i] && (labs[i].score > prev || (labs[i].score == prev && i < prev_index))) {
        return fail("label " + std::to_string(i) + " dropped while a lower-ranked one was kept");
      }
    }
  }
  if (pos != seq.size()) return fail("trailing tokens");
  return {};
}

}  // namespace vld::testing

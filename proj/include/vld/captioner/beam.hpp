#pragma once

#include <cstddef>
#include <functional>
#include <vector>

namespace vld::captioner {

struct BeamHypothesis {
  std::vector<std::size_t> tokens;  // generated tokens, <bos> excluded
  double logprob = 0.0;
  bool finished = false;
};

struct BeamResult {
  BeamHypothesis best;
  bool truncated = false;  // nothing reached <eos> within max_len
};

// Log-probabilities over the vocabulary for the token following `prefix`
// (which starts with <bos>). -inf marks a token that may not be emitted.
using NextTokenScorer = std::function<std::vector<double>(const std::vector<std::size_t>& prefix)>;

struct BeamOptions {
  std::size_t beam_width = 5;
  std::size_t max_len = 20;  // generated tokens, <eos> included
  std::size_t bos = 1;
  std::size_t eos = 2;
};

// Length-unnormalized beam search. Each step expands every live hypothesis
// over the vocabulary and keeps the best `beam_width` expansions; those ending
// in <eos> move to the completed pool. Equal scores are ordered by the token
// sequence, lexicographically by id.
BeamResult beam_search(const NextTokenScorer& scorer, const BeamOptions& options);

// Repeated argmax (lowest id on ties) until <eos> or max_len.
BeamResult greedy_decode(const NextTokenScorer& scorer, const BeamOptions& options);

// True when `a` should be preferred over `b` under the ordering above.
bool better(const BeamHypothesis& a, const BeamHypothesis& b);

}  // namespace vld::captioner

#include "vld/captioner/beam.hpp"

#include <algorithm>
#include <cmath>

#include "vld/tensor/errors.hpp"

namespace vld::captioner {

bool better(const BeamHypothesis& a, const BeamHypothesis& b) {
  if (a.logprob != b.logprob) return a.logprob > b.logprob;
  return a.tokens < b.tokens;
}

namespace {

std::vector<std::size_t> with_bos(const BeamHypothesis& h, std::size_t bos) {
  std::vector<std::size_t> prefix;
  prefix.reserve(h.tokens.size() + 1);
  prefix.push_back(bos);
  prefix.insert(prefix.end(), h.tokens.begin(), h.tokens.end());
  return prefix;
}

void check(const BeamOptions& o) {
  if (o.beam_width == 0) throw ConfigError("beam_width must be at least 1");
  if (o.max_len == 0) throw ConfigError("max_decode_len must be at least 1");
}

}  // namespace

BeamResult beam_search(const NextTokenScorer& scorer, const BeamOptions& options) {
  check(options);
  std::vector<BeamHypothesis> live(1);
  std::vector<BeamHypothesis> done;

  for (std::size_t step = 0; step < options.max_len && !live.empty(); ++step) {
    std::vector<BeamHypothesis> candidates;
    for (const auto& h : live) {
      const auto lp = scorer(with_bos(h, options.bos));
      for (std::size_t tok = 0; tok < lp.size(); ++tok) {
        if (std::isinf(lp[tok]) && lp[tok] < 0) continue;
        if (std::isnan(lp[tok])) throw NonFiniteError("beam search: NaN log-probability for token " + std::to_string(tok));
        BeamHypothesis c;
        c.tokens = h.tokens;
        c.tokens.push_back(tok);
        c.logprob = h.logprob + lp[tok];
        c.finished = tok == options.eos;
        candidates.push_back(std::move(c));
      }
    }
    const std::size_t keep = std::min(options.beam_width, candidates.size());
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<long>(keep), candidates.end(), better);
    candidates.resize(keep);

    live.clear();
    for (auto& c : candidates) (c.finished ? done : live).push_back(std::move(c));

    // Scores only fall as tokens append, so a completed hypothesis strictly
    // ahead of every live one cannot be overtaken.
    if (!done.empty() && !live.empty()) {
      const auto best_done = *std::min_element(done.begin(), done.end(), better);
      const auto best_live = *std::min_element(live.begin(), live.end(), better);
      if (best_done.logprob > best_live.logprob) live.clear();
    }
  }

  BeamResult result;
  if (!done.empty()) {
    result.best = *std::min_element(done.begin(), done.end(), better);
  } else if (!live.empty()) {
    result.best = *std::min_element(live.begin(), live.end(), better);
    result.truncated = true;
  } else {
    result.truncated = true;  // every continuation was forbidden
  }
  return result;
}

BeamResult greedy_decode(const NextTokenScorer& scorer, const BeamOptions& options) {
  check(options);
  BeamHypothesis h;
  for (std::size_t step = 0; step < options.max_len; ++step) {
    const auto lp = scorer(with_bos(h, options.bos));
    std::size_t arg = lp.size();
    for (std::size_t tok = 0; tok < lp.size(); ++tok) {
      if (std::isinf(lp[tok]) && lp[tok] < 0) continue;
      if (arg == lp.size() || lp[tok] > lp[arg]) arg = tok;
    }
    if (arg == lp.size()) break;
    h.tokens.push_back(arg);
    h.logprob += lp[arg];
    if (arg == options.eos) {
      h.finished = true;
      break;
    }
  }
  return {h, !h.finished};
}

}  // namespace vld::captioner

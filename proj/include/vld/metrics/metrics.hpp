#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace vld::metrics {

using Caption = std::vector<std::string>;
using CandidateMap = std::map<std::string, Caption>;
using ReferenceMap = std::map<std::string, std::vector<Caption>>;

// Lowercases ASCII letters, deletes the characters . , ! ? ; : " ' ( ) [ ]
// and splits on whitespace.
Caption tokenize(std::string_view text);
std::string join(const Caption& tokens);

struct CorpusScore {
  std::map<std::string, double> per_image;
  double corpus = 0.0;
};

// CIDEr-D over n = 1..4: TF-IDF n-gram vectors with document frequencies from
// the references of the evaluated images, candidate counts clipped by the
// reference counts, Gaussian length penalty (sigma 6), scaled by 10 and
// averaged over references.
CorpusScore cider_d(const CandidateMap& candidates, const ReferenceMap& references);

std::size_t lcs_length(const Caption& a, const Caption& b);

// LCS F-measure with beta 1.2, best reference wins.
double rouge_l(const Caption& candidate, const std::vector<Caption>& references);
CorpusScore rouge_l(const CandidateMap& candidates, const ReferenceMap& references);

// {"id": ..., "caption": "text" | [tokens]} per line.
CandidateMap read_candidates_jsonl(const std::filesystem::path& path);
// {"id": ..., "captions": ["text" | [tokens], ...]} per line; a candidate-style
// {"id", "caption"} line counts as a single reference.
ReferenceMap read_references_jsonl(const std::filesystem::path& path);
void write_candidates_jsonl(const std::filesystem::path& path, const CandidateMap& candidates);
void write_references_jsonl(const std::filesystem::path& path, const ReferenceMap& references);

// {"per_image": {id: score}, "corpus": score}
std::string score_json(const CorpusScore& score);

}  // namespace vld::metrics

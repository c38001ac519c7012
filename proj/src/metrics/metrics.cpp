#include "vld/metrics/metrics.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <fstream>
#include <set>
#include <unordered_map>

#include <json.hpp>

#include "vld/tensor/errors.hpp"

namespace vld::metrics {

namespace {

constexpr std::size_t kMaxN = 4;
constexpr double kSigma = 6.0;
constexpr double kBeta = 1.2;

bool is_stripped(char c) {
  switch (c) {
    case '.': case ',': case '!': case '?': case ';': case ':':
    case '"': case '\'': case '(': case ')': case '[': case ']':
      return true;
    default:
      return false;
  }
}

// Counts of every n-gram, n = 1..4, keyed by the tokens joined with '\x1f'.
using Counts = std::array<std::unordered_map<std::string, double>, kMaxN>;

Counts ngram_counts(const Caption& c) {
  Counts out;
  for (std::size_t n = 1; n <= kMaxN; ++n) {
    for (std::size_t i = 0; i + n <= c.size(); ++i) {
      std::string key = c[i];
      for (std::size_t k = 1; k < n; ++k) {
        key += '\x1f';
        key += c[i + k];
      }
      out[n - 1][key] += 1.0;
    }
  }
  return out;
}

struct TfIdf {
  std::array<std::unordered_map<std::string, double>, kMaxN> vec;
  std::array<double, kMaxN> norm{};
  double length = 0.0;
};

TfIdf to_tfidf(const Counts& counts, double length, const Counts& df, double log_n) {
  TfIdf t;
  t.length = length;
  for (std::size_t n = 0; n < kMaxN; ++n) {
    for (const auto& [g, tf] : counts[n]) {
      const auto it = df[n].find(g);
      const double d = std::log(std::max(1.0, it == df[n].end() ? 0.0 : it->second));
      const double v = tf * (log_n - d);
      t.vec[n][g] = v;
      t.norm[n] += v * v;
    }
    t.norm[n] = std::sqrt(t.norm[n]);
  }
  return t;
}

double similarity(const TfIdf& hyp, const TfIdf& ref) {
  const double delta = hyp.length - ref.length;
  const double penalty = std::exp(-(delta * delta) / (2.0 * kSigma * kSigma));
  double total = 0.0;
  for (std::size_t n = 0; n < kMaxN; ++n) {
    double val = 0.0;
    for (const auto& [g, hv] : hyp.vec[n]) {
      const auto it = ref.vec[n].find(g);
      if (it != ref.vec[n].end()) val += std::min(hv, it->second) * it->second;
    }
    if (hyp.norm[n] != 0.0 && ref.norm[n] != 0.0) {
      val /= hyp.norm[n] * ref.norm[n];
    } else {
      val = 0.0;
    }
    total += val * penalty;
  }
  return total;
}

Caption caption_from_json(const nlohmann::json& v, const std::string& where) {
  if (v.is_string()) return tokenize(v.get<std::string>());
  if (v.is_array()) {
    Caption c;
    for (const auto& t : v) {
      if (!t.is_string()) throw SchemaError(where + ": caption token is not a string");
      auto parts = tokenize(t.get<std::string>());
      c.insert(c.end(), parts.begin(), parts.end());
    }
    return c;
  }
  throw SchemaError(where + ": caption must be a string or an array of tokens");
}

template <typename Fn>
void for_each_json_line(const std::filesystem::path& path, Fn fn) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestionError("cannot open " + path.string());
  std::string line;
  std::size_t no = 0;
  while (std::getline(in, line)) {
    ++no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path.string() + " line " + std::to_string(no);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw IngestionError(where + ": malformed JSON (" + e.what() + ")");
    }
    if (!j.is_object() || !j.contains("id") || !j["id"].is_string()) {
      throw SchemaError(where + ": expected an object with a string id");
    }
    fn(j, where);
  }
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw DataError("write failed for " + path.string());
}

}  // namespace

Caption tokenize(std::string_view text) {
  Caption out;
  std::string cur;
  for (char ch : text) {
    if (is_stripped(ch)) continue;
    if (std::isspace(static_cast<unsigned char>(ch))) {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
      continue;
    }
    cur += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

std::string join(const Caption& tokens) {
  std::string s;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) s += ' ';
    s += tokens[i];
  }
  return s;
}

CorpusScore cider_d(const CandidateMap& candidates, const ReferenceMap& references) {
  Counts df;  // per n: number of images whose references contain the gram
  std::map<std::string, std::vector<Counts>> ref_counts;
  for (const auto& [id, cand] : candidates) {
    const auto it = references.find(id);
    if (it == references.end()) throw DataError("cider_d: candidate '" + id + "' has no references");
    if (it->second.empty()) throw DataError("cider_d: reference list for '" + id + "' is empty");
    auto& rc = ref_counts[id];
    std::array<std::set<std::string>, kMaxN> grams;
    for (const auto& ref : it->second) {
      rc.push_back(ngram_counts(ref));
      for (std::size_t n = 0; n < kMaxN; ++n) {
        for (const auto& [g, _] : rc.back()[n]) grams[n].insert(g);
      }
    }
    for (std::size_t n = 0; n < kMaxN; ++n) {
      for (const auto& g : grams[n]) df[n][g] += 1.0;
    }
  }

  CorpusScore out;
  if (candidates.empty()) return out;
  const double log_n = std::log(static_cast<double>(candidates.size()));
  double sum = 0.0;
  for (const auto& [id, cand] : candidates) {
    const auto hyp = to_tfidf(ngram_counts(cand), static_cast<double>(cand.size()), df, log_n);
    const auto& refs = references.at(id);
    double score = 0.0;
    for (std::size_t r = 0; r < refs.size(); ++r) {
      const auto ref = to_tfidf(ref_counts[id][r], static_cast<double>(refs[r].size()), df, log_n);
      score += similarity(hyp, ref);
    }
    score = score / static_cast<double>(kMaxN) / static_cast<double>(refs.size()) * 10.0;
    out.per_image[id] = score;
    sum += score;
  }
  out.corpus = sum / static_cast<double>(candidates.size());
  return out;
}

std::size_t lcs_length(const Caption& a, const Caption& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double rouge_l(const Caption& candidate, const std::vector<Caption>& references) {
  double best = 0.0;
  for (const auto& ref : references) {
    const double lcs = static_cast<double>(lcs_length(candidate, ref));
    if (lcs == 0.0) continue;
    const double p = lcs / static_cast<double>(candidate.size());
    const double r = lcs / static_cast<double>(ref.size());
    const double f = (1.0 + kBeta * kBeta) * p * r / (r + kBeta * kBeta * p);
    best = std::max(best, f);
  }
  return best;
}

CorpusScore rouge_l(const CandidateMap& candidates, const ReferenceMap& references) {
  CorpusScore out;
  double sum = 0.0;
  for (const auto& [id, cand] : candidates) {
    const auto it = references.find(id);
    if (it == references.end()) throw DataError("rouge_l: candidate '" + id + "' has no references");
    const double s = rouge_l(cand, it->second);
    out.per_image[id] = s;
    sum += s;
  }
  if (!candidates.empty()) out.corpus = sum / static_cast<double>(candidates.size());
  return out;
}

CandidateMap read_candidates_jsonl(const std::filesystem::path& path) {
  CandidateMap out;
  for_each_json_line(path, [&](const nlohmann::json& j, const std::string& where) {
    if (!j.contains("caption")) throw SchemaError(where + ": missing caption");
    const auto id = j["id"].get<std::string>();
    if (!out.emplace(id, caption_from_json(j["caption"], where)).second) {
      throw SchemaError(where + ": duplicate id '" + id + "'");
    }
  });
  return out;
}

ReferenceMap read_references_jsonl(const std::filesystem::path& path) {
  ReferenceMap out;
  for_each_json_line(path, [&](const nlohmann::json& j, const std::string& where) {
    const bool single = j.contains("caption") && !j.contains("captions");
    if (!single && (!j.contains("captions") || !j["captions"].is_array())) {
      throw SchemaError(where + ": missing captions array");
    }
    const auto id = j["id"].get<std::string>();
    auto& refs = out[id];
    if (!refs.empty()) throw SchemaError(where + ": duplicate id '" + id + "'");
    if (single) {
      refs.push_back(caption_from_json(j["caption"], where));
    } else {
      for (const auto& c : j["captions"]) refs.push_back(caption_from_json(c, where));
    }
    if (refs.empty()) throw SchemaError(where + ": empty captions array");
  });
  return out;
}

void write_candidates_jsonl(const std::filesystem::path& path, const CandidateMap& candidates) {
  std::string text;
  for (const auto& [id, cap] : candidates) {
    nlohmann::ordered_json j;
    j["id"] = id;
    j["caption"] = join(cap);
    text += j.dump() + "\n";
  }
  write_text(path, text);
}

void write_references_jsonl(const std::filesystem::path& path, const ReferenceMap& references) {
  std::string text;
  for (const auto& [id, refs] : references) {
    nlohmann::ordered_json j;
    j["id"] = id;
    j["captions"] = nlohmann::ordered_json::array();
    for (const auto& r : refs) j["captions"].push_back(join(r));
    text += j.dump() + "\n";
  }
  write_text(path, text);
}

std::string score_json(const CorpusScore& score) {
  nlohmann::ordered_json j;
  j["per_image"] = nlohmann::ordered_json::object();
  for (const auto& [id, s] : score.per_image) j["per_image"][id] = s;
  j["corpus"] = score.corpus;
  return j.dump(2);
}

}  // namespace vld::metrics

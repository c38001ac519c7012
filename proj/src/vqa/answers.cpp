#include "vld/vqa/answers.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <regex>

#include "vld/features/record.hpp"
#include "vld/features/vocabulary.hpp"
#include "vld/tensor/errors.hpp"

namespace vld::vqa {

std::string normalize_answer(const std::string& raw) {
  std::string out;
  bool pending_space = false;
  for (unsigned char c : raw) {
    if (std::isspace(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(static_cast<char>(std::tolower(c)));
  }
  while (!out.empty() && std::string_view(".,!?;:").find(out.back()) != std::string_view::npos) out.pop_back();
  while (!out.empty() && out.back() == ' ') out.pop_back();
  return out;
}

AnswerSpace AnswerSpace::from_list(const std::vector<std::string>& answers) {
  AnswerSpace s;
  for (const auto& raw : answers) {
    auto a = normalize_answer(raw);
    if (a.empty()) throw SchemaError("answer space entry '" + raw + "' is empty after normalization");
    if (!s.index_.emplace(a, s.answers_.size()).second) {
      throw SchemaError("answer space entry '" + raw + "' duplicates '" + a + "'");
    }
    s.answers_.push_back(std::move(a));
  }
  return s;
}

AnswerSpace AnswerSpace::from_answer_sets(const std::vector<std::vector<std::string>>& sets, std::size_t top_k) {
  std::map<std::string, std::size_t> counts;
  for (const auto& set : sets) {
    for (const auto& a : set) {
      auto n = normalize_answer(a);
      if (!n.empty()) ++counts[n];
    }
  }
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  if (top_k != 0 && ranked.size() > top_k) ranked.resize(top_k);
  std::vector<std::string> list;
  for (auto& [a, _] : ranked) list.push_back(a);
  return from_list(list);
}

const std::string& AnswerSpace::answer(std::size_t id) const {
  if (id >= answers_.size()) {
    throw DataError("answer class " + std::to_string(id) + " outside space of " + std::to_string(size()));
  }
  return answers_[id];
}

std::size_t AnswerSpace::index(const std::string& answer) const {
  const auto it = index_.find(normalize_answer(answer));
  return it == index_.end() ? out_of_space : it->second;
}

void AnswerSpace::save(const std::filesystem::path& path) const { features::write_lines(path, answers_); }

AnswerSpace AnswerSpace::load(const std::filesystem::path& path) {
  try {
    return from_list(features::read_lines(path));
  } catch (const SchemaError& e) {
    throw SchemaError(path.string() + ": " + e.what());
  }
}

namespace {

void require_ten(const std::vector<std::string>& answers) {
  if (answers.size() != features::kAnswersPerQuestion) {
    throw DataError("expected " + std::to_string(features::kAnswersPerQuestion) + " human answers, got " +
                    std::to_string(answers.size()));
  }
}

}  // namespace

double vqa_accuracy(const std::string& predicted, const std::vector<std::string>& human_answers) {
  require_ten(human_answers);
  const auto p = normalize_answer(predicted);
  std::size_t matches = 0;
  for (const auto& a : human_answers) matches += normalize_answer(a) == p;
  // Dropping a matching annotator leaves matches-1, any other leaves matches.
  // Counted in thirds so the only rounding is the final division.
  const auto thirds = [](std::size_t m) { return std::min<std::size_t>(m, 3); };
  const std::size_t total = matches * (matches ? thirds(matches - 1) : 0) + (human_answers.size() - matches) * thirds(matches);
  return static_cast<double>(total) / static_cast<double>(3 * human_answers.size());
}

std::vector<float> soft_scores(const std::vector<std::string>& human_answers, const AnswerSpace& space) {
  std::vector<float> counts(space.size(), 0.0f);
  for (const auto& a : human_answers) {
    const auto i = space.index(a);
    if (i != AnswerSpace::out_of_space) counts[i] += 1.0f;
  }
  for (auto& c : counts) c = std::min(1.0f, c / 3.0f);
  return counts;
}

const char* answer_type_name(AnswerType t) {
  switch (t) {
    case AnswerType::yes_no:
      return "y/n";
    case AnswerType::number:
      return "number";
    case AnswerType::unanswerable:
      return "unanswerable";
    case AnswerType::other:
      break;
  }
  return "other";
}

AnswerType classify_answer(const std::string& normalized) {
  static const std::regex number("^[0-9]+([.,][0-9]+)?$");
  if (normalized == "yes" || normalized == "no") return AnswerType::yes_no;
  if (std::regex_match(normalized, number)) return AnswerType::number;
  if (normalized == "unanswerable") return AnswerType::unanswerable;
  return AnswerType::other;
}

AnswerType question_type(const std::vector<std::string>& human_answers) {
  std::map<std::string, std::size_t> counts;
  std::string best;
  std::size_t best_count = 0;
  for (const auto& a : human_answers) {
    const auto n = normalize_answer(a);
    if (++counts[n] > best_count) {
      best_count = counts[n];
      best = n;
    }
  }
  return classify_answer(best);
}

}  // namespace vld::vqa

#pragma once

#include <cstddef>
#include <filesystem>
#include <limits>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace vld::vqa {

// Lowercase, trim, collapse inner whitespace, strip trailing punctuation.
std::string normalize_answer(const std::string& raw);

// Class table of normalized answers; index = class id.
class AnswerSpace {
 public:
  static constexpr std::size_t out_of_space = std::numeric_limits<std::size_t>::max();

  AnswerSpace() = default;
  // Entries are normalized; duplicates after normalization are rejected.
  static AnswerSpace from_list(const std::vector<std::string>& answers);
  // The `top_k` most frequent normalized answers (0 keeps all); ties go to
  // the lexicographically smaller answer.
  static AnswerSpace from_answer_sets(const std::vector<std::vector<std::string>>& sets, std::size_t top_k);

  std::size_t size() const { return answers_.size(); }
  const std::string& answer(std::size_t id) const;
  // out_of_space when absent; the argument is normalized first.
  std::size_t index(const std::string& answer) const;
  const std::vector<std::string>& answers() const { return answers_; }

  void save(const std::filesystem::path& path) const;
  static AnswerSpace load(const std::filesystem::path& path);

  bool operator==(const AnswerSpace& o) const { return answers_ == o.answers_; }

 private:
  std::vector<std::string> answers_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Mean over the ten leave-one-out subsets of min(matches / 3, 1).
double vqa_accuracy(const std::string& predicted, const std::vector<std::string>& human_answers);

// min(count / 3, 1) per class over the raw answers; answers outside the
// space are ignored.
std::vector<float> soft_scores(const std::vector<std::string>& human_answers, const AnswerSpace& space);

enum class AnswerType { yes_no, number, unanswerable, other };
const char* answer_type_name(AnswerType t);
AnswerType classify_answer(const std::string& normalized);
// Type of the most common normalized answer (ties: first to reach the count).
AnswerType question_type(const std::vector<std::string>& human_answers);

}  // namespace vld::vqa

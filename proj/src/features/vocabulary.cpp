#include "vld/features/vocabulary.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include "vld/tensor/errors.hpp"

namespace vld::features {

namespace {
const char* const kReserved[] = {"<pad>", "<bos>", "<eos>", "<unk>"};
}

Vocabulary::Vocabulary() {
  for (const char* t : kReserved) push(t);
}

void Vocabulary::push(const std::string& token) {
  if (token.empty() || token.find_first_of("\n\r") != std::string::npos) {
    throw SchemaError("vocabulary token must be a non-empty single line");
  }
  if (!index_.emplace(token, tokens_.size()).second) throw SchemaError("duplicate vocabulary token '" + token + "'");
  tokens_.push_back(token);
}

Vocabulary Vocabulary::from_tokens(const std::vector<std::string>& tokens) {
  Vocabulary v;
  std::set<std::string> sorted(tokens.begin(), tokens.end());
  for (const auto& t : sorted) {
    if (!v.contains(t)) v.push(t);
  }
  return v;
}

std::size_t Vocabulary::id(const std::string& token) const {
  const auto it = index_.find(token);
  return it == index_.end() ? unk : it->second;
}

const std::string& Vocabulary::token(std::size_t id) const {
  if (id >= tokens_.size()) {
    throw DataError("token id " + std::to_string(id) + " outside vocabulary of size " + std::to_string(size()));
  }
  return tokens_[id];
}

std::vector<std::size_t> Vocabulary::encode(const std::vector<std::string>& words) const {
  std::vector<std::size_t> ids;
  ids.reserve(words.size());
  for (const auto& w : words) ids.push_back(id(w));
  return ids;
}

std::vector<std::string> Vocabulary::decode(const std::vector<std::size_t>& ids) const {
  std::vector<std::string> words;
  for (auto i : ids) {
    if (i == eos) break;
    if (i == pad || i == bos) continue;
    words.push_back(token(i));
  }
  return words;
}

void Vocabulary::save(const std::filesystem::path& path) const { write_lines(path, tokens_); }

Vocabulary Vocabulary::from_list(const std::vector<std::string>& all) {
  if (all.size() < 4) throw SchemaError("vocabulary has fewer than 4 entries");
  for (std::size_t i = 0; i < 4; ++i) {
    if (all[i] != kReserved[i]) {
      throw SchemaError("vocabulary entry " + std::to_string(i) + " must be " + kReserved[i]);
    }
  }
  Vocabulary v;
  for (std::size_t i = 4; i < all.size(); ++i) v.push(all[i]);
  return v;
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  try {
    return from_list(read_lines(path));
  } catch (const SchemaError& e) {
    throw SchemaError(path.string() + ": " + e.what());
  }
}

void write_lines(const std::filesystem::path& path, const std::vector<std::string>& lines) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  for (const auto& l : lines) out << l << '\n';
  if (!out) throw DataError("write failed for " + path.string());
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

}  // namespace vld::features

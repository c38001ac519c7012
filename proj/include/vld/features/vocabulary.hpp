#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

namespace vld::features {

// Token <-> id table. Ids 0-3 are <pad>, <bos>, <eos>, <unk>.
class Vocabulary {
 public:
  static constexpr std::size_t pad = 0;
  static constexpr std::size_t bos = 1;
  static constexpr std::size_t eos = 2;
  static constexpr std::size_t unk = 3;

  Vocabulary();
  // Reserved tokens followed by the distinct `tokens` in sorted order.
  static Vocabulary from_tokens(const std::vector<std::string>& tokens);
  // Full table in id order, reserved tokens included.
  static Vocabulary from_list(const std::vector<std::string>& all);

  std::size_t size() const { return tokens_.size(); }
  std::size_t id(const std::string& token) const;  // unk when absent
  bool contains(const std::string& token) const { return index_.count(token) != 0; }
  const std::string& token(std::size_t id) const;
  const std::vector<std::string>& tokens() const { return tokens_; }

  std::vector<std::size_t> encode(const std::vector<std::string>& words) const;
  // Stops at <eos>; drops <pad>/<bos>.
  std::vector<std::string> decode(const std::vector<std::size_t>& ids) const;

  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

  bool operator==(const Vocabulary& o) const { return tokens_ == o.tokens_; }

 private:
  void push(const std::string& token);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Writes/reads a plain list, one entry per line.
void write_lines(const std::filesystem::path& path, const std::vector<std::string>& lines);
std::vector<std::string> read_lines(const std::filesystem::path& path);

}  // namespace vld::features

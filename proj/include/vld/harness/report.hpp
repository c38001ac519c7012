#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

namespace vld::harness {

struct ReportRow {
  std::string key;  // condition name or answer-type column
  std::map<std::string, double> values;
  std::size_t count = 0;  // examples behind the row
  std::string config_hash;
};

struct EvalReport {
  std::string title;
  std::vector<std::string> metrics;  // column order
  std::vector<ReportRow> rows;
  std::uint64_t seed = 0;
  std::string config_hash;
  std::string commit;

  ReportRow& add_row(const std::string& key, std::size_t count = 0);
  const ReportRow& row(const std::string& key) const;  // throws ConfigError when absent

  // Aligned plain-text table.
  std::string to_text() const;
  nlohmann::ordered_json to_json() const;
  // Writes <stem>.txt and <stem>.json.
  void write(const std::filesystem::path& dir, const std::string& stem) const;
};

// Appends {timestamp, command, config_hash, seed, metric, value} to a JSONL log.
void append_run_log(const std::filesystem::path& log, const std::string& command, const std::string& config_hash,
                    std::uint64_t seed, const std::string& metric, double value);

}  // namespace vld::harness

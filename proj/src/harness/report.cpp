#include "vld/harness/report.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <sstream>

#include "vld/tensor/errors.hpp"

namespace vld::harness {

ReportRow& EvalReport::add_row(const std::string& key, std::size_t count) {
  ReportRow r;
  r.key = key;
  r.count = count;
  r.config_hash = config_hash;
  rows.push_back(std::move(r));
  return rows.back();
}

const ReportRow& EvalReport::row(const std::string& key) const {
  for (const auto& r : rows) {
    if (r.key == key) return r;
  }
  throw ConfigError("report '" + title + "' has no row '" + key + "'");
}

std::string EvalReport::to_text() const {
  std::vector<std::vector<std::string>> cells;
  std::vector<std::string> header{"condition"};
  header.insert(header.end(), metrics.begin(), metrics.end());
  header.push_back("n");
  cells.push_back(header);
  for (const auto& r : rows) {
    std::vector<std::string> line{r.key};
    for (const auto& m : metrics) {
      const auto it = r.values.find(m);
      char buf[32] = "-";
      if (it != r.values.end()) std::snprintf(buf, sizeof buf, "%.4f", it->second);
      line.emplace_back(buf);
    }
    line.push_back(std::to_string(r.count));
    cells.push_back(std::move(line));
  }
  std::vector<std::size_t> width(header.size(), 0);
  for (const auto& line : cells) {
    for (std::size_t i = 0; i < line.size(); ++i) width[i] = std::max(width[i], line[i].size());
  }
  std::ostringstream out;
  out << title << "\n";
  for (std::size_t li = 0; li < cells.size(); ++li) {
    for (std::size_t i = 0; i < cells[li].size(); ++i) {
      const auto& c = cells[li][i];
      if (i == 0) {
        out << c << std::string(width[i] - c.size(), ' ');
      } else {
        out << "  " << std::string(width[i] - c.size(), ' ') << c;
      }
    }
    out << "\n";
    if (li == 0) {
      std::size_t total = 0;
      for (auto w : width) total += w + 2;
      out << std::string(total - 2, '-') << "\n";
    }
  }
  out << "seed " << seed << "  config " << config_hash << "  commit " << commit << "\n";
  return out.str();
}

nlohmann::ordered_json EvalReport::to_json() const {
  nlohmann::ordered_json j;
  j["title"] = title;
  j["metrics"] = metrics;
  j["seed"] = seed;
  j["config_hash"] = config_hash;
  j["commit"] = commit;
  j["rows"] = nlohmann::ordered_json::array();
  for (const auto& r : rows) {
    nlohmann::ordered_json row;
    row["key"] = r.key;
    row["count"] = r.count;
    row["config_hash"] = r.config_hash;
    nlohmann::ordered_json values = nlohmann::ordered_json::object();
    for (const auto& m : metrics) {
      const auto it = r.values.find(m);
      if (it != r.values.end()) values[m] = it->second;
    }
    row["values"] = values;
    j["rows"].push_back(row);
  }
  return j;
}

void EvalReport::write(const std::filesystem::path& dir, const std::string& stem) const {
  std::filesystem::create_directories(dir);
  std::ofstream txt(dir / (stem + ".txt"), std::ios::trunc);
  std::ofstream js(dir / (stem + ".json"), std::ios::trunc);
  if (!txt || !js) throw DataError("cannot write report into " + dir.string());
  txt << to_text();
  js << to_json().dump(2) << "\n";
}

void append_run_log(const std::filesystem::path& log, const std::string& command, const std::string& config_hash,
                    std::uint64_t seed, const std::string& metric, double value) {
  if (log.has_parent_path()) std::filesystem::create_directories(log.parent_path());
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm utc{};
  gmtime_r(&now, &utc);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", &utc);
  nlohmann::ordered_json j;
  j["timestamp"] = stamp;
  j["command"] = command;
  j["config_hash"] = config_hash;
  j["seed"] = seed;
  j["metric"] = metric;
  j["value"] = value;
  std::ofstream out(log, std::ios::app);
  if (!out) throw DataError("cannot append to run log " + log.string());
  out << j.dump() << "\n";
}

}  // namespace vld::harness

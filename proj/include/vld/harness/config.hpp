#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include <json.hpp>

#include "vld/captioner/model.hpp"
#include "vld/tensor/optim.hpp"
#include "vld/vqa/model.hpp"

namespace vld::harness {

enum class Task { captioning, vqa };
const char* task_name(Task t);
Task parse_task(const std::string& s);  // throws ConfigError

// One training/evaluation run. Size-dependent model fields (vocabulary and
// answer-space sizes) are filled in from the dataset at run time.
struct ExperimentConfig {
  Task task = Task::captioning;
  std::uint64_t seed = 0;
  std::filesystem::path data_dir;
  std::filesystem::path output_dir;
  std::size_t epochs = 10;
  std::size_t batch_size = 16;
  std::size_t threads = 1;
  std::size_t max_steps = 0;
  LrSchedule schedule;
  captioner::CaptionerConfig captioner;
  vqa::VqaConfig vqa;
  // Early stop on the training set: loss below / accuracy at or above.
  std::optional<double> stop_below_loss;
  std::optional<double> stop_at_accuracy;

  nlohmann::json to_json() const;
};

// Strict: unknown keys, a missing seed or a missing data directory are
// configuration errors. Relative paths resolve against `base_dir`.
ExperimentConfig experiment_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

// FNV-1a of the canonical JSON form, 16 hex digits.
std::string config_hash(const nlohmann::json& canonical);
std::string config_hash(const ExperimentConfig& config);

// Short commit of the source tree this binary was built from.
std::string build_commit();

}  // namespace vld::harness

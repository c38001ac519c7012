#include "vld/harness/config.hpp"

#include <cstdio>
#include <fstream>
#include <set>

#include "vld/tensor/errors.hpp"
#include "vld/tensor/random.hpp"

#ifndef VLD_GIT_COMMIT
#define VLD_GIT_COMMIT "unknown"
#endif

namespace vld::harness {

using nlohmann::json;

const char* task_name(Task t) { return t == Task::captioning ? "captioning" : "vqa"; }

Task parse_task(const std::string& s) {
  if (s == "captioning" || s == "caption") return Task::captioning;
  if (s == "vqa") return Task::vqa;
  throw ConfigError("unknown task '" + s + "' (expected captioning or vqa)");
}

namespace {

json schedule_json(const LrSchedule& s) {
  json j;
  j["warmup_epochs"] = s.warmup_epochs;
  j["peak_lr"] = s.peak_lr;
  j["decay_factor"] = s.decay_factor;
  j["decay_every_epochs"] = s.decay_every_epochs;
  return j;
}

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [k, _] : j.items()) {
    if (!known.count(k)) throw ConfigError(where + ": unknown key '" + k + "'");
  }
}

template <typename V>
void read(const json& j, const char* key, V& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<V>();
  } catch (const json::exception& e) {
    throw ConfigError(where + ": bad value for '" + key + "': " + e.what());
  }
}

LrSchedule schedule_from_json(const json& j, LrSchedule s) {
  reject_unknown(j, {"warmup_epochs", "peak_lr", "decay_factor", "decay_every_epochs"}, "schedule");
  read(j, "warmup_epochs", s.warmup_epochs, "schedule");
  read(j, "peak_lr", s.peak_lr, "schedule");
  read(j, "decay_factor", s.decay_factor, "schedule");
  read(j, "decay_every_epochs", s.decay_every_epochs, "schedule");
  s.validate();
  return s;
}

}  // namespace

json ExperimentConfig::to_json() const {
  json j;
  j["task"] = task_name(task);
  j["seed"] = seed;
  j["data_dir"] = data_dir.string();
  j["output_dir"] = output_dir.string();
  j["epochs"] = epochs;
  j["batch_size"] = batch_size;
  j["threads"] = threads;
  j["max_steps"] = max_steps;
  j["schedule"] = schedule_json(schedule);
  if (task == Task::captioning) {
    auto c = captioner::to_json(captioner);
    c.erase("vocab_size");
    j["captioner"] = c;
  } else {
    auto v = vqa::to_json(vqa);
    v.erase("question_vocab_size");
    v.erase("answer_space_size");
    j["vqa"] = v;
  }
  if (stop_below_loss) j["stop_below_loss"] = *stop_below_loss;
  if (stop_at_accuracy) j["stop_at_accuracy"] = *stop_at_accuracy;
  return j;
}

ExperimentConfig experiment_config_from_json(const json& j, const std::filesystem::path& base_dir) {
  reject_unknown(j,
                 {"task", "seed", "data_dir", "output_dir", "epochs", "batch_size", "threads", "max_steps", "schedule",
                  "captioner", "vqa", "stop_below_loss", "stop_at_accuracy"},
                 "experiment config");
  ExperimentConfig c;
  if (!j.contains("task")) throw ConfigError("experiment config: 'task' is required");
  c.task = parse_task(j.at("task").is_string() ? j.at("task").get<std::string>() : "");
  if (!j.contains("seed")) throw ConfigError("experiment config: 'seed' is required");
  read(j, "seed", c.seed, "experiment config");

  std::string data, out;
  read(j, "data_dir", data, "experiment config");
  read(j, "output_dir", out, "experiment config");
  if (data.empty()) throw ConfigError("experiment config: 'data_dir' is required");
  auto resolve = [&](const std::string& p) {
    std::filesystem::path path(p);
    return path.is_relative() && !base_dir.empty() ? base_dir / path : path;
  };
  c.data_dir = resolve(data);
  if (!std::filesystem::is_directory(c.data_dir)) {
    throw ConfigError("data directory " + c.data_dir.string() + " does not exist");
  }
  c.output_dir = out.empty() ? std::filesystem::path() : resolve(out);

  read(j, "epochs", c.epochs, "experiment config");
  read(j, "batch_size", c.batch_size, "experiment config");
  read(j, "threads", c.threads, "experiment config");
  read(j, "max_steps", c.max_steps, "experiment config");
  if (c.epochs == 0 || c.batch_size == 0 || c.threads == 0) {
    throw ConfigError("experiment config: epochs, batch_size and threads must be positive");
  }
  c.schedule = c.task == Task::captioning ? captioner_reference_schedule() : vqa_reference_schedule(1e-3);
  if (j.contains("schedule")) c.schedule = schedule_from_json(j.at("schedule"), c.schedule);

  if (c.task == Task::captioning) {
    if (j.contains("vqa")) throw ConfigError("experiment config: 'vqa' section given for a captioning task");
    if (j.contains("captioner")) {
      if (j.at("captioner").contains("vocab_size")) {
        throw ConfigError("captioner config: vocab_size comes from the dataset vocabulary");
      }
      c.captioner = captioner::captioner_config_from_json(j.at("captioner"));
    }
  } else {
    if (j.contains("captioner")) throw ConfigError("experiment config: 'captioner' section given for a vqa task");
    if (j.contains("vqa")) {
      const auto& v = j.at("vqa");
      if (v.is_object() && (v.contains("question_vocab_size") || v.contains("answer_space_size"))) {
        throw ConfigError("vqa config: vocabulary and answer-space sizes come from the dataset");
      }
      c.vqa = vqa::vqa_config_from_json(v);
    }
  }
  double x = 0.0;
  if (j.contains("stop_below_loss")) {
    read(j, "stop_below_loss", x, "experiment config");
    c.stop_below_loss = x;
  }
  if (j.contains("stop_at_accuracy")) {
    read(j, "stop_at_accuracy", x, "experiment config");
    c.stop_at_accuracy = x;
  }
  return c;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return experiment_config_from_json(j, path.parent_path());
}

std::string config_hash(const json& canonical) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(canonical.dump())));
  return buf;
}

std::string config_hash(const ExperimentConfig& config) { return config_hash(config.to_json()); }

std::string build_commit() { return VLD_GIT_COMMIT; }

}  // namespace vld::harness

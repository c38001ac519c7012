#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "vld/captioner/train.hpp"
#include "vld/features/manifest.hpp"
#include "vld/features/sequence.hpp"
#include "vld/harness/config.hpp"
#include "vld/harness/data.hpp"
#include "vld/harness/experiment.hpp"
#include "vld/harness/gradsuite.hpp"
#include "vld/harness/report.hpp"
#include "vld/metrics/metrics.hpp"
#include "vld/tensor/errors.hpp"
#include "vld/vqa/train.hpp"

namespace fs = std::filesystem;
using namespace vld;
using namespace vld::harness;

namespace {

struct Globals {
  std::optional<std::uint64_t> seed;
  std::string config;
  std::string out;
  bool force = false;
  std::size_t threads = 1;
  std::string run_log;
};

fs::path run_log_path(const Globals& g) {
  if (!g.run_log.empty()) return g.run_log;
  if (const char* env = std::getenv("VLD_RUN_LOG"); env && *env) return env;
  return "vld_runs.jsonl";
}

void setup_logging() {
  auto logger = spdlog::stderr_color_mt("vld");
  logger->set_pattern("[%l] %v");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::info);
  if (const char* env = std::getenv("VLD_LOG"); env && *env) {
    const auto level = spdlog::level::from_str(env);
    if (level == spdlog::level::off && std::string(env) != "off") {
      throw ConfigError(std::string("VLD_LOG: unknown level '") + env + "'");
    }
    spdlog::set_level(level);
  }
}

ExperimentConfig load_config(const Globals& g) {
  if (g.config.empty()) throw ConfigError("--config is required");
  auto c = load_experiment_config(g.config);
  if (g.seed) c.seed = *g.seed;
  if (!g.out.empty()) c.output_dir = g.out;
  if (g.threads != 1) c.threads = g.threads;
  return c;
}

std::vector<std::string> split_list(const std::string& list) {
  if (list == "all") return features::ablation_conditions();
  std::vector<std::string> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  if (out.empty()) throw ConfigError("--channels: empty condition list");
  return out;
}

void require_output(const ExperimentConfig& c) {
  if (c.output_dir.empty()) throw ConfigError("no output directory (set output_dir in the config or pass --out)");
}

// ---- synth ----------------------------------------------------------------

struct SynthArgs {
  std::size_t images = 200;
  std::size_t eval_images = 0;
  std::size_t objects = 8;
  std::size_t k_regions = 12;
  std::size_t max_objects = 3;
  double noise = 0.5;
  double annotator_noise = 0.05;
  std::string featurizer = "both";
};

int cmd_synth(const Globals& g, const SynthArgs& a) {
  if (g.out.empty()) throw ConfigError("synth: --out is required");
  SynthWriteOptions o;
  o.spec.num_images = a.images;
  o.spec.num_object_types = a.objects;
  o.spec.k_regions = a.k_regions;
  o.spec.max_objects = a.max_objects;
  o.spec.noise_level = a.noise;
  o.spec.annotator_noise = a.annotator_noise;
  o.spec.seed = g.seed.value_or(1);
  o.eval_images = a.eval_images;
  o.force = g.force;
  o.write_ultra = a.featurizer != "frcnn";
  o.write_frcnn = a.featurizer != "ultra";
  const auto s = write_synth_dataset(g.out, o);
  std::cout << "wrote " << g.out << ": " << s.train_records << " train, " << s.eval_records << " eval records, "
            << s.vocabulary << " vocabulary tokens, " << s.answers << " answers\n";
  append_run_log(run_log_path(g), "synth", config_hash(nlohmann::json{{"images", a.images},
                                                                      {"eval_images", a.eval_images},
                                                                      {"objects", a.objects},
                                                                      {"noise", a.noise},
                                                                      {"featurizer", a.featurizer}}),
                 o.spec.seed, "records", static_cast<double>(s.train_records + s.eval_records));
  return 0;
}

// ---- train ----------------------------------------------------------------

int cmd_train(const Globals& g, const std::string& task) {
  auto c = load_config(g);
  if (!task.empty() && parse_task(task) != c.task) {
    throw ConfigError("--task " + task + " does not match the config task '" + task_name(c.task) + "'");
  }
  require_output(c);
  const auto hash = config_hash(c);
  fs::create_directories(c.output_dir);
  std::ofstream(c.output_dir / "config.json", std::ios::trunc) << c.to_json().dump(2) << "\n";

  EvalReport report;
  report.seed = c.seed;
  report.config_hash = hash;
  report.commit = build_commit();
  if (c.task == Task::captioning) {
    auto run = run_captioning(c);
    captioner::save_captioner(c.output_dir / "model.ckpt", run.model, run.vocabulary);
    captioner::write_decoded_jsonl(c.output_dir / "captions.jsonl", run.scores.decoded);
    report.title = "Captioning (" + run.eval_split + " split)";
    report.metrics = {"CIDEr-D", "ROUGE-L"};
    auto& row = report.add_row(c.captioner.channels.condition_name(), run.scores.images);
    row.values["CIDEr-D"] = run.scores.cider_d;
    row.values["ROUGE-L"] = run.scores.rouge_l;
    append_run_log(run_log_path(g), "train", hash, c.seed, "CIDEr-D", run.scores.cider_d);
  } else {
    auto run = run_vqa(c);
    vqa::save_vqa(c.output_dir / "model.ckpt", run.model, run.vocabulary, run.answers);
    vqa::write_predictions_jsonl(c.output_dir / "predictions.jsonl", run.evaluation.predictions);
    report = vqa_type_report(run.evaluation, "VQA accuracy (" + run.eval_split + " split)");
    report.seed = c.seed;
    report.config_hash = hash;
    report.commit = build_commit();
    for (auto& r : report.rows) r.config_hash = hash;
    append_run_log(run_log_path(g), "train", hash, c.seed, "accuracy", run.evaluation.accuracy);
  }
  report.write(c.output_dir, "report");
  std::cout << report.to_text();
  return 0;
}

// ---- eval-caption -------------------------------------------------------------

struct EvalCaptionArgs {
  std::string ckpt, data, candidates, references;
};

int cmd_eval_caption(const Globals& g, const EvalCaptionArgs& a) {
  EvalReport report;
  report.title = "Caption metrics";
  report.metrics = {"CIDEr-D", "ROUGE-L"};
  report.seed = g.seed.value_or(0);
  report.commit = build_commit();
  double cider = 0.0;
  if (!a.candidates.empty() || !a.references.empty()) {
    if (a.candidates.empty() || a.references.empty()) {
      throw ConfigError("eval-caption: --candidates and --references go together");
    }
    const auto cand = metrics::read_candidates_jsonl(a.candidates);
    const auto refs = metrics::read_references_jsonl(a.references);
    report.config_hash = config_hash(nlohmann::json{{"candidates", fs::absolute(a.candidates).string()},
                                                    {"references", fs::absolute(a.references).string()}});
    auto& row = report.add_row("candidates", cand.size());
    cider = metrics::cider_d(cand, refs).corpus;
    row.values["CIDEr-D"] = cider;
    row.values["ROUGE-L"] = metrics::rouge_l(cand, refs).corpus;
  } else {
    if (a.ckpt.empty() || a.data.empty()) {
      throw ConfigError("eval-caption: give --ckpt and --data, or --candidates and --references");
    }
    const auto loaded = captioner::load_captioner(a.ckpt);
    const auto& cfg = loaded.model.config();
    auto [records, split] = load_eval_split(a.data, cfg.channels.b_featurizer);
    const auto scores = evaluate_captioner(loaded.model, loaded.vocabulary, records, g.threads);
    report.config_hash = config_hash(nlohmann::json{{"model", captioner::to_json(cfg)},
                                                    {"data", fs::absolute(a.data).string()}});
    auto& row = report.add_row(cfg.channels.condition_name(), scores.images);
    cider = scores.cider_d;
    row.values["CIDEr-D"] = scores.cider_d;
    row.values["ROUGE-L"] = scores.rouge_l;
    if (!g.out.empty()) captioner::write_decoded_jsonl(fs::path(g.out) / "captions.jsonl", scores.decoded);
  }
  if (!g.out.empty()) report.write(g.out, "eval_caption");
  std::cout << report.to_text();
  append_run_log(run_log_path(g), "eval-caption", report.config_hash, report.seed, "CIDEr-D", cider);
  return 0;
}

// ---- eval-vqa -----------------------------------------------------------------

int cmd_eval_vqa(const Globals& g, const std::string& ckpt, const std::string& data, bool by_type) {
  if (ckpt.empty() || data.empty()) throw ConfigError("eval-vqa: --ckpt and --data are required");
  const auto loaded = vqa::load_vqa(ckpt);
  const auto& cfg = loaded.model.config();
  const auto kind = cfg.region_input_dim == features::kFrcnnDim ? features::RegionFeaturizerKind::frcnn_style
                                                                : features::RegionFeaturizerKind::ultra_style;
  auto [records, split] = load_eval_split(data, kind);
  const auto set = vqa::make_vqa_examples(records, cfg, loaded.vocabulary, loaded.answers);
  const auto evaluation = vqa::evaluate_vqa(loaded.model, set.examples, loaded.answers, g.threads);

  auto report = vqa_type_report(evaluation, "VQA accuracy (" + split + " split)");
  if (!by_type) report.rows.resize(1);
  report.seed = g.seed.value_or(0);
  report.commit = build_commit();
  report.config_hash =
      config_hash(nlohmann::json{{"model", vqa::to_json(cfg)}, {"data", fs::absolute(data).string()}});
  for (auto& r : report.rows) r.config_hash = report.config_hash;
  if (!g.out.empty()) {
    report.write(g.out, "eval_vqa");
    vqa::write_predictions_jsonl(fs::path(g.out) / "predictions.jsonl", evaluation.predictions);
  }
  std::cout << report.to_text();
  append_run_log(run_log_path(g), "eval-vqa", report.config_hash, report.seed, "accuracy", evaluation.accuracy);
  return 0;
}

// ---- ablate -------------------------------------------------------------------

int cmd_ablate(const Globals& g, const std::string& channels) {
  auto c = load_config(g);
  const auto conditions = split_list(channels);
  for (const auto& cond : conditions) features::parse_condition(cond);  // fail before any training
  auto report = run_ablation(c, conditions, [](const std::string& cond, const CaptionRun& run) {
    spdlog::info("{}: CIDEr-D {:.4f} ROUGE-L {:.4f}", cond, run.scores.cider_d, run.scores.rouge_l);
  });
  if (!c.output_dir.empty()) report.write(c.output_dir, "ablation");
  std::cout << report.to_text();
  for (const auto& r : report.rows) {
    append_run_log(run_log_path(g), "ablate " + r.key, r.config_hash, c.seed, "CIDEr-D", r.values.at("CIDEr-D"));
  }
  return 0;
}

// ---- gradcheck ----------------------------------------------------------------

int cmd_gradcheck(const Globals& g, const std::string& model, double tol, std::size_t seeds) {
  GradSuiteOptions o;
  o.target = parse_grad_target(model);
  o.tolerance = tol;
  o.seeds = seeds;
  o.first_seed = g.seed.value_or(0);
  const auto result = run_gradient_suite(o, [](const GradCaseResult& r) {
    std::printf("%-4s %-26s seeds %zu  max rel error %.3e  (%s)\n", r.passed() ? "ok" : "FAIL", r.name.c_str(),
                r.seeds, r.max_rel_error, r.worst.c_str());
    std::fflush(stdout);
  });
  std::printf("gradcheck %s: %zu cases, max rel error %.3e, tolerance %.1e\n", result.passed() ? "passed" : "FAILED",
              result.cases.size(), result.max_rel_error(), tol);
  append_run_log(run_log_path(g), "gradcheck " + model,
                 config_hash(nlohmann::json{{"model", model}, {"tol", tol}, {"seeds", seeds}}), o.first_seed,
                 "max_rel_error", result.max_rel_error());
  if (!result.passed()) throw NumericError("gradient check failed for " + model);
  return 0;
}

// ---- inspect-manifest ---------------------------------------------------------

int cmd_inspect(const std::string& dir) {
  const auto records = features::load_manifest(dir);
  std::size_t global = 0, captions = 0, questions = 0, labels = 0, regions = 0, max_regions = 0;
  std::map<std::size_t, std::size_t> dims;
  for (const auto& r : records) {
    global += r.global.has_value();
    captions += r.caption.has_value();
    questions += r.question.has_value();
    if (r.labels) labels += r.labels->size();
    if (r.regions) {
      regions += r.regions->size();
      max_regions = std::max(max_regions, r.regions->size());
    }
    if (auto d = r.region_dim()) ++dims[*d];
  }
  std::cout << dir << "\n"
            << "  records        " << records.size() << "\n"
            << "  with global    " << global << "\n"
            << "  with caption   " << captions << "\n"
            << "  with question  " << questions << "\n"
            << "  regions        " << regions << " (max " << max_regions << " per record)\n"
            << "  labels         " << labels << "\n";
  for (const auto& [d, n] : dims) std::cout << "  region dim " << d << "  in " << n << " records\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"vld: decoupled region features for captioning and VQA"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--seed", g.seed, "Random seed");
  app.add_option("--config", g.config, "Experiment config (JSON)");
  app.add_option("--out", g.out, "Output directory");
  app.add_flag("--force", g.force, "Replace existing outputs");
  app.add_option("--threads", g.threads, "Worker threads for batch gradients and decoding")->check(CLI::PositiveNumber);
  app.add_option("--run-log", g.run_log, "Run log (default $VLD_RUN_LOG or ./vld_runs.jsonl)");

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth", "Write a synthetic dataset");
  synth->add_option("--images", sa.images, "Training images");
  synth->add_option("--eval-images", sa.eval_images, "Held-out images");
  synth->add_option("--objects", sa.objects, "Object types");
  synth->add_option("--k-regions", sa.k_regions, "Box proposals per image");
  synth->add_option("--max-objects", sa.max_objects, "Objects per image");
  synth->add_option("--noise", sa.noise, "Noise of the 2048-D featurizer");
  synth->add_option("--annotator-noise", sa.annotator_noise, "Annotator disagreement rate");
  synth->add_option("--featurizer", sa.featurizer, "ultra, frcnn or both")
      ->check(CLI::IsMember({"ultra", "frcnn", "both"}));

  std::string task;
  auto* train = app.add_subcommand("train", "Train a captioner or a VQA model");
  train->add_option("--task", task, "captioning or vqa")->check(CLI::IsMember({"captioning", "caption", "vqa"}));

  EvalCaptionArgs ea;
  auto* eval_caption = app.add_subcommand("eval-caption", "Score captions with CIDEr-D and ROUGE-L");
  eval_caption->add_option("--ckpt", ea.ckpt, "Captioner checkpoint");
  eval_caption->add_option("--data", ea.data, "Dataset or manifest directory");
  eval_caption->add_option("--candidates", ea.candidates, "Candidate captions (JSONL)");
  eval_caption->add_option("--references", ea.references, "Reference captions (JSONL)");

  std::string vqa_ckpt, vqa_data;
  bool by_type = false;
  auto* eval_vqa = app.add_subcommand("eval-vqa", "Consensus accuracy of a VQA checkpoint");
  eval_vqa->add_option("--ckpt", vqa_ckpt, "VQA checkpoint")->required();
  eval_vqa->add_option("--data", vqa_data, "Dataset or manifest directory")->required();
  eval_vqa->add_flag("--by-type", by_type, "Break accuracy down by answer type");

  std::string channels = "all";
  auto* ablate = app.add_subcommand("ablate", "Channel ablation matrix for the captioner");
  ablate->add_option("--channels", channels, "Comma-separated conditions, or 'all'");

  std::string grad_model = "all";
  double tol = 5e-3;
  std::size_t grad_seeds = 10;
  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient suite");
  gradcheck->add_option("--model", grad_model, "primitives, captioner, vqa or all");
  gradcheck->add_option("--tol", tol, "Relative tolerance");
  gradcheck->add_option("--seeds", grad_seeds, "Seeds per case");

  std::string manifest_dir;
  auto* inspect = app.add_subcommand("inspect-manifest", "Summarize a manifest directory");
  inspect->add_option("dir", manifest_dir, "Manifest directory")->required();

  std::string verb = "vld";
  try {
    app.parse(argc, argv);
    verb = app.get_subcommands().front()->get_name();
    setup_logging();
    if (*synth) return cmd_synth(g, sa);
    if (*train) return cmd_train(g, task);
    if (*eval_caption) return cmd_eval_caption(g, ea);
    if (*eval_vqa) return cmd_eval_vqa(g, vqa_ckpt, vqa_data, by_type);
    if (*ablate) return cmd_ablate(g, channels);
    if (*gradcheck) return cmd_gradcheck(g, grad_model, tol, grad_seeds);
    if (*inspect) return cmd_inspect(manifest_dir);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(ExitCode::config_error);
  } catch (const Error& e) {
    std::cerr << "vld " << verb << ": " << e.what() << "\n";
    return static_cast<int>(e.exit_code());
  } catch (const fs::filesystem_error& e) {
    std::cerr << "vld " << verb << ": " << e.what() << "\n";
    return static_cast<int>(ExitCode::data_error);
  } catch (const std::exception& e) {
    std::cerr << "vld " << verb << ": internal error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

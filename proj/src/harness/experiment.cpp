#include "vld/harness/experiment.hpp"

#include <spdlog/spdlog.h>

#include "vld/harness/data.hpp"
#include "vld/metrics/metrics.hpp"
#include "vld/tensor/errors.hpp"

namespace vld::harness {

CaptionScores evaluate_captioner(const captioner::CaptionerModel<float>& model, const features::Vocabulary& vocab,
                                 const std::vector<features::ImageRecord>& records, std::size_t threads) {
  const auto examples = captioner::make_caption_examples(records, model.config(), vocab);
  CaptionScores s;
  s.images = examples.size();
  if (examples.empty()) return s;
  s.decoded = captioner::decode_captions(model, examples, vocab, model.config().beam_width, threads);
  metrics::CandidateMap cand;
  metrics::ReferenceMap refs;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    cand[examples[i].id] = s.decoded[i].tokens;
    refs[examples[i].id] = {examples[i].reference};
  }
  s.cider_d = metrics::cider_d(cand, refs).corpus;
  s.rouge_l = metrics::rouge_l(cand, refs).corpus;
  return s;
}

namespace {

features::RegionFeaturizerKind featurizer_of(const vqa::VqaConfig& c) {
  return c.region_input_dim == features::kFrcnnDim ? features::RegionFeaturizerKind::frcnn_style
                                                   : features::RegionFeaturizerKind::ultra_style;
}

}  // namespace

CaptionRun run_captioning(const ExperimentConfig& config) {
  auto vocab = load_vocabulary(config.data_dir);
  auto cfg = config.captioner;
  cfg.vocab_size = vocab.size();
  const auto kind = cfg.channels.b_featurizer;
  const auto train_records = load_split(config.data_dir, kind, "train");
  const auto examples = captioner::make_caption_examples(train_records, cfg, vocab);
  if (examples.empty()) throw ConfigError("no captioned records in " + config.data_dir.string());

  captioner::CaptionerModel<float> model(cfg, config.seed);
  captioner::CaptionTrainOptions opt;
  opt.epochs = config.epochs;
  opt.batch_size = config.batch_size;
  opt.seed = config.seed;
  opt.threads = config.threads;
  opt.schedule = config.schedule;
  opt.max_steps = config.max_steps;
  opt.stop_below_loss = config.stop_below_loss;
  const std::string condition = cfg.channels.condition_name();
  opt.on_epoch = [&](std::size_t epoch, double loss, double lr) {
    spdlog::debug("[{}] epoch {} loss {:.5f} lr {:.3g}", condition, epoch, loss, lr);
  };
  auto training = captioner::train_captioner(model, examples, opt);

  auto [records, split] = load_eval_split(config.data_dir, kind);
  auto scores = evaluate_captioner(model, vocab, records, config.threads);
  spdlog::info("[{}] CIDEr-D {:.4f} ROUGE-L {:.4f} on {} {} images", condition, scores.cider_d, scores.rouge_l,
               scores.images, split);
  return {std::move(model), std::move(vocab), std::move(training), std::move(scores), split};
}

EvalReport run_ablation(const ExperimentConfig& config, const std::vector<std::string>& conditions,
                        const std::function<void(const std::string&, const CaptionRun&)>& on_condition) {
  if (config.task != Task::captioning) throw ConfigError("ablation runs on captioning configs");
  std::vector<features::ChannelConfig> parsed;
  for (const auto& c : conditions) {
    auto ch = features::parse_condition(c);
    ch.k_max = config.captioner.channels.k_max;
    ch.b_score_threshold = config.captioner.channels.b_score_threshold;
    ch.l_max = config.captioner.channels.l_max;
    parsed.push_back(ch);
  }
  EvalReport report;
  report.title = "Captioning ablation";
  report.metrics = {"CIDEr-D", "ROUGE-L"};
  report.seed = config.seed;
  report.commit = build_commit();
  report.config_hash = config_hash(config);
  for (const auto& ch : parsed) {
    auto cfg = config;
    cfg.captioner.channels = ch;
    const auto run = run_captioning(cfg);
    auto& row = report.add_row(ch.condition_name(), run.scores.images);
    row.config_hash = config_hash(cfg);
    row.values["CIDEr-D"] = run.scores.cider_d;
    row.values["ROUGE-L"] = run.scores.rouge_l;
    if (on_condition) on_condition(ch.condition_name(), run);
  }
  return report;
}

VqaRun run_vqa(const ExperimentConfig& config) {
  auto vocab = load_vocabulary(config.data_dir);
  auto space = load_answer_space(config.data_dir);
  auto cfg = config.vqa;
  cfg.question_vocab_size = vocab.size();
  cfg.answer_space_size = space.size();
  const auto kind = featurizer_of(cfg);
  const auto train = vqa::make_vqa_examples(load_split(config.data_dir, kind, "train"), cfg, vocab, space);
  if (train.without_target) spdlog::info("{} training questions have no in-space answer", train.without_target);
  if (train.padded) spdlog::info("{} training records have no regions; padded with a zero region", train.padded);

  vqa::VqaModel<float> model(cfg, config.seed);
  vqa::VqaTrainOptions opt;
  opt.epochs = config.epochs;
  opt.batch_size = config.batch_size;
  opt.seed = config.seed;
  opt.threads = config.threads;
  opt.schedule = config.schedule;
  opt.max_steps = config.max_steps;
  opt.stop_at_accuracy = config.stop_at_accuracy;
  opt.on_epoch = [](std::size_t epoch, double loss, double lr) {
    spdlog::debug("[vqa] epoch {} loss {:.5f} lr {:.3g}", epoch, loss, lr);
  };
  auto training = vqa::train_vqa(model, train, opt);

  auto [records, split] = load_eval_split(config.data_dir, kind);
  const auto eval = vqa::make_vqa_examples(records, cfg, vocab, space);
  auto evaluation = vqa::evaluate_vqa(model, eval.examples, space, config.threads);
  spdlog::info("[vqa {}] accuracy {:.4f} on {} {} questions", features::featurizer_name(kind), evaluation.accuracy,
               eval.examples.size(), split);
  return {std::move(model), std::move(vocab), std::move(space), std::move(training), std::move(evaluation), split};
}

EvalReport vqa_type_report(const vqa::VqaEvaluation& evaluation, const std::string& title) {
  EvalReport report;
  report.title = title;
  report.metrics = {"accuracy"};
  report.add_row("all", evaluation.predictions.size()).values["accuracy"] = evaluation.accuracy;
  for (auto type : {vqa::AnswerType::yes_no, vqa::AnswerType::number, vqa::AnswerType::unanswerable,
                    vqa::AnswerType::other}) {
    const auto n = evaluation.count_by_type.count(type) ? evaluation.count_by_type.at(type) : 0;
    auto& row = report.add_row(vqa::answer_type_name(type), n);
    if (n) row.values["accuracy"] = evaluation.accuracy_by_type.at(type);
  }
  return report;
}

}  // namespace vld::harness

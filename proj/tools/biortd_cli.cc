// SPDX-License-Identifier: Apache-2.0
//
// biortd: pretraining, fine-tuning, prediction and evaluation commands.

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "biortd/checkpoint.h"
#include "biortd/config.h"
#include "biortd/datasets.h"
#include "biortd/finetune.h"
#include "biortd/metrics.h"
#include "biortd/rtd.h"
#include "biortd/tasks.h"
#include "biortd/toy_data.h"

#ifndef BIORTD_VERSION
#define BIORTD_VERSION "0.0.0"
#endif

namespace fs = std::filesystem;
using nlohmann::json;

namespace biortd {
namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void WriteText(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

// Recorded beside every output so a run can be repeated from its inputs.
void WriteManifest(const fs::path& path, const std::string& command,
                   const json& resolved, uint64_t seed, const json& inputs) {
  json m = {{"command", command},
            {"version", BIORTD_VERSION},
            {"compiler", __VERSION__},
            {"config_hash", ConfigHash(resolved)},
            {"config", resolved},
            {"seed", seed},
            {"inputs", inputs}};
  WriteText(path, m.dump(2) + "\n");
}

fs::path ManifestBeside(const fs::path& file) {
  return fs::path(file.string() + ".manifest.json");
}

Vocabulary VocabularyFromCheckpoint(const LoadedCheckpoint& ckpt, const fs::path& path) {
  if (!ckpt.manifest.extra.contains("vocabulary")) {
    throw std::runtime_error(path.string() + " does not record its vocabulary");
  }
  return Vocabulary::FromTokens(
      ckpt.manifest.extra["vocabulary"].get<std::vector<std::string>>());
}

// The first existing file among dir/<name>.<ext>.
std::optional<fs::path> FindSplit(const fs::path& dir, std::initializer_list<const char*> names,
                                  std::initializer_list<const char*> extensions) {
  for (const char* n : names) {
    for (const char* e : extensions) {
      fs::path p = dir / (std::string(n) + e);
      if (fs::is_regular_file(p)) return p;
    }
  }
  return std::nullopt;
}

std::vector<QaQuestion> ReadQa(Task task, const fs::path& path) {
  return task == Task::kQaBioasq ? ReadBioasq(path, path.stem().string()) : ReadSquad(path);
}

std::map<std::string, std::vector<std::string>> Texts(
    const std::map<std::string, NBestList>& lists) {
  std::map<std::string, std::vector<std::string>> out;
  for (const auto& [id, list] : lists) out[id] = list.Texts();
  return out;
}

// ---------------------------------------------------------------- pretrain

struct PretrainArgs {
  fs::path config, corpus, out, vocab;
  bool resume = false;
  int64_t until = 0;
  int64_t save_every = 0;
};

int RunPretrain(const PretrainArgs& args) {
  const RunConfig rc = RunConfig::Load(args.config);
  fs::path vocab_path = args.vocab;
  if (vocab_path.empty() && rc.Has("vocab_file")) vocab_path = rc.Get("vocab_file");
  if (vocab_path.empty()) {
    for (const fs::path& candidate : {args.corpus / "vocab.txt", args.corpus.parent_path() / "vocab.txt"}) {
      if (fs::is_regular_file(candidate)) {
        vocab_path = candidate;
        break;
      }
    }
  }
  if (vocab_path.empty()) {
    throw UsageError("no vocabulary: pass --vocab, set vocab_file, or put vocab.txt in the corpus directory");
  }
  const Vocabulary vocab = Vocabulary::Load(vocab_path);
  PretrainConfig config = rc.ToPretrain();
  if (!rc.Has("vocab_size")) config.encoder.vocab_size = vocab.size();

  std::vector<fs::path> files;
  for (auto& f : ResolveCorpusFiles(args.corpus)) {
    if (fs::weakly_canonical(f) != fs::weakly_canonical(vocab_path)) files.push_back(f);
  }
  if (files.empty()) throw UsageError("no corpus files under " + args.corpus.string());
  std::vector<Document> documents;
  DocumentStream stream(files, config.seed);
  while (auto doc = stream.Next()) documents.push_back(std::move(*doc));
  PackResult packed = PackSequences(documents, vocab, config.max_seq_length);
  if (packed.sequences.empty()) throw std::runtime_error("the corpus yields no sequences");

  fs::create_directories(args.out);
  const bool have_checkpoint = fs::exists(args.out / kDiscriminatorCheckpoint);
  if (args.resume && !have_checkpoint) {
    throw UsageError("--resume given but " + args.out.string() + " holds no checkpoint");
  }
  if (!args.resume && have_checkpoint) {
    throw UsageError(args.out.string() + " already holds a checkpoint; pass --resume to continue it");
  }
  Pretrainer trainer(config, vocab, std::move(packed.sequences));
  if (args.resume) trainer.LoadCheckpoints(args.out);

  const json resolved = ToJson(config);
  WriteManifest(args.out / "run_manifest.json", "pretrain", resolved, config.seed,
                {{"config", args.config.string()},
                 {"corpus", args.corpus.string()},
                 {"vocab", vocab_path.string()},
                 {"resumed_at_step", trainer.step()}});
  std::ofstream log(args.out / "metrics.jsonl",
                    args.resume ? std::ios::app : std::ios::trunc);
  const int64_t until = args.until > 0 ? std::min(args.until, config.train_steps)
                                       : config.train_steps;
  trainer.Run(until, &log, [&](const StepMetrics& m) {
    if (args.save_every > 0 && m.step % args.save_every == 0 && m.step < until) {
      trainer.SaveCheckpoints(args.out);
    }
  });
  trainer.SaveCheckpoints(args.out);
  std::cout << "pretrained to step " << trainer.step() << "; checkpoints in "
            << args.out.string() << "\n";
  return 0;
}

// ---------------------------------------------------------------- finetune

struct FinetuneArgs {
  std::string task;
  fs::path init, data, out, config;
  int seeds = 5;
  std::string label_set = "chemprot";
};

int RunFinetune(const FinetuneArgs& args) {
  const Task task = ParseTask(args.task);
  RunConfig rc;
  if (!args.config.empty()) rc = RunConfig::Load(args.config);
  const FinetuneConfig config = rc.ToFinetune(task);
  const uint64_t base_seed = rc.Has("seed") ? static_cast<uint64_t>(ParseCount("seed", rc.Get("seed"))) : 1;
  const RelationLabels relation_labels =
      RelationLabels::Parse(rc.Has("label_set") ? rc.Get("label_set") : args.label_set);
  if (args.seeds < 1) throw UsageError("--seeds must be at least 1");

  const LoadedCheckpoint init = LoadCheckpoint(args.init);
  const Vocabulary vocab = VocabularyFromCheckpoint(init, args.init);

  // Training split and evaluation splits for the task.
  std::vector<NerSentence> ner_train, ner_test;
  std::vector<ReExample> re_train, re_test;
  std::vector<QaQuestion> qa_train;
  std::vector<std::pair<std::string, std::vector<QaQuestion>>> qa_tests;
  std::vector<std::string> labels;
  const auto missing = [&](const char* what) {
    return UsageError(std::string("no ") + what + " split in " + args.data.string());
  };
  if (task == Task::kNer) {
    auto train = FindSplit(args.data, {"train"}, {".tsv", ".conll", ".txt"});
    if (!train) throw missing("train");
    ner_train = ReadConll(*train);
    if (auto test = FindSplit(args.data, {"test", "devel", "dev"}, {".tsv", ".conll", ".txt"})) {
      ner_test = ReadConll(*test);
    }
    labels = TagSet::FromSentences(ner_train).tags();
  } else if (task == Task::kRe) {
    auto train = FindSplit(args.data, {"train"}, {".tsv"});
    if (!train) throw missing("train");
    re_train = ReadReTsv(*train, relation_labels);
    if (auto test = FindSplit(args.data, {"test", "dev"}, {".tsv"})) {
      re_test = ReadReTsv(*test, relation_labels);
    }
    labels = relation_labels.All();
  } else {
    auto train = FindSplit(args.data, {"train"}, {".json"});
    if (!train) throw missing("train");
    qa_train = ReadQa(task, *train);
    std::vector<fs::path> tests;
    for (const auto& entry : fs::directory_iterator(args.data)) {
      const std::string name = entry.path().filename().string();
      if (entry.is_regular_file() && name.starts_with("test") && name.ends_with(".json")) {
        tests.push_back(entry.path());
      }
    }
    std::sort(tests.begin(), tests.end());
    for (const auto& t : tests) qa_tests.emplace_back(t.stem().string(), ReadQa(task, t));
  }

  fs::create_directories(args.out);
  json resolved = ToJson(config);
  resolved["seeds"] = args.seeds;
  resolved["base_seed"] = base_seed;
  if (task == Task::kRe) resolved["label_set"] = relation_labels.All();
  WriteManifest(args.out / "run_manifest.json", "finetune", resolved, base_seed,
                {{"task", args.task},
                 {"init", args.init.string()},
                 {"init_step", init.manifest.step},
                 {"data", args.data.string()}});

  std::vector<PrfReport> prf_reports;
  std::map<std::string, std::vector<QaReport>> qa_reports;
  json per_seed = json::array();
  for (int i = 0; i < args.seeds; ++i) {
    const uint64_t seed = base_seed + static_cast<uint64_t>(i);
    const fs::path dir = args.out / ("seed-" + std::to_string(seed));
    fs::create_directories(dir);
    TaskRunner runner(config, vocab, init.manifest.encoder, labels, seed);
    runner.InitFrom(init);
    if (task == Task::kNer) runner.SetNerData(ner_train);
    if (task == Task::kRe) runner.SetReData(re_train);
    if (IsQa(task)) runner.SetQaData(qa_train);
    std::ofstream log(dir / "train_log.jsonl", std::ios::trunc);
    runner.Train(&log);
    runner.Save(dir / "model.ckpt");

    json report = {{"seed", seed}};
    if (task == Task::kNer && !ner_test.empty()) {
      const auto predicted = runner.PredictNer(ner_test);
      std::vector<NerSentence> out = ner_test;
      for (size_t s = 0; s < out.size(); ++s) out[s].tags = predicted[s];
      WriteConll(dir / "predictions.tsv", out);
      report["test"] = EvaluateNer(ner_test, predicted);
      prf_reports.push_back(PrfReport{report["test"]["precision"], report["test"]["recall"],
                                      report["test"]["f1"], report["test"]["tp"],
                                      report["test"]["fp"], report["test"]["fn"]});
    }
    if (task == Task::kRe && !re_test.empty()) {
      const auto predicted = runner.PredictRe(re_test);
      std::vector<std::string> ids;
      for (const auto& ex : re_test) ids.push_back(ex.id);
      WriteRePredictions(dir / "predictions.tsv", ids, predicted);
      report["test"] = EvaluateRe(re_test, predicted, relation_labels);
      prf_reports.push_back(PrfReport{report["test"]["precision"], report["test"]["recall"],
                                      report["test"]["f1"], report["test"]["tp"],
                                      report["test"]["fp"], report["test"]["fn"]});
    }
    for (const auto& [name, questions] : qa_tests) {
      const auto answers = Texts(runner.PredictQa(questions));
      WriteQaPredictions(dir / ("predictions_" + name + ".json"), answers);
      report[name] = EvaluateQa(questions, answers);
      qa_reports[name].push_back(QaReport{report[name]["sacc"], report[name]["lacc"],
                                          report[name]["mrr"], report[name]["questions"]});
    }
    WriteText(dir / "report.json", report.dump(2) + "\n");
    per_seed.push_back(report);
    std::cout << "seed " << seed << ": " << report.dump() << "\n";
  }

  json aggregate = {{"task", args.task}, {"per_seed", per_seed}};
  std::ostringstream table;
  if (!prf_reports.empty()) {
    const PrfAggregate a = AggregateSeeds(prf_reports);
    aggregate["mean"] = ToJson(a);
    table << "P\tR\tF\tF(mean P, mean R)\tseeds\n"
          << FormatPercent(a.precision) << '\t' << FormatPercent(a.recall) << '\t'
          << FormatPercent(a.f1) << '\t' << FormatPercent(a.f1_of_means) << '\t'
          << a.count << '\n';
  }
  for (const auto& [name, reports] : qa_reports) {
    const QaAggregate a = AggregateSeeds(reports);
    aggregate["mean"][name] = ToJson(a);
    table << name << "\tSACC " << FormatPercent(a.sacc) << "\tLACC "
          << FormatPercent(a.lacc) << "\tMRR " << FormatPercent(a.mrr) << '\n';
  }
  WriteText(args.out / "report.json", aggregate.dump(2) + "\n");
  WriteText(args.out / "report.txt", table.str());
  std::cout << table.str();
  return 0;
}

// ---------------------------------------------------------------- predict

int RunPredict(const std::string& task_name, const fs::path& model_path,
               const fs::path& data, const fs::path& out,
               const std::string& label_set) {
  const Task task = ParseTask(task_name);
  const LoadedCheckpoint ckpt = LoadCheckpoint(model_path);
  const Vocabulary vocab = VocabularyFromCheckpoint(ckpt, model_path);
  TaskRunner runner = TaskRunner::Load(model_path, vocab);
  if (runner.config().task != task) {
    throw UsageError(model_path.string() + " was fine-tuned for " +
                     TaskName(runner.config().task) + ", not " + task_name);
  }
  if (task == Task::kNer) {
    auto sentences = ReadConll(data);
    const auto predicted = runner.PredictNer(sentences);
    for (size_t s = 0; s < sentences.size(); ++s) sentences[s].tags = predicted[s];
    WriteConll(out, sentences);
  } else if (task == Task::kRe) {
    RelationLabels labels = RelationLabels::Parse(label_set);
    const auto examples = ReadReTsv(data, labels);
    std::vector<std::string> ids;
    for (const auto& ex : examples) ids.push_back(ex.id);
    WriteRePredictions(out, ids, runner.PredictRe(examples));
  } else {
    WriteQaPredictions(out, Texts(runner.PredictQa(ReadQa(task, data))));
  }
  WriteManifest(ManifestBeside(out), "predict", ToJson(runner.config()), runner.seed(),
                {{"task", task_name}, {"model", model_path.string()}, {"data", data.string()}});
  return 0;
}

// ---------------------------------------------------------------- evaluate

int RunEvaluate(const std::string& task_name, const fs::path& gold_path,
                const fs::path& pred_path, const fs::path& out,
                const std::string& label_set, bool case_sensitive) {
  const Task task = ParseTask(task_name);
  json report;
  std::string table;
  if (task == Task::kNer) {
    const auto gold = ReadConll(gold_path);
    const auto pred = ReadConll(pred_path);
    if (gold.size() != pred.size()) {
      throw std::runtime_error("gold has " + std::to_string(gold.size()) +
                               " sentences, predictions " + std::to_string(pred.size()));
    }
    std::vector<std::vector<std::string>> gold_tags, pred_tags;
    for (size_t s = 0; s < gold.size(); ++s) {
      if (gold[s].words != pred[s].words) {
        throw std::runtime_error("sentence " + std::to_string(s + 1) +
                                 ": tokens differ between gold and predictions");
      }
      gold_tags.push_back(gold[s].tags);
      pred_tags.push_back(pred[s].tags);
    }
    const PrfReport r = EntityPrfFromTags(gold_tags, pred_tags);
    report = ToJson(r);
    table = RenderReport(r);
  } else if (task == Task::kRe) {
    const RelationLabels labels = RelationLabels::Parse(label_set);
    const auto gold = ReadReTsv(gold_path, labels);
    const auto pred = ReadRePredictions(pred_path);
    std::vector<std::string> gold_labels, pred_labels;
    for (const auto& ex : gold) {
      auto it = pred.find(ex.id);
      if (it == pred.end()) throw std::runtime_error("no prediction for example " + ex.id);
      gold_labels.push_back(ex.label);
      pred_labels.push_back(it->second);
    }
    const PrfReport r = RelationPrf(gold_labels, pred_labels, labels.positive, labels.negative);
    report = ToJson(r);
    table = RenderReport(r);
  } else {
    const auto gold = ReadQa(task, gold_path);
    std::vector<QaGold> g;
    for (const auto& q : gold) g.push_back({q.id, q.synonyms});
    const QaReport r = QaMetrics(g, ReadQaPredictions(pred_path), case_sensitive);
    report = ToJson(r);
    table = RenderReport(r);
  }
  WriteText(out, report.dump(2) + "\n");
  WriteText(fs::path(out.string() + ".txt"), table);
  WriteManifest(ManifestBeside(out), "evaluate",
                {{"task", task_name}, {"case_sensitive", case_sensitive}, {"label_set", label_set}},
                0, {{"gold", gold_path.string()}, {"pred", pred_path.string()}});
  std::cout << table;
  return 0;
}

// ---------------------------------------------------------------- score-bioasq

int RunScoreBioasq(const fs::path& table_path, const fs::path& out) {
  std::ifstream in(table_path);
  if (!in) throw std::runtime_error("cannot read " + table_path.string());
  const ScoreTable table = BuildScoreTable(ParseMrrTable(in, table_path.string()));
  for (const auto& w : table.warnings) std::cerr << "warning: " << w << "\n";
  WriteText(out, ToJson(table).dump(2) + "\n");
  WriteText(fs::path(out.string() + ".txt"), RenderScoreTable(table));
  WriteManifest(ManifestBeside(out), "score-bioasq", json::object(), 0,
                {{"mrr_table", table_path.string()}});
  std::cout << RenderScoreTable(table);
  return 0;
}

}  // namespace
}  // namespace biortd

int main(int argc, char** argv) {
  using namespace biortd;
  CLI::App app{"Replaced-token-detection pretraining and biomedical fine-tuning"};
  app.require_subcommand(1);
  app.set_version_flag("--version", BIORTD_VERSION);

  PretrainArgs pre;
  auto* pretrain = app.add_subcommand("pretrain", "Pretrain a generator/discriminator pair");
  pretrain->add_option("--config", pre.config, "Run configuration file")->required()->check(CLI::ExistingFile);
  pretrain->add_option("--corpus", pre.corpus, "Corpus directory, file or glob")->required();
  pretrain->add_option("--out", pre.out, "Output directory")->required();
  pretrain->add_option("--vocab", pre.vocab, "Vocabulary file (one token per line)");
  pretrain->add_flag("--resume", pre.resume, "Continue from the checkpoints in --out");
  pretrain->add_option("--until", pre.until, "Stop after this many completed steps");
  pretrain->add_option("--save-every", pre.save_every, "Also checkpoint every N steps");

  FinetuneArgs ft;
  auto* finetune = app.add_subcommand("finetune", "Fine-tune on a task, one model per seed");
  finetune->add_option("--task", ft.task, "ner, re, qa-squad or qa-bioasq")
      ->required()->check(CLI::IsMember({"ner", "re", "qa-squad", "qa-bioasq"}));
  finetune->add_option("--init", ft.init, "Discriminator or qa-squad checkpoint")
      ->required()->check(CLI::ExistingFile);
  finetune->add_option("--data", ft.data, "Directory with train/test splits")
      ->required()->check(CLI::ExistingDirectory);
  finetune->add_option("--seeds", ft.seeds, "Number of seeds")->capture_default_str();
  finetune->add_option("--out", ft.out, "Output directory")->required();
  finetune->add_option("--config", ft.config, "Overrides of the task defaults")->check(CLI::ExistingFile);
  finetune->add_option("--label-set", ft.label_set, "chemprot, ddi or A,B,...,NEG")->capture_default_str();

  std::string p_task, p_labels = "chemprot";
  fs::path p_model, p_data, p_out;
  auto* predict = app.add_subcommand("predict", "Predict with a fine-tuned model");
  predict->add_option("--task", p_task)->required()->check(CLI::IsMember({"ner", "re", "qa-squad", "qa-bioasq"}));
  predict->add_option("--model", p_model)->required()->check(CLI::ExistingFile);
  predict->add_option("--data", p_data)->required()->check(CLI::ExistingFile);
  predict->add_option("--out", p_out)->required();
  predict->add_option("--label-set", p_labels)->capture_default_str();

  std::string e_task, e_labels = "chemprot";
  fs::path e_gold, e_pred, e_out;
  bool e_case = false;
  auto* evaluate = app.add_subcommand("evaluate", "Score predictions against gold data");
  evaluate->add_option("--task", e_task)->required()->check(CLI::IsMember({"ner", "re", "qa-squad", "qa-bioasq"}));
  evaluate->add_option("--gold", e_gold)->required()->check(CLI::ExistingFile);
  evaluate->add_option("--pred", e_pred)->required()->check(CLI::ExistingFile);
  evaluate->add_option("--out", e_out, "Report file (JSON); a .txt table is written beside it")->required();
  evaluate->add_option("--label-set", e_labels)->capture_default_str();
  evaluate->add_flag("--case-sensitive", e_case, "Case-sensitive QA answer matching");

  fs::path s_table, s_out;
  auto* score = app.add_subcommand("score-bioasq", "Per-batch MRR ratios and totals");
  score->add_option("--mrr-table", s_table)->required()->check(CLI::ExistingFile);
  score->add_option("--out", s_out)->required();

  fs::path t_out;
  uint64_t t_seed = 7;
  auto* toy = app.add_subcommand("make-toy-data", "Write the synthetic desk-scale corpora");
  toy->add_option("--out", t_out)->required();
  toy->add_option("--seed", t_seed)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // --help and --version exit 0; every other parse error is a usage error.
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (*pretrain) return RunPretrain(pre);
    if (*finetune) return RunFinetune(ft);
    if (*predict) return RunPredict(p_task, p_model, p_data, p_out, p_labels);
    if (*evaluate) return RunEvaluate(e_task, e_gold, e_pred, e_out, e_labels, e_case);
    if (*score) return RunScoreBioasq(s_table, s_out);
    if (*toy) {
      toy::WriteToyData(t_out, t_seed);
      WriteManifest(t_out / "run_manifest.json", "make-toy-data", json::object(), t_seed, json::object());
      return 0;
    }
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

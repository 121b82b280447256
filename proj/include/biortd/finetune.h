// SPDX-License-Identifier: Apache-2.0
//
// Fine-tuning loop shared by the three tasks: batching, layerwise learning
// rates, warmup/decay schedule, prediction and task checkpoints.

#ifndef BIORTD_FINETUNE_H_
#define BIORTD_FINETUNE_H_

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "biortd/checkpoint.h"
#include "biortd/datasets.h"
#include "biortd/encoder.h"
#include "biortd/metrics.h"
#include "biortd/optim.h"
#include "biortd/tasks.h"
#include "biortd/tokenizer.h"

namespace biortd {

struct FinetuneConfig {
  Task task = Task::kNer;
  double learning_rate = 5e-5;
  AdamConfig adam{0.9, 0.999, 1e-6, 0.0};
  double layerwise_lr_decay = 0.8;
  double dropout = 0.1;
  double attention_dropout = 0.1;
  int batch_size = 32;
  int max_seq_length = 128;
  int document_stride = 128;
  double warmup_fraction = 0.1;
  int epochs = 3;
  QaDecodeConfig decode;

  // Default learning rate, batch size, sequence length and stride for the task.
  static FinetuneConfig ForTask(Task task);
  void Validate() const;
};

struct EpochSummary {
  int epoch = 0;  // 1-based
  int64_t steps = 0;
  double mean_loss = 0.0;
};

// One fine-tuning run (one seed) of one task.
class TaskRunner {
 public:
  // `labels` is the tag inventory (NER) or relation classes (RE, negative
  // class last); empty for QA.
  TaskRunner(FinetuneConfig config, const Vocabulary& vocab,
             const EncoderConfig& encoder, std::vector<std::string> labels,
             uint64_t seed);

  // Copies the encoder from a discriminator or task checkpoint. A QA head is
  // carried over too when both the checkpoint and this run are QA.
  void InitFrom(const LoadedCheckpoint& checkpoint);

  EpochSummary TrainEpoch(std::ostream* log = nullptr);
  std::vector<EpochSummary> Train(std::ostream* log = nullptr);

  void SetNerData(std::vector<NerSentence> train);
  void SetReData(std::vector<ReExample> train);
  void SetQaData(std::span<const QaQuestion> train);

  std::vector<std::vector<std::string>> PredictNer(
      std::span<const NerSentence> sentences);
  std::vector<std::string> PredictRe(std::span<const ReExample> examples);
  std::map<std::string, NBestList> PredictQa(std::span<const QaQuestion> questions);

  // Task checkpoint: encoder + head, task name, labels, vocabulary and the
  // fine-tuning configuration in the manifest.
  void Save(const std::filesystem::path& path) const;
  // Rebuilds a runner from a task checkpoint (for prediction or a further
  // fine-tuning stage).
  static TaskRunner Load(const std::filesystem::path& path, const Vocabulary& vocab);

  const FinetuneConfig& config() const { return config_; }
  const std::vector<std::string>& labels() const { return labels_; }
  TaskModel<float>& model() { return model_; }
  int64_t step() const { return adam_.step; }
  int64_t total_steps() const { return schedule_.total_steps; }
  uint64_t seed() const { return seed_; }

 private:
  struct Item {
    Encoding encoding;
    std::vector<int32_t> token_labels;  // NER
    int32_t label = kIgnoreLabel;       // RE
    int32_t start = 0;                  // QA
    int32_t end = 0;
  };

  void SetItems(std::vector<Item> items);
  double Step(std::span<const Item* const> rows);

  FinetuneConfig config_;
  const Vocabulary& vocab_;
  std::vector<std::string> labels_;
  uint64_t seed_;
  TaskModel<float> model_;
  AdamState<float> adam_;
  LinearSchedule schedule_;
  std::vector<Item> items_;
  int epoch_ = 0;
  std::optional<TagSet> tags_;
};

// Truncates every row to the longest attended length in the batch.
TokenBatch TrimmedBatch(std::span<const Encoding* const> rows);

// Entity, relation or QA evaluation of a prediction set.
nlohmann::json EvaluateNer(std::span<const NerSentence> gold,
                           std::span<const std::vector<std::string>> predicted);
nlohmann::json EvaluateRe(std::span<const ReExample> gold,
                          std::span<const std::string> predicted,
                          const RelationLabels& labels);
nlohmann::json EvaluateQa(std::span<const QaQuestion> gold,
                          const std::map<std::string, std::vector<std::string>>& predicted);

}  // namespace biortd

#endif  // BIORTD_FINETUNE_H_

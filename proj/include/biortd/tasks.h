// SPDX-License-Identifier: Apache-2.0
//
// Fine-tuning heads on top of a pretrained discriminator: per-token BIO
// tagging, sentence-level relation classification and extractive span QA
// with sliding context windows.

#ifndef BIORTD_TASKS_H_
#define BIORTD_TASKS_H_

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "biortd/autodiff.h"
#include "biortd/datasets.h"
#include "biortd/encoder.h"
#include "biortd/params.h"
#include "biortd/rng.h"
#include "biortd/tokenizer.h"

namespace biortd {

enum class Task { kNer, kRe, kQaSquad, kQaBioasq };

Task ParseTask(const std::string& name);  // ner, re, qa-squad, qa-bioasq
std::string TaskName(Task task);
inline bool IsQa(Task task) { return task == Task::kQaSquad || task == Task::kQaBioasq; }

// Label value excluded from every task loss.
inline constexpr int32_t kIgnoreLabel = -1;

// ---------------------------------------------------------------- NER

struct AlignedExample {
  Encoding encoding;
  std::vector<int32_t> labels;  // tag id at first subwords, kIgnoreLabel elsewhere
  int32_t sentence = 0;         // index of the source sentence
  int32_t word_offset = 0;      // first source word covered
  int32_t num_words = 0;
};

// Word ranges [begin, end) such that each range encodes in max_seq
// positions. Single words longer than the window get a range of their own.
std::vector<std::pair<int32_t, int32_t>> SplitWords(
    std::span<const std::string> words, const Vocabulary& vocab, int max_seq);

// Labels the first subword of each word with its tag; continuation pieces,
// [CLS], [SEP] and padding get kIgnoreLabel.
AlignedExample AlignLabels(const NerSentence& sentence, const TagSet& tags,
                           const Vocabulary& vocab, int max_seq);

// Splits long sentences at word boundaries, then aligns every piece.
std::vector<AlignedExample> AlignCorpus(std::span<const NerSentence> sentences,
                                        const TagSet& tags,
                                        const Vocabulary& vocab, int max_seq);

// Re-joins per-piece first-subword predictions into one tag list per
// sentence. `predicted` holds one tag id per position of each example.
std::vector<std::vector<std::string>> JoinPredictions(
    std::span<const AlignedExample> examples,
    std::span<const std::vector<int32_t>> predicted,
    std::span<const NerSentence> sentences, const TagSet& tags);

// ---------------------------------------------------------------- QA

struct QaFeature {
  std::string question_id;
  int32_t context_index = 0;  // which context of the question
  int32_t window_index = 0;
  int32_t context_offset = 0;  // first context piece covered by this window
  Encoding encoding;
  // Character span [begin, end) of the source word of each position in the
  // context; -1 outside the context segment.
  std::vector<int32_t> char_begin;
  std::vector<int32_t> char_end;
  // Training targets; both 0 ([CLS]) when the answer is not inside.
  int32_t start_position = 0;
  int32_t end_position = 0;
};

struct WindowLayout {
  int32_t capacity = 0;
  std::vector<int32_t> starts;
};

// Window capacity = max_seq - question_pieces - 3; windows start at
// 0, stride, 2 * stride, ... until the context is covered. A stride larger
// than the capacity is reduced to the capacity.
WindowLayout PlanWindows(int32_t question_pieces, int32_t context_pieces,
                         int max_seq, int stride);

std::vector<QaFeature> QaFeaturize(const std::string& question_id,
                                   const std::string& question,
                                   const std::string& context,
                                   const std::optional<QaAnswer>& answer,
                                   const Vocabulary& vocab, int max_seq,
                                   int stride, int32_t context_index = 0);

struct SpanPrediction {
  std::string text;
  double start_logit = 0.0;
  double end_logit = 0.0;
  double score = 0.0;
  int32_t feature = 0;  // index into the decoded feature list
  int32_t start_position = 0;
  int32_t end_position = 0;
};

struct NBestList {
  std::string question_id;
  std::vector<SpanPrediction> entries;

  std::vector<std::string> Texts() const;
};

struct QaDecodeConfig {
  int n_best = 5;
  int max_answer_tokens = 30;
  int top_k = 20;
};

// Merges candidates across all windows of all contexts of one question.
// contexts[f.context_index] must be the text featurized into f. Logits are
// one row per feature, encoding-length each.
NBestList QaDecode(const std::string& question_id,
                   std::span<const QaFeature* const> features,
                   std::span<const std::vector<float>> start_logits,
                   std::span<const std::vector<float>> end_logits,
                   std::span<const std::string> contexts,
                   const QaDecodeConfig& config = {});

// ---------------------------------------------------------------- heads

// Encoder plus one task head. Encoder parameters use the discriminator
// naming so a pretrained discriminator checkpoint loads directly; head
// parameters live under "head.".
template <typename T>
class TaskModel {
 public:
  TaskModel(Task task, const EncoderConfig& config, int num_labels,
            uint64_t seed);

  Task task() const { return task_; }
  int num_labels() const { return num_labels_; }
  ParamStore<T>& params() { return store_; }
  const ParamStore<T>& params() const { return store_; }
  const Encoder<T>& encoder() const { return *encoder_; }

  // NER: [B * T, num_labels].
  ad::Tensor<T> TokenLogits(const TokenBatch& batch, bool train, Rng* rng) const;
  // RE: [B, num_labels] from the [CLS] representation.
  ad::Tensor<T> SequenceLogits(const TokenBatch& batch, bool train, Rng* rng) const;
  // QA: start and end logits [B, T]; padding positions are -inf.
  std::pair<ad::Tensor<T>, ad::Tensor<T>> SpanLogits(const TokenBatch& batch,
                                                     bool train, Rng* rng) const;

  static bool IsHeadParam(const std::string& name) {
    return name.starts_with("head.");
  }

 private:
  Task task_;
  int num_labels_;
  ParamStore<T> store_;
  std::unique_ptr<Encoder<T>> encoder_;
  ad::Tensor<T> dense_w_, dense_b_, out_w_, out_b_;
  ad::Tensor<T> start_w_, start_b_, end_w_, end_b_;
};

// Softmax cross-entropy averaged over positions whose label is not
// kIgnoreLabel.
template <typename T>
ad::Tensor<T> TokenLoss(const ad::Tensor<T>& logits, std::span<const int32_t> labels);
template <typename T>
ad::Tensor<T> SequenceLoss(const ad::Tensor<T>& logits, std::span<const int32_t> labels);
// Mean of the start and end cross-entropies over positions.
template <typename T>
ad::Tensor<T> SpanLoss(const ad::Tensor<T>& start_logits,
                       const ad::Tensor<T>& end_logits,
                       std::span<const int32_t> start_positions,
                       std::span<const int32_t> end_positions);

// Row-wise argmax of a [N, C] tensor.
template <typename T>
std::vector<int32_t> ArgmaxRows(const ad::Tensor<T>& logits);

}  // namespace biortd

#endif  // BIORTD_TASKS_H_

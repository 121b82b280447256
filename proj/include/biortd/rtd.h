// SPDX-License-Identifier: Apache-2.0
//
// Replaced-token-detection pretraining: corpus packing, masking, generator
// sampling, discriminator labels and the joint generator/discriminator
// objective.

#ifndef BIORTD_RTD_H_
#define BIORTD_RTD_H_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "biortd/autodiff.h"
#include "biortd/encoder.h"
#include "biortd/optim.h"
#include "biortd/params.h"
#include "biortd/rng.h"
#include "biortd/tokenizer.h"

namespace biortd {

// A document is a list of sentences.
using Document = std::vector<std::string>;
// A document whose sentences are already WordPiece tokens.
using PieceDocument = std::vector<std::vector<std::string>>;

struct PackResult {
  std::vector<Encoding> sequences;
  int64_t skipped_documents = 0;
};

// Greedy packing: [CLS] s1 [SEP] s2 [SEP] ... filled to exactly max_len.
// A sentence that does not fit is split and continues in the next sequence.
// Documents never share a sequence; the last fragment of a document is
// padded. All segment ids are 0.
PackResult PackPieceDocuments(std::span<const PieceDocument> documents,
                              const Vocabulary& vocab, int max_len);
// Pre-tokenizes and WordPiece-tokenizes each sentence first.
PackResult PackSequences(std::span<const Document> documents,
                         const Vocabulary& vocab, int max_len);

// Number of positions masked out of n_maskable: max(1, round(rate * n)),
// rounding halves away from zero.
int MaskCount(int n_maskable, double rate);

struct MaskingPlan {
  std::vector<int32_t> positions;  // ascending
  std::vector<int32_t> original_ids;
  double rate = 0.15;
};

// Uniform sample without replacement over positions that are attended and
// are not [CLS]/[SEP]/[PAD]. Throws std::invalid_argument("nothing to mask").
MaskingPlan SampleMasking(std::span<const int32_t> ids,
                          std::span<const int32_t> attention_mask,
                          const Vocabulary& vocab, double rate, Rng& rng);

inline constexpr int32_t kRtdIgnore = -1;
inline constexpr int32_t kRtdOriginal = 0;
inline constexpr int32_t kRtdReplaced = 1;

// Row-major [B, T] labels: replaced where a plan position holds a token that
// differs from the input, ignore at padding, original everywhere else.
std::vector<int32_t> DeriveRtdLabels(std::span<const int32_t> input_ids,
                                     std::span<const int32_t> corrupted_ids,
                                     std::span<const int32_t> attention_mask,
                                     std::span<const MaskingPlan> plans,
                                     int64_t length);

struct RtdBatch {
  TokenBatch input;  // original ids
  std::vector<int32_t> masked_ids;
  std::vector<int32_t> corrupted_ids;
  std::vector<int32_t> rtd_labels;
  std::vector<MaskingPlan> plans;
  // Flattened b * T + position of every plan entry, with its original id.
  std::vector<int64_t> plan_rows;
  std::vector<int32_t> plan_targets;

  TokenBatch Masked() const;
  TokenBatch Corrupted() const;
};

// Fills input, masked_ids, plans and plan rows. Corruption happens later.
RtdBatch MakeMaskedBatch(std::span<const Encoding* const> rows,
                         const Vocabulary& vocab, double rate, Rng& rng);

struct JointLossConfig {
  double lambda_disc = 50.0;
  double generator_size_ratio = 1.0 / 3.0;

  void Validate() const;
};

// Generator architecture: heads and FFN width scaled by ratio (rounded to the
// nearest integer), head size, depth and embedding size kept. Hidden size is
// heads * head_size.
EncoderConfig GeneratorConfig(const EncoderConfig& discriminator, double ratio);

// Generator + discriminator sharing one set of embeddings. The generator has
// an MLM head tied to the shared token embeddings; the discriminator has a
// per-token binary head.
template <typename T>
class RtdModel {
 public:
  RtdModel(const EncoderConfig& discriminator_config,
           const JointLossConfig& joint, uint64_t seed);

  ParamStore<T>& params() { return store_; }
  const ParamStore<T>& params() const { return store_; }
  const Encoder<T>& discriminator() const { return *discriminator_; }
  const Encoder<T>& generator() const { return *generator_; }
  const EncoderConfig& generator_config() const { return generator_->config(); }

  // MLM logits [plan_rows.size(), vocab] at the given flattened positions.
  ad::Tensor<T> GeneratorLogits(const TokenBatch& masked,
                                std::span<const int64_t> plan_rows, bool train,
                                Rng* rng) const;
  // One replaced-vs-original logit per position, shape [B * T].
  ad::Tensor<T> DiscriminatorLogits(const TokenBatch& corrupted, bool train,
                                    Rng* rng) const;

  static bool IsGeneratorParam(const std::string& name) {
    return name.starts_with("gen.");
  }

 private:
  ParamStore<T> store_;
  std::unique_ptr<Encoder<T>> discriminator_;
  std::unique_ptr<Encoder<T>> generator_;
  ad::Tensor<T> mlm_dense_w_, mlm_dense_b_, mlm_ln_g_, mlm_ln_b_, mlm_bias_;
  ad::Tensor<T> rtd_dense_w_, rtd_dense_b_, rtd_out_w_, rtd_out_b_;
};

// Samples one token per plan row from softmax(logits) at temperature 1 and
// writes it into a copy of `ids`. Reads logit values only, so no gradient
// flows through the samples.
template <typename T>
std::vector<int32_t> GeneratorSample(const ad::Tensor<T>& logits,
                                     std::span<const int64_t> plan_rows,
                                     std::span<const int32_t> ids, Rng& rng);

template <typename T>
struct JointLossValue {
  ad::Tensor<T> total;
  double mlm = 0.0;
  double rtd = 0.0;
};

inline double CombineLosses(double mlm, double rtd, double lambda_disc) {
  return mlm + lambda_disc * rtd;
}

// L = mean CE over plan rows + lambda * mean BCE over non-ignored positions.
template <typename T>
JointLossValue<T> JointLoss(const ad::Tensor<T>& generator_logits,
                            std::span<const int32_t> plan_targets,
                            const ad::Tensor<T>& discriminator_logits,
                            std::span<const int32_t> rtd_labels,
                            const JointLossConfig& config);

struct DiscriminatorStats {
  int64_t replaced = 0;
  int64_t replaced_correct = 0;
  int64_t original = 0;
  int64_t original_correct = 0;

  double Accuracy() const;
  // Mean of recall on replaced and on original tokens.
  double BalancedAccuracy() const;
  DiscriminatorStats& operator+=(const DiscriminatorStats& other);
};

template <typename T>
DiscriminatorStats ScoreDiscriminator(const ad::Tensor<T>& logits,
                                      std::span<const int32_t> rtd_labels);

struct RtdEvaluation {
  double loss_mlm = 0.0;  // means over batches
  double loss_rtd = 0.0;
  DiscriminatorStats disc;
  int64_t batches = 0;
};

// Evaluation-mode pass (no dropout, no gradients) over consecutive batches
// of `sequences`. Masking and generator samples come from `seed`, so two
// models see identical masks.
RtdEvaluation EvaluateRtd(const RtdModel<float>& model,
                          std::span<const Encoding> sequences,
                          const Vocabulary& vocab, int batch_size,
                          double mask_rate, int max_batches, uint64_t seed);

struct PretrainConfig {
  EncoderConfig encoder;
  JointLossConfig joint;
  AdamConfig adam{0.9, 0.999, 1e-6, 0.01};
  double learning_rate = 2e-4;
  int64_t warmup_steps = 10000;
  int64_t train_steps = 1000000;
  int batch_size = 256;
  int max_seq_length = 512;
  double mask_rate = 0.15;
  uint64_t seed = 42;
  int log_every = 100;
};

struct StepMetrics {
  int64_t step = 0;  // 1-based index of the completed update
  double lr = 0.0;
  double loss_mlm = 0.0;
  double loss_rtd = 0.0;
  double loss_total = 0.0;
  DiscriminatorStats disc;
};

// Formats one append-only metrics record.
std::string FormatMetricsLine(const StepMetrics& m);

class Pretrainer {
 public:
  Pretrainer(PretrainConfig config, const Vocabulary& vocab,
             std::vector<Encoding> sequences);

  // One optimizer step. Throws std::runtime_error on a non-finite loss.
  StepMetrics Step();
  // Steps until `until` updates are complete. A metrics line is written to
  // `log` every log_every steps and on the final step.
  void Run(int64_t until, std::ostream* log,
           const std::function<void(const StepMetrics&)>& on_step = {});

  int64_t step() const { return adam_.step; }
  const PretrainConfig& config() const { return config_; }
  RtdModel<float>& model() { return model_; }
  const RtdModel<float>& model() const { return model_; }
  AdamState<float>& adam_state() { return adam_; }

  // Discriminator artifact (shared embeddings + disc.*) and generator
  // artifact (gen.*), both with optimizer moments so runs can resume.
  void SaveCheckpoints(const std::filesystem::path& dir) const;
  void LoadCheckpoints(const std::filesystem::path& dir);

 private:
  std::vector<const Encoding*> BatchRows(int64_t step);

  PretrainConfig config_;
  const Vocabulary& vocab_;
  std::vector<Encoding> sequences_;
  RtdModel<float> model_;
  AdamState<float> adam_;
  LinearSchedule schedule_;
  int64_t cached_epoch_ = -1;
  std::vector<size_t> order_;
};

inline constexpr const char* kDiscriminatorCheckpoint = "discriminator.ckpt";
inline constexpr const char* kGeneratorCheckpoint = "generator.ckpt";

}  // namespace biortd

#endif  // BIORTD_RTD_H_

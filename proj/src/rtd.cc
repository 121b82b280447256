// SPDX-License-Identifier: Apache-2.0

#include "biortd/rtd.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <stdexcept>

#include "biortd/checkpoint.h"

namespace biortd {

// ---- packing --------------------------------------------------------------

namespace {

Encoding ToEncoding(const std::vector<std::string>& tokens,
                    const std::vector<int32_t>& sources,
                    const Vocabulary& vocab, int max_len) {
  Encoding enc;
  enc.tokens = tokens;
  enc.word_map = sources;
  enc.ids.reserve(static_cast<size_t>(max_len));
  for (const auto& t : tokens) enc.ids.push_back(vocab.IdOrUnk(t));
  enc.attention_mask.assign(tokens.size(), 1);
  while (enc.ids.size() < static_cast<size_t>(max_len)) {
    enc.ids.push_back(vocab.pad_id());
    enc.tokens.emplace_back(kPadToken);
    enc.attention_mask.push_back(0);
    enc.word_map.push_back(kNoWord);
  }
  enc.segment_ids.assign(enc.ids.size(), 0);
  return enc;
}

}  // namespace

PackResult PackPieceDocuments(std::span<const PieceDocument> documents,
                              const Vocabulary& vocab, int max_len) {
  if (max_len < 3) throw std::invalid_argument("max_len must be at least 3");
  const size_t limit = static_cast<size_t>(max_len);
  PackResult result;
  std::vector<std::string> tokens;
  std::vector<int32_t> sources;  // sentence index within the document
  auto reset = [&] {
    tokens.assign(1, std::string(kClsToken));
    sources.assign(1, kNoWord);
  };
  auto flush = [&] {
    result.sequences.push_back(ToEncoding(tokens, sources, vocab, max_len));
    reset();
  };
  for (const PieceDocument& doc : documents) {
    const bool empty = std::all_of(doc.begin(), doc.end(),
                                   [](const auto& s) { return s.empty(); });
    if (empty) {
      ++result.skipped_documents;
      continue;
    }
    reset();
    for (size_t s = 0; s < doc.size(); ++s) {
      const auto& pieces = doc[s];
      size_t next = 0;
      while (next < pieces.size()) {
        if (tokens.size() + 1 >= limit) flush();
        const size_t room = limit - tokens.size() - 1;
        const size_t take = std::min(room, pieces.size() - next);
        for (size_t i = 0; i < take; ++i) {
          tokens.push_back(pieces[next + i]);
          sources.push_back(static_cast<int32_t>(s));
        }
        next += take;
        tokens.emplace_back(kSepToken);
        sources.push_back(kNoWord);
        if (tokens.size() == limit) flush();
      }
    }
    if (tokens.size() > 1) flush();
  }
  return result;
}

PackResult PackSequences(std::span<const Document> documents,
                         const Vocabulary& vocab, int max_len) {
  std::vector<PieceDocument> tokenized;
  tokenized.reserve(documents.size());
  for (const Document& doc : documents) {
    PieceDocument pd;
    for (const auto& sentence : doc) {
      const auto words = PreTokenize(Normalize(sentence));
      std::vector<std::string> pieces;
      for (auto& w : TokenizeWords(words, vocab)) {
        for (auto& p : w) pieces.push_back(std::move(p));
      }
      pd.push_back(std::move(pieces));
    }
    tokenized.push_back(std::move(pd));
  }
  return PackPieceDocuments(tokenized, vocab, max_len);
}

// ---- masking --------------------------------------------------------------

int MaskCount(int n_maskable, double rate) {
  if (n_maskable < 1) return 0;
  // The epsilon keeps exact halves such as 0.15 * 10 from rounding down
  // through representation error.
  const int rounded = static_cast<int>(std::floor(rate * n_maskable + 0.5 + 1e-9));
  return std::clamp(rounded, 1, n_maskable);
}

MaskingPlan SampleMasking(std::span<const int32_t> ids,
                          std::span<const int32_t> attention_mask,
                          const Vocabulary& vocab, double rate, Rng& rng) {
  std::vector<int32_t> maskable;
  for (size_t i = 0; i < ids.size(); ++i) {
    const int32_t id = ids[i];
    if (attention_mask[i] == 0 || id == vocab.cls_id() ||
        id == vocab.sep_id() || id == vocab.pad_id()) {
      continue;
    }
    maskable.push_back(static_cast<int32_t>(i));
  }
  if (maskable.empty()) throw std::invalid_argument("nothing to mask");
  const int count = MaskCount(static_cast<int>(maskable.size()), rate);
  for (int i = 0; i < count; ++i) {
    const size_t j = static_cast<size_t>(i) +
                     rng.Below(maskable.size() - static_cast<size_t>(i));
    std::swap(maskable[static_cast<size_t>(i)], maskable[j]);
  }
  maskable.resize(static_cast<size_t>(count));
  std::sort(maskable.begin(), maskable.end());
  MaskingPlan plan;
  plan.rate = rate;
  plan.positions = std::move(maskable);
  for (int32_t p : plan.positions) plan.original_ids.push_back(ids[static_cast<size_t>(p)]);
  return plan;
}

std::vector<int32_t> DeriveRtdLabels(std::span<const int32_t> input_ids,
                                     std::span<const int32_t> corrupted_ids,
                                     std::span<const int32_t> attention_mask,
                                     std::span<const MaskingPlan> plans,
                                     int64_t length) {
  if (corrupted_ids.size() != input_ids.size() ||
      attention_mask.size() != input_ids.size() ||
      static_cast<int64_t>(plans.size()) * length !=
          static_cast<int64_t>(input_ids.size())) {
    throw std::invalid_argument("rtd labels: inconsistent batch shapes");
  }
  std::vector<int32_t> labels(input_ids.size(), kRtdOriginal);
  for (size_t i = 0; i < labels.size(); ++i) {
    if (attention_mask[i] == 0) labels[i] = kRtdIgnore;
  }
  for (size_t r = 0; r < plans.size(); ++r) {
    for (int32_t p : plans[r].positions) {
      const size_t flat = r * static_cast<size_t>(length) + static_cast<size_t>(p);
      if (corrupted_ids[flat] != input_ids[flat]) labels[flat] = kRtdReplaced;
    }
  }
  return labels;
}

TokenBatch RtdBatch::Masked() const {
  TokenBatch b = input;
  b.ids = masked_ids;
  return b;
}

TokenBatch RtdBatch::Corrupted() const {
  TokenBatch b = input;
  b.ids = corrupted_ids;
  return b;
}

RtdBatch MakeMaskedBatch(std::span<const Encoding* const> rows,
                         const Vocabulary& vocab, double rate, Rng& rng) {
  RtdBatch batch;
  batch.input = TokenBatch::FromEncodings(rows);
  batch.masked_ids = batch.input.ids;
  const int64_t length = batch.input.length;
  for (size_t r = 0; r < rows.size(); ++r) {
    MaskingPlan plan =
        SampleMasking(rows[r]->ids, rows[r]->attention_mask, vocab, rate, rng);
    for (int32_t p : plan.positions) {
      const int64_t flat = static_cast<int64_t>(r) * length + p;
      batch.masked_ids[static_cast<size_t>(flat)] = vocab.mask_id();
      batch.plan_rows.push_back(flat);
      batch.plan_targets.push_back(batch.input.ids[static_cast<size_t>(flat)]);
    }
    batch.plans.push_back(std::move(plan));
  }
  return batch;
}

// ---- model ----------------------------------------------------------------

void JointLossConfig::Validate() const {
  if (!(lambda_disc > 0.0)) throw ConfigError("lambda_disc must be positive");
  if (!(generator_size_ratio > 0.0 && generator_size_ratio <= 1.0)) {
    throw ConfigError("generator size ratio must lie in (0, 1]");
  }
}

EncoderConfig GeneratorConfig(const EncoderConfig& discriminator, double ratio) {
  discriminator.Validate();
  if (!(ratio > 0.0 && ratio <= 1.0)) {
    throw ConfigError("generator size ratio must lie in (0, 1]");
  }
  EncoderConfig g = discriminator;
  g.heads = static_cast<int>(std::lround(discriminator.heads * ratio));
  if (g.heads < 1) {
    throw ConfigError("generator ratio leaves fewer than one attention head");
  }
  g.ffn_inner = std::max(
      1, static_cast<int>(std::lround(discriminator.ffn_inner * ratio)));
  g.hidden = g.heads * g.head_size;
  return g;
}

template <typename T>
RtdModel<T>::RtdModel(const EncoderConfig& discriminator_config,
                      const JointLossConfig& joint, uint64_t seed) {
  joint.Validate();
  Rng init(seed);
  discriminator_ = std::make_unique<Encoder<T>>(discriminator_config, "disc",
                                                store_, init);
  generator_ = std::make_unique<Encoder<T>>(
      GeneratorConfig(discriminator_config, joint.generator_size_ratio), "gen",
      store_, init, discriminator_.get());
  const int head_depth = discriminator_config.num_layers + 1;
  const int64_t emb = discriminator_config.embedding_size;
  const int64_t hidden = discriminator_config.hidden;
  const int64_t gen_hidden = generator_->config().hidden;
  const int64_t vocab = discriminator_config.vocab_size;
  using Tensor = ad::Tensor<T>;
  mlm_dense_w_ = store_.Add("gen.mlm_head.dense.weight",
                            InitWeight<T>({gen_hidden, emb}, init), true,
                            head_depth);
  mlm_dense_b_ = store_.Add("gen.mlm_head.dense.bias", Tensor::Zeros({emb}),
                            false, head_depth);
  mlm_ln_g_ = store_.Add("gen.mlm_head.ln.gain", Tensor::Full({emb}, T(1)),
                         false, head_depth);
  mlm_ln_b_ = store_.Add("gen.mlm_head.ln.bias", Tensor::Zeros({emb}), false,
                         head_depth);
  mlm_bias_ = store_.Add("gen.mlm_head.output_bias", Tensor::Zeros({vocab}),
                         false, head_depth);
  rtd_dense_w_ = store_.Add("disc.rtd_head.dense.weight",
                            InitWeight<T>({hidden, hidden}, init), true,
                            head_depth);
  rtd_dense_b_ = store_.Add("disc.rtd_head.dense.bias", Tensor::Zeros({hidden}),
                            false, head_depth);
  rtd_out_w_ = store_.Add("disc.rtd_head.out.weight",
                          InitWeight<T>({hidden, 1}, init), true, head_depth);
  rtd_out_b_ = store_.Add("disc.rtd_head.out.bias", Tensor::Zeros({1}), false,
                          head_depth);
}

template <typename T>
ad::Tensor<T> RtdModel<T>::GeneratorLogits(const TokenBatch& masked,
                                           std::span<const int64_t> plan_rows,
                                           bool train, Rng* rng) const {
  auto h = generator_->Forward(masked, train, rng);
  h = ad::Reshape(h, {masked.batch * masked.length, h.dim(-1)});
  h = ad::GatherRows(h, plan_rows);
  h = ad::Gelu(ad::Linear(h, mlm_dense_w_, mlm_dense_b_));
  h = ad::LayerNorm(h, mlm_ln_g_, mlm_ln_b_, kLayerNormEpsilon);
  return ad::Add(ad::MatMul(h, generator_->token_embeddings(), true), mlm_bias_);
}

template <typename T>
ad::Tensor<T> RtdModel<T>::DiscriminatorLogits(const TokenBatch& corrupted,
                                               bool train, Rng* rng) const {
  auto h = discriminator_->Forward(corrupted, train, rng);
  const int64_t rows = corrupted.batch * corrupted.length;
  h = ad::Reshape(h, {rows, h.dim(-1)});
  h = ad::Gelu(ad::Linear(h, rtd_dense_w_, rtd_dense_b_));
  return ad::Reshape(ad::Linear(h, rtd_out_w_, rtd_out_b_), {rows});
}

template <typename T>
std::vector<int32_t> GeneratorSample(const ad::Tensor<T>& logits,
                                     std::span<const int64_t> plan_rows,
                                     std::span<const int32_t> ids, Rng& rng) {
  if (logits.rank() != 2 ||
      logits.dim(0) != static_cast<int64_t>(plan_rows.size())) {
    throw ad::ShapeError("generator sample: logits " +
                         ad::ShapeToString(logits.shape()) + " for " +
                         std::to_string(plan_rows.size()) + " plan rows");
  }
  std::vector<int32_t> out(ids.begin(), ids.end());
  const int64_t vocab = logits.dim(1);
  auto values = logits.data();
  std::vector<double> probs(static_cast<size_t>(vocab));
  for (size_t i = 0; i < plan_rows.size(); ++i) {
    const T* row = values.data() + static_cast<int64_t>(i) * vocab;
    const double mx = *std::max_element(row, row + vocab);
    double total = 0.0;
    for (int64_t v = 0; v < vocab; ++v) {
      probs[static_cast<size_t>(v)] = std::exp(static_cast<double>(row[v]) - mx);
      total += probs[static_cast<size_t>(v)];
    }
    double u = rng.Uniform() * total;
    int64_t choice = vocab - 1;
    for (int64_t v = 0; v < vocab; ++v) {
      u -= probs[static_cast<size_t>(v)];
      if (u < 0.0) {
        choice = v;
        break;
      }
    }
    out[static_cast<size_t>(plan_rows[i])] = static_cast<int32_t>(choice);
  }
  return out;
}

template <typename T>
JointLossValue<T> JointLoss(const ad::Tensor<T>& generator_logits,
                            std::span<const int32_t> plan_targets,
                            const ad::Tensor<T>& discriminator_logits,
                            std::span<const int32_t> rtd_labels,
                            const JointLossConfig& config) {
  auto mlm = ad::CrossEntropy(generator_logits, plan_targets);
  auto rtd = ad::BinaryCrossEntropy(discriminator_logits, rtd_labels);
  JointLossValue<T> out;
  out.mlm = mlm.item();
  out.rtd = rtd.item();
  out.total = ad::Add(mlm, ad::Scale(rtd, static_cast<T>(config.lambda_disc)));
  return out;
}

double DiscriminatorStats::Accuracy() const {
  const int64_t n = replaced + original;
  return n ? static_cast<double>(replaced_correct + original_correct) / n : 0.0;
}

double DiscriminatorStats::BalancedAccuracy() const {
  const double tpr = replaced ? static_cast<double>(replaced_correct) / replaced : 0.0;
  const double tnr = original ? static_cast<double>(original_correct) / original : 0.0;
  if (!replaced) return tnr;
  if (!original) return tpr;
  return 0.5 * (tpr + tnr);
}

DiscriminatorStats& DiscriminatorStats::operator+=(const DiscriminatorStats& o) {
  replaced += o.replaced;
  replaced_correct += o.replaced_correct;
  original += o.original;
  original_correct += o.original_correct;
  return *this;
}

template <typename T>
DiscriminatorStats ScoreDiscriminator(const ad::Tensor<T>& logits,
                                      std::span<const int32_t> rtd_labels) {
  DiscriminatorStats s;
  auto values = logits.data();
  for (size_t i = 0; i < rtd_labels.size(); ++i) {
    const bool predicted_replaced = values[i] > T(0);
    if (rtd_labels[i] == kRtdReplaced) {
      ++s.replaced;
      s.replaced_correct += predicted_replaced;
    } else if (rtd_labels[i] == kRtdOriginal) {
      ++s.original;
      s.original_correct += !predicted_replaced;
    }
  }
  return s;
}

RtdEvaluation EvaluateRtd(const RtdModel<float>& model,
                          std::span<const Encoding> sequences,
                          const Vocabulary& vocab, int batch_size,
                          double mask_rate, int max_batches, uint64_t seed) {
  if (batch_size < 1) throw std::invalid_argument("batch_size must be positive");
  RtdEvaluation out;
  for (size_t begin = 0; begin < sequences.size() && out.batches < max_batches;
       begin += static_cast<size_t>(batch_size)) {
    const size_t end = std::min(sequences.size(), begin + static_cast<size_t>(batch_size));
    std::vector<const Encoding*> rows;
    for (size_t i = begin; i < end; ++i) rows.push_back(&sequences[i]);
    Rng rng(Rng::Derive(seed, static_cast<uint64_t>(out.batches)));
    RtdBatch batch = MakeMaskedBatch(rows, vocab, mask_rate, rng);
    auto gen = model.GeneratorLogits(batch.Masked(), batch.plan_rows, false, nullptr);
    batch.corrupted_ids = GeneratorSample(gen, batch.plan_rows, batch.input.ids, rng);
    batch.rtd_labels = DeriveRtdLabels(batch.input.ids, batch.corrupted_ids,
                                       batch.input.attention_mask, batch.plans,
                                       batch.input.length);
    auto disc = model.DiscriminatorLogits(batch.Corrupted(), false, nullptr);
    out.loss_mlm += ad::CrossEntropy(gen, batch.plan_targets).item();
    out.loss_rtd += ad::BinaryCrossEntropy(disc, batch.rtd_labels).item();
    out.disc += ScoreDiscriminator(disc, batch.rtd_labels);
    ++out.batches;
  }
  if (out.batches > 0) {
    out.loss_mlm /= static_cast<double>(out.batches);
    out.loss_rtd /= static_cast<double>(out.batches);
  }
  return out;
}

// ---- training loop --------------------------------------------------------

std::string FormatMetricsLine(const StepMetrics& m) {
  char buf[512];
  std::snprintf(buf, sizeof(buf),
                "{\"step\":%lld,\"lr\":%.9g,\"loss_mlm\":%.9g,\"loss_rtd\":%.9g,"
                "\"loss_total\":%.9g,\"disc_accuracy\":%.9g,"
                "\"disc_balanced_accuracy\":%.9g,\"replaced\":%lld,"
                "\"original\":%lld}",
                static_cast<long long>(m.step), m.lr, m.loss_mlm, m.loss_rtd,
                m.loss_total, m.disc.Accuracy(), m.disc.BalancedAccuracy(),
                static_cast<long long>(m.disc.replaced),
                static_cast<long long>(m.disc.original));
  return buf;
}

namespace {

constexpr uint64_t kModelInitTag = 1;
constexpr uint64_t kShuffleTag = 2;
constexpr uint64_t kStepTag = 3;

}  // namespace

Pretrainer::Pretrainer(PretrainConfig config, const Vocabulary& vocab,
                       std::vector<Encoding> sequences)
    : config_(std::move(config)),
      vocab_(vocab),
      sequences_(std::move(sequences)),
      model_(config_.encoder, config_.joint,
             Rng::Derive(config_.seed, kModelInitTag)),
      schedule_{config_.learning_rate, config_.warmup_steps,
                config_.train_steps} {
  if (config_.encoder.vocab_size != vocab.size()) {
    throw ConfigError("encoder vocab_size " +
                      std::to_string(config_.encoder.vocab_size) +
                      " differs from vocabulary size " +
                      std::to_string(vocab.size()));
  }
  schedule_.Validate();
  if (sequences_.empty()) throw std::invalid_argument("pretraining corpus is empty");
  if (config_.batch_size < 1) throw ConfigError("batch_size must be positive");
  if (config_.log_every < 1) throw ConfigError("log_every must be positive");
}

std::vector<const Encoding*> Pretrainer::BatchRows(int64_t step) {
  const int64_t n = static_cast<int64_t>(sequences_.size());
  std::vector<const Encoding*> rows;
  rows.reserve(static_cast<size_t>(config_.batch_size));
  for (int64_t j = 0; j < config_.batch_size; ++j) {
    const int64_t global = step * config_.batch_size + j;
    const int64_t epoch = global / n;
    if (epoch != cached_epoch_) {
      // Each pass over the corpus gets its own seed-determined order.
      order_.resize(sequences_.size());
      std::iota(order_.begin(), order_.end(), size_t{0});
      Rng shuffle(Rng::Derive(Rng::Derive(config_.seed, kShuffleTag),
                              static_cast<uint64_t>(epoch)));
      for (size_t i = order_.size(); i > 1; --i) {
        std::swap(order_[i - 1], order_[shuffle.Below(i)]);
      }
      cached_epoch_ = epoch;
    }
    rows.push_back(&sequences_[order_[static_cast<size_t>(global % n)]]);
  }
  return rows;
}

StepMetrics Pretrainer::Step() {
  const int64_t step = adam_.step;
  Rng rng(Rng::Derive(Rng::Derive(config_.seed, kStepTag),
                      static_cast<uint64_t>(step)));
  const auto rows = BatchRows(step);
  RtdBatch batch = MakeMaskedBatch(rows, vocab_, config_.mask_rate, rng);

  ParamStore<float>& store = model_.params();
  store.ZeroGrad();
  ad::Tape<float> tape;
  StepMetrics metrics;
  {
    ad::TapeScope<float> scope(tape);
    auto gen_logits =
        model_.GeneratorLogits(batch.Masked(), batch.plan_rows, true, &rng);
    batch.corrupted_ids =
        GeneratorSample(gen_logits, batch.plan_rows, batch.input.ids, rng);
    batch.rtd_labels =
        DeriveRtdLabels(batch.input.ids, batch.corrupted_ids,
                        batch.input.attention_mask, batch.plans, batch.input.length);
    auto disc_logits = model_.DiscriminatorLogits(batch.Corrupted(), true, &rng);
    auto loss = JointLoss(gen_logits, batch.plan_targets, disc_logits,
                          batch.rtd_labels, config_.joint);
    metrics.loss_mlm = loss.mlm;
    metrics.loss_rtd = loss.rtd;
    metrics.loss_total = loss.total.item();
    if (!std::isfinite(metrics.loss_total)) {
      throw std::runtime_error("non-finite loss at step " +
                               std::to_string(step + 1));
    }
    metrics.disc = ScoreDiscriminator(disc_logits, batch.rtd_labels);
    tape.Backward(loss.total);
  }
  metrics.lr = schedule_.At(step + 1);
  const double lr = metrics.lr;
  AdamStep<float>(store, adam_, config_.adam,
                  [lr](const Parameter<float>&) { return lr; });
  metrics.step = adam_.step;
  return metrics;
}

void Pretrainer::Run(int64_t until, std::ostream* log,
                     const std::function<void(const StepMetrics&)>& on_step) {
  while (adam_.step < until) {
    const StepMetrics m = Step();
    if (log != nullptr && (m.step % config_.log_every == 0 || m.step == until)) {
      *log << FormatMetricsLine(m) << '\n';
      log->flush();
    }
    if (on_step) on_step(m);
  }
}

void Pretrainer::SaveCheckpoints(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  const auto& store = model_.params();
  const auto is_gen = [](const std::string& n) {
    return RtdModel<float>::IsGeneratorParam(n);
  };
  CheckpointManifest disc;
  disc.encoder = config_.encoder;
  disc.component = "discriminator";
  disc.has_optimizer_state = true;
  disc.step = adam_.step;
  disc.seed = config_.seed;
  disc.extra["vocabulary"] = vocab_.tokens();
  disc.extra["generator_encoder"] =
      EncoderConfigToJson(model_.generator_config());
  disc.extra["lambda_disc"] = config_.joint.lambda_disc;
  disc.extra["generator_size_ratio"] = config_.joint.generator_size_ratio;
  SaveCheckpoint(dir / kDiscriminatorCheckpoint, disc,
                 CollectTensors(store, [&](const std::string& n) { return !is_gen(n); },
                                &adam_));
  CheckpointManifest gen = disc;
  gen.encoder = model_.generator_config();
  gen.component = "generator";
  gen.extra = nlohmann::json::object();
  SaveCheckpoint(dir / kGeneratorCheckpoint, gen,
                 CollectTensors(store, is_gen, &adam_));
}

void Pretrainer::LoadCheckpoints(const std::filesystem::path& dir) {
  auto& store = model_.params();
  const auto disc = LoadCheckpoint(dir / kDiscriminatorCheckpoint);
  const auto gen = LoadCheckpoint(dir / kGeneratorCheckpoint);
  if (!(disc.manifest.encoder == config_.encoder) ||
      !(gen.manifest.encoder == model_.generator_config())) {
    throw CheckpointError(CheckpointError::Kind::kConfigMismatch,
                          "checkpoint encoder config differs from the run config");
  }
  if (disc.manifest.step != gen.manifest.step) {
    throw CheckpointError(CheckpointError::Kind::kConfigMismatch,
                          "generator and discriminator checkpoints are from "
                          "different steps");
  }
  AdamState<float> restored;
  RestoreTensors(disc, store,
                 [](const std::string& n) { return !RtdModel<float>::IsGeneratorParam(n); },
                 true, &restored);
  RestoreTensors(gen, store,
                 [](const std::string& n) { return RtdModel<float>::IsGeneratorParam(n); },
                 true, &restored);
  adam_ = std::move(restored);
  cached_epoch_ = -1;
}

template class RtdModel<float>;
template class RtdModel<double>;
template std::vector<int32_t> GeneratorSample<float>(
    const ad::Tensor<float>&, std::span<const int64_t>, std::span<const int32_t>, Rng&);
template std::vector<int32_t> GeneratorSample<double>(
    const ad::Tensor<double>&, std::span<const int64_t>, std::span<const int32_t>, Rng&);
template JointLossValue<float> JointLoss<float>(
    const ad::Tensor<float>&, std::span<const int32_t>, const ad::Tensor<float>&,
    std::span<const int32_t>, const JointLossConfig&);
template JointLossValue<double> JointLoss<double>(
    const ad::Tensor<double>&, std::span<const int32_t>, const ad::Tensor<double>&,
    std::span<const int32_t>, const JointLossConfig&);
template DiscriminatorStats ScoreDiscriminator<float>(const ad::Tensor<float>&,
                                                      std::span<const int32_t>);
template DiscriminatorStats ScoreDiscriminator<double>(const ad::Tensor<double>&,
                                                       std::span<const int32_t>);

}  // namespace biortd

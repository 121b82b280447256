// SPDX-License-Identifier: Apache-2.0

#include "biortd/finetune.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "biortd/config.h"
#include "biortd/rng.h"

namespace biortd {

namespace {

constexpr uint64_t kShuffleTag = 2;
constexpr uint64_t kStepTag = 3;

EncoderConfig WithDropout(EncoderConfig e, const FinetuneConfig& c) {
  e.dropout = c.dropout;
  e.attention_dropout = c.attention_dropout;
  return e;
}

bool SameArchitecture(EncoderConfig a, EncoderConfig b) {
  a.dropout = b.dropout;
  a.attention_dropout = b.attention_dropout;
  return a == b;
}

int NumLabelsFor(Task task, const std::vector<std::string>& labels) {
  return IsQa(task) ? 0 : static_cast<int>(labels.size());
}

template <typename Fn>
void ForEachBatch(size_t n, int batch_size, Fn fn) {
  for (size_t begin = 0; begin < n; begin += static_cast<size_t>(batch_size)) {
    fn(begin, std::min(n, begin + static_cast<size_t>(batch_size)));
  }
}

}  // namespace

FinetuneConfig FinetuneConfig::ForTask(Task task) {
  FinetuneConfig c;
  c.task = task;
  switch (task) {
    case Task::kNer:
    case Task::kRe:
      c.learning_rate = 5e-5;
      c.batch_size = 32;
      c.max_seq_length = 128;
      break;
    case Task::kQaSquad:
      c.learning_rate = 3e-5;
      c.batch_size = 16;
      c.max_seq_length = 384;
      c.document_stride = 128;
      break;
    case Task::kQaBioasq:
      c.learning_rate = 5e-6;
      c.batch_size = 16;
      c.max_seq_length = 384;
      c.document_stride = 128;
      break;
  }
  return c;
}

void FinetuneConfig::Validate() const {
  auto fail = [](const std::string& what) { throw ConfigError(what); };
  if (!(learning_rate > 0.0)) fail("learning_rate must be positive");
  if (!(layerwise_lr_decay > 0.0 && layerwise_lr_decay <= 1.0)) {
    fail("layerwise_lr_decay must be in (0, 1]");
  }
  if (batch_size < 1) fail("batch_size must be positive");
  if (max_seq_length < 3) fail("max_seq_length must be at least 3");
  if (document_stride < 1) fail("document_stride must be positive");
  if (!(warmup_fraction >= 0.0 && warmup_fraction <= 1.0)) {
    fail("warmup fraction must be in [0, 1]");
  }
  if (epochs < 1) fail("epochs must be positive");
  if (dropout < 0.0 || dropout >= 1.0 || attention_dropout < 0.0 ||
      attention_dropout >= 1.0) {
    fail("dropout rates must be in [0, 1)");
  }
  if (decode.n_best < 1 || decode.top_k < 1 || decode.max_answer_tokens < 1) {
    fail("QA decoding sizes must be positive");
  }
}

TokenBatch TrimmedBatch(std::span<const Encoding* const> rows) {
  size_t length = 1;
  for (const Encoding* e : rows) {
    for (size_t p = e->attention_mask.size(); p > length; --p) {
      if (e->attention_mask[p - 1] != 0) {
        length = p;
        break;
      }
    }
  }
  TokenBatch batch;
  batch.batch = static_cast<int64_t>(rows.size());
  batch.length = static_cast<int64_t>(length);
  for (const Encoding* e : rows) {
    if (e->size() < length) throw std::invalid_argument("ragged batch");
    batch.ids.insert(batch.ids.end(), e->ids.begin(), e->ids.begin() + static_cast<std::ptrdiff_t>(length));
    batch.attention_mask.insert(batch.attention_mask.end(), e->attention_mask.begin(),
                                e->attention_mask.begin() + static_cast<std::ptrdiff_t>(length));
    batch.segment_ids.insert(batch.segment_ids.end(), e->segment_ids.begin(),
                             e->segment_ids.begin() + static_cast<std::ptrdiff_t>(length));
  }
  return batch;
}

TaskRunner::TaskRunner(FinetuneConfig config, const Vocabulary& vocab,
                       const EncoderConfig& encoder, std::vector<std::string> labels,
                       uint64_t seed)
    : config_(std::move(config)),
      vocab_(vocab),
      labels_(std::move(labels)),
      seed_(seed),
      model_(config_.task, WithDropout(encoder, config_),
             NumLabelsFor(config_.task, labels_), Rng::Derive(seed, 1)) {
  config_.Validate();
  if (encoder.vocab_size != vocab.size()) {
    throw ConfigError("encoder vocabulary size " + std::to_string(encoder.vocab_size) +
                      " differs from the vocabulary (" + std::to_string(vocab.size()) +
                      " tokens)");
  }
  if (config_.task == Task::kNer) tags_ = TagSet::FromTags(labels_);
  if (config_.task == Task::kNer && tags_->tags() != labels_) {
    throw std::invalid_argument("NER labels must start with O and be sorted");
  }
}

void TaskRunner::InitFrom(const LoadedCheckpoint& checkpoint) {
  const auto& m = checkpoint.manifest;
  if (!SameArchitecture(m.encoder, model_.encoder().config())) {
    throw CheckpointError(CheckpointError::Kind::kConfigMismatch,
                          "checkpoint encoder differs from the configured encoder");
  }
  const std::string source_task = m.extra.value("task", std::string());
  if (config_.task == Task::kQaBioasq && source_task != TaskName(Task::kQaSquad)) {
    throw std::invalid_argument(
        "qa-bioasq fine-tuning must start from a qa-squad checkpoint");
  }
  if (m.component != "discriminator" && m.component != "task-head") {
    throw std::invalid_argument("cannot initialize a task model from a " +
                                m.component + " checkpoint");
  }
  const bool keep_head = IsQa(config_.task) && !source_task.empty() &&
                         IsQa(ParseTask(source_task));
  RestoreTensors(
      checkpoint, model_.params(),
      [&](const std::string& name) {
        if (name.starts_with("embeddings.")) return true;
        if (name.starts_with("disc.")) return !name.starts_with("disc.rtd_head.");
        return keep_head && TaskModel<float>::IsHeadParam(name);
      },
      true);
}

void TaskRunner::SetItems(std::vector<Item> items) {
  if (items.empty()) throw std::invalid_argument("no training examples");
  items_ = std::move(items);
  const int64_t per_epoch =
      (static_cast<int64_t>(items_.size()) + config_.batch_size - 1) / config_.batch_size;
  schedule_.base_lr = config_.learning_rate;
  schedule_.total_steps = per_epoch * config_.epochs;
  schedule_.warmup_steps = static_cast<int64_t>(
      std::llround(config_.warmup_fraction * static_cast<double>(schedule_.total_steps)));
  schedule_.Validate();
  epoch_ = 0;
  adam_ = {};
}

void TaskRunner::SetNerData(std::vector<NerSentence> train) {
  if (config_.task != Task::kNer) throw std::invalid_argument("NER data for a non-NER task");
  std::vector<Item> items;
  for (auto& ex : AlignCorpus(train, *tags_, vocab_, config_.max_seq_length)) {
    Item item;
    item.encoding = std::move(ex.encoding);
    item.token_labels = std::move(ex.labels);
    items.push_back(std::move(item));
  }
  SetItems(std::move(items));
}

void TaskRunner::SetReData(std::vector<ReExample> train) {
  if (config_.task != Task::kRe) throw std::invalid_argument("RE data for a non-RE task");
  std::vector<Item> items;
  for (const auto& ex : train) {
    auto it = std::find(labels_.begin(), labels_.end(), ex.label);
    if (it == labels_.end()) {
      throw std::invalid_argument("example " + ex.id + " has unknown label " + ex.label);
    }
    Item item;
    item.encoding = Encode(PreTokenize(ex.sentence), std::nullopt, vocab_,
                           config_.max_seq_length);
    item.label = static_cast<int32_t>(it - labels_.begin());
    items.push_back(std::move(item));
  }
  SetItems(std::move(items));
}

void TaskRunner::SetQaData(std::span<const QaQuestion> train) {
  if (!IsQa(config_.task)) throw std::invalid_argument("QA data for a non-QA task");
  std::vector<Item> items;
  for (const auto& q : train) {
    for (size_t c = 0; c < q.contexts.size(); ++c) {
      const QaContext& ctx = q.contexts[c];
      if (ctx.answers.empty()) continue;
      for (auto& f : QaFeaturize(q.id, q.question, ctx.text, ctx.answers.front(), vocab_,
                                 config_.max_seq_length, config_.document_stride,
                                 static_cast<int32_t>(c))) {
        Item item;
        item.encoding = std::move(f.encoding);
        item.start = f.start_position;
        item.end = f.end_position;
        items.push_back(std::move(item));
      }
    }
  }
  SetItems(std::move(items));
}

double TaskRunner::Step(std::span<const Item* const> rows) {
  const int64_t step = adam_.step;
  Rng rng(Rng::Derive(Rng::Derive(seed_, kStepTag), static_cast<uint64_t>(step)));
  std::vector<const Encoding*> encodings;
  for (const Item* item : rows) encodings.push_back(&item->encoding);
  const TokenBatch batch = TrimmedBatch(encodings);
  const auto length = static_cast<size_t>(batch.length);

  ParamStore<float>& store = model_.params();
  store.ZeroGrad();
  ad::Tape<float> tape;
  double loss_value = 0.0;
  {
    ad::TapeScope<float> scope(tape);
    ad::Tensor<float> loss;
    if (config_.task == Task::kNer) {
      std::vector<int32_t> labels;
      for (const Item* item : rows) {
        labels.insert(labels.end(), item->token_labels.begin(),
                      item->token_labels.begin() + static_cast<std::ptrdiff_t>(length));
      }
      loss = TokenLoss(model_.TokenLogits(batch, true, &rng), std::span<const int32_t>(labels));
    } else if (config_.task == Task::kRe) {
      std::vector<int32_t> labels;
      for (const Item* item : rows) labels.push_back(item->label);
      loss = SequenceLoss(model_.SequenceLogits(batch, true, &rng),
                          std::span<const int32_t>(labels));
    } else {
      std::vector<int32_t> starts, ends;
      for (const Item* item : rows) {
        starts.push_back(item->start);
        ends.push_back(item->end);
      }
      auto [s, e] = model_.SpanLogits(batch, true, &rng);
      loss = SpanLoss(s, e, std::span<const int32_t>(starts), std::span<const int32_t>(ends));
    }
    loss_value = loss.item();
    if (!std::isfinite(loss_value)) {
      throw std::runtime_error("non-finite loss at fine-tuning step " +
                               std::to_string(step + 1));
    }
    tape.Backward(loss);
  }
  const double lr = schedule_.At(step + 1);
  const double decay = config_.layerwise_lr_decay;
  const int layers = model_.encoder().config().num_layers;
  AdamStep<float>(store, adam_, config_.adam, [&](const Parameter<float>& p) {
    return lr * LayerwiseMultiplier(p.depth, decay, layers);
  });
  return loss_value;
}

EpochSummary TaskRunner::TrainEpoch(std::ostream* log) {
  if (items_.empty()) throw std::logic_error("no training data set");
  std::vector<size_t> order(items_.size());
  std::iota(order.begin(), order.end(), size_t{0});
  Rng shuffle(Rng::Derive(Rng::Derive(seed_, kShuffleTag), static_cast<uint64_t>(epoch_)));
  for (size_t i = order.size(); i > 1; --i) {
    std::swap(order[i - 1], order[static_cast<size_t>(shuffle.Below(i))]);
  }
  EpochSummary summary;
  summary.epoch = ++epoch_;
  double total = 0.0;
  ForEachBatch(order.size(), config_.batch_size, [&](size_t begin, size_t end) {
    std::vector<const Item*> rows;
    for (size_t i = begin; i < end; ++i) rows.push_back(&items_[order[i]]);
    total += Step(rows);
    ++summary.steps;
  });
  summary.mean_loss = summary.steps ? total / static_cast<double>(summary.steps) : 0.0;
  if (log != nullptr) {
    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "{\"epoch\":%d,\"step\":%lld,\"steps\":%lld,\"mean_loss\":%.9g}",
                  summary.epoch, static_cast<long long>(adam_.step),
                  static_cast<long long>(summary.steps), summary.mean_loss);
    *log << buf << '\n';
    log->flush();
  }
  return summary;
}

std::vector<EpochSummary> TaskRunner::Train(std::ostream* log) {
  std::vector<EpochSummary> out;
  while (epoch_ < config_.epochs) out.push_back(TrainEpoch(log));
  return out;
}

std::vector<std::vector<std::string>> TaskRunner::PredictNer(
    std::span<const NerSentence> sentences) {
  if (config_.task != Task::kNer) throw std::invalid_argument("not an NER model");
  std::vector<NerSentence> unlabeled(sentences.begin(), sentences.end());
  for (auto& s : unlabeled) s.tags.assign(s.words.size(), "O");
  const auto examples = AlignCorpus(unlabeled, *tags_, vocab_, config_.max_seq_length);
  std::vector<std::vector<int32_t>> predicted;
  ForEachBatch(examples.size(), config_.batch_size, [&](size_t begin, size_t end) {
    std::vector<const Encoding*> rows;
    for (size_t i = begin; i < end; ++i) rows.push_back(&examples[i].encoding);
    const TokenBatch batch = TrimmedBatch(rows);
    const auto ids = ArgmaxRows(model_.TokenLogits(batch, false, nullptr));
    for (size_t r = 0; r < rows.size(); ++r) {
      std::vector<int32_t> row(rows[r]->size(), 0);
      std::copy_n(ids.begin() + static_cast<std::ptrdiff_t>(r * static_cast<size_t>(batch.length)),
                  batch.length, row.begin());
      predicted.push_back(std::move(row));
    }
  });
  return JoinPredictions(examples, predicted, unlabeled, *tags_);
}

std::vector<std::string> TaskRunner::PredictRe(std::span<const ReExample> examples) {
  if (config_.task != Task::kRe) throw std::invalid_argument("not an RE model");
  std::vector<Encoding> encodings;
  for (const auto& ex : examples) {
    encodings.push_back(Encode(PreTokenize(ex.sentence), std::nullopt, vocab_,
                               config_.max_seq_length));
  }
  std::vector<std::string> out;
  ForEachBatch(encodings.size(), config_.batch_size, [&](size_t begin, size_t end) {
    std::vector<const Encoding*> rows;
    for (size_t i = begin; i < end; ++i) rows.push_back(&encodings[i]);
    for (int32_t id : ArgmaxRows(model_.SequenceLogits(TrimmedBatch(rows), false, nullptr))) {
      out.push_back(labels_.at(static_cast<size_t>(id)));
    }
  });
  return out;
}

std::map<std::string, NBestList> TaskRunner::PredictQa(
    std::span<const QaQuestion> questions) {
  if (!IsQa(config_.task)) throw std::invalid_argument("not a QA model");
  std::vector<QaFeature> features;
  std::vector<size_t> owner;  // question index per feature
  for (size_t qi = 0; qi < questions.size(); ++qi) {
    const QaQuestion& q = questions[qi];
    for (size_t c = 0; c < q.contexts.size(); ++c) {
      for (auto& f : QaFeaturize(q.id, q.question, q.contexts[c].text, std::nullopt, vocab_,
                                 config_.max_seq_length, config_.document_stride,
                                 static_cast<int32_t>(c))) {
        features.push_back(std::move(f));
        owner.push_back(qi);
      }
    }
  }
  constexpr float kNegInf = -std::numeric_limits<float>::infinity();
  std::vector<std::vector<float>> starts(features.size()), ends(features.size());
  ForEachBatch(features.size(), config_.batch_size, [&](size_t begin, size_t end) {
    std::vector<const Encoding*> rows;
    for (size_t i = begin; i < end; ++i) rows.push_back(&features[i].encoding);
    const TokenBatch batch = TrimmedBatch(rows);
    auto [s, e] = model_.SpanLogits(batch, false, nullptr);
    const auto sv = s.data();
    const auto ev = e.data();
    const auto len = static_cast<size_t>(batch.length);
    for (size_t r = 0; r < rows.size(); ++r) {
      auto& srow = starts[begin + r];
      auto& erow = ends[begin + r];
      srow.assign(rows[r]->size(), kNegInf);
      erow.assign(rows[r]->size(), kNegInf);
      std::copy_n(sv.begin() + static_cast<std::ptrdiff_t>(r * len), len, srow.begin());
      std::copy_n(ev.begin() + static_cast<std::ptrdiff_t>(r * len), len, erow.begin());
    }
  });
  std::map<std::string, NBestList> out;
  size_t f = 0;
  for (size_t qi = 0; qi < questions.size(); ++qi) {
    const QaQuestion& q = questions[qi];
    std::vector<const QaFeature*> mine;
    std::vector<std::vector<float>> s_rows, e_rows;
    for (; f < features.size() && owner[f] == qi; ++f) {
      mine.push_back(&features[f]);
      s_rows.push_back(std::move(starts[f]));
      e_rows.push_back(std::move(ends[f]));
    }
    std::vector<std::string> contexts;
    for (const auto& c : q.contexts) contexts.push_back(c.text);
    out[q.id] = QaDecode(q.id, mine, s_rows, e_rows, contexts, config_.decode);
  }
  return out;
}

void TaskRunner::Save(const std::filesystem::path& path) const {
  CheckpointManifest m;
  m.encoder = model_.encoder().config();
  m.component = "task-head";
  m.step = adam_.step;
  m.seed = seed_;
  m.extra["task"] = TaskName(config_.task);
  m.extra["labels"] = labels_;
  m.extra["vocabulary"] = vocab_.tokens();
  m.extra["finetune"] = ToJson(config_);
  SaveCheckpoint(path, m, CollectTensors(model_.params(), [](const std::string&) { return true; }));
}

TaskRunner TaskRunner::Load(const std::filesystem::path& path, const Vocabulary& vocab) {
  const LoadedCheckpoint ckpt = LoadCheckpoint(path);
  const auto& m = ckpt.manifest;
  if (m.component != "task-head") {
    throw std::invalid_argument(path.string() + " is a " + m.component +
                                " checkpoint, not a fine-tuned model");
  }
  FinetuneConfig config;
  std::vector<std::string> labels;
  try {
    const auto& settings = m.extra.at("finetune");
    RunConfig rc;
    for (const auto& [key, value] : settings.items()) {
      rc.Set(key, value.is_string() ? value.get<std::string>() : value.dump());
    }
    config = rc.ToFinetune(ParseTask(settings.at("task").get<std::string>()));
    labels = m.extra.at("labels").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(CheckpointError::Kind::kCorruptManifest,
                          path.string() + ": incomplete task metadata: " + e.what());
  }
  TaskRunner runner(config, vocab, m.encoder, labels, m.seed);
  RestoreTensors(ckpt, runner.model_.params(), [](const std::string&) { return true; }, true);
  return runner;
}

nlohmann::json EvaluateNer(std::span<const NerSentence> gold,
                           std::span<const std::vector<std::string>> predicted) {
  if (gold.size() != predicted.size()) {
    throw std::invalid_argument("gold has " + std::to_string(gold.size()) +
                                " sentences, predictions " +
                                std::to_string(predicted.size()));
  }
  std::vector<std::vector<std::string>> gold_tags;
  for (size_t i = 0; i < gold.size(); ++i) {
    if (gold[i].tags.size() != predicted[i].size()) {
      throw std::invalid_argument("sentence " + std::to_string(i) +
                                  ": gold and predicted lengths differ");
    }
    gold_tags.push_back(gold[i].tags);
  }
  return ToJson(EntityPrfFromTags(gold_tags, predicted));
}

nlohmann::json EvaluateRe(std::span<const ReExample> gold,
                          std::span<const std::string> predicted,
                          const RelationLabels& labels) {
  std::vector<std::string> gold_labels;
  for (const auto& g : gold) gold_labels.push_back(g.label);
  return ToJson(RelationPrf(gold_labels, predicted, labels.positive, labels.negative));
}

nlohmann::json EvaluateQa(std::span<const QaQuestion> gold,
                          const std::map<std::string, std::vector<std::string>>& predicted) {
  std::vector<QaGold> g;
  for (const auto& q : gold) g.push_back({q.id, q.synonyms});
  return ToJson(QaMetrics(g, predicted));
}

}  // namespace biortd

// SPDX-License-Identifier: Apache-2.0

#include "biortd/tasks.h"

#include <algorithm>
#include <limits>
#include <map>
#include <numeric>
#include <stdexcept>

#include "biortd/metrics.h"

namespace biortd {

Task ParseTask(const std::string& name) {
  if (name == "ner") return Task::kNer;
  if (name == "re") return Task::kRe;
  if (name == "qa-squad") return Task::kQaSquad;
  if (name == "qa-bioasq") return Task::kQaBioasq;
  throw std::invalid_argument("unknown task '" + name +
                              "' (expected ner, re, qa-squad or qa-bioasq)");
}

std::string TaskName(Task task) {
  switch (task) {
    case Task::kNer: return "ner";
    case Task::kRe: return "re";
    case Task::kQaSquad: return "qa-squad";
    case Task::kQaBioasq: return "qa-bioasq";
  }
  return "?";
}

// ---------------------------------------------------------------- NER

std::vector<std::pair<int32_t, int32_t>> SplitWords(
    std::span<const std::string> words, const Vocabulary& vocab, int max_seq) {
  const auto pieces = TokenizeWords(words, vocab);
  const size_t budget = static_cast<size_t>(max_seq) - 2;
  std::vector<std::pair<int32_t, int32_t>> ranges;
  int32_t begin = 0;
  size_t used = 0;
  for (int32_t w = 0; w < static_cast<int32_t>(words.size()); ++w) {
    const size_t n = pieces[static_cast<size_t>(w)].size();
    if (w > begin && used + n > budget) {
      ranges.emplace_back(begin, w);
      begin = w;
      used = 0;
    }
    used += n;
  }
  if (!words.empty()) ranges.emplace_back(begin, static_cast<int32_t>(words.size()));
  return ranges;
}

AlignedExample AlignLabels(const NerSentence& sentence, const TagSet& tags,
                           const Vocabulary& vocab, int max_seq) {
  if (sentence.words.size() != sentence.tags.size()) {
    throw std::invalid_argument("align_labels: " +
                                std::to_string(sentence.words.size()) +
                                " words but " +
                                std::to_string(sentence.tags.size()) + " tags");
  }
  AlignedExample ex;
  ex.encoding = Encode(sentence.words, std::nullopt, vocab, max_seq);
  ex.num_words = static_cast<int32_t>(sentence.words.size());
  const auto& wm = ex.encoding.word_map;
  ex.labels.assign(wm.size(), kIgnoreLabel);
  for (size_t p = 0; p < wm.size(); ++p) {
    if (wm[p] == kNoWord || (p > 0 && wm[p - 1] == wm[p])) continue;
    ex.labels[p] = tags.Id(sentence.tags[static_cast<size_t>(wm[p])]);
  }
  return ex;
}

std::vector<AlignedExample> AlignCorpus(std::span<const NerSentence> sentences,
                                        const TagSet& tags,
                                        const Vocabulary& vocab, int max_seq) {
  std::vector<AlignedExample> out;
  for (size_t s = 0; s < sentences.size(); ++s) {
    const NerSentence& sentence = sentences[s];
    if (sentence.words.size() != sentence.tags.size()) {
      throw std::invalid_argument("align_labels: sentence " + std::to_string(s) +
                                  " has mismatched tag count");
    }
    for (const auto& [begin, end] : SplitWords(sentence.words, vocab, max_seq)) {
      NerSentence part;
      part.words.assign(sentence.words.begin() + begin, sentence.words.begin() + end);
      part.tags.assign(sentence.tags.begin() + begin, sentence.tags.begin() + end);
      AlignedExample ex = AlignLabels(part, tags, vocab, max_seq);
      ex.sentence = static_cast<int32_t>(s);
      ex.word_offset = begin;
      out.push_back(std::move(ex));
    }
  }
  return out;
}

std::vector<std::vector<std::string>> JoinPredictions(
    std::span<const AlignedExample> examples,
    std::span<const std::vector<int32_t>> predicted,
    std::span<const NerSentence> sentences, const TagSet& tags) {
  if (examples.size() != predicted.size()) {
    throw std::invalid_argument("one prediction row per example expected");
  }
  std::vector<std::vector<std::string>> out;
  for (const auto& s : sentences) out.emplace_back(s.words.size(), "O");
  for (size_t e = 0; e < examples.size(); ++e) {
    const auto& ex = examples[e];
    const auto& wm = ex.encoding.word_map;
    auto& row = out.at(static_cast<size_t>(ex.sentence));
    for (size_t p = 0; p < wm.size(); ++p) {
      if (wm[p] == kNoWord || (p > 0 && wm[p - 1] == wm[p])) continue;
      row.at(static_cast<size_t>(ex.word_offset + wm[p])) = tags.Tag(predicted[e].at(p));
    }
  }
  return out;
}

// ---------------------------------------------------------------- QA

WindowLayout PlanWindows(int32_t question_pieces, int32_t context_pieces,
                         int max_seq, int stride) {
  if (stride < 1) throw std::invalid_argument("document stride must be positive");
  WindowLayout layout;
  layout.capacity = max_seq - question_pieces - 3;
  if (layout.capacity < 1) throw std::invalid_argument("question exhausts window");
  const int32_t step = std::min(stride, layout.capacity);
  for (int32_t start = 0;; start += step) {
    layout.starts.push_back(start);
    if (start + layout.capacity >= context_pieces) break;
  }
  return layout;
}

namespace {

void PushPosition(Encoding& enc, const Vocabulary& vocab, const std::string& token,
                  int32_t segment, int32_t word) {
  enc.ids.push_back(vocab.IdOrUnk(token));
  enc.tokens.push_back(token);
  enc.segment_ids.push_back(segment);
  enc.attention_mask.push_back(1);
  enc.word_map.push_back(word);
}

}  // namespace

std::vector<QaFeature> QaFeaturize(const std::string& question_id,
                                   const std::string& question,
                                   const std::string& context,
                                   const std::optional<QaAnswer>& answer,
                                   const Vocabulary& vocab, int max_seq,
                                   int stride, int32_t context_index) {
  const auto question_words = PreTokenize(question);
  if (question_words.empty()) {
    throw std::invalid_argument("question " + question_id + " is empty");
  }
  const auto context_spans = PreTokenizeWithOffsets(context);
  if (context_spans.empty()) {
    throw std::invalid_argument("context of question " + question_id + " is empty");
  }
  const auto q_per_word = TokenizeWords(question_words, vocab);
  int32_t n_q = 0;
  for (const auto& w : q_per_word) n_q += static_cast<int32_t>(w.size());
  std::vector<std::string> context_words;
  for (const auto& s : context_spans) context_words.push_back(s.text);
  std::vector<std::string> c_pieces;
  std::vector<int32_t> c_word;
  {
    const auto per_word = TokenizeWords(context_words, vocab);
    for (size_t w = 0; w < per_word.size(); ++w) {
      for (const auto& p : per_word[w]) {
        c_pieces.push_back(p);
        c_word.push_back(static_cast<int32_t>(w));
      }
    }
  }
  const auto n_ctx = static_cast<int32_t>(c_pieces.size());
  const WindowLayout layout = PlanWindows(n_q, n_ctx, max_seq, stride);

  // Gold span in context-piece coordinates.
  int32_t gold_start = -1, gold_end = -1;
  if (answer && answer->char_start >= 0 && !answer->text.empty()) {
    const auto a_begin = static_cast<size_t>(answer->char_start);
    const size_t a_end = a_begin + answer->text.size();
    int32_t first_word = -1, last_word = -1;
    for (size_t w = 0; w < context_spans.size(); ++w) {
      if (context_spans[w].end > a_begin && context_spans[w].begin < a_end) {
        if (first_word < 0) first_word = static_cast<int32_t>(w);
        last_word = static_cast<int32_t>(w);
      }
    }
    for (int32_t i = 0; i < n_ctx; ++i) {
      if (c_word[static_cast<size_t>(i)] == first_word && gold_start < 0) gold_start = i;
      if (c_word[static_cast<size_t>(i)] == last_word) gold_end = i;
    }
  }

  const auto n_q_words = static_cast<int32_t>(question_words.size());
  std::vector<QaFeature> features;
  for (size_t w = 0; w < layout.starts.size(); ++w) {
    const int32_t begin = layout.starts[w];
    const int32_t end = std::min(begin + layout.capacity, n_ctx);
    QaFeature f;
    f.question_id = question_id;
    f.context_index = context_index;
    f.window_index = static_cast<int32_t>(w);
    f.context_offset = begin;
    Encoding& enc = f.encoding;
    PushPosition(enc, vocab, std::string(kClsToken), 0, kNoWord);
    for (size_t qw = 0; qw < q_per_word.size(); ++qw) {
      for (const auto& p : q_per_word[qw]) {
        PushPosition(enc, vocab, p, 0, static_cast<int32_t>(qw));
      }
    }
    PushPosition(enc, vocab, std::string(kSepToken), 0, kNoWord);
    const auto ctx_first = static_cast<int32_t>(enc.ids.size());
    for (int32_t i = begin; i < end; ++i) {
      PushPosition(enc, vocab, c_pieces[static_cast<size_t>(i)], 1,
                   n_q_words + c_word[static_cast<size_t>(i)]);
    }
    PushPosition(enc, vocab, std::string(kSepToken), 1, kNoWord);
    while (enc.ids.size() < static_cast<size_t>(max_seq)) {
      enc.ids.push_back(vocab.pad_id());
      enc.tokens.emplace_back(kPadToken);
      enc.segment_ids.push_back(0);
      enc.attention_mask.push_back(0);
      enc.word_map.push_back(kNoWord);
    }
    f.char_begin.assign(enc.ids.size(), -1);
    f.char_end.assign(enc.ids.size(), -1);
    for (int32_t i = begin; i < end; ++i) {
      const auto pos = static_cast<size_t>(ctx_first + i - begin);
      const auto& span = context_spans[static_cast<size_t>(c_word[static_cast<size_t>(i)])];
      f.char_begin[pos] = static_cast<int32_t>(span.begin);
      f.char_end[pos] = static_cast<int32_t>(span.end);
    }
    if (gold_start >= begin && gold_end >= gold_start && gold_end < end) {
      f.start_position = ctx_first + gold_start - begin;
      f.end_position = ctx_first + gold_end - begin;
    }
    features.push_back(std::move(f));
  }
  return features;
}

std::vector<std::string> NBestList::Texts() const {
  std::vector<std::string> out;
  for (const auto& e : entries) out.push_back(e.text);
  return out;
}

namespace {

std::vector<int32_t> TopIndices(const std::vector<float>& values, int k) {
  std::vector<int32_t> idx(values.size());
  std::iota(idx.begin(), idx.end(), 0);
  const size_t n = std::min(idx.size(), static_cast<size_t>(std::max(k, 0)));
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n),
                    idx.end(), [&](int32_t a, int32_t b) {
                      const float va = values[static_cast<size_t>(a)];
                      const float vb = values[static_cast<size_t>(b)];
                      return va != vb ? va > vb : a < b;
                    });
  idx.resize(n);
  return idx;
}

}  // namespace

NBestList QaDecode(const std::string& question_id,
                   std::span<const QaFeature* const> features,
                   std::span<const std::vector<float>> start_logits,
                   std::span<const std::vector<float>> end_logits,
                   std::span<const std::string> contexts,
                   const QaDecodeConfig& config) {
  if (features.size() != start_logits.size() || features.size() != end_logits.size()) {
    throw std::invalid_argument("qa_decode: logits missing for some windows");
  }
  std::map<std::string, SpanPrediction> best;  // normalized text -> entry
  for (size_t fi = 0; fi < features.size(); ++fi) {
    const QaFeature& f = *features[fi];
    const auto& s_logits = start_logits[fi];
    const auto& e_logits = end_logits[fi];
    if (s_logits.size() != f.char_begin.size() || e_logits.size() != f.char_begin.size()) {
      throw std::invalid_argument("qa_decode: logit row length differs from window");
    }
    const std::string& context = contexts[static_cast<size_t>(f.context_index)];
    for (int32_t s : TopIndices(s_logits, config.top_k)) {
      if (f.char_begin[static_cast<size_t>(s)] < 0) continue;
      for (int32_t e : TopIndices(e_logits, config.top_k)) {
        if (e < s || e - s + 1 > config.max_answer_tokens) continue;
        if (f.char_begin[static_cast<size_t>(e)] < 0) continue;
        const auto cb = static_cast<size_t>(f.char_begin[static_cast<size_t>(s)]);
        const auto ce = static_cast<size_t>(f.char_end[static_cast<size_t>(e)]);
        SpanPrediction p;
        p.text = context.substr(cb, ce - cb);
        p.start_logit = s_logits[static_cast<size_t>(s)];
        p.end_logit = e_logits[static_cast<size_t>(e)];
        p.score = p.start_logit + p.end_logit;
        p.feature = static_cast<int32_t>(fi);
        p.start_position = s;
        p.end_position = e;
        const std::string key = NormalizeAnswer(p.text, false);
        if (key.empty()) continue;
        auto it = best.find(key);
        if (it == best.end() || p.score > it->second.score) best[key] = std::move(p);
      }
    }
  }
  NBestList list;
  list.question_id = question_id;
  for (auto& [key, p] : best) list.entries.push_back(std::move(p));
  std::stable_sort(list.entries.begin(), list.entries.end(),
                   [](const SpanPrediction& a, const SpanPrediction& b) {
                     return a.score > b.score;
                   });
  if (list.entries.size() > static_cast<size_t>(config.n_best)) {
    list.entries.resize(static_cast<size_t>(config.n_best));
  }
  return list;
}

// ---------------------------------------------------------------- heads

template <typename T>
TaskModel<T>::TaskModel(Task task, const EncoderConfig& config, int num_labels,
                        uint64_t seed)
    : task_(task), num_labels_(num_labels) {
  Rng init(seed);
  encoder_ = std::make_unique<Encoder<T>>(config, "disc", store_, init);
  const int depth = config.num_layers + 1;
  const int64_t hidden = config.hidden;
  using Tensor = ad::Tensor<T>;
  if (IsQa(task)) {
    start_w_ = store_.Add("head.qa.start.weight", InitWeight<T>({hidden, 1}, init), true, depth);
    start_b_ = store_.Add("head.qa.start.bias", Tensor::Zeros({1}), false, depth);
    end_w_ = store_.Add("head.qa.end.weight", InitWeight<T>({hidden, 1}, init), true, depth);
    end_b_ = store_.Add("head.qa.end.bias", Tensor::Zeros({1}), false, depth);
    return;
  }
  if (num_labels < 2) throw std::invalid_argument("a task head needs at least 2 labels");
  const int64_t classes = num_labels;
  if (task == Task::kRe) {
    dense_w_ = store_.Add("head.cls.dense.weight", InitWeight<T>({hidden, hidden}, init),
                          true, depth);
    dense_b_ = store_.Add("head.cls.dense.bias", Tensor::Zeros({hidden}), false, depth);
  }
  out_w_ = store_.Add("head.out.weight", InitWeight<T>({hidden, classes}, init), true, depth);
  out_b_ = store_.Add("head.out.bias", Tensor::Zeros({classes}), false, depth);
}

template <typename T>
ad::Tensor<T> TaskModel<T>::TokenLogits(const TokenBatch& batch, bool train,
                                        Rng* rng) const {
  auto h = encoder_->Forward(batch, train, rng);
  h = ad::Reshape(h, {batch.batch * batch.length, h.dim(-1)});
  h = ad::Dropout(h, encoder_->config().dropout, rng, train);
  return ad::Linear(h, out_w_, out_b_);
}

template <typename T>
ad::Tensor<T> TaskModel<T>::SequenceLogits(const TokenBatch& batch, bool train,
                                           Rng* rng) const {
  auto h = encoder_->Forward(batch, train, rng);
  h = ad::Reshape(h, {batch.batch * batch.length, h.dim(-1)});
  std::vector<int64_t> cls_rows(static_cast<size_t>(batch.batch));
  for (int64_t b = 0; b < batch.batch; ++b) cls_rows[static_cast<size_t>(b)] = b * batch.length;
  h = ad::GatherRows(h, cls_rows);
  const double rate = encoder_->config().dropout;
  h = ad::Dropout(h, rate, rng, train);
  h = ad::Gelu(ad::Linear(h, dense_w_, dense_b_));
  h = ad::Dropout(h, rate, rng, train);
  return ad::Linear(h, out_w_, out_b_);
}

template <typename T>
std::pair<ad::Tensor<T>, ad::Tensor<T>> TaskModel<T>::SpanLogits(
    const TokenBatch& batch, bool train, Rng* rng) const {
  auto h = encoder_->Forward(batch, train, rng);
  h = ad::Reshape(h, {batch.batch * batch.length, h.dim(-1)});
  auto project = [&](const ad::Tensor<T>& w, const ad::Tensor<T>& b) {
    auto logits = ad::Reshape(ad::Linear(h, w, b), {batch.batch, 1, 1, batch.length});
    logits = ad::AddKeyMask(logits, batch.attention_mask);
    return ad::Reshape(logits, {batch.batch, batch.length});
  };
  return {project(start_w_, start_b_), project(end_w_, end_b_)};
}

template <typename T>
ad::Tensor<T> TokenLoss(const ad::Tensor<T>& logits, std::span<const int32_t> labels) {
  return ad::CrossEntropy(logits, labels);
}

template <typename T>
ad::Tensor<T> SequenceLoss(const ad::Tensor<T>& logits, std::span<const int32_t> labels) {
  return ad::CrossEntropy(logits, labels);
}

template <typename T>
ad::Tensor<T> SpanLoss(const ad::Tensor<T>& start_logits,
                       const ad::Tensor<T>& end_logits,
                       std::span<const int32_t> start_positions,
                       std::span<const int32_t> end_positions) {
  return ad::Scale(ad::Add(ad::CrossEntropy(start_logits, start_positions),
                           ad::CrossEntropy(end_logits, end_positions)),
                   T(0.5));
}

template <typename T>
std::vector<int32_t> ArgmaxRows(const ad::Tensor<T>& logits) {
  if (logits.rank() != 2) throw ad::ShapeError("argmax expects [N, C]");
  const int64_t n = logits.dim(0), c = logits.dim(1);
  const auto v = logits.data();
  std::vector<int32_t> out(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    const T* row = v.data() + i * c;
    out[static_cast<size_t>(i)] = static_cast<int32_t>(std::max_element(row, row + c) - row);
  }
  return out;
}

#define BIORTD_INSTANTIATE_TASKS(T)                                            \
  template class TaskModel<T>;                                                 \
  template ad::Tensor<T> TokenLoss(const ad::Tensor<T>&, std::span<const int32_t>); \
  template ad::Tensor<T> SequenceLoss(const ad::Tensor<T>&,                    \
                                      std::span<const int32_t>);               \
  template ad::Tensor<T> SpanLoss(const ad::Tensor<T>&, const ad::Tensor<T>&,  \
                                  std::span<const int32_t>,                    \
                                  std::span<const int32_t>);                   \
  template std::vector<int32_t> ArgmaxRows(const ad::Tensor<T>&);

BIORTD_INSTANTIATE_TASKS(float)
BIORTD_INSTANTIATE_TASKS(double)

}  // namespace biortd

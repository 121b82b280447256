// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>

#include "biortd/tasks.h"
#include "oracles.h"

using namespace biortd;

namespace {

Vocabulary SmallVocab() {
  return Vocabulary::FromTokens(
      {"[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]", "pre", "##train", "##ing", "train",
       "a", "b", "works", ",", "."});
}

std::string Repeat(const std::string& word, int n) {
  std::string out;
  for (int i = 0; i < n; ++i) out += (i ? " " : "") + word;
  return out;
}

}  // namespace

TEST_CASE("labels sit on first subwords only") {
  const Vocabulary v = SmallVocab();
  const TagSet tags = TagSet::FromTags({"O", "B-X", "I-X"});
  const NerSentence s{{"pretraining", "works"}, {"B-X", "O"}};
  const auto ex = AlignLabels(s, tags, v, 8);
  CHECK(ex.encoding.tokens[1] == "pre");
  CHECK(ex.labels == std::vector<int32_t>{kIgnoreLabel, 1, kIgnoreLabel, kIgnoreLabel, 0,
                                          kIgnoreLabel, kIgnoreLabel, kIgnoreLabel});
  const auto unk = AlignLabels(NerSentence{{"zzz"}, {"B-X"}}, tags, v, 4);
  CHECK(unk.encoding.tokens[1] == "[UNK]");
  CHECK(unk.labels[1] == 1);
  CHECK_THROWS(AlignLabels(NerSentence{{"a", "b"}, {"O"}}, tags, v, 8));
}

TEST_CASE("long sentences split at word boundaries and rejoin") {
  const Vocabulary v = SmallVocab();
  const TagSet tags = TagSet::FromTags({"O", "B-X", "I-X"});
  NerSentence s;
  for (int i = 0; i < 30; ++i) {
    s.words.push_back(i % 3 ? "a" : "pretraining");
    s.tags.push_back(i % 3 ? "I-X" : "B-X");
  }
  const std::vector<NerSentence> corpus = {s};
  const auto examples = AlignCorpus(corpus, tags, v, 16);
  REQUIRE(examples.size() > 1);
  int32_t covered = 0;
  std::vector<std::vector<int32_t>> predicted;
  for (const auto& ex : examples) {
    CHECK(ex.word_offset == covered);
    covered += ex.num_words;
    std::vector<int32_t> row(ex.labels.size(), 0);
    for (size_t i = 0; i < row.size(); ++i) row[i] = std::max(ex.labels[i], 0);
    predicted.push_back(row);
  }
  CHECK(covered == 30);
  const auto joined = JoinPredictions(examples, predicted, corpus, tags);
  REQUIRE(joined.size() == 1);
  CHECK(joined[0] == s.tags);
}

TEST_CASE("window plan") {
  const auto plan = PlanWindows(20, 1000, 384, 128);
  CHECK(plan.capacity == 361);
  CHECK(plan.starts == std::vector<int32_t>{0, 128, 256, 384, 512, 640});
  CHECK(PlanWindows(20, 50, 384, 128).starts.size() == 1);
  CHECK(PlanWindows(5, 100, 20, 50).starts == std::vector<int32_t>{0, 12, 24, 36, 48, 60, 72, 84, 96});
  CHECK_THROWS(PlanWindows(382, 10, 384, 128));
  for (int n = 1; n <= 700; n += 7) {
    for (int stride : {1, 50, 128, 500}) {
      const auto p = PlanWindows(17, n, 128, stride);
      std::vector<bool> seen(static_cast<size_t>(n), false);
      for (int32_t start : p.starts) {
        for (int32_t i = start; i < std::min(n, start + p.capacity); ++i) seen[static_cast<size_t>(i)] = true;
      }
      REQUIRE(std::all_of(seen.begin(), seen.end(), [](bool b) { return b; }));
      REQUIRE(p.starts.back() + p.capacity >= n);
    }
  }
}

TEST_CASE("featurized windows mark the answer only when it is inside") {
  const Vocabulary v = SmallVocab();
  const std::string question = Repeat("a", 20);
  std::string context = Repeat("a", 1000);
  // Word 700 becomes "works": characters 1400..1404.
  context.replace(1400, 1, "works");
  const QaAnswer answer{"works", 1400};
  const auto features = QaFeaturize("q", question, context, answer, v, 384, 128);
  REQUIRE(features.size() == 6);
  int inside = 0;
  for (const auto& f : features) {
    CHECK(f.encoding.size() == 384);
    if (f.start_position == 0) {
      CHECK(f.end_position == 0);
      continue;
    }
    ++inside;
    CHECK(f.encoding.tokens[static_cast<size_t>(f.start_position)] == "works");
    CHECK(f.start_position == 1 + 20 + 1 + (700 - f.context_offset));
    CHECK(f.char_begin[static_cast<size_t>(f.start_position)] == 1400);
    CHECK(f.char_end[static_cast<size_t>(f.end_position)] == 1405);
  }
  CHECK(inside == 3);  // windows starting at 384, 512 and 640
  CHECK_THROWS(QaFeaturize("q", Repeat("a", 400), "a", std::nullopt, v, 384, 128));
}

TEST_CASE("decoding merges windows and agrees with brute force") {
  const Vocabulary v = SmallVocab();
  Rng rng(17);
  const std::string question = Repeat("a", 3);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::string> words;
    const int n = 20 + static_cast<int>(rng.Below(40));
    static const char* kWords[] = {"a", "b", "A", "works", "train"};
    for (int i = 0; i < n; ++i) words.push_back(kWords[rng.Below(5)]);
    std::string context;
    for (const auto& w : words) context += (context.empty() ? "" : " ") + w;
    const auto features = QaFeaturize("q", question, context, std::nullopt, v, 24, 7);
    std::vector<const QaFeature*> ptrs;
    std::vector<std::vector<float>> starts, ends;
    for (const auto& f : features) {
      ptrs.push_back(&f);
      std::vector<float> s(f.char_begin.size()), e(f.char_begin.size());
      for (auto& x : s) x = static_cast<float>(rng.Normal());
      for (auto& x : e) x = static_cast<float>(rng.Normal());
      starts.push_back(s);
      ends.push_back(e);
    }
    const std::vector<std::string> contexts = {context};
    QaDecodeConfig config;
    config.max_answer_tokens = 4;
    config.top_k = 24;  // the whole window, so the decoder is exhaustive
    const auto list = QaDecode("q", ptrs, starts, ends, contexts, config);

    std::map<std::string, std::pair<double, std::string>> oracle;
    for (size_t fi = 0; fi < features.size(); ++fi) {
      const auto& f = features[fi];
      for (size_t s = 0; s < f.char_begin.size(); ++s) {
        for (size_t e = s; e < f.char_begin.size() && e < s + 4; ++e) {
          if (f.char_begin[s] < 0 || f.char_begin[e] < 0) continue;
          const std::string text = context.substr(static_cast<size_t>(f.char_begin[s]),
                                                  static_cast<size_t>(f.char_end[e] - f.char_begin[s]));
          const double score = double(starts[fi][s]) + double(ends[fi][e]);
          const std::string key = testing::OracleNormalize(text, false);
          auto it = oracle.find(key);
          if (it == oracle.end() || score > it->second.first) oracle[key] = {score, text};
        }
      }
    }
    std::vector<std::pair<double, std::string>> ranked;
    for (const auto& [key, entry] : oracle) ranked.push_back(entry);
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    REQUIRE(list.entries.size() == std::min<size_t>(5, ranked.size()));
    for (size_t i = 0; i < list.entries.size(); ++i) {
      REQUIRE(list.entries[i].score == doctest::Approx(ranked[i].first).epsilon(1e-12));
      REQUIRE(testing::OracleNormalize(list.entries[i].text, false) ==
              testing::OracleNormalize(ranked[i].second, false));
    }
  }
}

TEST_CASE("a peaked span in a middle window is recovered") {
  const Vocabulary v = SmallVocab();
  std::string context = Repeat("a", 1000);
  context.replace(1400, 1, "works");
  const auto features = QaFeaturize("q", Repeat("a", 20), context, std::nullopt, v, 384, 128);
  REQUIRE(features.size() == 6);
  std::vector<const QaFeature*> ptrs;
  std::vector<std::vector<float>> starts, ends;
  for (const auto& f : features) {
    ptrs.push_back(&f);
    starts.emplace_back(f.char_begin.size(), 0.0f);
    ends.emplace_back(f.char_begin.size(), 0.0f);
  }
  const int32_t pos = 1 + 20 + 1 + (700 - features[3].context_offset);
  starts[3][static_cast<size_t>(pos)] = 10.0f;
  ends[3][static_cast<size_t>(pos)] = 10.0f;
  const std::vector<std::string> contexts = {context};
  const auto list = QaDecode("q", ptrs, starts, ends, contexts);
  REQUIRE_FALSE(list.entries.empty());
  CHECK(list.entries[0].text == "works");
  CHECK(list.entries[0].feature == 3);
  CHECK(list.Texts().size() <= 5);
}

TEST_CASE("task losses at known points") {
  using T = ad::Tensor<double>;
  const std::vector<int32_t> labels = {0, 3, kIgnoreLabel};
  auto uniform = T::Zeros({3, 5});
  CHECK(TokenLoss(uniform, labels).item() == doctest::Approx(std::log(5.0)));
  auto perturbed = T::Zeros({3, 5});
  perturbed.data()[12] = 40.0;  // excluded row
  CHECK(TokenLoss(perturbed, labels).item() == doctest::Approx(std::log(5.0)));
  auto delta = T::Full({2, 6}, -50.0);
  delta.data()[1] = 50.0;
  delta.data()[6 + 4] = 50.0;
  CHECK(SequenceLoss(delta, std::vector<int32_t>{1, 4}).item() < 1e-10);
  const std::vector<int32_t> zero = {0};
  auto flat = T::Zeros({1, 7});
  CHECK(SpanLoss(flat, flat, zero, zero).item() == doctest::Approx(std::log(7.0)));
  auto peaked = T::Zeros({1, 7});
  peaked.data()[2] = 5.0;
  CHECK(SpanLoss(peaked, flat, std::vector<int32_t>{2}, zero).item() ==
        doctest::Approx(SpanLoss(flat, peaked, zero, std::vector<int32_t>{2}).item()));
  CHECK(ArgmaxRows(delta) == std::vector<int32_t>{1, 4});
}

TEST_CASE("task heads produce the documented shapes") {
  EncoderConfig c = EncoderConfig::Desk();
  c.num_layers = 1;
  TokenBatch b;
  b.batch = 2;
  b.length = 4;
  b.ids = {2, 40, 41, 3, 2, 42, 3, 0};
  b.attention_mask = {1, 1, 1, 1, 1, 1, 1, 0};
  b.segment_ids.assign(8, 0);
  TaskModel<float> ner(Task::kNer, c, 5, 1);
  CHECK(ner.TokenLogits(b, false, nullptr).shape() == ad::Shape{8, 5});
  TaskModel<float> re(Task::kRe, c, 6, 1);
  CHECK(re.SequenceLogits(b, false, nullptr).shape() == ad::Shape{2, 6});
  TaskModel<float> qa(Task::kQaSquad, c, 0, 1);
  auto [start, end] = qa.SpanLogits(b, false, nullptr);
  CHECK(start.shape() == ad::Shape{2, 4});
  CHECK(std::isinf(start.data()[7]));
  CHECK(ParseTask("qa-bioasq") == Task::kQaBioasq);
  CHECK(TaskName(Task::kRe) == "re");
  CHECK_THROWS(ParseTask("pos"));
}

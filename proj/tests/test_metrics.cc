// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <sstream>

#include "biortd/metrics.h"
#include "oracles.h"

using namespace biortd;
using namespace biortd::testing;
using Tags = std::vector<std::string>;

namespace {

double Round2(double v) { return std::round(v * 100.0) / 100.0; }

std::vector<Chunk> Chunks(const Tags& tags) { return ExtractChunks(tags); }

}  // namespace

TEST_CASE("extract_chunks examples") {
  CHECK(Chunks({"B-X", "I-X", "O", "B-Y"}) ==
        std::vector<Chunk>{{0, 1, "X"}, {3, 3, "Y"}});
  CHECK(Chunks({"O", "I-X", "I-X"}) == std::vector<Chunk>{{1, 2, "X"}});
  CHECK(Chunks({"O", "O"}).empty());
  CHECK(Chunks({"B-X", "I-Y"}) == std::vector<Chunk>{{0, 0, "X"}, {1, 1, "Y"}});
  CHECK(Chunks({"B-X", "B-X"}) == std::vector<Chunk>{{0, 0, "X"}, {1, 1, "X"}});
}

TEST_CASE("extract_chunks agrees with the transition oracle and round-trips") {
  Rng rng(101);
  for (int trial = 0; trial < 2000; ++trial) {
    const Tags tags = RandomTags(rng, 1 + static_cast<int>(rng.Below(15)));
    const auto chunks = ExtractChunks(tags);
    std::set<std::tuple<int, int, std::string>> got;
    for (const auto& c : chunks) got.insert({c.start, c.end, c.type});
    REQUIRE(got == OracleChunks(tags));
    const Tags rendered = RenderTags(chunks, static_cast<int>(tags.size()));
    CHECK(ExtractChunks(rendered) == chunks);
  }
}

TEST_CASE("f1") {
  // Reported F values come from unrounded P and R, so the recomputed
  // value may differ in the last digit: 87.5466 displays as 87.55.
  CHECK(std::abs(Round2(F1(88.76, 91.34)) - 90.03) <= 0.01 + 1e-9);
  CHECK(std::abs(Round2(F1(85.87, 89.29)) - 87.54) <= 0.01 + 1e-9);
  CHECK(F1(85.87, 89.29) == doctest::Approx(2 * 85.87 * 89.29 / (85.87 + 89.29)));
  CHECK(F1(42.5, 42.5) == doctest::Approx(42.5));
  CHECK(F1(0, 0) == 0.0);
}

TEST_CASE("entity_prf examples") {
  std::vector<std::vector<Chunk>> gold = {{{0, 1, "X"}}};
  std::vector<std::vector<Chunk>> pred = {{{0, 1, "X"}, {3, 3, "Y"}}};
  const PrfReport r = EntityPrf(gold, pred);
  CHECK(FormatPercent(r.precision) == "50.00");
  CHECK(FormatPercent(r.recall) == "100.00");
  CHECK(FormatPercent(r.f1) == "66.67");
  const PrfReport same = EntityPrf(gold, gold);
  CHECK(same.precision == 100.0);
  CHECK(same.recall == 100.0);
  CHECK(same.f1 == 100.0);
  std::vector<std::vector<Chunk>> two = {{}, {}};
  CHECK_THROWS(EntityPrf(gold, two));
}

TEST_CASE("entity_prf equals the one-pass conlleval oracle on random fixtures") {
  Rng rng(202);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<Tags> gold, pred;
    const int sentences = 1 + static_cast<int>(rng.Below(4));
    for (int s = 0; s < sentences; ++s) {
      const int n = 1 + static_cast<int>(rng.Below(12));
      gold.push_back(RandomTags(rng, n));
      // Mostly-correct predictions make true positives common.
      Tags p = gold.back();
      for (auto& t : p) {
        if (rng.Below(4) == 0) t = RandomTags(rng, 1)[0];
      }
      pred.push_back(p);
    }
    const PrfReport r = EntityPrfFromTags(gold, pred);
    const Counts c = OracleEntityCounts(gold, pred);
    REQUIRE(r.tp == c.tp);
    REQUIRE(r.fp == c.fp);
    REQUIRE(r.fn == c.fn);
  }
}

TEST_CASE("relation_prf examples and errors") {
  const std::vector<std::string> positive = {"A", "B"};
  const PrfReport r =
      RelationPrf(Tags{"A", "A", "neg", "B"}, Tags{"A", "neg", "neg", "B"}, positive, "neg");
  CHECK(r.tp == 2);
  CHECK(r.fp == 0);
  CHECK(r.fn == 1);
  CHECK(FormatPercent(r.precision) == "100.00");
  CHECK(FormatPercent(r.recall) == "66.67");
  CHECK(FormatPercent(r.f1) == "80.00");
  const PrfReport none = RelationPrf(Tags{"A", "B"}, Tags{"neg", "neg"}, positive, "neg");
  CHECK(none.precision == 0.0);
  CHECK(none.recall == 0.0);
  CHECK(none.f1 == 0.0);
  CHECK(RelationPrf(Tags{"A", "B"}, Tags{"A", "B"}, positive, "neg").f1 == 100.0);
  try {
    RelationPrf(Tags{"A"}, Tags{"C"}, positive, "neg");
    FAIL("unknown label accepted");
  } catch (const std::exception& e) {
    CHECK(std::string(e.what()).find("neg") != std::string::npos);
  }
}

TEST_CASE("relation_prf equals the counting oracle on random fixtures") {
  Rng rng(303);
  const std::vector<std::string> positive = {"CPR:3", "CPR:4", "CPR:5", "CPR:6", "CPR:9"};
  const std::vector<std::string> all = {"CPR:3", "CPR:4", "CPR:5", "CPR:6", "CPR:9", "false"};
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = 1 + static_cast<int>(rng.Below(30));
    Tags gold, pred;
    for (int i = 0; i < n; ++i) {
      gold.push_back(all[rng.Below(6)]);
      pred.push_back(rng.Below(2) ? gold.back() : all[rng.Below(6)]);
    }
    const PrfReport r = RelationPrf(gold, pred, positive, "false");
    const Counts c = OracleRelationCounts(gold, pred, "false");
    REQUIRE(r.tp == c.tp);
    REQUIRE(r.fp == c.fp);
    REQUIRE(r.fn == c.fn);
  }
}

TEST_CASE("qa_metrics examples") {
  std::vector<QaGold> gold = {{"q1", {"aspirin"}}, {"q2", {"BRCA1", "brca-1"}}, {"q3", {"x"}}};
  std::map<std::string, std::vector<std::string>> pred = {
      {"q1", {"Aspirin", "b"}}, {"q2", {"tp53", "brca1"}}, {"q3", {"y", "z"}}};
  const QaReport r = QaMetrics(gold, pred);
  CHECK(FormatPercent(r.sacc) == "33.33");
  CHECK(FormatPercent(r.lacc) == "66.67");
  CHECK(FormatPercent(r.mrr) == "50.00");
  CHECK(QaMetrics(gold, pred, /*case_sensitive=*/true).sacc == 0.0);
  std::vector<QaGold> dup = {{"q1", {"a"}}, {"q1", {"b"}}};
  CHECK_THROWS(QaMetrics(dup, pred));
  // A question with no list at all is unanswered.
  const QaReport missing = QaMetrics(std::vector<QaGold>{{"q9", {"a"}}}, pred);
  CHECK(missing.lacc == 0.0);
  CHECK(missing.questions == 1);
}

TEST_CASE("qa_metrics equals the oracle and keeps sacc <= mrr <= lacc") {
  Rng rng(404);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<QaGold> gold;
    std::map<std::string, std::vector<std::string>> pred;
    const int n = 1 + static_cast<int>(rng.Below(8));
    for (int q = 0; q < n; ++q) {
      const std::string id = "q" + std::to_string(q);
      QaGold g{id, {}};
      for (int k = 1 + static_cast<int>(rng.Below(2)); k > 0; --k) g.answers.push_back(RandomAnswer(rng));
      gold.push_back(g);
      if (rng.Below(6) == 0) continue;
      std::vector<std::string> list;
      for (int k = static_cast<int>(rng.Below(8)); k > 0; --k) list.push_back(RandomAnswer(rng));
      pred[id] = list;
    }
    const bool cs = rng.Below(2) == 0;
    const QaReport r = QaMetrics(gold, pred, cs);
    const QaCounts c = OracleQa(gold, pred, cs);
    REQUIRE(r.questions == c.questions);
    REQUIRE(r.sacc == doctest::Approx(100.0 * c.strict / c.questions));
    REQUIRE(r.lacc == doctest::Approx(100.0 * c.lenient / c.questions));
    REQUIRE(r.mrr == doctest::Approx(100.0 * c.reciprocal / c.questions));
    CHECK(r.sacc <= r.mrr + 1e-9);
    CHECK(r.mrr <= r.lacc + 1e-9);
  }
}

TEST_CASE("score table reproduces the published ratios") {
  const std::vector<MrrEntry> entries = {
      {"ELECTRAMed", "1", 47.95}, {"ELECTRAMed", "2", 53.16}, {"ELECTRAMed", "3", 46.62},
      {"ELECTRAMed", "4", 69.55}, {"ELECTRAMed", "5", 31.42}, {"KU-DMIS-1", "1", 46.37},
      {"best", "2", 56.67},       {"best", "3", 51.15},       {"best", "5", 36.38}};
  const ScoreTable t = BuildScoreTable(entries);
  const auto& row = t.ratio.at("ELECTRAMed");
  CHECK(FormatRatio(row.at("1")) == "1.000");
  CHECK(FormatRatio(row.at("2")) == "0.938");
  CHECK(FormatRatio(row.at("3")) == "0.911");
  CHECK(FormatRatio(row.at("4")) == "1.000");
  CHECK(FormatRatio(row.at("5")) == "0.864");
  CHECK(FormatRatio(t.total.at("ELECTRAMed")) == "4.713");
  CHECK(FormatRatio(t.ratio.at("KU-DMIS-1").at("1")) == "0.967");
  // Every batch has a ratio of exactly 1.
  for (const auto& b : t.batches) {
    bool has_max = false;
    for (const auto& [c, ratios] : t.ratio) {
      auto it = ratios.find(b);
      has_max = has_max || (it != ratios.end() && it->second == 1.0);
    }
    CHECK(has_max);
  }
}

TEST_CASE("score table edge cases") {
  const ScoreTable single = BuildScoreTable(std::vector<MrrEntry>{{"a", "1", 10}, {"a", "2", 3}});
  CHECK(single.ratio.at("a").at("1") == 1.0);
  CHECK(single.ratio.at("a").at("2") == 1.0);
  const ScoreTable zero = BuildScoreTable(std::vector<MrrEntry>{{"a", "1", 0}, {"b", "1", 0}});
  CHECK(zero.ratio.at("a").at("1") == 0.0);
  CHECK(zero.warnings.size() == 1);
  CHECK_THROWS(BuildScoreTable(std::vector<MrrEntry>{{"a", "1", 1}, {"a", "1", 2}}));
}

TEST_CASE("score table totals are invariant to batch order") {
  Rng rng(505);
  std::vector<MrrEntry> entries;
  for (int c = 0; c < 4; ++c) {
    for (int b = 0; b < 5; ++b) {
      entries.push_back({"c" + std::to_string(c), std::to_string(b), 1 + 99 * rng.Uniform()});
    }
  }
  const ScoreTable a = BuildScoreTable(entries);
  std::reverse(entries.begin(), entries.end());
  const ScoreTable b = BuildScoreTable(entries);
  for (const auto& [c, total] : a.total) CHECK(total == doctest::Approx(b.total.at(c)));
}

TEST_CASE("mrr tables in wide and long form") {
  std::istringstream wide(
      "system\t1\t2\t3\n"
      "ELECTRAMed\t47.95\t53.16\t46.62\n"
      "other\t-\t56.67\t\n");
  const auto w = ParseMrrTable(wide, "wide");
  CHECK(w.size() == 4);
  CHECK(w[3].competitor == "other");
  CHECK(w[3].batch == "2");
  CHECK(w[3].mrr == doctest::Approx(56.67));

  std::istringstream long_form("competitor,batch,mrr\na,1,10\nb,1,20\n");
  const auto l = ParseMrrTable(long_form, "long");
  REQUIRE(l.size() == 2);
  CHECK(l[1].mrr == 20.0);

  std::istringstream bad("system,1\na,abc\n");
  CHECK_THROWS(ParseMrrTable(bad, "bad"));
}

TEST_CASE("seed aggregation") {
  std::vector<PrfReport> reports;
  for (double f : {90.0, 90.1, 89.9, 90.05, 89.95}) reports.push_back({f, f, f, 0, 0, 0});
  const PrfAggregate a = AggregateSeeds(reports);
  CHECK(FormatPercent(a.f1) == "90.00");
  CHECK(a.count == 5);
  const PrfAggregate one = AggregateSeeds(std::vector<PrfReport>{{70, 80, F1(70, 80), 0, 0, 0}});
  CHECK(one.f1 == doctest::Approx(F1(70, 80)));
  // Mean of F differs from F of the mean P and R for asymmetric reports:
  // F(100, 50) = 66.67 and F(50, 100) = 66.67 average to 66.67, while
  // F(75, 75) = 75.
  const PrfAggregate skew =
      AggregateSeeds(std::vector<PrfReport>{{100, 50, F1(100, 50), 0, 0, 0}, {50, 100, F1(50, 100), 0, 0, 0}});
  CHECK(FormatPercent(skew.f1) == "66.67");
  CHECK(FormatPercent(skew.f1_of_means) == "75.00");
  const QaAggregate q = AggregateSeeds(std::vector<QaReport>{{10, 20, 15, 4}, {30, 40, 35, 4}});
  CHECK(q.sacc == 20.0);
  CHECK(q.mrr == 25.0);
}

TEST_CASE("display rounding") {
  CHECK(FormatPercent(66.666666) == "66.67");
  CHECK(FormatRatio(0.93827) == "0.938");
  CHECK(ToJson(PrfReport::FromCounts(1, 1, 0))["precision"].get<double>() == 50.0);
}

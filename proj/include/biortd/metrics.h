// SPDX-License-Identifier: Apache-2.0
//
// Evaluation arithmetic: entity-level P/R/F over BIO chunks, relation
// micro-F over positive classes, strict/lenient accuracy and MRR for factoid
// QA, seed averaging and per-batch MRR ratio tables.
//
// All percentages are kept unrounded; Format* helpers round for display
// (percentages to 2 decimals, ratios to 3).

#ifndef BIORTD_METRICS_H_
#define BIORTD_METRICS_H_

#include <compare>
#include <cstdint>
#include <istream>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace biortd {

struct Chunk {
  int start = 0;
  int end = 0;  // inclusive
  std::string type;

  auto operator<=>(const Chunk&) const = default;
};

// Chunks in order of their start. A chunk opens at B-t, or at I-t when no
// chunk of type t is open; it closes before O, before any B-, and before
// I-u with u != t. Tags other than O/B-x/I-x are treated as O.
std::vector<Chunk> ExtractChunks(std::span<const std::string> tags);

// Inverse of ExtractChunks for non-overlapping chunks over `length` tokens.
std::vector<std::string> RenderTags(std::span<const Chunk> chunks, int length);

struct PrfReport {
  double precision = 0.0;  // percent
  double recall = 0.0;
  double f1 = 0.0;
  int64_t tp = 0;
  int64_t fp = 0;
  int64_t fn = 0;

  static PrfReport FromCounts(int64_t tp, int64_t fp, int64_t fn);
};

// Harmonic mean of two percentages; 0 when both are 0.
double F1(double precision, double recall);

// Exact (start, end, type) matching per sentence.
PrfReport EntityPrf(std::span<const std::vector<Chunk>> gold,
                    std::span<const std::vector<Chunk>> predicted);
PrfReport EntityPrfFromTags(std::span<const std::vector<std::string>> gold,
                            std::span<const std::vector<std::string>> predicted);

// Micro P/R/F over the positive classes; `negative_label` marks "no
// relation" and never counts as a hit. Labels outside
// positive_classes + {negative_label} are an error.
PrfReport RelationPrf(std::span<const std::string> gold,
                      std::span<const std::string> predicted,
                      std::span<const std::string> positive_classes,
                      const std::string& negative_label);

struct QaReport {
  double sacc = 0.0;  // percent
  double lacc = 0.0;
  double mrr = 0.0;
  int64_t questions = 0;
};

struct QaGold {
  std::string question_id;
  std::vector<std::string> answers;  // synonyms of the single gold answer
};

inline constexpr size_t kAnswerListCapacity = 5;

// Whitespace-collapsed, trimmed and (unless case_sensitive) lowercased.
std::string NormalizeAnswer(const std::string& text, bool case_sensitive);

// 1-based rank of the first candidate matching any gold synonym among the
// first `capacity` candidates; 0 when none matches.
int AnswerRank(std::span<const std::string> candidates,
               std::span<const std::string> synonyms, bool case_sensitive,
               size_t capacity = kAnswerListCapacity);

// Questions without an entry in `predictions` count as unanswered.
// Duplicate gold question ids are an error.
QaReport QaMetrics(std::span<const QaGold> gold,
                   const std::map<std::string, std::vector<std::string>>& predictions,
                   bool case_sensitive = false,
                   size_t capacity = kAnswerListCapacity);

struct MrrEntry {
  std::string competitor;
  std::string batch;
  double mrr = 0.0;
};

struct ScoreTable {
  std::vector<std::string> batches;      // first-seen order
  std::vector<std::string> competitors;  // first-seen order
  // ratio[competitor][batch], unrounded; absent when the competitor did not
  // take part in that batch.
  std::map<std::string, std::map<std::string, double>> ratio;
  std::map<std::string, double> total;  // sum of unrounded ratios
  std::vector<std::string> warnings;
};

// ratio(c, b) = MRR(c, b) / max over all competitors of MRR(., b).
ScoreTable BuildScoreTable(std::span<const MrrEntry> entries);

// Tab- or comma-separated MRR table with a header row. Either long form
// (columns competitor, batch, mrr) or wide form (competitor, then one column
// per batch; empty or "-" cells mean the competitor skipped that batch).
std::vector<MrrEntry> ParseMrrTable(std::istream& in, const std::string& source);

struct PrfAggregate {
  int count = 0;
  double precision = 0.0;  // mean over seeds
  double recall = 0.0;
  double f1 = 0.0;
  double f1_of_means = 0.0;  // F1(mean precision, mean recall)
};

struct QaAggregate {
  int count = 0;
  double sacc = 0.0;
  double lacc = 0.0;
  double mrr = 0.0;
};

PrfAggregate AggregateSeeds(std::span<const PrfReport> reports);
QaAggregate AggregateSeeds(std::span<const QaReport> reports);

std::string FormatPercent(double value);  // two decimals
std::string FormatRatio(double value);    // three decimals

nlohmann::json ToJson(const PrfReport& r);
nlohmann::json ToJson(const QaReport& r);
nlohmann::json ToJson(const ScoreTable& t);
nlohmann::json ToJson(const PrfAggregate& a);
nlohmann::json ToJson(const QaAggregate& a);

// Human-readable tables.
std::string RenderReport(const PrfReport& r);
std::string RenderReport(const QaReport& r);
std::string RenderScoreTable(const ScoreTable& t);

}  // namespace biortd

#endif  // BIORTD_METRICS_H_

// SPDX-License-Identifier: Apache-2.0

#include "biortd/metrics.h"

#include <algorithm>
#include <cstdio>
#include <set>
#include <sstream>
#include <stdexcept>

namespace biortd {

namespace {

struct ParsedTag {
  char prefix;  // 'O', 'B' or 'I'
  std::string type;
};

ParsedTag ParseTag(const std::string& tag) {
  if (tag.size() > 2 && (tag[0] == 'B' || tag[0] == 'I') && tag[1] == '-') {
    return {tag[0], tag.substr(2)};
  }
  return {'O', {}};
}

}  // namespace

std::vector<Chunk> ExtractChunks(std::span<const std::string> tags) {
  std::vector<Chunk> chunks;
  bool open = false;
  Chunk current;
  auto close = [&](int end) {
    if (!open) return;
    current.end = end;
    chunks.push_back(current);
    open = false;
  };
  for (int i = 0; i < static_cast<int>(tags.size()); ++i) {
    const ParsedTag t = ParseTag(tags[static_cast<size_t>(i)]);
    if (t.prefix == 'I' && open && current.type == t.type) continue;
    close(i - 1);
    if (t.prefix != 'O') {
      current = Chunk{i, i, t.type};
      open = true;
    }
  }
  close(static_cast<int>(tags.size()) - 1);
  return chunks;
}

std::vector<std::string> RenderTags(std::span<const Chunk> chunks, int length) {
  std::vector<std::string> tags(static_cast<size_t>(length), "O");
  for (const Chunk& c : chunks) {
    if (c.start < 0 || c.end >= length || c.start > c.end) {
      throw std::invalid_argument("chunk outside the sentence");
    }
    tags[static_cast<size_t>(c.start)] = "B-" + c.type;
    for (int i = c.start + 1; i <= c.end; ++i) {
      tags[static_cast<size_t>(i)] = "I-" + c.type;
    }
  }
  return tags;
}

double F1(double precision, double recall) {
  const double denom = precision + recall;
  return denom == 0.0 ? 0.0 : 2.0 * precision * recall / denom;
}

PrfReport PrfReport::FromCounts(int64_t tp, int64_t fp, int64_t fn) {
  PrfReport r;
  r.tp = tp;
  r.fp = fp;
  r.fn = fn;
  r.precision = tp + fp ? 100.0 * static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
  r.recall = tp + fn ? 100.0 * static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
  r.f1 = F1(r.precision, r.recall);
  return r;
}

PrfReport EntityPrf(std::span<const std::vector<Chunk>> gold,
                    std::span<const std::vector<Chunk>> predicted) {
  if (gold.size() != predicted.size()) {
    throw std::invalid_argument("entity_prf: " + std::to_string(gold.size()) +
                                " gold sentences vs " +
                                std::to_string(predicted.size()) + " predicted");
  }
  int64_t tp = 0, n_gold = 0, n_pred = 0;
  for (size_t s = 0; s < gold.size(); ++s) {
    std::set<Chunk> g(gold[s].begin(), gold[s].end());
    std::set<Chunk> p(predicted[s].begin(), predicted[s].end());
    n_gold += static_cast<int64_t>(g.size());
    n_pred += static_cast<int64_t>(p.size());
    for (const Chunk& c : p) tp += g.contains(c);
  }
  return PrfReport::FromCounts(tp, n_pred - tp, n_gold - tp);
}

PrfReport EntityPrfFromTags(std::span<const std::vector<std::string>> gold,
                            std::span<const std::vector<std::string>> predicted) {
  if (gold.size() != predicted.size()) {
    throw std::invalid_argument("entity_prf: sentence count mismatch");
  }
  std::vector<std::vector<Chunk>> g, p;
  for (size_t s = 0; s < gold.size(); ++s) {
    g.push_back(ExtractChunks(gold[s]));
    p.push_back(ExtractChunks(predicted[s]));
  }
  return EntityPrf(g, p);
}

PrfReport RelationPrf(std::span<const std::string> gold,
                      std::span<const std::string> predicted,
                      std::span<const std::string> positive_classes,
                      const std::string& negative_label) {
  if (gold.size() != predicted.size()) {
    throw std::invalid_argument("relation_prf: length mismatch");
  }
  const std::set<std::string> positive(positive_classes.begin(),
                                       positive_classes.end());
  auto check = [&](const std::string& label) {
    if (label != negative_label && !positive.contains(label)) {
      std::string admissible;
      for (const auto& p : positive) admissible += p + ", ";
      admissible += negative_label;
      throw std::invalid_argument("unknown relation label '" + label +
                                  "'; admissible: " + admissible);
    }
  };
  int64_t tp = 0, fp = 0, fn = 0;
  for (size_t i = 0; i < gold.size(); ++i) {
    check(gold[i]);
    check(predicted[i]);
    const bool gold_pos = gold[i] != negative_label;
    const bool pred_pos = predicted[i] != negative_label;
    if (gold[i] == predicted[i]) {
      tp += gold_pos;
      continue;
    }
    fp += pred_pos;
    fn += gold_pos;
  }
  return PrfReport::FromCounts(tp, fp, fn);
}

std::string NormalizeAnswer(const std::string& text, bool case_sensitive) {
  std::string out;
  bool space = false;
  for (char c : text) {
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' ||
        c == '\f') {
      space = !out.empty();
      continue;
    }
    if (space) out.push_back(' ');
    space = false;
    if (!case_sensitive && c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    out.push_back(c);
  }
  return out;
}

int AnswerRank(std::span<const std::string> candidates,
               std::span<const std::string> synonyms, bool case_sensitive,
               size_t capacity) {
  std::set<std::string> gold;
  for (const auto& s : synonyms) gold.insert(NormalizeAnswer(s, case_sensitive));
  const size_t n = std::min(capacity, candidates.size());
  for (size_t i = 0; i < n; ++i) {
    if (gold.contains(NormalizeAnswer(candidates[i], case_sensitive))) {
      return static_cast<int>(i) + 1;
    }
  }
  return 0;
}

QaReport QaMetrics(std::span<const QaGold> gold,
                   const std::map<std::string, std::vector<std::string>>& predictions,
                   bool case_sensitive, size_t capacity) {
  std::set<std::string> seen;
  int64_t strict = 0, lenient = 0;
  double reciprocal = 0.0;
  for (const QaGold& q : gold) {
    if (!seen.insert(q.question_id).second) {
      throw std::invalid_argument("duplicate question id " + q.question_id);
    }
    auto it = predictions.find(q.question_id);
    if (it == predictions.end()) continue;
    const int rank = AnswerRank(it->second, q.answers, case_sensitive, capacity);
    if (rank == 0) continue;
    strict += rank == 1;
    ++lenient;
    reciprocal += 1.0 / rank;
  }
  QaReport r;
  r.questions = static_cast<int64_t>(gold.size());
  if (r.questions > 0) {
    const double n = static_cast<double>(r.questions);
    r.sacc = 100.0 * static_cast<double>(strict) / n;
    r.lacc = 100.0 * static_cast<double>(lenient) / n;
    r.mrr = 100.0 * reciprocal / n;
  }
  return r;
}

ScoreTable BuildScoreTable(std::span<const MrrEntry> entries) {
  ScoreTable table;
  std::map<std::string, double> best;
  std::set<std::pair<std::string, std::string>> seen;
  for (const MrrEntry& e : entries) {
    if (!seen.insert({e.competitor, e.batch}).second) {
      throw std::invalid_argument("duplicate MRR entry for " + e.competitor +
                                  " in batch " + e.batch);
    }
    if (!best.contains(e.batch)) table.batches.push_back(e.batch);
    if (std::find(table.competitors.begin(), table.competitors.end(),
                  e.competitor) == table.competitors.end()) {
      table.competitors.push_back(e.competitor);
    }
    best[e.batch] = std::max(best[e.batch], e.mrr);
  }
  for (const std::string& b : table.batches) {
    if (best[b] <= 0.0) {
      table.warnings.push_back("batch " + b + " has no positive MRR; ratios set to 0");
    }
  }
  for (const MrrEntry& e : entries) {
    const double m = best[e.batch];
    const double r = m > 0.0 ? e.mrr / m : 0.0;
    table.ratio[e.competitor][e.batch] = r;
    table.total[e.competitor] += r;
  }
  return table;
}

namespace {

std::vector<std::string> SplitCells(const std::string& line) {
  const char sep = line.find('\t') != std::string::npos ? '\t' : ',';
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, sep)) {
    const size_t b = cell.find_first_not_of(" \r");
    const size_t e = cell.find_last_not_of(" \r");
    cells.push_back(b == std::string::npos ? "" : cell.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == sep) cells.emplace_back();
  return cells;
}

double ParseMrr(const std::string& text, const std::string& where) {
  try {
    size_t used = 0;
    const double v = std::stod(text, &used);
    if (used == text.size()) return v;
  } catch (const std::logic_error&) {
  }
  throw std::invalid_argument(where + ": '" + text + "' is not a number");
}

}  // namespace

std::vector<MrrEntry> ParseMrrTable(std::istream& in, const std::string& source) {
  std::string line;
  std::vector<std::string> header;
  int line_no = 0;
  while (header.empty() && std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") != std::string::npos) header = SplitCells(line);
  }
  if (header.size() < 2) throw std::invalid_argument(source + ": missing header row");
  const bool long_form = header.size() == 3 && header[1] == "batch" && header[2] == "mrr";
  std::vector<MrrEntry> entries;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto cells = SplitCells(line);
    const std::string where = source + ":" + std::to_string(line_no);
    if (cells.size() != header.size()) {
      throw std::invalid_argument(where + ": expected " + std::to_string(header.size()) +
                                  " columns, found " + std::to_string(cells.size()));
    }
    if (long_form) {
      entries.push_back({cells[0], cells[1], ParseMrr(cells[2], where)});
      continue;
    }
    for (size_t c = 1; c < cells.size(); ++c) {
      if (cells[c].empty() || cells[c] == "-") continue;
      entries.push_back({cells[0], header[c], ParseMrr(cells[c], where)});
    }
  }
  return entries;
}

PrfAggregate AggregateSeeds(std::span<const PrfReport> reports) {
  PrfAggregate a;
  a.count = static_cast<int>(reports.size());
  if (reports.empty()) return a;
  for (const auto& r : reports) {
    a.precision += r.precision;
    a.recall += r.recall;
    a.f1 += r.f1;
  }
  const double n = static_cast<double>(reports.size());
  a.precision /= n;
  a.recall /= n;
  a.f1 /= n;
  a.f1_of_means = F1(a.precision, a.recall);
  return a;
}

QaAggregate AggregateSeeds(std::span<const QaReport> reports) {
  QaAggregate a;
  a.count = static_cast<int>(reports.size());
  if (reports.empty()) return a;
  for (const auto& r : reports) {
    a.sacc += r.sacc;
    a.lacc += r.lacc;
    a.mrr += r.mrr;
  }
  const double n = static_cast<double>(reports.size());
  a.sacc /= n;
  a.lacc /= n;
  a.mrr /= n;
  return a;
}

std::string FormatPercent(double value) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.2f", value);
  return buf;
}

std::string FormatRatio(double value) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.3f", value);
  return buf;
}

nlohmann::json ToJson(const PrfReport& r) {
  return {{"precision", r.precision}, {"recall", r.recall}, {"f1", r.f1},
          {"tp", r.tp}, {"fp", r.fp}, {"fn", r.fn}};
}

nlohmann::json ToJson(const QaReport& r) {
  return {{"sacc", r.sacc}, {"lacc", r.lacc}, {"mrr", r.mrr},
          {"questions", r.questions}};
}

nlohmann::json ToJson(const ScoreTable& t) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& c : t.competitors) {
    nlohmann::json ratios = nlohmann::json::object();
    for (const auto& b : t.batches) {
      auto it = t.ratio.at(c).find(b);
      if (it != t.ratio.at(c).end()) ratios[b] = it->second;
    }
    rows.push_back({{"competitor", c}, {"ratios", ratios}, {"total", t.total.at(c)}});
  }
  return {{"batches", t.batches}, {"rows", rows}, {"warnings", t.warnings}};
}

nlohmann::json ToJson(const PrfAggregate& a) {
  return {{"seeds", a.count}, {"precision", a.precision}, {"recall", a.recall},
          {"f1", a.f1}, {"f1_of_mean_pr", a.f1_of_means}};
}

nlohmann::json ToJson(const QaAggregate& a) {
  return {{"seeds", a.count}, {"sacc", a.sacc}, {"lacc", a.lacc}, {"mrr", a.mrr}};
}

std::string RenderReport(const PrfReport& r) {
  std::ostringstream out;
  out << "P\tR\tF\tTP\tFP\tFN\n"
      << FormatPercent(r.precision) << '\t' << FormatPercent(r.recall) << '\t'
      << FormatPercent(r.f1) << '\t' << r.tp << '\t' << r.fp << '\t' << r.fn
      << '\n';
  return out.str();
}

std::string RenderReport(const QaReport& r) {
  std::ostringstream out;
  out << "SACC\tLACC\tMRR\tN\n"
      << FormatPercent(r.sacc) << '\t' << FormatPercent(r.lacc) << '\t'
      << FormatPercent(r.mrr) << '\t' << r.questions << '\n';
  return out.str();
}

std::string RenderScoreTable(const ScoreTable& t) {
  std::ostringstream out;
  out << "Competitor";
  for (const auto& b : t.batches) out << '\t' << b;
  out << "\tTotal\n";
  for (const auto& c : t.competitors) {
    out << c;
    const auto& row = t.ratio.at(c);
    for (const auto& b : t.batches) {
      auto it = row.find(b);
      out << '\t' << (it == row.end() ? std::string("-") : FormatRatio(it->second));
    }
    out << '\t' << FormatRatio(t.total.at(c)) << '\n';
  }
  return out.str();
}

}  // namespace biortd

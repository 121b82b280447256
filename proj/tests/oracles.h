// SPDX-License-Identifier: Apache-2.0
//
// Brute-force scorers written independently of src/metrics.cc, plus random
// fixture generators. Shared by the unit and acceptance tests.

#ifndef BIORTD_TESTS_ORACLES_H_
#define BIORTD_TESTS_ORACLES_H_

#include <algorithm>
#include <cctype>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "biortd/metrics.h"
#include "biortd/rng.h"

namespace biortd::testing {

// Splits "B-Chemical" into ('B', "Chemical"); anything else is ('O', "").
inline std::pair<char, std::string> SplitTag(const std::string& tag) {
  if (tag.size() > 2 && (tag[0] == 'B' || tag[0] == 'I') && tag[1] == '-') {
    return {tag[0], tag.substr(2)};
  }
  return {'O', ""};
}

// conlleval's endOfChunk/startOfChunk pair, restricted to BIO.
inline bool EndsChunk(char prev, const std::string& prev_type, char cur,
                      const std::string& cur_type) {
  if (prev == 'O') return false;
  if (cur == 'O' || cur == 'B') return true;
  return prev_type != cur_type;
}

inline bool StartsChunk(char prev, const std::string& prev_type, char cur,
                        const std::string& cur_type) {
  if (cur == 'O') return false;
  if (cur == 'B') return true;
  return prev == 'O' || prev_type != cur_type;
}

// Chunks as (start, end, type) tuples via the transition functions above.
inline std::set<std::tuple<int, int, std::string>> OracleChunks(
    const std::vector<std::string>& tags) {
  std::set<std::tuple<int, int, std::string>> out;
  char prev = 'O';
  std::string prev_type;
  int open = -1;
  for (int i = 0; i <= static_cast<int>(tags.size()); ++i) {
    auto [cur, type] = i < static_cast<int>(tags.size())
                           ? SplitTag(tags[static_cast<size_t>(i)])
                           : std::pair<char, std::string>{'O', ""};
    if (open >= 0 && EndsChunk(prev, prev_type, cur, type)) {
      out.insert({open, i - 1, prev_type});
      open = -1;
    }
    if (StartsChunk(prev, prev_type, cur, type)) open = i;
    prev = cur;
    prev_type = type;
  }
  return out;
}

struct Counts {
  int64_t tp = 0, fp = 0, fn = 0;
};

// One-pass conlleval counting: a chunk is correct when both sequences open
// it at the same token with the same type and close it at the same token.
inline Counts OracleEntityCounts(const std::vector<std::vector<std::string>>& gold,
                                 const std::vector<std::vector<std::string>>& pred) {
  Counts c;
  int64_t n_gold = 0, n_pred = 0;
  for (size_t s = 0; s < gold.size(); ++s) {
    const auto& g = gold[s];
    const auto& p = pred[s];
    bool in_correct = false;
    char pg = 'O', pp = 'O';
    std::string pgt, ppt, correct_type;
    for (size_t i = 0; i <= g.size(); ++i) {
      auto [cg, cgt] = i < g.size() ? SplitTag(g[i]) : std::pair<char, std::string>{'O', ""};
      auto [cp, cpt] = i < p.size() ? SplitTag(p[i]) : std::pair<char, std::string>{'O', ""};
      const bool g_end = EndsChunk(pg, pgt, cg, cgt);
      const bool p_end = EndsChunk(pp, ppt, cp, cpt);
      const bool g_start = StartsChunk(pg, pgt, cg, cgt);
      const bool p_start = StartsChunk(pp, ppt, cp, cpt);
      if (in_correct) {
        if (g_end && p_end && pgt == ppt) {
          in_correct = false;
          ++c.tp;
        } else if (g_end != p_end || cgt != cpt) {
          in_correct = false;
        }
      }
      if (g_start && p_start && cgt == cpt) in_correct = true;
      n_gold += g_start;
      n_pred += p_start;
      pg = cg, pgt = cgt, pp = cp, ppt = cpt;
    }
  }
  c.fp = n_pred - c.tp;
  c.fn = n_gold - c.tp;
  return c;
}

inline Counts OracleRelationCounts(const std::vector<std::string>& gold,
                                   const std::vector<std::string>& pred,
                                   const std::string& negative) {
  Counts c;
  for (size_t i = 0; i < gold.size(); ++i) {
    const bool gp = gold[i] != negative;
    const bool pp = pred[i] != negative;
    if (gp && pp && gold[i] == pred[i]) ++c.tp;
    if (pp && pred[i] != gold[i]) ++c.fp;
    if (gp && pred[i] != gold[i]) ++c.fn;
  }
  return c;
}

inline std::string OracleNormalize(const std::string& s, bool case_sensitive) {
  std::istringstream in(s);
  std::string word, out;
  while (in >> word) out += (out.empty() ? "" : " ") + word;
  if (!case_sensitive) {
    for (char& ch : out) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  }
  return out;
}

struct QaCounts {
  double strict = 0, lenient = 0, reciprocal = 0;
  int64_t questions = 0;
};

inline QaCounts OracleQa(const std::vector<QaGold>& gold,
                         const std::map<std::string, std::vector<std::string>>& pred,
                         bool case_sensitive) {
  QaCounts c;
  for (const auto& q : gold) {
    ++c.questions;
    auto it = pred.find(q.question_id);
    if (it == pred.end()) continue;
    for (size_t r = 0; r < it->second.size() && r < 5; ++r) {
      bool hit = false;
      for (const auto& a : q.answers) {
        hit = hit || OracleNormalize(a, case_sensitive) ==
                         OracleNormalize(it->second[r], case_sensitive);
      }
      if (hit) {
        c.strict += r == 0;
        c.lenient += 1;
        c.reciprocal += 1.0 / static_cast<double>(r + 1);
        break;
      }
    }
  }
  return c;
}

// Random tags over two types, deliberately including bare I- tags and type
// switches so the repair rule is exercised.
inline std::vector<std::string> RandomTags(Rng& rng, int length) {
  static const char* kTags[] = {"O", "O", "O", "B-X", "I-X", "B-Y", "I-Y"};
  std::vector<std::string> out;
  for (int i = 0; i < length; ++i) out.push_back(kTags[rng.Below(7)]);
  return out;
}

inline std::string RandomAnswer(Rng& rng) {
  static const char* kWords[] = {"Alpha", "beta", "GAMMA", "delta", "p53", "il-6"};
  std::string out;
  const int n = 1 + static_cast<int>(rng.Below(2));
  for (int i = 0; i < n; ++i) {
    if (i) out += rng.Below(3) == 0 ? "  " : " ";
    out += kWords[rng.Below(6)];
  }
  if (rng.Below(4) == 0) out = " " + out + " ";
  return out;
}

}  // namespace biortd::testing

#endif  // BIORTD_TESTS_ORACLES_H_

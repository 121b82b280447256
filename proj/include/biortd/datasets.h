// SPDX-License-Identifier: Apache-2.0
//
// Corpus readers and writers: CoNLL-style NER files, tab-separated relation
// examples, SQuAD-shaped QA JSON (including the multi-context BioASQ
// variant) and the plain-text pretraining corpus.

#ifndef BIORTD_DATASETS_H_
#define BIORTD_DATASETS_H_

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "biortd/rng.h"

namespace biortd {

// Malformed input. The message names the file and, where it applies, the
// line or example id.
class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct NerSentence {
  std::vector<std::string> words;
  std::vector<std::string> tags;
};

struct ConllStats {
  int64_t sentences = 0;
  int64_t tokens = 0;
  // I-t directly after O or after a chunk of another type.
  int64_t bare_inside_tags = 0;
};

// "token<TAB>tag" or "token tag" per line, blank line between sentences.
std::vector<NerSentence> ParseConll(std::istream& in, const std::string& source,
                                    ConllStats* stats = nullptr);
std::vector<NerSentence> ReadConll(const std::filesystem::path& path,
                                   ConllStats* stats = nullptr);
void WriteConll(std::ostream& out, std::span<const NerSentence> sentences);
void WriteConll(const std::filesystem::path& path,
                std::span<const NerSentence> sentences);

// Tag inventory frozen from a training split: "O" first, then the remaining
// tags in lexicographic order.
class TagSet {
 public:
  static TagSet FromSentences(std::span<const NerSentence> sentences);
  static TagSet FromTags(std::vector<std::string> tags);

  int size() const { return static_cast<int>(tags_.size()); }
  // Throws DatasetError for tags never seen in training.
  int Id(const std::string& tag) const;
  const std::string& Tag(int id) const { return tags_.at(static_cast<size_t>(id)); }
  const std::vector<std::string>& tags() const { return tags_; }

 private:
  std::vector<std::string> tags_;
  std::map<std::string, int> index_;
};

// Entity counts by type.
std::map<std::string, int64_t> CountEntities(std::span<const NerSentence> sentences);

struct RelationLabels {
  std::vector<std::string> positive;
  std::string negative;

  std::vector<std::string> All() const;  // positive classes, then negative
  bool Contains(const std::string& label) const;

  static RelationLabels Chemprot();  // CPR:3 CPR:4 CPR:5 CPR:6 CPR:9 / false
  static RelationLabels Ddi();       // effect mechanism advice int / negative
  // "chemprot", "ddi", or "A,B,...,NEG" with the last entry negative.
  static RelationLabels Parse(const std::string& spec);
};

struct ReExample {
  std::string id;
  std::string sentence;
  std::string label;
};

// Three tab-separated columns: id, sentence, label. A first line whose
// columns read "index"/"id", "sentence", "label" is a header and skipped.
std::vector<ReExample> ReadReTsv(const std::filesystem::path& path,
                                 const RelationLabels& labels);
// Two columns: example id and label.
void WriteRePredictions(const std::filesystem::path& path,
                        std::span<const std::string> ids,
                        std::span<const std::string> labels);
std::map<std::string, std::string> ReadRePredictions(
    const std::filesystem::path& path);
std::map<std::string, int64_t> CountLabels(std::span<const ReExample> examples);

struct QaAnswer {
  std::string text;
  int64_t char_start = -1;
};

struct QaContext {
  std::string pair_id;  // id of the question-context pair in the source file
  std::string text;
  std::vector<QaAnswer> answers;  // may be empty for unlabeled test pairs
};

struct QaQuestion {
  std::string id;
  std::string question;
  std::vector<QaContext> contexts;
  // Distinct gold answer strings across contexts, first-seen order.
  std::vector<std::string> synonyms;
  std::string batch;
};

// SQuAD v1.1 layout. One question per qas entry; answer_start is checked
// against the context.
std::vector<QaQuestion> ReadSquad(const std::filesystem::path& path);
// Pairs whose ids share the prefix before the last '_' become one question.
std::vector<QaQuestion> ReadBioasq(const std::filesystem::path& path,
                                   const std::string& batch = "");

int64_t CountPairs(std::span<const QaQuestion> questions);

// Question id -> ranked answer strings, as JSON object.
void WriteQaPredictions(const std::filesystem::path& path,
                        const std::map<std::string, std::vector<std::string>>& answers);
std::map<std::string, std::vector<std::string>> ReadQaPredictions(
    const std::filesystem::path& path);

// A document is a list of sentences.
using CorpusDocument = std::vector<std::string>;

// A directory expands to its regular files, a path whose file name contains
// '*' or '?' to the matching files; the result is sorted.
std::vector<std::filesystem::path> ResolveCorpusFiles(
    const std::filesystem::path& pattern);

// One sentence per line, blank lines between documents. Documents are
// yielded through a shuffle buffer of the given size (0 or 1: file order).
class DocumentStream {
 public:
  DocumentStream(std::vector<std::filesystem::path> files, uint64_t seed,
                 size_t shuffle_buffer = 0);

  std::optional<CorpusDocument> Next();

 private:
  std::optional<CorpusDocument> ReadDocument();

  std::vector<std::filesystem::path> files_;
  size_t file_index_ = 0;
  std::ifstream current_;
  bool current_nonempty_ = false;
  size_t buffer_size_;
  std::vector<CorpusDocument> buffer_;
  Rng rng_;
};

std::vector<CorpusDocument> ReadCorpus(const std::filesystem::path& pattern,
                                       uint64_t seed = 0,
                                       size_t shuffle_buffer = 0);

}  // namespace biortd

#endif  // BIORTD_DATASETS_H_

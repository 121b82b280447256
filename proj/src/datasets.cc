// SPDX-License-Identifier: Apache-2.0

#include "biortd/datasets.h"

#include <fnmatch.h>

#include <algorithm>
#include <iostream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace biortd {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::vector<std::string> SplitWhitespace(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream in(line);
  std::string field;
  while (in >> field) out.push_back(field);
  return out;
}

std::vector<std::string> SplitTabs(const std::string& line) {
  std::vector<std::string> out;
  size_t begin = 0;
  while (true) {
    const size_t tab = line.find('\t', begin);
    out.push_back(line.substr(begin, tab - begin));
    if (tab == std::string::npos) break;
    begin = tab + 1;
  }
  return out;
}

void StripCarriageReturn(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

bool IsBlank(const std::string& line) {
  return line.find_first_not_of(" \t\r") == std::string::npos;
}

// "O", "B-x" or "I-x"; returns the prefix letter.
char CheckTag(const std::string& tag, const std::string& where) {
  if (tag == "O") return 'O';
  if (tag.size() > 2 && (tag[0] == 'B' || tag[0] == 'I') && tag[1] == '-') {
    return tag[0];
  }
  throw DatasetError(where + ": unknown tag prefix in '" + tag + "'");
}

std::ifstream OpenOrThrow(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DatasetError("cannot read " + path.string());
  return in;
}

json ReadJson(const fs::path& path) {
  std::ifstream in = OpenOrThrow(path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw DatasetError(path.string() + ": invalid JSON: " + e.what());
  }
}

void AddSynonym(QaQuestion& q, const std::string& text) {
  if (std::find(q.synonyms.begin(), q.synonyms.end(), text) == q.synonyms.end()) {
    q.synonyms.push_back(text);
  }
}

// Walks data -> paragraphs -> qas, calling visit(context, qa) for each pair
// after validating the answer offsets.
template <typename Visit>
void ForEachSquadPair(const json& root, const fs::path& path, Visit visit) {
  if (!root.contains("data") || !root["data"].is_array()) {
    throw DatasetError(path.string() + ": missing top-level \"data\" array");
  }
  for (const auto& article : root["data"]) {
    for (const auto& paragraph : article.at("paragraphs")) {
      const std::string context = paragraph.at("context").get<std::string>();
      for (const auto& qa : paragraph.at("qas")) {
        QaContext pair;
        pair.pair_id = qa.at("id").is_string() ? qa["id"].get<std::string>()
                                               : qa["id"].dump();
        pair.text = context;
        for (const auto& a : qa.value("answers", json::array())) {
          QaAnswer answer{a.at("text").get<std::string>(),
                          a.at("answer_start").get<int64_t>()};
          const auto start = answer.char_start;
          if (start < 0 || static_cast<size_t>(start) > context.size() ||
              context.compare(static_cast<size_t>(start), answer.text.size(),
                              answer.text) != 0) {
            throw DatasetError(path.string() + ": question " + pair.pair_id +
                               ": answer '" + answer.text +
                               "' does not occur at answer_start " +
                               std::to_string(start));
          }
          pair.answers.push_back(std::move(answer));
        }
        visit(qa, std::move(pair));
      }
    }
  }
}

}  // namespace

std::vector<NerSentence> ParseConll(std::istream& in, const std::string& source,
                                    ConllStats* stats) {
  std::vector<NerSentence> sentences;
  NerSentence current;
  ConllStats local;
  std::string line;
  int64_t line_no = 0;
  char prev_prefix = 'O';
  std::string prev_type;
  auto flush = [&] {
    if (current.words.empty()) return;
    local.tokens += static_cast<int64_t>(current.words.size());
    sentences.push_back(std::move(current));
    current = {};
    prev_prefix = 'O';
    prev_type.clear();
  };
  while (std::getline(in, line)) {
    ++line_no;
    StripCarriageReturn(line);
    if (IsBlank(line)) {
      flush();
      continue;
    }
    const auto fields = SplitWhitespace(line);
    const std::string where = source + ":" + std::to_string(line_no);
    if (fields.size() != 2) {
      throw DatasetError(where + ": expected 2 fields, found " +
                         std::to_string(fields.size()));
    }
    const char prefix = CheckTag(fields[1], where);
    const std::string type = prefix == 'O' ? "" : fields[1].substr(2);
    if (prefix == 'I' && (prev_prefix == 'O' || prev_type != type)) {
      ++local.bare_inside_tags;
    }
    prev_prefix = prefix;
    prev_type = type;
    current.words.push_back(fields[0]);
    current.tags.push_back(fields[1]);
  }
  flush();
  local.sentences = static_cast<int64_t>(sentences.size());
  if (stats != nullptr) *stats = local;
  return sentences;
}

std::vector<NerSentence> ReadConll(const fs::path& path, ConllStats* stats) {
  std::ifstream in = OpenOrThrow(path);
  return ParseConll(in, path.string(), stats);
}

void WriteConll(std::ostream& out, std::span<const NerSentence> sentences) {
  for (const auto& s : sentences) {
    if (s.words.size() != s.tags.size()) {
      throw std::invalid_argument("sentence has " + std::to_string(s.words.size()) +
                                  " words but " + std::to_string(s.tags.size()) +
                                  " tags");
    }
    for (size_t i = 0; i < s.words.size(); ++i) {
      out << s.words[i] << '\t' << s.tags[i] << '\n';
    }
    out << '\n';
  }
}

void WriteConll(const fs::path& path, std::span<const NerSentence> sentences) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DatasetError("cannot write " + path.string());
  WriteConll(out, sentences);
}

TagSet TagSet::FromSentences(std::span<const NerSentence> sentences) {
  std::vector<std::string> tags;
  for (const auto& s : sentences) tags.insert(tags.end(), s.tags.begin(), s.tags.end());
  return FromTags(std::move(tags));
}

TagSet TagSet::FromTags(std::vector<std::string> tags) {
  std::set<std::string> unique(tags.begin(), tags.end());
  unique.erase("O");
  TagSet set;
  set.tags_.push_back("O");
  set.tags_.insert(set.tags_.end(), unique.begin(), unique.end());
  for (size_t i = 0; i < set.tags_.size(); ++i) {
    set.index_[set.tags_[i]] = static_cast<int>(i);
  }
  return set;
}

int TagSet::Id(const std::string& tag) const {
  auto it = index_.find(tag);
  if (it == index_.end()) {
    throw DatasetError("tag '" + tag + "' does not occur in the training split");
  }
  return it->second;
}

std::map<std::string, int64_t> CountEntities(std::span<const NerSentence> sentences) {
  std::map<std::string, int64_t> counts;
  for (const auto& s : sentences) {
    for (size_t i = 0; i < s.tags.size(); ++i) {
      const std::string& t = s.tags[i];
      if (t == "O") continue;
      const std::string type = t.substr(2);
      const bool continues = t[0] == 'I' && i > 0 && s.tags[i - 1] != "O" &&
                             s.tags[i - 1].substr(2) == type;
      if (!continues) ++counts[type];
    }
  }
  return counts;
}

std::vector<std::string> RelationLabels::All() const {
  std::vector<std::string> all = positive;
  all.push_back(negative);
  return all;
}

bool RelationLabels::Contains(const std::string& label) const {
  return label == negative ||
         std::find(positive.begin(), positive.end(), label) != positive.end();
}

RelationLabels RelationLabels::Chemprot() {
  return {{"CPR:3", "CPR:4", "CPR:5", "CPR:6", "CPR:9"}, "false"};
}

RelationLabels RelationLabels::Ddi() {
  return {{"effect", "mechanism", "advice", "int"}, "negative"};
}

RelationLabels RelationLabels::Parse(const std::string& spec) {
  if (spec == "chemprot") return Chemprot();
  if (spec == "ddi") return Ddi();
  RelationLabels labels;
  std::stringstream in(spec);
  std::string item;
  std::vector<std::string> items;
  while (std::getline(in, item, ',')) {
    if (!item.empty()) items.push_back(item);
  }
  if (items.size() < 2) {
    throw std::invalid_argument("label set '" + spec +
                                "' needs at least one positive class and a "
                                "negative class");
  }
  labels.negative = items.back();
  items.pop_back();
  labels.positive = std::move(items);
  return labels;
}

std::vector<ReExample> ReadReTsv(const fs::path& path, const RelationLabels& labels) {
  std::ifstream in = OpenOrThrow(path);
  std::vector<ReExample> examples;
  std::set<std::string> ids;
  std::string line;
  int64_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    StripCarriageReturn(line);
    if (IsBlank(line)) continue;
    auto fields = SplitTabs(line);
    const std::string where = path.string() + ":" + std::to_string(line_no);
    if (fields.size() != 3) {
      throw DatasetError(where + ": expected 3 tab-separated fields, found " +
                         std::to_string(fields.size()));
    }
    if (line_no == 1 && (fields[0] == "index" || fields[0] == "id") &&
        fields[1] == "sentence" && fields[2] == "label") {
      continue;
    }
    if (!labels.Contains(fields[2])) {
      std::string admissible;
      for (const auto& l : labels.All()) {
        admissible += (admissible.empty() ? "" : ", ") + l;
      }
      throw DatasetError(where + ": unknown label '" + fields[2] +
                         "'; admissible: " + admissible);
    }
    if (!ids.insert(fields[0]).second) {
      throw DatasetError(where + ": duplicate example id " + fields[0]);
    }
    examples.push_back({fields[0], fields[1], fields[2]});
  }
  if (examples.empty()) {
    std::cerr << "warning: " << path.string() << " contains no examples\n";
  }
  return examples;
}

void WriteRePredictions(const fs::path& path, std::span<const std::string> ids,
                        std::span<const std::string> labels) {
  if (ids.size() != labels.size()) {
    throw std::invalid_argument("ids and labels differ in length");
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DatasetError("cannot write " + path.string());
  for (size_t i = 0; i < ids.size(); ++i) out << ids[i] << '\t' << labels[i] << '\n';
}

std::map<std::string, std::string> ReadRePredictions(const fs::path& path) {
  std::ifstream in = OpenOrThrow(path);
  std::map<std::string, std::string> out;
  std::string line;
  int64_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    StripCarriageReturn(line);
    if (IsBlank(line)) continue;
    const auto fields = SplitTabs(line);
    if (fields.size() != 2) {
      throw DatasetError(path.string() + ":" + std::to_string(line_no) +
                         ": expected id<TAB>label");
    }
    if (!out.emplace(fields[0], fields[1]).second) {
      throw DatasetError(path.string() + ": duplicate prediction for " + fields[0]);
    }
  }
  return out;
}

std::map<std::string, int64_t> CountLabels(std::span<const ReExample> examples) {
  std::map<std::string, int64_t> counts;
  for (const auto& e : examples) ++counts[e.label];
  return counts;
}

std::vector<QaQuestion> ReadSquad(const fs::path& path) {
  const json root = ReadJson(path);
  std::vector<QaQuestion> questions;
  std::set<std::string> ids;
  try {
    ForEachSquadPair(root, path, [&](const json& qa, QaContext pair) {
      QaQuestion q;
      q.id = pair.pair_id;
      if (!ids.insert(q.id).second) {
        throw DatasetError(path.string() + ": duplicate question id " + q.id);
      }
      q.question = qa.at("question").get<std::string>();
      for (const auto& a : pair.answers) AddSynonym(q, a.text);
      q.contexts.push_back(std::move(pair));
      questions.push_back(std::move(q));
    });
  } catch (const json::exception& e) {
    throw DatasetError(path.string() + ": unexpected layout: " + e.what());
  }
  return questions;
}

std::vector<QaQuestion> ReadBioasq(const fs::path& path, const std::string& batch) {
  const json root = ReadJson(path);
  std::vector<QaQuestion> questions;
  std::map<std::string, size_t> by_id;
  std::set<std::string> pair_ids;
  try {
    ForEachSquadPair(root, path, [&](const json& qa, QaContext pair) {
      if (!pair_ids.insert(pair.pair_id).second) {
        throw DatasetError(path.string() + ": duplicate pair id " + pair.pair_id);
      }
      const size_t cut = pair.pair_id.rfind('_');
      const std::string qid =
          cut == std::string::npos ? pair.pair_id : pair.pair_id.substr(0, cut);
      auto [it, inserted] = by_id.emplace(qid, questions.size());
      if (inserted) {
        QaQuestion q;
        q.id = qid;
        q.question = qa.at("question").get<std::string>();
        q.batch = batch;
        questions.push_back(std::move(q));
      }
      QaQuestion& q = questions[it->second];
      for (const auto& a : pair.answers) AddSynonym(q, a.text);
      for (const auto& s : qa.value("synonyms", json::array())) {
        AddSynonym(q, s.get<std::string>());
      }
      q.contexts.push_back(std::move(pair));
    });
  } catch (const json::exception& e) {
    throw DatasetError(path.string() + ": unexpected layout: " + e.what());
  }
  return questions;
}

int64_t CountPairs(std::span<const QaQuestion> questions) {
  int64_t n = 0;
  for (const auto& q : questions) n += static_cast<int64_t>(q.contexts.size());
  return n;
}

void WriteQaPredictions(const fs::path& path,
                        const std::map<std::string, std::vector<std::string>>& answers) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DatasetError("cannot write " + path.string());
  out << json(answers).dump(2) << '\n';
}

std::map<std::string, std::vector<std::string>> ReadQaPredictions(const fs::path& path) {
  const json root = ReadJson(path);
  try {
    return root.get<std::map<std::string, std::vector<std::string>>>();
  } catch (const json::exception& e) {
    throw DatasetError(path.string() +
                       ": expected an object of question id -> answer list: " +
                       e.what());
  }
}

std::vector<fs::path> ResolveCorpusFiles(const fs::path& pattern) {
  std::vector<fs::path> files;
  const std::string name = pattern.filename().string();
  if (name.find_first_of("*?[") != std::string::npos) {
    const fs::path dir = pattern.has_parent_path() ? pattern.parent_path() : ".";
    std::error_code ec;
    for (const auto& entry : fs::directory_iterator(dir, ec)) {
      if (entry.is_regular_file() &&
          fnmatch(name.c_str(), entry.path().filename().c_str(), 0) == 0) {
        files.push_back(entry.path());
      }
    }
    if (ec) throw DatasetError("cannot list " + dir.string() + ": " + ec.message());
  } else if (fs::is_directory(pattern)) {
    for (const auto& entry : fs::directory_iterator(pattern)) {
      if (entry.is_regular_file()) files.push_back(entry.path());
    }
  } else {
    files.push_back(pattern);
  }
  std::sort(files.begin(), files.end());
  return files;
}

DocumentStream::DocumentStream(std::vector<fs::path> files, uint64_t seed,
                               size_t shuffle_buffer)
    : files_(std::move(files)),
      buffer_size_(std::max<size_t>(shuffle_buffer, 1)),
      rng_(seed) {}

std::optional<CorpusDocument> DocumentStream::ReadDocument() {
  CorpusDocument doc;
  std::string line;
  while (true) {
    if (!current_.is_open()) {
      if (file_index_ >= files_.size()) break;
      const fs::path& path = files_[file_index_];
      current_.open(path, std::ios::binary);
      if (!current_) throw DatasetError("cannot read " + path.string());
      current_nonempty_ = false;
    }
    if (!std::getline(current_, line)) {
      current_.close();
      if (!current_nonempty_) {
        std::cerr << "warning: " << files_[file_index_].string()
                  << " contains no documents\n";
      }
      ++file_index_;
      if (!doc.empty()) break;
      continue;
    }
    StripCarriageReturn(line);
    if (IsBlank(line)) {
      if (!doc.empty()) break;
      continue;
    }
    current_nonempty_ = true;
    doc.push_back(line);
  }
  if (doc.empty()) return std::nullopt;
  return doc;
}

std::optional<CorpusDocument> DocumentStream::Next() {
  while (buffer_.size() < buffer_size_) {
    auto doc = ReadDocument();
    if (!doc) break;
    buffer_.push_back(std::move(*doc));
  }
  if (buffer_.empty()) return std::nullopt;
  size_t pick = 0;
  if (buffer_size_ > 1) pick = static_cast<size_t>(rng_.Below(buffer_.size()));
  CorpusDocument doc = std::move(buffer_[pick]);
  buffer_.erase(buffer_.begin() + static_cast<std::ptrdiff_t>(pick));
  return doc;
}

std::vector<CorpusDocument> ReadCorpus(const fs::path& pattern, uint64_t seed,
                                       size_t shuffle_buffer) {
  auto files = ResolveCorpusFiles(pattern);
  if (files.empty()) throw DatasetError("no corpus files match " + pattern.string());
  DocumentStream stream(std::move(files), seed, shuffle_buffer);
  std::vector<CorpusDocument> docs;
  while (auto doc = stream.Next()) docs.push_back(std::move(*doc));
  return docs;
}

}  // namespace biortd

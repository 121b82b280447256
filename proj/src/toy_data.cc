// SPDX-License-Identifier: Apache-2.0

#include "biortd/toy_data.h"

#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "biortd/rng.h"

namespace biortd::toy {

namespace fs = std::filesystem;

namespace {

// Word-list layout over the content words.
constexpr int kChemicalBegin = 0, kChemicalEnd = 20;
constexpr int kDiseaseBegin = 20, kDiseaseEnd = 40;
constexpr int kModifierBegin = 40, kModifierEnd = 50;
constexpr int kAnswerHeadBegin = 50, kAnswerHeadEnd = 65;  // QA answers are head tail
constexpr int kAnswerTailBegin = 65, kAnswerTailEnd = 80;
constexpr int kTriggerBegin = 80, kTriggerEnd = 85;
constexpr int kFillerBegin = 85, kFillerEnd = kContentWords;

const std::vector<std::string>& ContentWords() {
  static const std::vector<std::string> words = [] {
    const std::string consonants = "bdfgklmnprstvz";
    const std::string vowels = "aeiou";
    std::vector<std::string> out;
    // Interleave so that neighbouring indices differ in their first letter.
    for (char v : vowels) {
      for (char c2 : consonants) {
        for (char c1 : consonants) {
          if (static_cast<int>(out.size()) == kContentWords) return out;
          out.push_back(std::string{c1, v, c2});
        }
      }
    }
    return out;
  }();
  return words;
}

const std::vector<std::string>& FunctionWords() {
  static const std::vector<std::string> words = {
      "what", "is", "the", "code", "name", "of", "and", "a", "in", "with"};
  return words;
}

const std::vector<std::string>& Suffixes() {
  static const std::vector<std::string> pieces = {
      "##s", "##ed", "##ing", "##ol", "##ase", "##itis",
      "##al", "##ic", "##er", "##ly", "##in", "##on"};
  return pieces;
}

int Pick(Rng& rng, int begin, int end) {
  return begin + static_cast<int>(rng.Below(static_cast<uint64_t>(end - begin)));
}

int Between(Rng& rng, int lo, int hi) {  // inclusive
  return lo + static_cast<int>(rng.Below(static_cast<uint64_t>(hi - lo + 1)));
}

std::string Filler(Rng& rng) { return ContentWord(Pick(rng, kFillerBegin, kFillerEnd)); }

std::string Join(const std::vector<std::string>& words) {
  std::string out;
  for (const auto& w : words) {
    if (!out.empty() && w != "." && w != "?" && w != ",") out += ' ';
    out += w;
  }
  return out;
}

void AppendFillerSentences(std::vector<std::string>& words, int count, Rng& rng) {
  while (count > 0) {
    const int n = std::min(count, Between(rng, 5, 9));
    for (int i = 0; i < n; ++i) words.push_back(Filler(rng));
    words.push_back(".");
    count -= n;
  }
}

std::ofstream OpenForWrite(const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

}  // namespace

const std::string& ContentWord(int i) { return ContentWords().at(static_cast<size_t>(i)); }

Vocabulary MakeVocabulary() {
  std::vector<std::string> tokens = {"[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]",
                                     ".", ",", "?"};
  for (const auto& w : FunctionWords()) tokens.push_back(w);
  for (const auto& p : Suffixes()) tokens.push_back(p);
  for (const auto& w : ContentWords()) tokens.push_back(w);
  if (static_cast<int>(tokens.size()) != kVocabSize) {
    throw std::logic_error("toy vocabulary has " + std::to_string(tokens.size()) + " tokens");
  }
  return Vocabulary::FromTokens(std::move(tokens));
}

std::vector<Document> PretrainCorpus(uint64_t seed, const PretrainOptions& options) {
  Rng rng(seed);
  std::vector<Document> docs;
  for (int d = 0; d < options.documents; ++d) {
    Document doc;
    for (int s = 0; s < options.sentences; ++s) {
      const std::string& word = ContentWord(Pick(rng, 0, kContentWords));
      std::vector<std::string> words(static_cast<size_t>(options.sentence_words), word);
      words.push_back(".");
      doc.push_back(Join(words));
    }
    docs.push_back(std::move(doc));
  }
  return docs;
}

std::vector<NerSentence> NerCorpus(int sentences, uint64_t seed) {
  Rng rng(seed);
  std::vector<NerSentence> out;
  for (int s = 0; s < sentences; ++s) {
    NerSentence sentence;
    auto outside = [&](const std::string& w) {
      sentence.words.push_back(w);
      sentence.tags.push_back("O");
    };
    const int entities = Between(rng, 0, 3);
    outside(Filler(rng));
    for (int e = 0; e < entities; ++e) {
      for (int i = Between(rng, 0, 3); i > 0; --i) outside(Filler(rng));
      if (rng.Uniform() < 0.5) {
        std::string word = ContentWord(Pick(rng, kChemicalBegin, kChemicalEnd));
        if (rng.Uniform() < 0.3) word += "ol";
        sentence.words.push_back(word);
        sentence.tags.push_back("B-Chemical");
      } else {
        sentence.words.push_back(ContentWord(Pick(rng, kDiseaseBegin, kDiseaseEnd)));
        sentence.tags.push_back("B-Disease");
        if (rng.Uniform() < 0.6) {
          sentence.words.push_back(ContentWord(Pick(rng, kModifierBegin, kModifierEnd)));
          sentence.tags.push_back("I-Disease");
        }
      }
    }
    for (int i = Between(rng, 1, 3); i > 0; --i) outside(Filler(rng));
    outside(".");
    out.push_back(std::move(sentence));
  }
  return out;
}

RelationLabels ReLabels() { return RelationLabels::Chemprot(); }

std::vector<ReExample> ReCorpus(int examples, uint64_t seed) {
  Rng rng(seed);
  const RelationLabels labels = ReLabels();
  std::vector<ReExample> out;
  for (int e = 0; e < examples; ++e) {
    std::vector<std::string> words;
    const int n = Between(rng, 6, 12);
    for (int i = 0; i < n; ++i) words.push_back(Filler(rng));
    ReExample ex;
    ex.id = "r" + std::to_string(e);
    if (rng.Uniform() < 0.4) {
      ex.label = labels.negative;
    } else {
      const int cls = Pick(rng, 0, kTriggerEnd - kTriggerBegin);
      ex.label = labels.positive.at(static_cast<size_t>(cls));
      words[static_cast<size_t>(Pick(rng, 1, n))] = ContentWord(kTriggerBegin + cls);
    }
    words.push_back(".");
    ex.sentence = Join(words);
    out.push_back(std::move(ex));
  }
  return out;
}

std::vector<QaQuestion> QaCorpus(int questions, uint64_t seed, const QaOptions& options) {
  Rng rng(seed);
  std::vector<QaQuestion> out;
  for (int q = 0; q < questions; ++q) {
    const std::string answer = ContentWord(Pick(rng, kAnswerHeadBegin, kAnswerHeadEnd)) + " " +
                               ContentWord(Pick(rng, kAnswerTailBegin, kAnswerTailEnd));
    const std::string asked = rng.Uniform() < 0.5 ? "code" : "name";

    std::vector<std::string> words;
    AppendFillerSentences(words, Between(rng, options.filler_words_before,
                                         options.filler_words_before + 20), rng);
    // Character offsets are resolved after joining.
    words.insert(words.end(), {"the", asked, "is", answer, "."});
    AppendFillerSentences(words, Between(rng, options.filler_words_after,
                                         options.filler_words_after + 10), rng);
    const std::string context = Join(words);

    const std::string marker = "the " + asked + " is " + answer;
    const size_t at = context.find(marker);
    if (at == std::string::npos) throw std::logic_error("toy QA answer not found");

    QaQuestion question;
    question.id = "q" + std::to_string(q);
    question.question = "what is the " + asked + "?";
    QaContext ctx;
    ctx.pair_id = question.id;
    ctx.text = context;
    ctx.answers.push_back({answer, static_cast<int64_t>(at + marker.size() - answer.size())});
    question.contexts.push_back(std::move(ctx));
    question.synonyms.push_back(answer);
    out.push_back(std::move(question));
  }
  return out;
}

void WriteSquadJson(const fs::path& path, const std::vector<QaQuestion>& questions) {
  nlohmann::json paragraphs = nlohmann::json::array();
  for (const auto& q : questions) {
    for (const auto& c : q.contexts) {
      nlohmann::json answers = nlohmann::json::array();
      for (const auto& a : c.answers) {
        answers.push_back({{"text", a.text}, {"answer_start", a.char_start}});
      }
      paragraphs.push_back(
          {{"context", c.text},
           {"qas", nlohmann::json::array(
                       {{{"id", c.pair_id}, {"question", q.question}, {"answers", answers}}})}});
    }
  }
  nlohmann::json root = {
      {"version", "1.1"},
      {"data", nlohmann::json::array({{{"title", "toy"}, {"paragraphs", paragraphs}}})}};
  OpenForWrite(path) << root.dump() << '\n';
}

void WriteToyData(const fs::path& dir, uint64_t seed) {
  fs::create_directories(dir / "corpus");
  fs::create_directories(dir / "ner");
  fs::create_directories(dir / "re");
  fs::create_directories(dir / "qa");
  MakeVocabulary().Save(dir / "vocab.txt");
  {
    std::ofstream out = OpenForWrite(dir / "corpus" / "part-0.txt");
    for (const auto& doc : PretrainCorpus(Rng::Derive(seed, 1))) {
      for (const auto& sentence : doc) out << sentence << '\n';
      out << '\n';
    }
  }
  WriteConll(dir / "ner" / "train.tsv", NerCorpus(1000, Rng::Derive(seed, 2)));
  WriteConll(dir / "ner" / "test.tsv", NerCorpus(300, Rng::Derive(seed, 3)));
  for (const char* split : {"train", "test"}) {
    const bool train = std::string(split) == "train";
    std::ofstream out = OpenForWrite(dir / "re" / (std::string(split) + ".tsv"));
    for (const auto& ex : ReCorpus(train ? 800 : 200, Rng::Derive(seed, train ? 4 : 5))) {
      out << ex.id << '\t' << ex.sentence << '\t' << ex.label << '\n';
    }
  }
  WriteSquadJson(dir / "qa" / "train.json", QaCorpus(600, Rng::Derive(seed, 6)));
  WriteSquadJson(dir / "qa" / "test.json", QaCorpus(100, Rng::Derive(seed, 7)));
}

}  // namespace biortd::toy

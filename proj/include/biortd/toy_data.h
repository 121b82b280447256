// SPDX-License-Identifier: Apache-2.0
//
// Synthetic corpora for desk-scale runs over a fixed 200-token vocabulary:
//
//   pretraining  each sentence repeats one random content word, so a
//                replaced token is the odd one out among its neighbours
//   NER          Chemical entities from one lexicon (sometimes with a
//                suffix piece), Disease entities of a head word plus an
//                optional modifier
//   RE           the relation class is signalled by a trigger word
//   QA           long filler contexts holding "the code is X Y ." (or
//                "the name is") far from the start, X and Y drawn from
//                separate word lists; the question asks for that key

#ifndef BIORTD_TOY_DATA_H_
#define BIORTD_TOY_DATA_H_

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "biortd/datasets.h"
#include "biortd/rtd.h"
#include "biortd/tokenizer.h"

namespace biortd::toy {

inline constexpr int kVocabSize = 200;
inline constexpr int kContentWords = 170;

Vocabulary MakeVocabulary();
// Content word i (three lowercase letters), 0 <= i < kContentWords.
const std::string& ContentWord(int i);

struct PretrainOptions {
  int documents = 2000;
  int sentences = 5;       // per document
  int sentence_words = 8;  // copies of the sentence's word
};

std::vector<Document> PretrainCorpus(uint64_t seed, const PretrainOptions& options = {});

std::vector<NerSentence> NerCorpus(int sentences, uint64_t seed);

RelationLabels ReLabels();
std::vector<ReExample> ReCorpus(int examples, uint64_t seed);

struct QaOptions {
  int filler_words_before = 60;  // minimum words ahead of the first key sentence
  int filler_words_after = 20;
};

std::vector<QaQuestion> QaCorpus(int questions, uint64_t seed, const QaOptions& options = {});

// Writes vocab.txt, corpus/part-0.txt, ner/{train,test}.tsv,
// re/{train,test}.tsv and qa/{train,test}.json under `dir`.
void WriteToyData(const std::filesystem::path& dir, uint64_t seed);

// SQuAD-layout JSON for a question list.
void WriteSquadJson(const std::filesystem::path& path,
                    const std::vector<QaQuestion>& questions);

}  // namespace biortd::toy

#endif  // BIORTD_TOY_DATA_H_

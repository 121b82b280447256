// SPDX-License-Identifier: Apache-2.0

#include "biortd/tokenizer.h"

#include <fstream>
#include <stdexcept>

namespace biortd {

namespace {

bool IsAsciiSpace(unsigned char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' ||
         c == '\f';
}

bool IsAsciiPunct(unsigned char c) {
  return (c >= 33 && c <= 47) || (c >= 58 && c <= 64) ||
         (c >= 91 && c <= 96) || (c >= 123 && c <= 126);
}

char AsciiLower(unsigned char c) {
  return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a')
                                : static_cast<char>(c);
}

}  // namespace

Vocabulary Vocabulary::FromTokens(std::vector<std::string> tokens) {
  Vocabulary vocab;
  vocab.index_.reserve(tokens.size());
  for (size_t i = 0; i < tokens.size(); ++i) {
    auto [it, inserted] =
        vocab.index_.emplace(tokens[i], static_cast<int32_t>(i));
    if (!inserted) {
      throw std::invalid_argument("duplicate vocabulary token '" + tokens[i] +
                                  "' at line " + std::to_string(i + 1));
    }
  }
  vocab.tokens_ = std::move(tokens);
  auto special = [&](std::string_view name) {
    auto id = vocab.Find(name);
    if (!id) {
      throw std::invalid_argument("vocabulary lacks special token " +
                                  std::string(name));
    }
    return *id;
  };
  vocab.pad_ = special(kPadToken);
  vocab.unk_ = special(kUnkToken);
  vocab.cls_ = special(kClsToken);
  vocab.sep_ = special(kSepToken);
  vocab.mask_ = special(kMaskToken);
  return vocab;
}

Vocabulary Vocabulary::Load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open vocabulary " + path.string());
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    tokens.push_back(line);
  }
  return FromTokens(std::move(tokens));
}

void Vocabulary::Save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write vocabulary " + path.string());
  for (const auto& t : tokens_) out << t << '\n';
}

std::optional<int32_t> Vocabulary::Find(std::string_view token) const {
  auto it = index_.find(token);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

int32_t Vocabulary::IdOrUnk(std::string_view token) const {
  return Find(token).value_or(unk_);
}

bool Vocabulary::IsSpecial(int32_t id) const {
  return id == pad_ || id == unk_ || id == cls_ || id == sep_ || id == mask_;
}

std::string Normalize(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool pending_space = false;
  for (unsigned char c : text) {
    // Every byte of a multi-byte UTF-8 sequence is >= 0x80, so dropping those
    // bytes removes exactly the non-ASCII code points.
    if (c >= 0x80) continue;
    if (IsAsciiSpace(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) {
      out.push_back(' ');
      pending_space = false;
    }
    out.push_back(AsciiLower(c));
  }
  return out;
}

std::vector<WordSpan> PreTokenizeWithOffsets(std::string_view text) {
  std::vector<WordSpan> words;
  size_t i = 0;
  while (i < text.size()) {
    const auto c = static_cast<unsigned char>(text[i]);
    if (IsAsciiSpace(c)) {
      ++i;
      continue;
    }
    if (IsAsciiPunct(c)) {
      words.push_back({std::string(1, text[i]), i, i + 1});
      ++i;
      continue;
    }
    const size_t begin = i;
    while (i < text.size()) {
      const auto d = static_cast<unsigned char>(text[i]);
      if (IsAsciiSpace(d) || IsAsciiPunct(d)) break;
      ++i;
    }
    words.push_back({std::string(text.substr(begin, i - begin)), begin, i});
  }
  return words;
}

std::vector<std::string> PreTokenize(std::string_view text) {
  std::vector<std::string> out;
  for (auto& w : PreTokenizeWithOffsets(text)) out.push_back(std::move(w.text));
  return out;
}

std::vector<std::string> WordPiece(std::string_view word,
                                   const Vocabulary& vocab, size_t max_chars) {
  if (word.empty()) return {};
  const std::string unk(kUnkToken);
  if (word.size() > max_chars) return {unk};
  std::vector<std::string> pieces;
  std::string candidate;
  size_t start = 0;
  while (start < word.size()) {
    size_t end = word.size();
    bool found = false;
    while (start < end) {
      candidate.clear();
      if (start > 0) candidate.append(kContinuationPrefix);
      candidate.append(word.substr(start, end - start));
      if (vocab.Find(candidate)) {
        found = true;
        break;
      }
      --end;
    }
    if (!found) return {unk};
    pieces.push_back(candidate);
    start = end;
  }
  return pieces;
}

std::vector<std::vector<std::string>> TokenizeWords(
    std::span<const std::string> words, const Vocabulary& vocab) {
  std::vector<std::vector<std::string>> out;
  out.reserve(words.size());
  for (const auto& w : words) {
    auto pieces = WordPiece(Normalize(w), vocab);
    if (pieces.empty()) pieces.emplace_back(kUnkToken);
    out.push_back(std::move(pieces));
  }
  return out;
}

namespace {

struct Piece {
  std::string token;
  int32_t word;
};

std::vector<Piece> Flatten(std::span<const std::string> words,
                           const Vocabulary& vocab, int32_t word_offset) {
  std::vector<Piece> out;
  auto per_word = TokenizeWords(words, vocab);
  for (size_t w = 0; w < per_word.size(); ++w) {
    for (auto& p : per_word[w]) {
      out.push_back({std::move(p), word_offset + static_cast<int32_t>(w)});
    }
  }
  return out;
}

void Push(Encoding& enc, const Vocabulary& vocab, std::string_view token,
          int32_t segment, int32_t word) {
  enc.ids.push_back(vocab.IdOrUnk(token));
  enc.tokens.emplace_back(token);
  enc.segment_ids.push_back(segment);
  enc.attention_mask.push_back(1);
  enc.word_map.push_back(word);
}

}  // namespace

Encoding Encode(std::span<const std::string> words_a,
                std::optional<std::span<const std::string>> words_b,
                const Vocabulary& vocab, int max_len) {
  if (words_a.empty()) throw std::invalid_argument("empty input sequence");
  if (max_len < 3) throw std::invalid_argument("max_len must be at least 3");
  std::vector<Piece> a = Flatten(words_a, vocab, 0);
  std::vector<Piece> b;
  if (words_b) {
    b = Flatten(*words_b, vocab, static_cast<int32_t>(words_a.size()));
    const size_t capacity = static_cast<size_t>(max_len) - 3;
    while (a.size() + b.size() > capacity) {
      if (a.size() > b.size()) {
        a.pop_back();
      } else {
        b.pop_back();
      }
    }
  } else if (a.size() > static_cast<size_t>(max_len) - 2) {
    a.resize(static_cast<size_t>(max_len) - 2);
  }

  Encoding enc;
  Push(enc, vocab, kClsToken, 0, kNoWord);
  for (const auto& p : a) Push(enc, vocab, p.token, 0, p.word);
  Push(enc, vocab, kSepToken, 0, kNoWord);
  if (words_b) {
    for (const auto& p : b) Push(enc, vocab, p.token, 1, p.word);
    Push(enc, vocab, kSepToken, 1, kNoWord);
  }
  while (enc.ids.size() < static_cast<size_t>(max_len)) {
    enc.ids.push_back(vocab.pad_id());
    enc.tokens.emplace_back(kPadToken);
    enc.segment_ids.push_back(0);
    enc.attention_mask.push_back(0);
    enc.word_map.push_back(kNoWord);
  }
  return enc;
}

}  // namespace biortd

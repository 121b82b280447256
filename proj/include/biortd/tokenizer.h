// SPDX-License-Identifier: Apache-2.0
//
// Corpus text normalization, pre-tokenization and WordPiece subword
// tokenization against a fixed vocabulary.

#ifndef BIORTD_TOKENIZER_H_
#define BIORTD_TOKENIZER_H_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace biortd {

inline constexpr std::string_view kPadToken = "[PAD]";
inline constexpr std::string_view kUnkToken = "[UNK]";
inline constexpr std::string_view kClsToken = "[CLS]";
inline constexpr std::string_view kSepToken = "[SEP]";
inline constexpr std::string_view kMaskToken = "[MASK]";
inline constexpr std::string_view kContinuationPrefix = "##";
inline constexpr size_t kMaxWordChars = 100;

// Token <-> id mapping. Ids are the dense line indices of the vocabulary file.
class Vocabulary {
 public:
  // Throws std::invalid_argument on duplicates or missing special tokens.
  static Vocabulary FromTokens(std::vector<std::string> tokens);
  // One token per line, id = zero-based line index.
  static Vocabulary Load(const std::filesystem::path& path);
  void Save(const std::filesystem::path& path) const;

  int32_t size() const { return static_cast<int32_t>(tokens_.size()); }
  std::optional<int32_t> Find(std::string_view token) const;
  // Id of token, or the unk id.
  int32_t IdOrUnk(std::string_view token) const;
  const std::string& Token(int32_t id) const { return tokens_.at(static_cast<size_t>(id)); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  int32_t pad_id() const { return pad_; }
  int32_t unk_id() const { return unk_; }
  int32_t cls_id() const { return cls_; }
  int32_t sep_id() const { return sep_; }
  int32_t mask_id() const { return mask_; }
  bool IsSpecial(int32_t id) const;

  static bool IsContinuation(std::string_view token) {
    return token.starts_with(kContinuationPrefix);
  }

 private:
  struct StringHash {
    using is_transparent = void;
    size_t operator()(std::string_view s) const {
      return std::hash<std::string_view>{}(s);
    }
  };

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int32_t, StringHash, std::equal_to<>> index_;
  int32_t pad_ = -1, unk_ = -1, cls_ = -1, sep_ = -1, mask_ = -1;
};

// Sentinel in Encoding::word_map for special and padding positions.
inline constexpr int32_t kNoWord = -1;

struct Encoding {
  std::vector<int32_t> ids;
  std::vector<std::string> tokens;
  std::vector<int32_t> segment_ids;
  std::vector<int32_t> attention_mask;
  // Source word per position. For pairs, words of the second sequence are
  // numbered after those of the first.
  std::vector<int32_t> word_map;

  size_t size() const { return ids.size(); }
};

// Lowercases, drops every code point outside \x00-\x7F (and malformed
// UTF-8), collapses whitespace runs and trims.
std::string Normalize(std::string_view text);

struct WordSpan {
  std::string text;
  size_t begin = 0;  // byte offsets into the source text
  size_t end = 0;
};

// Splits on whitespace and makes every ASCII punctuation character its own
// word. Offsets refer to the input as given.
std::vector<WordSpan> PreTokenizeWithOffsets(std::string_view text);
std::vector<std::string> PreTokenize(std::string_view text);

// Greedy longest-match-first WordPiece. Words longer than max_chars or with
// an unmatchable remainder become the single unk token.
std::vector<std::string> WordPiece(std::string_view word,
                                   const Vocabulary& vocab,
                                   size_t max_chars = kMaxWordChars);

// [CLS] A [SEP] or [CLS] A [SEP] B [SEP], padded to max_len. Each word is
// normalized before WordPiece. Single sequences are tail-truncated; pairs
// that do not fit are truncated longest-first.
Encoding Encode(std::span<const std::string> words_a,
                std::optional<std::span<const std::string>> words_b,
                const Vocabulary& vocab, int max_len);

// Pieces of every word after normalization, one list per word.
std::vector<std::vector<std::string>> TokenizeWords(
    std::span<const std::string> words, const Vocabulary& vocab);

}  // namespace biortd

#endif  // BIORTD_TOKENIZER_H_

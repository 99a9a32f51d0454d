#pragma once

// Text cleaning, vocabularies and fixed-length id sequences.

#include <algorithm>
#include <cstdint>
#include <istream>
#include <ostream>
#include <sstream>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/locid.h>
#include <unicode/unistr.h>

#include "cops/error.hpp"
#include "cops/utf8.hpp"

namespace cops {

enum class TextKind { Message, Url };
enum class VocabLevel { Word, Char };

inline constexpr std::string_view kPadToken = "<pad>";
inline constexpr std::string_view kOovToken = "[oov]";
inline constexpr std::string_view kNumToken = "<num>";
inline constexpr std::string_view kNumMaskDisplay = "***************";

struct PreprocessConfig {
  TextKind kind = TextKind::Message;
  std::size_t word_seq_len = 50;
  std::size_t char_seq_len = 180;
  std::size_t word_vocab_size = 8427;
  std::size_t char_vocab_size = 80;
  bool mask_long_numbers = true;

  static PreprocessConfig messages() { return {}; }

  static PreprocessConfig urls() {
    return {TextKind::Url, 20, 200, 30000, 31, false};
  }

  void validate() const {
    require(word_seq_len > 0 && char_seq_len > 0, ErrorCode::InvalidConfig, "sequence lengths must be > 0");
    // PAD and OOV alone make 2 entries; a usable vocabulary needs at least one more.
    require(word_vocab_size > 2 && char_vocab_size > 2, ErrorCode::InvalidConfig,
            "vocabulary sizes must exceed the two reserved ids");
  }

  friend bool operator==(const PreprocessConfig&, const PreprocessConfig&) = default;
};

namespace detail {

inline std::string to_utf8(const icu::UnicodeString& u) {
  std::string out;
  u.toUTF8String(out);
  return out;
}

inline bool is_url_like(std::string_view chunk) {
  return chunk.starts_with("http://") || chunk.starts_with("https://") || chunk.starts_with("www.");
}

inline bool is_punct(UChar32 c) {
  return u_ispunct(c) || (U_GET_GC_MASK(c) & U_GC_S_MASK) != 0;
}

/// Splits one whitespace-free chunk into punctuation runs and word runs;
/// inside word runs, digit runs of length >= 7 become the number token.
inline void split_chunk(const icu::UnicodeString& chunk, bool mask_numbers,
                        std::vector<std::string>& out) {
  const auto starts_with_at = [&](int32_t pos, std::string_view lit) {
    const auto u = icu::UnicodeString::fromUTF8(icu::StringPiece(lit.data(), static_cast<int32_t>(lit.size())));
    return chunk.compare(pos, u.length(), u) == 0;
  };
  icu::UnicodeString run;
  bool run_punct = false;
  const auto flush = [&] {
    if (run.isEmpty()) return;
    if (run_punct || !mask_numbers) {
      out.push_back(to_utf8(run));
      run.remove();
      return;
    }
    // Word run: carve out long digit runs.
    icu::UnicodeString piece;
    int32_t i = 0;
    while (i < run.length()) {
      const UChar32 c = run.char32At(i);
      if (u_isdigit(c)) {
        int32_t j = i;
        int32_t n = 0;
        while (j < run.length() && u_isdigit(run.char32At(j))) {
          j = run.moveIndex32(j, 1);
          ++n;
        }
        if (n >= 7) {
          if (!piece.isEmpty()) {
            out.push_back(to_utf8(piece));
            piece.remove();
          }
          out.emplace_back(kNumToken);
        } else {
          piece.append(run, i, j - i);
        }
        i = j;
      } else {
        piece.append(c);
        i = run.moveIndex32(i, 1);
      }
    }
    if (!piece.isEmpty()) out.push_back(to_utf8(piece));
    run.remove();
  };

  int32_t i = 0;
  while (i < chunk.length()) {
    bool matched = false;
    for (auto lit : {kNumToken, kOovToken}) {
      if (starts_with_at(i, lit)) {
        flush();
        out.emplace_back(lit);
        i += static_cast<int32_t>(lit.size());  // both literals are ASCII
        matched = true;
        break;
      }
    }
    if (matched) continue;
    const UChar32 c = chunk.char32At(i);
    const bool punct = is_punct(c);
    if (!run.isEmpty() && punct != run_punct) flush();
    run_punct = punct;
    run.append(c);
    i = chunk.moveIndex32(i, 1);
  }
  flush();
}

inline icu::UnicodeString normalize_lower(std::string_view raw) {
  const std::string valid = utf8::sanitize(raw);
  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2* nfc = icu::Normalizer2::getNFCInstance(status);
  require(U_SUCCESS(status), ErrorCode::InvalidArgument, "ICU NFC normalizer unavailable");
  icu::UnicodeString u = icu::UnicodeString::fromUTF8(icu::StringPiece(valid.data(), static_cast<int32_t>(valid.size())));
  u = nfc->normalize(u, status);
  u.toLower(icu::Locale::getRoot());
  u = nfc->normalize(u, status);
  require(U_SUCCESS(status), ErrorCode::InvalidArgument, "NFC normalization failed");
  return u;
}

inline std::string join(std::span<const std::string> tokens, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out.append(sep);
    out.append(tokens[i]);
  }
  return out;
}

}  // namespace detail

/// NFC, lowercase, whitespace collapsed to single spaces. Messages also get
/// punctuation runs split into their own tokens and (optionally) digit runs
/// of 7+ replaced by `<num>`; URL-looking chunks inside messages, and URL
/// inputs as a whole, are only lowercased. Idempotent.
inline std::string clean_text(std::string_view raw, const PreprocessConfig& config) {
  const icu::UnicodeString u = detail::normalize_lower(raw);
  std::vector<std::string> tokens;
  icu::UnicodeString chunk;
  const auto flush_chunk = [&] {
    if (chunk.isEmpty()) return;
    const std::string chunk8 = detail::to_utf8(chunk);
    if (config.kind == TextKind::Url || detail::is_url_like(chunk8)) {
      tokens.push_back(chunk8);
    } else {
      detail::split_chunk(chunk, config.mask_long_numbers, tokens);
    }
    chunk.remove();
  };
  for (int32_t i = 0; i < u.length(); i = u.moveIndex32(i, 1)) {
    const UChar32 c = u.char32At(i);
    if (u_isUWhiteSpace(c) || u_iscntrl(c)) {
      flush_chunk();
    } else {
      chunk.append(c);
    }
  }
  flush_chunk();
  return detail::join(tokens, " ");
}

/// Word-level tokens of a cleaned string. URL "words" are the segments
/// between `://`, `/`, `.`, `?`, `&`, `=`, `-`, `_`.
inline std::vector<std::string> word_tokens(std::string_view cleaned, TextKind kind) {
  std::vector<std::string> out;
  std::string cur;
  const auto push = [&] {
    if (!cur.empty()) out.push_back(std::move(cur));
    cur.clear();
  };
  if (kind == TextKind::Message) {
    for (char ch : cleaned) {
      if (ch == ' ') push();
      else cur.push_back(ch);
    }
    push();
    return out;
  }
  for (std::size_t i = 0; i < cleaned.size(); ++i) {
    const char ch = cleaned[i];
    if (cleaned.substr(i, 3) == "://") {
      push();
      i += 2;
      continue;
    }
    switch (ch) {
      case '/': case '.': case '?': case '&': case '=': case '-': case '_': case ' ':
        push();
        break;
      default:
        cur.push_back(ch);
    }
  }
  push();
  return out;
}

inline std::vector<std::string> char_tokens(std::string_view cleaned) {
  return utf8::code_points(cleaned);
}

inline std::vector<std::string> tokenize(std::string_view cleaned, VocabLevel level, TextKind kind) {
  return level == VocabLevel::Word ? word_tokens(cleaned, kind) : char_tokens(cleaned);
}

/// Bijective token<->id map. Id 0 is PAD, id 1 is OOV; the remaining ids are
/// contiguous and ordered by descending corpus frequency.
class Vocabulary {
 public:
  static constexpr std::uint32_t kPad = 0;
  static constexpr std::uint32_t kOov = 1;

  Vocabulary(VocabLevel level = VocabLevel::Word, std::size_t max_size = 2)
      : level_(level), max_size_(std::max<std::size_t>(max_size, 2)) {
    add(std::string(kPadToken));
    add(std::string(kOovToken));
  }

  VocabLevel level() const { return level_; }
  std::size_t size() const { return id_to_token_.size(); }
  std::size_t max_size() const { return max_size_; }

  bool contains(std::string_view token) const { return token_to_id_.contains(std::string(token)); }

  std::uint32_t id(std::string_view token) const {
    const auto it = token_to_id_.find(std::string(token));
    return it == token_to_id_.end() ? kOov : it->second;
  }

  const std::string& token(std::uint32_t id) const {
    require(id < id_to_token_.size(), ErrorCode::IdOutOfRange,
            "token id " + std::to_string(id) + " >= vocabulary size " + std::to_string(size()));
    return id_to_token_[id];
  }

  const std::vector<std::string>& tokens() const { return id_to_token_; }

  /// Appends a token; returns false once max_size is reached or if present.
  bool add(std::string token) {
    if (id_to_token_.size() >= max_size_ || token_to_id_.contains(token)) return false;
    token_to_id_.emplace(token, static_cast<std::uint32_t>(id_to_token_.size()));
    id_to_token_.push_back(std::move(token));
    return true;
  }

  void save(std::ostream& out) const {
    out << "COPSVOCAB v1 " << (level_ == VocabLevel::Word ? "WORD" : "CHAR") << ' ' << size() << '\n';
    for (std::size_t i = 0; i < id_to_token_.size(); ++i) out << id_to_token_[i] << '\t' << i << '\n';
  }

  std::string to_string() const {
    std::ostringstream os;
    save(os);
    return os.str();
  }

  static Vocabulary load(std::istream& in) {
    std::string magic, version, level;
    std::size_t n = 0;
    in >> magic >> version >> level >> n;
    require(in.good() && magic == "COPSVOCAB", ErrorCode::CorruptBundle, "not a vocabulary file");
    require(version == "v1", ErrorCode::UnsupportedVersion, "vocabulary version " + version);
    require(level == "WORD" || level == "CHAR", ErrorCode::CorruptBundle, "bad vocabulary level " + level);
    in.ignore(1);  // newline after header
    Vocabulary v(level == "WORD" ? VocabLevel::Word : VocabLevel::Char, n);
    v.token_to_id_.clear();
    v.id_to_token_.clear();
    std::string line;
    for (std::size_t i = 0; i < n; ++i) {
      require(static_cast<bool>(std::getline(in, line)), ErrorCode::CorruptBundle, "vocabulary truncated");
      const auto tab = line.rfind('\t');
      require(tab != std::string::npos, ErrorCode::CorruptBundle, "vocabulary line without tab");
      const auto id = std::stoul(line.substr(tab + 1));
      require(id == i, ErrorCode::CorruptBundle, "vocabulary ids not contiguous");
      v.add(line.substr(0, tab));
    }
    require(v.size() == n && v.id_to_token_[kPad] == kPadToken && v.id_to_token_[kOov] == kOovToken,
            ErrorCode::CorruptBundle, "vocabulary missing reserved tokens or has duplicates");
    return v;
  }

  static Vocabulary from_string(const std::string& text) {
    std::istringstream is(text);
    return load(is);
  }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.level_ == b.level_ && a.id_to_token_ == b.id_to_token_;
  }

 private:
  VocabLevel level_;
  std::size_t max_size_;
  std::unordered_map<std::string, std::uint32_t> token_to_id_;
  std::vector<std::string> id_to_token_;
};

/// Ranks tokens by descending frequency, ties lexicographic, and keeps the
/// first `max_size - 2` after PAD and OOV.
inline Vocabulary build_vocab(std::span<const std::string> corpus, VocabLevel level, std::size_t max_size,
                              TextKind kind = TextKind::Message) {
  require(!corpus.empty(), ErrorCode::EmptyCorpus, "cannot build a vocabulary from an empty corpus");
  std::unordered_map<std::string, std::size_t> freq;
  for (const auto& text : corpus) {
    for (auto& tok : tokenize(text, level, kind)) ++freq[std::move(tok)];
  }
  freq.erase(std::string(kPadToken));
  freq.erase(std::string(kOovToken));
  std::vector<std::pair<std::string, std::size_t>> ranked(freq.begin(), freq.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  Vocabulary vocab(level, max_size);
  for (auto& [tok, n] : ranked) {
    if (!vocab.add(tok)) break;
  }
  return vocab;
}

struct TokenSequence {
  std::vector<std::uint32_t> ids;
  VocabLevel level = VocabLevel::Word;
  std::size_t true_length = 0;

  friend bool operator==(const TokenSequence&, const TokenSequence&) = default;
};

/// Maps tokens to ids (unknown -> OOV), truncates from the end and
/// post-pads with PAD to exactly `seq_len` entries.
inline TokenSequence encode_and_pad(std::string_view cleaned, const Vocabulary& vocab, std::size_t seq_len,
                                    TextKind kind = TextKind::Message) {
  require(seq_len > 0, ErrorCode::InvalidArgument, "seq_len must be > 0");
  const auto toks = tokenize(cleaned, vocab.level(), kind);
  TokenSequence seq;
  seq.level = vocab.level();
  seq.true_length = std::min(toks.size(), seq_len);
  seq.ids.assign(seq_len, Vocabulary::kPad);
  for (std::size_t i = 0; i < seq.true_length; ++i) seq.ids[i] = vocab.id(toks[i]);
  return seq;
}

/// Surface tokens of a sequence, PAD dropped, `<num>` and `[oov]` kept.
inline std::vector<std::string> decode_tokens(const TokenSequence& seq, const Vocabulary& vocab) {
  std::vector<std::string> out;
  for (auto id : seq.ids) {
    if (id != Vocabulary::kPad) out.push_back(vocab.token(id));
  }
  return out;
}

/// Display form: words joined by single spaces (characters concatenated),
/// PAD dropped, OOV as "[oov]" and the number token as a run of asterisks.
inline std::string decode_sequence(const TokenSequence& seq, const Vocabulary& vocab) {
  auto toks = decode_tokens(seq, vocab);
  for (auto& t : toks) {
    if (t == kNumToken) t = std::string(kNumMaskDisplay);
  }
  return detail::join(toks, vocab.level() == VocabLevel::Word ? " " : "");
}

/// Replaces `<num>` tokens in a cleaned string with the asterisk mask.
inline std::string render_display(std::string_view cleaned) {
  std::string out(cleaned);
  for (std::size_t pos; (pos = out.find(kNumToken)) != std::string::npos;) {
    out.replace(pos, kNumToken.size(), kNumMaskDisplay);
  }
  return out;
}

}  // namespace cops

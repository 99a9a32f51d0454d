#pragma once

#include <algorithm>
#include <span>
#include <string>
#include <vector>

#include "cops/corpus.hpp"
#include "cops/error.hpp"
#include "cops/textprep.hpp"

namespace cops {

struct EncodedText {
  std::string cleaned;
  TokenSequence words;
  TokenSequence chars;
};

/// Preprocessing config plus the two vocabularies; fitted on a training split
/// and then applied unchanged to everything else.
class Featurizer {
 public:
  Featurizer() = default;
  Featurizer(PreprocessConfig prep, Vocabulary words, Vocabulary chars)
      : prep_(std::move(prep)), words_(std::move(words)), chars_(std::move(chars)) {
    prep_.validate();
    require(words_.level() == VocabLevel::Word && chars_.level() == VocabLevel::Char, ErrorCode::VocabularyMismatch,
            "featurizer needs a word and a char vocabulary");
  }

  static Featurizer fit(std::span<const LabeledRecord> train, const PreprocessConfig& prep) {
    prep.validate();
    require(!train.empty(), ErrorCode::EmptyCorpus, "cannot fit a featurizer on no records");
    std::vector<std::string> cleaned;
    cleaned.reserve(train.size());
    for (const auto& r : train) cleaned.push_back(clean_text(r.text, prep));
    return Featurizer(prep, build_vocab(cleaned, VocabLevel::Word, prep.word_vocab_size, prep.kind),
                      build_vocab(cleaned, VocabLevel::Char, prep.char_vocab_size, prep.kind));
  }

  const PreprocessConfig& prep() const { return prep_; }
  const Vocabulary& words() const { return words_; }
  const Vocabulary& chars() const { return chars_; }

  EncodedText encode(std::string_view raw) const { return encode_cleaned(clean_text(raw, prep_)); }

  EncodedText encode_cleaned(std::string cleaned) const {
    EncodedText e;
    e.words = encode_and_pad(cleaned, words_, prep_.word_seq_len, prep_.kind);
    e.chars = encode_and_pad(cleaned, chars_, prep_.char_seq_len, prep_.kind);
    e.cleaned = std::move(cleaned);
    return e;
  }

  std::vector<EncodedText> encode_all(std::span<const LabeledRecord> records) const {
    std::vector<EncodedText> out;
    out.reserve(records.size());
    for (const auto& r : records) out.push_back(encode(r.text));
    return out;
  }

 private:
  PreprocessConfig prep_ = PreprocessConfig::messages();
  Vocabulary words_{VocabLevel::Word};
  Vocabulary chars_{VocabLevel::Char};
};

/// Time-major id matrices for one minibatch. The word and char segments are
/// trimmed to the longest true length in the batch (at least one step); the
/// recurrent layers mask padding, so trimming does not change any result.
struct Batch {
  std::size_t size = 0;
  std::size_t word_steps = 0;
  std::size_t char_steps = 0;
  std::vector<std::uint32_t> word_ids;  // [word_steps * size]
  std::vector<std::uint32_t> char_ids;  // [char_steps * size]
  std::vector<std::size_t> word_len;
  std::vector<std::size_t> char_len;
  std::vector<std::uint32_t> targets;   // full-length word ids [word_seq_len * size], generation only
  std::size_t target_steps = 0;
  std::vector<std::size_t> labels;
};

inline Batch make_batch(std::span<const EncodedText> items, std::span<const std::size_t> indices,
                        std::span<const std::size_t> labels = {}, bool with_targets = false) {
  require(!indices.empty(), ErrorCode::InvalidArgument, "empty batch");
  Batch b;
  b.size = indices.size();
  for (auto i : indices) {
    require(i < items.size(), ErrorCode::IdOutOfRange, "batch index out of range");
    b.word_len.push_back(items[i].words.true_length);
    b.char_len.push_back(items[i].chars.true_length);
  }
  b.word_steps = std::max<std::size_t>(1, *std::max_element(b.word_len.begin(), b.word_len.end()));
  b.char_steps = std::max<std::size_t>(1, *std::max_element(b.char_len.begin(), b.char_len.end()));
  b.word_ids.assign(b.word_steps * b.size, Vocabulary::kPad);
  b.char_ids.assign(b.char_steps * b.size, Vocabulary::kPad);
  for (std::size_t k = 0; k < b.size; ++k) {
    const auto& e = items[indices[k]];
    for (std::size_t t = 0; t < b.word_len[k]; ++t) b.word_ids[t * b.size + k] = e.words.ids[t];
    for (std::size_t t = 0; t < b.char_len[k]; ++t) b.char_ids[t * b.size + k] = e.chars.ids[t];
  }
  if (with_targets) {
    b.target_steps = items[indices[0]].words.ids.size();
    b.targets.assign(b.target_steps * b.size, Vocabulary::kPad);
    for (std::size_t k = 0; k < b.size; ++k) {
      const auto& ids = items[indices[k]].words.ids;
      require(ids.size() == b.target_steps, ErrorCode::ShapeMismatch, "word sequences of unequal length");
      for (std::size_t t = 0; t < b.target_steps; ++t) b.targets[t * b.size + k] = ids[t];
    }
  }
  if (!labels.empty()) {
    for (auto i : indices) b.labels.push_back(labels[i]);
  }
  return b;
}

}  // namespace cops

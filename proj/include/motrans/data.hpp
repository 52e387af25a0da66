#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "motrans/metrics.hpp"

namespace motrans {

inline constexpr int kPadId = 0;
inline constexpr int kBosId = 1;
inline constexpr int kEosId = 2;
inline constexpr int kUnkId = 3;
inline constexpr int kReservedTokens = 4;

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class Vocab {
 public:
  // Starts with only the reserved tokens.
  Vocab();

  int add(const std::string& token);
  int id(const std::string& token) const;  // kUnkId when absent
  const std::string& token(int id) const;
  int size() const { return static_cast<int>(tokens_.size()); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  TokenSeq encode(const std::vector<std::string>& words) const;
  std::vector<std::string> decode(const TokenSeq& ids) const;

  friend bool operator==(const Vocab& a, const Vocab& b) { return a.tokens_ == b.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

// Tokens reaching min_frequency, ordered by first appearance.
Vocab build_vocab(const std::vector<std::string>& lines, int min_frequency = 1);

struct SentencePair {
  TokenSeq source;  // raw token ids
  TokenSeq target;  // bos, tokens..., eos
  friend bool operator==(const SentencePair&, const SentencePair&) = default;
};

struct Corpus {
  std::vector<SentencePair> train;
  std::vector<SentencePair> validation;
  Vocab source_vocab;
  Vocab target_vocab;

  std::size_t size() const { return train.size() + validation.size(); }
  // Empty when every id is in range and every target is bos...eos framed.
  std::vector<std::string> problems() const;
};

enum class SyntheticTask { Copy, Reverse, Sort };

SyntheticTask parse_task(const std::string& name);
const char* to_string(SyntheticTask task);
// Target for a source: the transformed tokens framed by bos and eos.
TokenSeq apply_task(SyntheticTask task, const TokenSeq& source);

struct SyntheticSpec {
  SyntheticTask task = SyntheticTask::Copy;
  int pairs = 2000;
  int vocab_size = 16;  // including the reserved ids
  int min_length = 3;
  int max_length = 10;
  std::uint64_t seed = 0;
};

// Distinct sources, split 90/10 into train/validation.
Corpus gen_synthetic(const SyntheticSpec& spec);

struct TsvOptions {
  int min_frequency = 1;
  double validation_fraction = 0.1;  // trailing lines go to validation
};

// One "source<TAB>target" pair per line, whitespace-tokenized. Vocabularies
// come from the training split only.
Corpus load_tsv(const std::filesystem::path& path, const TsvOptions& options = {});

// JSON lines: a header object carrying both vocabularies, then one
// {"split", "src", "tgt"} object per pair.
void save_corpus_cache(const Corpus& corpus, const std::filesystem::path& path);
Corpus load_corpus_cache(const std::filesystem::path& path);

}  // namespace motrans

#ifndef KEHNN_TEXT_H_
#define KEHNN_TEXT_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <istream>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "kehnn/tensor.h"

namespace kehnn {

using TokenId = std::int32_t;

// Token to id table. Ids are dense; 0 is padding and 1 the unknown token.
class Vocabulary {
 public:
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kUnk = 1;
  static constexpr std::string_view kPadToken = "<pad>";
  static constexpr std::string_view kUnkToken = "<unk>";

  Vocabulary();

  // Returns the id of `token`, allocating one if needed. Throws
  // std::logic_error on a frozen vocabulary when the token is new.
  TokenId add(std::string_view token);
  // Id of `token`, or kUnk.
  TokenId lookup(std::string_view token) const;
  std::optional<TokenId> find(std::string_view token) const;
  const std::string& token(TokenId id) const;

  std::size_t size() const { return tokens_.size(); }
  void freeze() { frozen_ = true; }
  bool frozen() const { return frozen_; }
  std::span<const std::string> tokens() const { return tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> ids_;
  bool frozen_ = false;
};

// Lowercases ASCII letters, splits on whitespace and emits every ASCII
// punctuation character other than '_' as its own token.
std::vector<std::string> tokenize(std::string_view text);

struct EmbeddingTable {
  Tensor weights;  // |V| x d, row 0 is zero
  bool trainable = true;

  std::size_t dim() const { return weights.dim(1); }
};

struct EmbeddingCoverage {
  std::size_t file_entries = 0;
  // Vocabulary rows copied from the file, and rows left at random init.
  std::size_t found = 0;
  std::size_t missing = 0;
};

struct LoadedEmbeddings {
  EmbeddingTable table;
  EmbeddingCoverage coverage;
};

// Rows drawn uniformly from [-scale, scale]; the padding row is zero.
EmbeddingTable random_embeddings(const Vocabulary& vocab, std::size_t dim,
                                 std::mt19937_64& rng, double scale = 0.1);

// Reads "token v1 ... vd" lines. Every row starts from random_embeddings,
// then rows for tokens in the file are overwritten with the file values.
LoadedEmbeddings load_embeddings(const std::filesystem::path& path,
                                 const Vocabulary& vocab, std::mt19937_64& rng);
LoadedEmbeddings read_embeddings(std::istream& in, const Vocabulary& vocab,
                                 std::mt19937_64& rng);

struct TokenSequence {
  std::vector<TokenId> ids;  // exactly max_len entries
  std::size_t true_length = 0;
};

// Maps tokens through the vocabulary, keeps the first max_len and pads the
// rest with kPad.
TokenSequence encode_pad(std::span<const std::string> tokens,
                         const Vocabulary& vocab, std::size_t max_len);

struct DatasetRecord {
  int label = 0;
  std::string text_a;
  std::string text_b;
  std::string knowledge_a;
  std::string knowledge_b;
  // Candidate group for ranking data; empty when absent.
  std::string group;
};

class DatasetError : public std::runtime_error {
 public:
  DatasetError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what),
        line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// JSON lines with label, text_a, text_b and optional knowledge_a,
// knowledge_b and group. Blank lines are skipped. When num_classes is given,
// labels outside [0, num_classes) are rejected.
std::vector<DatasetRecord> load_dataset(
    const std::filesystem::path& path,
    std::optional<std::size_t> num_classes = std::nullopt);
std::vector<DatasetRecord> read_dataset(
    std::istream& in, std::optional<std::size_t> num_classes = std::nullopt);

}  // namespace kehnn

#endif  // KEHNN_TEXT_H_

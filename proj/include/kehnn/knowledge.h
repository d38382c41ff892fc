#ifndef KEHNN_KNOWLEDGE_H_
#define KEHNN_KNOWLEDGE_H_

#include <cstddef>
#include <filesystem>
#include <istream>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "kehnn/graph.h"
#include "kehnn/tensor.h"
#include "kehnn/text.h"

namespace kehnn {

// One line of a knowledge definition file: a category or topic key and the
// words that describe it.
struct KnowledgeEntry {
  std::string key;
  std::vector<std::string> words;
};

std::vector<KnowledgeEntry> read_knowledge(std::istream& in);
std::vector<KnowledgeEntry> load_knowledge(const std::filesystem::path& path);

// Knowledge vectors live in embedding space (dimension d). Unknown keys
// resolve to the zero vector.
class KnowledgeTable {
 public:
  KnowledgeTable() = default;
  explicit KnowledgeTable(std::size_t dim) : vectors_({0, dim}) {}

  // Appends a key; its row is `vector` ([1 x d] or [d]).
  void add(std::string key, const Tensor& vector,
           std::vector<std::string> words = {});

  std::optional<std::size_t> index(std::string_view key) const;
  // [1 x d] copy of the key's vector, zero when the key is unknown.
  Tensor lookup(std::string_view key) const;

  std::size_t size() const { return keys_.size(); }
  std::size_t dim() const { return vectors_.rank() == 2 ? vectors_.dim(1) : 0; }
  std::span<const std::string> keys() const { return keys_; }
  const std::vector<std::string>& words(std::size_t i) const { return words_[i]; }

  Tensor& vectors() { return vectors_; }
  const Tensor& vectors() const { return vectors_; }

 private:
  std::vector<std::string> keys_;
  std::vector<std::vector<std::string>> words_;
  std::unordered_map<std::string, std::size_t> index_;
  Tensor vectors_;
};

// Mean of the embedding rows of the in-vocabulary words, as [1 x d]. Words
// missing from the vocabulary are skipped; with none left the result is zero
// and `used` reports 0.
Tensor build_knowledge_vector(std::span<const std::string> words,
                              const Vocabulary& vocab, const Tensor& embeddings,
                              std::size_t* used = nullptr);

// Builds one row per entry by averaging word embeddings. Entries whose words
// are all out of vocabulary get a zero row and are listed in `warnings`.
KnowledgeTable build_knowledge_table(std::span<const KnowledgeEntry> entries,
                                     const Vocabulary& vocab,
                                     const Tensor& embeddings,
                                     std::vector<std::string>* warnings = nullptr);

// k_w = sigmoid(W_k e_w + U_k k) for every row e_w of `words` [L x d] with
// the shared knowledge vector `knowledge` [1 x d]. W_k and U_k are [d x d].
Var knowledge_gate(Var words, Var knowledge, Var w_k, Var u_k);

// gate * words + (1 - gate) * knowledge, row by row. Each output entry lies
// between the corresponding word and knowledge entries.
Var knowledge_enhance(Var words, Var knowledge, Var gate);

}  // namespace kehnn

#endif  // KEHNN_KNOWLEDGE_H_

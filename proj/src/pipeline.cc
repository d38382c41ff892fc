#include "kehnn/pipeline.h"

#include <random>

namespace kehnn {

Vocabulary build_vocabulary(std::span<const DatasetRecord> records,
                            std::span<const KnowledgeEntry> knowledge) {
  Vocabulary vocab;
  for (const auto& r : records) {
    for (const auto& t : tokenize(r.text_a)) vocab.add(t);
    for (const auto& t : tokenize(r.text_b)) vocab.add(t);
  }
  for (const auto& e : knowledge)
    for (const auto& w : e.words) vocab.add(w);
  vocab.freeze();
  return vocab;
}

Model prepare_model(const TrainConfig& config,
                    std::span<const DatasetRecord> train_records,
                    const std::optional<std::filesystem::path>& embeddings,
                    std::span<const KnowledgeEntry> knowledge,
                    std::vector<std::string>* log) {
  config.validate();
  std::mt19937_64 rng(config.seed);
  Vocabulary vocab = build_vocabulary(train_records, knowledge);

  Tensor weights;
  if (embeddings) {
    LoadedEmbeddings loaded = load_embeddings(*embeddings, vocab, rng);
    if (loaded.table.dim() != config.d) {
      throw std::invalid_argument(
          "embedding file has dimension " + std::to_string(loaded.table.dim()) +
          " but config d is " + std::to_string(config.d));
    }
    if (log) {
      log->push_back("embeddings: " + std::to_string(loaded.coverage.found) +
                     " of " + std::to_string(vocab.size() - 2) +
                     " vocabulary words found in file (" +
                     std::to_string(loaded.coverage.file_entries) + " entries)");
    }
    weights = std::move(loaded.table.weights);
  } else {
    weights = random_embeddings(vocab, config.d, rng).weights;
  }

  std::vector<std::string> warnings;
  KnowledgeTable table = build_knowledge_table(knowledge, vocab, weights, &warnings);
  if (log) {
    log->insert(log->end(), warnings.begin(), warnings.end());
    log->push_back("knowledge: " + std::to_string(table.size()) + " keys");
  }
  return init_model(config, std::move(vocab), std::move(weights),
                    std::move(table), rng);
}

}  // namespace kehnn

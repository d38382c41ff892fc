#ifndef KEHNN_PIPELINE_H_
#define KEHNN_PIPELINE_H_

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "kehnn/config.h"
#include "kehnn/knowledge.h"
#include "kehnn/matcher.h"
#include "kehnn/text.h"

namespace kehnn {

// Vocabulary over the tokens of every text in `records` plus the knowledge
// words, in first-appearance order. The result is frozen.
Vocabulary build_vocabulary(std::span<const DatasetRecord> records,
                            std::span<const KnowledgeEntry> knowledge);

// Builds an untrained model: vocabulary from the training records, word
// vectors from `embeddings` when given (random otherwise), knowledge vectors
// by averaging word vectors, then all remaining weights. Everything random
// comes from one generator seeded with config.seed. Human-readable notes
// (coverage, warnings) go to `log`.
Model prepare_model(const TrainConfig& config,
                    std::span<const DatasetRecord> train_records,
                    const std::optional<std::filesystem::path>& embeddings,
                    std::span<const KnowledgeEntry> knowledge,
                    std::vector<std::string>* log = nullptr);

}  // namespace kehnn

#endif  // KEHNN_PIPELINE_H_

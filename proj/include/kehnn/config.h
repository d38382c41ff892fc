#ifndef KEHNN_CONFIG_H_
#define KEHNN_CONFIG_H_

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>

#include "kehnn/graph.h"

namespace kehnn {

enum class Task { kClassification, kRanking };

// Hyperparameters and schedule knobs. JSON field names match the member
// names; see to_json/from_json.
struct TrainConfig {
  std::size_t d = 100;
  std::size_t m = 100;
  std::size_t max_len = 200;
  std::size_t C = 2;
  std::size_t batch_size = 50;
  double learning_rate = 0.01;
  double dropout = 0.5;
  Activation activation = Activation::kRelu;
  bool freeze_embeddings = false;
  bool freeze_knowledge = false;
  std::size_t max_epochs = 50;
  std::size_t patience = 5;
  std::uint64_t seed = 1;

  // Matching network shape.
  std::size_t hidden = 50;
  std::size_t feature_maps = 8;
  std::array<std::size_t, 2> conv_window{3, 3};
  std::array<std::size_t, 2> pool_window{3, 3};
  std::array<std::size_t, 2> pool_stride{3, 3};
  // Similarity channels fed to the convolution: M1, M2, M3.
  std::array<bool, 3> channels{true, true, true};

  Task task = Task::kClassification;
  // Candidates per group for ranking evaluation.
  std::size_t group_size = 10;
  // Global gradient-norm clip; 0 disables.
  double grad_clip = 0.0;
  double init_scale = 0.1;

  std::size_t channel_count() const;
  // Length of the flattened feature vector after convolution and pooling.
  std::size_t feature_dim() const;
  // Throws std::invalid_argument describing the first violated constraint.
  void validate() const;
};

std::string to_json(const TrainConfig& config);
TrainConfig config_from_json(const std::string& text);
TrainConfig load_config(const std::filesystem::path& path);

// Applies KEHNN_SEED when set.
void apply_env_overrides(TrainConfig& config);
// KEHNN_THREADS when set, else the hardware concurrency (at least 1).
std::size_t worker_threads();

}  // namespace kehnn

#endif  // KEHNN_CONFIG_H_

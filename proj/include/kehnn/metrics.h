#ifndef KEHNN_METRICS_H_
#define KEHNN_METRICS_H_

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "kehnn/config.h"
#include "kehnn/matcher.h"

namespace kehnn {

// Fraction of positions where preds and labels agree.
double accuracy(std::span<const int> preds, std::span<const int> labels);

struct Candidate {
  double score = 0.0;
  bool positive = false;
};

struct RankedGroup {
  std::string id;
  std::vector<Candidate> candidates;
};

// 0-based rank of the single positive candidate. Candidates scoring equal to
// the positive are ranked ahead of it.
std::size_t positive_rank(const RankedGroup& group);

// R_n@k: fraction of groups whose positive ranks within the top k. Every
// group must hold exactly one positive and the same number n of candidates,
// with 1 <= k <= n.
double recall_at_k(std::span<const RankedGroup> groups, std::size_t k);

// Groups pairs by their group field (first-appearance order), or into
// consecutive runs of group_size when the field is empty. scores[i] belongs
// to pairs[i]; label 1 marks the positive.
std::vector<RankedGroup> make_groups(std::span<const EncodedPair> pairs,
                                     std::span<const double> scores,
                                     std::size_t group_size);

// Keeps each group's positive and one uniformly drawn negative, in their
// original order, for R_2@1.
std::vector<RankedGroup> sample_pairwise(std::span<const RankedGroup> groups,
                                         std::mt19937_64& rng);

// Class distributions for every pair, computed in parallel.
std::vector<Tensor> predict_all(const Model& model,
                                std::span<const EncodedPair> pairs,
                                std::size_t threads = 0);

std::vector<int> argmax_classes(std::span<const Tensor> dists);
// Probability of class 1, the ranking score.
std::vector<double> positive_scores(std::span<const Tensor> dists);

// Accuracy for classification, R_n@1 for ranking (n = group_size).
double evaluate(const Model& model, std::span<const EncodedPair> pairs,
                std::size_t threads = 0);

struct Bucket {
  std::size_t lower = 0;
  std::optional<std::size_t> upper;  // exclusive; none means unbounded
  std::size_t count = 0;
  std::optional<double> metric;      // none for an empty bucket
};

struct BucketReport {
  std::string metric_name;
  std::vector<Bucket> buckets;
};

inline constexpr std::array<std::size_t, 3> kDefaultBucketBounds{30, 60, 90};

// Buckets [0,b1), [b1,b2), ..., [bn,inf) over lengths with per-bucket
// accuracy of preds against labels.
BucketReport bucket_accuracy(std::span<const std::size_t> lengths,
                             std::span<const int> preds,
                             std::span<const int> labels,
                             std::span<const std::size_t> bounds);

// Same buckets for ranking groups, placed by the length of each group's
// positive pair, with R_2@1 per bucket.
BucketReport bucket_recall(std::span<const std::size_t> lengths,
                           std::span<const RankedGroup> pairwise_groups,
                           std::span<const std::size_t> bounds);

// Runs the model over pairs and buckets by combined token length. Ranking
// tasks report R_2@1 using sample_pairwise with `seed`.
BucketReport length_bucket_report(const Model& model,
                                  std::span<const EncodedPair> pairs,
                                  std::span<const std::size_t> bounds,
                                  std::uint64_t seed = 1);

// Tab-separated table: bucket, pairs, metric (n/a when empty).
std::string format_bucket_report(const BucketReport& report);

struct AblationRow {
  std::string name;
  std::array<bool, 3> channels{};
  std::optional<double> metric;
  std::string error;
};

// Builds an untrained model for a config; the ablation varies only the
// enabled channels.
using ModelFactory = std::function<Model(const TrainConfig&)>;

// Trains "only M1", "only M2", "only M3" and "full" under the same config
// and seed and evaluates each on the test set. A failing row keeps its error
// message and the remaining rows still run.
std::vector<AblationRow> ablation_report(const TrainConfig& base,
                                         const ModelFactory& factory,
                                         std::span<const DatasetRecord> train,
                                         std::span<const DatasetRecord> valid,
                                         std::span<const DatasetRecord> test);

std::string format_ablation_report(std::span<const AblationRow> rows,
                                   const std::string& metric_name);

}  // namespace kehnn

#endif  // KEHNN_METRICS_H_

#include "kehnn/metrics.h"

#include <algorithm>
#include <cstdio>
#include <limits>
#include <sstream>
#include <unordered_map>

#include "kehnn/trainer.h"
#include "parallel.h"

namespace kehnn {

double accuracy(std::span<const int> preds, std::span<const int> labels) {
  if (preds.size() != labels.size()) {
    throw std::invalid_argument("accuracy: " + std::to_string(preds.size()) +
                                " predictions for " +
                                std::to_string(labels.size()) + " labels");
  }
  if (preds.empty()) throw std::invalid_argument("accuracy: no predictions");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) hits += preds[i] == labels[i];
  return static_cast<double>(hits) / static_cast<double>(preds.size());
}

std::size_t positive_rank(const RankedGroup& group) {
  const Candidate* pos = nullptr;
  for (const auto& c : group.candidates) {
    if (!c.positive) continue;
    if (pos) throw std::invalid_argument("group " + group.id + ": several positives");
    pos = &c;
  }
  if (!pos) throw std::invalid_argument("group " + group.id + ": no positive");
  std::size_t ahead = 0;
  for (const auto& c : group.candidates) {
    if (&c != pos && c.score >= pos->score) ++ahead;
  }
  return ahead;
}

double recall_at_k(std::span<const RankedGroup> groups, std::size_t k) {
  if (groups.empty()) throw std::invalid_argument("recall_at_k: no groups");
  const std::size_t n = groups.front().candidates.size();
  if (k < 1 || k > n) {
    throw std::invalid_argument("recall_at_k: k=" + std::to_string(k) +
                                " outside [1," + std::to_string(n) + "]");
  }
  std::size_t hits = 0;
  for (const auto& g : groups) {
    if (g.candidates.size() != n) {
      throw std::invalid_argument("recall_at_k: group " + g.id + " has " +
                                  std::to_string(g.candidates.size()) +
                                  " candidates, expected " + std::to_string(n));
    }
    hits += positive_rank(g) < k;
  }
  return static_cast<double>(hits) / static_cast<double>(groups.size());
}

std::vector<RankedGroup> make_groups(std::span<const EncodedPair> pairs,
                                     std::span<const double> scores,
                                     std::size_t group_size) {
  if (pairs.size() != scores.size()) {
    throw std::invalid_argument("make_groups: scores do not match pairs");
  }
  std::vector<RankedGroup> groups;
  std::unordered_map<std::string, std::size_t> by_id;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    std::string id = pairs[i].group;
    if (id.empty()) {
      if (group_size == 0) throw std::invalid_argument("make_groups: group_size is 0");
      id = "#" + std::to_string(i / group_size);
    }
    auto [it, inserted] = by_id.emplace(id, groups.size());
    if (inserted) groups.push_back({id, {}});
    groups[it->second].candidates.push_back({scores[i], pairs[i].label == 1});
  }
  return groups;
}

std::vector<RankedGroup> sample_pairwise(std::span<const RankedGroup> groups,
                                         std::mt19937_64& rng) {
  std::vector<RankedGroup> out;
  out.reserve(groups.size());
  for (const auto& g : groups) {
    std::vector<std::size_t> negatives;
    for (std::size_t i = 0; i < g.candidates.size(); ++i)
      if (!g.candidates[i].positive) negatives.push_back(i);
    if (negatives.empty()) {
      throw std::invalid_argument("sample_pairwise: group " + g.id +
                                  " has no negative");
    }
    std::uniform_int_distribution<std::size_t> pick(0, negatives.size() - 1);
    const std::size_t neg = negatives[pick(rng)];
    RankedGroup pair{g.id, {}};
    for (std::size_t i = 0; i < g.candidates.size(); ++i)
      if (g.candidates[i].positive || i == neg) pair.candidates.push_back(g.candidates[i]);
    out.push_back(std::move(pair));
  }
  return out;
}

std::vector<Tensor> predict_all(const Model& model,
                                std::span<const EncodedPair> pairs,
                                std::size_t threads) {
  std::vector<Tensor> out(pairs.size());
  internal::parallel_chunks(
      pairs.size(), threads ? threads : worker_threads(),
      [&](std::size_t, std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) out[i] = predict(model, pairs[i]);
      });
  return out;
}

std::vector<int> argmax_classes(std::span<const Tensor> dists) {
  std::vector<int> out;
  out.reserve(dists.size());
  for (const auto& d : dists) {
    auto v = d.values();
    out.push_back(static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin()));
  }
  return out;
}

std::vector<double> positive_scores(std::span<const Tensor> dists) {
  std::vector<double> out;
  out.reserve(dists.size());
  for (const auto& d : dists) out.push_back(d.size() > 1 ? d[1] : d[0]);
  return out;
}

double evaluate(const Model& model, std::span<const EncodedPair> pairs,
                std::size_t threads) {
  const auto dists = predict_all(model, pairs, threads);
  if (model.config.task == Task::kRanking) {
    const auto groups =
        make_groups(pairs, positive_scores(dists), model.config.group_size);
    return recall_at_k(groups, 1);
  }
  std::vector<int> labels;
  for (const auto& p : pairs) labels.push_back(p.label);
  return accuracy(argmax_classes(dists), labels);
}

namespace {

std::vector<Bucket> empty_buckets(std::span<const std::size_t> bounds) {
  if (!std::is_sorted(bounds.begin(), bounds.end()) ||
      std::adjacent_find(bounds.begin(), bounds.end()) != bounds.end() ||
      (!bounds.empty() && bounds.front() == 0)) {
    throw std::invalid_argument("bucket bounds must be positive and increasing");
  }
  std::vector<Bucket> out;
  std::size_t lower = 0;
  for (std::size_t b : bounds) {
    out.push_back({lower, b, 0, std::nullopt});
    lower = b;
  }
  out.push_back({lower, std::nullopt, 0, std::nullopt});
  return out;
}

std::size_t bucket_of(std::size_t length, std::span<const std::size_t> bounds) {
  return static_cast<std::size_t>(
      std::upper_bound(bounds.begin(), bounds.end(), length) - bounds.begin());
}

}  // namespace

BucketReport bucket_accuracy(std::span<const std::size_t> lengths,
                             std::span<const int> preds,
                             std::span<const int> labels,
                             std::span<const std::size_t> bounds) {
  if (lengths.size() != preds.size() || preds.size() != labels.size()) {
    throw std::invalid_argument("bucket_accuracy: input sizes differ");
  }
  BucketReport report{"accuracy", empty_buckets(bounds)};
  std::vector<std::size_t> hits(report.buckets.size(), 0);
  for (std::size_t i = 0; i < lengths.size(); ++i) {
    const std::size_t b = bucket_of(lengths[i], bounds);
    ++report.buckets[b].count;
    hits[b] += preds[i] == labels[i];
  }
  for (std::size_t b = 0; b < hits.size(); ++b) {
    auto& bucket = report.buckets[b];
    if (bucket.count) {
      bucket.metric = static_cast<double>(hits[b]) / static_cast<double>(bucket.count);
    }
  }
  return report;
}

BucketReport bucket_recall(std::span<const std::size_t> lengths,
                           std::span<const RankedGroup> pairwise_groups,
                           std::span<const std::size_t> bounds) {
  if (lengths.size() != pairwise_groups.size()) {
    throw std::invalid_argument("bucket_recall: input sizes differ");
  }
  BucketReport report{"R_2@1", empty_buckets(bounds)};
  std::vector<std::vector<RankedGroup>> members(report.buckets.size());
  for (std::size_t i = 0; i < lengths.size(); ++i) {
    members[bucket_of(lengths[i], bounds)].push_back(pairwise_groups[i]);
  }
  for (std::size_t b = 0; b < members.size(); ++b) {
    report.buckets[b].count = members[b].size();
    if (!members[b].empty()) report.buckets[b].metric = recall_at_k(members[b], 1);
  }
  return report;
}

BucketReport length_bucket_report(const Model& model,
                                  std::span<const EncodedPair> pairs,
                                  std::span<const std::size_t> bounds,
                                  std::uint64_t seed) {
  const auto dists = predict_all(model, pairs);
  if (model.config.task == Task::kRanking) {
    const auto groups =
        make_groups(pairs, positive_scores(dists), model.config.group_size);
    // Length of each group's positive pair, in group order.
    std::unordered_map<std::string, std::size_t> positive_length;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      if (pairs[i].label != 1) continue;
      std::string id = pairs[i].group.empty()
                           ? "#" + std::to_string(i / model.config.group_size)
                           : pairs[i].group;
      positive_length[id] = pairs[i].length;
    }
    std::mt19937_64 rng(seed);
    const auto pairwise = sample_pairwise(groups, rng);
    std::vector<std::size_t> lengths;
    for (const auto& g : pairwise) lengths.push_back(positive_length.at(g.id));
    return bucket_recall(lengths, pairwise, bounds);
  }
  std::vector<std::size_t> lengths;
  std::vector<int> labels;
  for (const auto& p : pairs) {
    lengths.push_back(p.length);
    labels.push_back(p.label);
  }
  return bucket_accuracy(lengths, argmax_classes(dists), labels, bounds);
}

std::string format_bucket_report(const BucketReport& report) {
  std::ostringstream os;
  os << "bucket\tpairs\t" << report.metric_name << '\n';
  for (const auto& b : report.buckets) {
    os << '[' << b.lower << ',';
    if (b.upper) os << *b.upper << ')';
    else os << "inf)";
    os << '\t' << b.count << '\t';
    if (b.metric) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.4f", *b.metric);
      os << buf;
    } else {
      os << "n/a";
    }
    os << '\n';
  }
  return os.str();
}

std::vector<AblationRow> ablation_report(const TrainConfig& base,
                                         const ModelFactory& factory,
                                         std::span<const DatasetRecord> train_records,
                                         std::span<const DatasetRecord> valid_records,
                                         std::span<const DatasetRecord> test_records) {
  std::vector<AblationRow> rows = {
      {"only M1", {true, false, false}, std::nullopt, {}},
      {"only M2", {false, true, false}, std::nullopt, {}},
      {"only M3", {false, false, true}, std::nullopt, {}},
      {"full", {true, true, true}, std::nullopt, {}},
  };
  for (auto& row : rows) {
    try {
      TrainConfig config = base;
      config.channels = row.channels;
      Model model = factory(config);
      const auto train_set = encode_dataset(train_records, model.vocab, config.max_len);
      const auto valid_set = encode_dataset(valid_records, model.vocab, config.max_len);
      const auto test_set = encode_dataset(test_records, model.vocab, config.max_len);
      train(model, train_set, valid_set);
      row.metric = evaluate(model, test_set);
    } catch (const std::exception& e) {
      row.error = e.what();
    }
  }
  return rows;
}

std::string format_ablation_report(std::span<const AblationRow> rows,
                                   const std::string& metric_name) {
  std::ostringstream os;
  os << "channels\t" << metric_name << '\n';
  for (const auto& r : rows) {
    os << r.name << '\t';
    if (r.metric) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.4f", *r.metric);
      os << buf;
    } else {
      os << "failed: " << r.error;
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace kehnn

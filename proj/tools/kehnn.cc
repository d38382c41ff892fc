// Command-line front end: train, eval, predict, gradcheck, buckets, ablation.
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "kehnn/checkpoint.h"
#include "kehnn/config.h"
#include "kehnn/knowledge.h"
#include "kehnn/metrics.h"
#include "kehnn/pipeline.h"
#include "kehnn/trainer.h"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace kehnn;

namespace {

TrainConfig read_config(const std::string& path) {
  TrainConfig c = load_config(path);
  apply_env_overrides(c);
  c.validate();
  return c;
}

std::vector<KnowledgeEntry> read_knowledge_file(const std::string& path) {
  if (path.empty()) return {};
  return load_knowledge(path);
}

void write_json(const std::string& path, const json& j) {
  if (path.empty()) return;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << j.dump(2) << '\n';
}

std::string metric_name(const TrainConfig& c) {
  return c.task == Task::kRanking ? "R_" + std::to_string(c.group_size) + "@1"
                                  : "accuracy";
}

std::vector<std::size_t> parse_list(const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');) {
    if (item.empty()) continue;
    std::size_t used = 0;
    const unsigned long v = std::stoul(item, &used);
    if (used != item.size()) throw std::invalid_argument("bad list entry '" + item + "'");
    out.push_back(v);
  }
  return out;
}

std::vector<EncodedPair> read_pairs(const Model& model, const std::string& path) {
  auto records = load_dataset(path, model.config.C);
  return encode_dataset(records, model.vocab, model.config.max_len);
}

int run_train(const std::string& config_path, const std::string& train_path,
              const std::string& valid_path, const std::string& embeddings,
              const std::string& knowledge_path, const std::string& out_dir,
              const std::string& report) {
  TrainConfig c = read_config(config_path);
  auto train_records = load_dataset(train_path, c.C);
  auto valid_records = load_dataset(valid_path, c.C);
  std::vector<std::string> log;
  Model model = prepare_model(
      c, train_records,
      embeddings.empty() ? std::nullopt : std::optional<fs::path>(embeddings),
      read_knowledge_file(knowledge_path), &log);
  for (const auto& line : log) std::cerr << line << '\n';
  std::cerr << "vocabulary " << model.vocab.size() << ", knowledge keys "
            << model.params.knowledge.size() << ", features " << c.feature_dim()
            << '\n';

  const auto train_set = encode_dataset(train_records, model.vocab, c.max_len);
  const auto valid_set = encode_dataset(valid_records, model.vocab, c.max_len);
  fs::create_directories(out_dir);
  const fs::path best = fs::path(out_dir) / "best.ckpt";

  TrainOptions opt;
  opt.on_epoch = [&](const EpochRecord& r, const Model&) {
    std::fprintf(stderr, "epoch %zu  loss %.6f  %s %.4f  %.1fs\n", r.epoch,
                 r.train_loss, metric_name(c).c_str(), r.valid_metric,
                 r.elapsed_seconds);
  };
  opt.on_best = [&](const Model& m) { save_model(m, best); };
  TrainResult result = train(model, train_set, valid_set, opt);

  std::ofstream(fs::path(out_dir) / "history.csv") << history_csv(result.history);
  std::ofstream(fs::path(out_dir) / "config.json") << to_json(c) << '\n';
  std::cout << "best_epoch\t" << result.best_epoch << '\n'
            << metric_name(c) << '\t' << result.best_metric << '\n'
            << "checkpoint\t" << best.string() << '\n';

  json j;
  j["best_epoch"] = result.best_epoch;
  j["best_metric"] = result.best_metric;
  j["metric"] = metric_name(c);
  j["checkpoint"] = best.string();
  for (const auto& r : result.history)
    j["history"].push_back({{"epoch", r.epoch},
                            {"train_loss", r.train_loss},
                            {"valid_metric", r.valid_metric},
                            {"elapsed_seconds", r.elapsed_seconds}});
  write_json(report, j);
  return 0;
}

int run_eval(const std::string& model_path, const std::string& data,
             const std::string& metric, std::size_t n, const std::string& ks,
             const std::string& report) {
  Model model = load_model(model_path);
  const auto pairs = read_pairs(model, data);
  const auto dists = predict_all(model, pairs);
  json j;
  j["pairs"] = pairs.size();
  if (metric == "accuracy") {
    std::vector<int> labels;
    for (const auto& p : pairs) labels.push_back(p.label);
    const double acc = accuracy(argmax_classes(dists), labels);
    std::cout << "accuracy\t" << acc << '\n';
    j["accuracy"] = acc;
  } else {
    const auto groups = make_groups(pairs, positive_scores(dists), n);
    for (std::size_t k : parse_list(ks)) {
      const double r = recall_at_k(groups, k);
      const std::string name = "R_" + std::to_string(n) + "@" + std::to_string(k);
      std::cout << name << '\t' << r << '\n';
      j[name] = r;
    }
    std::mt19937_64 rng(model.config.seed);
    const double r21 = recall_at_k(sample_pairwise(groups, rng), 1);
    std::cout << "R_2@1\t" << r21 << '\n';
    j["R_2@1"] = r21;
  }
  write_json(report, j);
  return 0;
}

int run_predict(const std::string& model_path, const std::string& data,
                const std::string& out_path) {
  Model model = load_model(model_path);
  const auto dists = predict_all(model, read_pairs(model, data));
  std::ofstream out(out_path);
  if (!out) throw std::runtime_error("cannot write " + out_path);
  char buf[32];
  for (const auto& d : dists) {
    for (std::size_t c = 0; c < d.size(); ++c) {
      std::snprintf(buf, sizeof buf, "%.17g", d[c]);
      out << (c ? "\t" : "") << buf;
    }
    out << '\n';
  }
  return 0;
}

// Random vocabulary, knowledge table and pairs sized by the config.
int run_gradcheck(const std::string& config_path, double eps, std::size_t coords,
                  std::size_t num_pairs) {
  TrainConfig c = read_config(config_path);
  std::mt19937_64 rng(c.seed);
  Vocabulary vocab;
  for (int i = 0; i < 30; ++i) vocab.add("w" + std::to_string(i));
  vocab.freeze();
  Tensor emb = random_embeddings(vocab, c.d, rng, c.init_scale).weights;
  std::vector<KnowledgeEntry> entries = {{"k0", {"w1", "w2", "w3"}}, {"k1", {"w4", "w5"}}};
  KnowledgeTable table = build_knowledge_table(entries, vocab, emb);
  Model model = init_model(c, std::move(vocab), std::move(emb), std::move(table), rng);

  std::vector<EncodedPair> pairs;
  std::uniform_int_distribution<TokenId> word(2, static_cast<TokenId>(model.vocab.size() - 1));
  for (std::size_t i = 0; i < num_pairs; ++i) {
    EncodedPair p;
    for (TokenSequence* s : {&p.a, &p.b}) {
      s->true_length = c.max_len;
      for (std::size_t t = 0; t < c.max_len; ++t) s->ids.push_back(word(rng));
    }
    p.key_a = entries[i % 2].key;
    p.key_b = entries[(i / 2) % 2].key;
    p.label = static_cast<int>(i % c.C);
    pairs.push_back(std::move(p));
  }

  GradCheckOptions opt;
  opt.eps = eps;
  opt.max_coords_per_tensor = coords;
  opt.seed = c.seed;
  ModelGradCheck check = check_model_gradients(model, pairs, opt);
  std::cout << "parameter\tgroup\tmax_rel_error\n";
  char buf[32];
  for (std::size_t i = 0; i < check.names.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.3e", check.result.per_tensor[i]);
    std::cout << check.names[i] << '\t' << group_name(check.groups[i]) << '\t' << buf << '\n';
  }
  std::snprintf(buf, sizeof buf, "%.3e", check.result.max_rel_error);
  std::cout << "max\t\t" << buf << '\n';
  return check.result.max_rel_error > 1e-3 ? 1 : 0;
}

int run_buckets(const std::string& model_path, const std::string& data,
                const std::string& bounds_text, const std::string& report) {
  Model model = load_model(model_path);
  const auto pairs = read_pairs(model, data);
  const auto bounds = parse_list(bounds_text);
  BucketReport r = length_bucket_report(model, pairs, bounds, model.config.seed);
  std::cout << format_bucket_report(r);
  json j;
  j["metric"] = r.metric_name;
  for (const auto& b : r.buckets) {
    json row = {{"lower", b.lower}, {"count", b.count}};
    row["upper"] = b.upper ? json(*b.upper) : json(nullptr);
    row["metric"] = b.metric ? json(*b.metric) : json(nullptr);
    j["buckets"].push_back(row);
  }
  write_json(report, j);
  return 0;
}

int run_ablation(const std::string& config_path, const std::string& train_path,
                 const std::string& valid_path, const std::string& test_path,
                 const std::string& embeddings, const std::string& knowledge_path,
                 const std::string& report) {
  TrainConfig c = read_config(config_path);
  auto train_records = load_dataset(train_path, c.C);
  auto valid_records = load_dataset(valid_path, c.C);
  auto test_records = load_dataset(test_path, c.C);
  const auto knowledge = read_knowledge_file(knowledge_path);
  ModelFactory factory = [&](const TrainConfig& cfg) {
    return prepare_model(
        cfg, train_records,
        embeddings.empty() ? std::nullopt : std::optional<fs::path>(embeddings),
        knowledge);
  };
  auto rows = ablation_report(c, factory, train_records, valid_records, test_records);
  std::cout << format_ablation_report(rows, metric_name(c));
  json j;
  for (const auto& r : rows) {
    json row = {{"channels", r.name}};
    row["metric"] = r.metric ? json(*r.metric) : json(nullptr);
    if (!r.error.empty()) row["error"] = r.error;
    j["rows"].push_back(row);
  }
  write_json(report, j);
  for (const auto& r : rows)
    if (!r.metric) return 1;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Knowledge-enhanced text matching"};
  app.require_subcommand(1);

  std::string config, train_path, valid_path, test_path, embeddings, knowledge, out,
      model, data, report;

  auto* train = app.add_subcommand("train", "train a model and keep the best checkpoint");
  train->add_option("--config", config, "JSON config")->required()->check(CLI::ExistingFile);
  train->add_option("--train", train_path, "training JSONL")->required()->check(CLI::ExistingFile);
  train->add_option("--valid", valid_path, "validation JSONL")->required()->check(CLI::ExistingFile);
  train->add_option("--embeddings", embeddings, "word vectors, 'token v1 .. vd' per line")
      ->check(CLI::ExistingFile);
  train->add_option("--knowledge", knowledge, "knowledge JSONL")->check(CLI::ExistingFile);
  train->add_option("--out", out, "output directory")->required();
  train->add_option("--json", report, "write a JSON report here");

  std::string metric = "accuracy", ks = "1,2,5";
  std::size_t n = 10;
  auto* eval = app.add_subcommand("eval", "score a dataset with a checkpoint");
  eval->add_option("--model", model)->required()->check(CLI::ExistingFile);
  eval->add_option("--data", data)->required()->check(CLI::ExistingFile);
  eval->add_option("--metric", metric)->check(CLI::IsMember({"accuracy", "recall"}));
  eval->add_option("--n", n, "candidates per group")->check(CLI::PositiveNumber);
  eval->add_option("--k", ks, "comma-separated cutoffs");
  eval->add_option("--json", report);

  auto* predict = app.add_subcommand("predict", "write class distributions as TSV");
  predict->add_option("--model", model)->required()->check(CLI::ExistingFile);
  predict->add_option("--data", data)->required()->check(CLI::ExistingFile);
  predict->add_option("--out", out)->required();

  double eps = 1e-5;
  std::size_t coords = 5, pairs = 2;
  auto* grad = app.add_subcommand("gradcheck", "compare analytic and numeric gradients");
  grad->add_option("--config", config)->required()->check(CLI::ExistingFile);
  grad->add_option("--eps", eps)->check(CLI::PositiveNumber);
  grad->add_option("--coords", coords, "coordinates sampled per tensor, 0 for all");
  grad->add_option("--pairs", pairs, "random pairs in the loss")->check(CLI::PositiveNumber);

  std::string bounds = "30,60,90";
  auto* buckets = app.add_subcommand("buckets", "metric by combined text length");
  buckets->add_option("--model", model)->required()->check(CLI::ExistingFile);
  buckets->add_option("--data", data)->required()->check(CLI::ExistingFile);
  buckets->add_option("--bounds", bounds);
  buckets->add_option("--json", report);

  auto* ablation = app.add_subcommand("ablation", "train one model per channel set");
  ablation->add_option("--config", config)->required()->check(CLI::ExistingFile);
  ablation->add_option("--train", train_path)->required()->check(CLI::ExistingFile);
  ablation->add_option("--valid", valid_path)->required()->check(CLI::ExistingFile);
  ablation->add_option("--test", test_path)->required()->check(CLI::ExistingFile);
  ablation->add_option("--embeddings", embeddings)->check(CLI::ExistingFile);
  ablation->add_option("--knowledge", knowledge)->check(CLI::ExistingFile);
  ablation->add_option("--json", report);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) return run_train(config, train_path, valid_path, embeddings, knowledge, out, report);
    if (*eval) return run_eval(model, data, metric, n, ks, report);
    if (*predict) return run_predict(model, data, out);
    if (*grad) return run_gradcheck(config, eps, coords, pairs);
    if (*buckets) return run_buckets(model, data, bounds, report);
    if (*ablation)
      return run_ablation(config, train_path, valid_path, test_path, embeddings, knowledge, report);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}

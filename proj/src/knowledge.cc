#include "kehnn/knowledge.h"

#include <algorithm>
#include <fstream>

#include "json.hpp"

namespace kehnn {

std::vector<KnowledgeEntry> read_knowledge(std::istream& in) {
  using nlohmann::json;
  std::vector<KnowledgeEntry> out;
  std::string line;
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      json j = json::parse(line);
      KnowledgeEntry e;
      e.key = j.at("key").get<std::string>();
      for (const auto& w : j.at("words")) {
        for (auto& t : tokenize(w.get<std::string>())) e.words.push_back(std::move(t));
      }
      out.push_back(std::move(e));
    } catch (const nlohmann::json::exception& e) {
      throw DatasetError(lineno, std::string("knowledge entry: ") + e.what());
    }
  }
  return out;
}

std::vector<KnowledgeEntry> load_knowledge(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read knowledge file " + path.string());
  return read_knowledge(in);
}

void KnowledgeTable::add(std::string key, const Tensor& vector,
                         std::vector<std::string> words) {
  if (index_.count(key)) {
    throw std::invalid_argument("knowledge: duplicate key '" + key + "'");
  }
  const std::size_t d = vector.size();
  if (vectors_.rank() != 2) vectors_ = Tensor({0, d});
  if (d != dim()) {
    throw ShapeError("knowledge: vector " + shape_str(vector.shape()) +
                     " for key '" + key + "' does not have dimension " +
                     std::to_string(dim()));
  }
  std::vector<double> values(vectors_.values().begin(), vectors_.values().end());
  values.insert(values.end(), vector.values().begin(), vector.values().end());
  vectors_ = Tensor({keys_.size() + 1, d}, std::move(values));
  index_.emplace(key, keys_.size());
  keys_.push_back(std::move(key));
  words_.push_back(std::move(words));
}

std::optional<std::size_t> KnowledgeTable::index(std::string_view key) const {
  if (key.empty()) return std::nullopt;
  auto it = index_.find(std::string(key));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

Tensor KnowledgeTable::lookup(std::string_view key) const {
  Tensor out({1, dim()});
  if (auto i = index(key)) {
    std::copy_n(vectors_.data() + *i * dim(), dim(), out.data());
  }
  return out;
}

Tensor build_knowledge_vector(std::span<const std::string> words,
                              const Vocabulary& vocab, const Tensor& embeddings,
                              std::size_t* used) {
  require_rank(embeddings, 2, "build_knowledge_vector");
  const std::size_t d = embeddings.dim(1);
  Tensor out({1, d});
  std::size_t count = 0;
  for (const auto& w : words) {
    auto id = vocab.find(w);
    if (!id || *id == Vocabulary::kPad || *id == Vocabulary::kUnk) continue;
    const double* row = embeddings.data() + static_cast<std::size_t>(*id) * d;
    for (std::size_t j = 0; j < d; ++j) out[j] += row[j];
    ++count;
  }
  if (count) {
    for (double& v : out.values()) v /= static_cast<double>(count);
  }
  if (used) *used = count;
  return out;
}

KnowledgeTable build_knowledge_table(std::span<const KnowledgeEntry> entries,
                                     const Vocabulary& vocab,
                                     const Tensor& embeddings,
                                     std::vector<std::string>* warnings) {
  KnowledgeTable table(embeddings.dim(1));
  for (const auto& e : entries) {
    std::size_t used = 0;
    Tensor v = build_knowledge_vector(e.words, vocab, embeddings, &used);
    if (!used && warnings) {
      warnings->push_back("knowledge key '" + e.key +
                          "' has no in-vocabulary words; using zero vector");
    }
    table.add(e.key, v, e.words);
  }
  return table;
}

Var knowledge_gate(Var words, Var knowledge, Var w_k, Var u_k) {
  const Tensor& e = words.value();
  const Tensor& k = knowledge.value();
  require_rank(e, 2, "knowledge_gate");
  if (k.rank() != 2 || k.dim(0) != 1 || k.dim(1) != e.dim(1)) {
    throw ShapeError("knowledge_gate: knowledge " + shape_str(k.shape()) +
                     " does not match words " + shape_str(e.shape()));
  }
  return sigmoid(add_row(matmul_nt(words, w_k), matmul_nt(knowledge, u_k)));
}

Var knowledge_enhance(Var words, Var knowledge, Var gate) {
  const Tensor& e = words.value();
  const Tensor& k = knowledge.value();
  const Tensor& g = gate.value();
  require_rank(e, 2, "knowledge_enhance");
  require_same_shape(e, g, "knowledge_enhance");
  if (k.rank() != 2 || k.dim(0) != 1 || k.dim(1) != e.dim(1)) {
    throw ShapeError("knowledge_enhance: knowledge " + shape_str(k.shape()) +
                     " does not match words " + shape_str(e.shape()));
  }
  const std::size_t rows = e.dim(0), d = e.dim(1);
  Tensor out(e.shape());
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      const double ew = e.at(i, j), kx = k[j];
      // kx + g (ew - kx) is exact when ew == kx; the clamp absorbs rounding
      // so the result never leaves [min, max].
      const double mixed = kx + g.at(i, j) * (ew - kx);
      out.at(i, j) = std::clamp(mixed, std::min(ew, kx), std::max(ew, kx));
    }
  return words.graph().record(
      "knowledge_enhance", std::move(out), {words, knowledge, gate},
      [words, knowledge, gate, rows, d](const Tensor&, const Tensor& grad,
                                        std::span<Tensor* const> in) {
        const Tensor& e = words.value();
        const Tensor& k = knowledge.value();
        const Tensor& g = gate.value();
        for (std::size_t i = 0; i < rows; ++i)
          for (std::size_t j = 0; j < d; ++j) {
            const double gr = grad.at(i, j);
            if (in[0]) in[0]->at(i, j) += gr * g.at(i, j);
            if (in[1]) (*in[1])[j] += gr * (1.0 - g.at(i, j));
            if (in[2]) in[2]->at(i, j) += gr * (e.at(i, j) - k[j]);
          }
      });
}

}  // namespace kehnn

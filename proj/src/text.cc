#include "kehnn/text.h"

#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace kehnn {

Vocabulary::Vocabulary() {
  add(kPadToken);
  add(kUnkToken);
}

TokenId Vocabulary::add(std::string_view token) {
  if (auto id = find(token)) return *id;
  if (frozen_) {
    throw std::logic_error("vocabulary is frozen; cannot add '" +
                           std::string(token) + "'");
  }
  const auto id = static_cast<TokenId>(tokens_.size());
  tokens_.emplace_back(token);
  ids_.emplace(tokens_.back(), id);
  return id;
}

std::optional<TokenId> Vocabulary::find(std::string_view token) const {
  auto it = ids_.find(std::string(token));
  if (it == ids_.end()) return std::nullopt;
  return it->second;
}

TokenId Vocabulary::lookup(std::string_view token) const {
  return find(token).value_or(kUnk);
}

const std::string& Vocabulary::token(TokenId id) const {
  return tokens_.at(static_cast<std::size_t>(id));
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) out.push_back(std::move(current));
    current.clear();
  };
  for (char ch : text) {
    const auto u = static_cast<unsigned char>(ch);
    if (u < 0x80 && std::isspace(u)) {
      flush();
    } else if (u < 0x80 && std::ispunct(u) && ch != '_') {
      flush();
      out.emplace_back(1, ch);
    } else {
      current.push_back(u < 0x80 ? static_cast<char>(std::tolower(u)) : ch);
    }
  }
  flush();
  return out;
}

EmbeddingTable random_embeddings(const Vocabulary& vocab, std::size_t dim,
                                 std::mt19937_64& rng, double scale) {
  EmbeddingTable table;
  table.weights = Tensor({vocab.size(), dim});
  std::uniform_real_distribution<double> uniform(-scale, scale);
  for (double& v : table.weights.values()) v = uniform(rng);
  for (std::size_t j = 0; j < dim; ++j) table.weights.at(Vocabulary::kPad, j) = 0.0;
  return table;
}

namespace {

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i])))
      ++i;
    std::size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j])))
      ++j;
    if (j > i) fields.push_back(line.substr(i, j - i));
    i = j;
  }
  return fields;
}

}  // namespace

LoadedEmbeddings read_embeddings(std::istream& in, const Vocabulary& vocab,
                                 std::mt19937_64& rng) {
  struct Entry {
    TokenId id;
    std::vector<double> values;
  };
  std::vector<Entry> entries;
  std::size_t dim = 0;
  std::size_t file_entries = 0;
  std::string line;
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
    auto fields = split_ws(line);
    if (fields.empty()) continue;
    if (fields.size() < 2) {
      throw std::runtime_error("embeddings line " + std::to_string(lineno) +
                               ": no vector values");
    }
    const std::size_t here = fields.size() - 1;
    if (dim == 0) dim = here;
    if (here != dim) {
      throw std::runtime_error(
          "embeddings line " + std::to_string(lineno) + ": dimension " +
          std::to_string(here) + " differs from " + std::to_string(dim));
    }
    ++file_entries;
    auto id = vocab.find(fields[0]);
    if (!id || *id == Vocabulary::kPad) continue;
    Entry e{*id, std::vector<double>(dim)};
    for (std::size_t k = 0; k < dim; ++k) {
      auto f = fields[k + 1];
      auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), e.values[k]);
      if (ec != std::errc() || ptr != f.data() + f.size()) {
        throw std::runtime_error("embeddings line " + std::to_string(lineno) +
                                 ": bad number '" + std::string(f) + "'");
      }
    }
    entries.push_back(std::move(e));
  }
  if (dim == 0) throw std::runtime_error("embeddings: file has no vectors");

  LoadedEmbeddings out;
  out.table = random_embeddings(vocab, dim, rng);
  out.coverage.file_entries = file_entries;
  std::vector<bool> seen(vocab.size(), false);
  for (const auto& e : entries) {
    std::copy(e.values.begin(), e.values.end(),
              out.table.weights.data() + static_cast<std::size_t>(e.id) * dim);
    seen[e.id] = true;
  }
  for (std::size_t id = 2; id < vocab.size(); ++id) {
    if (seen[id]) ++out.coverage.found;
    else ++out.coverage.missing;
  }
  return out;
}

LoadedEmbeddings load_embeddings(const std::filesystem::path& path,
                                 const Vocabulary& vocab, std::mt19937_64& rng) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read embeddings " + path.string());
  return read_embeddings(in, vocab, rng);
}

TokenSequence encode_pad(std::span<const std::string> tokens,
                         const Vocabulary& vocab, std::size_t max_len) {
  if (max_len == 0) throw std::invalid_argument("encode_pad: max_len is 0");
  TokenSequence seq;
  seq.ids.assign(max_len, Vocabulary::kPad);
  seq.true_length = std::min(tokens.size(), max_len);
  for (std::size_t i = 0; i < seq.true_length; ++i) {
    seq.ids[i] = vocab.lookup(tokens[i]);
  }
  return seq;
}

std::vector<DatasetRecord> read_dataset(std::istream& in,
                                        std::optional<std::size_t> num_classes) {
  using nlohmann::json;
  std::vector<DatasetRecord> records;
  std::string line;
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw DatasetError(lineno, std::string("malformed JSON: ") + e.what());
    }
    if (!j.is_object()) throw DatasetError(lineno, "expected a JSON object");
    DatasetRecord r;
    auto required_string = [&](const char* key) {
      auto it = j.find(key);
      if (it == j.end()) throw DatasetError(lineno, std::string("missing ") + key);
      if (!it->is_string()) {
        throw DatasetError(lineno, std::string(key) + " must be a string");
      }
      return it->get<std::string>();
    };
    auto optional_string = [&](const char* key) -> std::string {
      auto it = j.find(key);
      if (it == j.end() || it->is_null()) return {};
      if (it->is_string()) return it->get<std::string>();
      if (it->is_number_integer()) return std::to_string(it->get<long long>());
      throw DatasetError(lineno, std::string(key) + " must be a string");
    };
    auto label = j.find("label");
    if (label == j.end()) throw DatasetError(lineno, "missing label");
    if (!label->is_number_integer()) {
      throw DatasetError(lineno, "label must be an integer");
    }
    const long long value = label->get<long long>();
    if (value < 0 || (num_classes && static_cast<std::size_t>(value) >= *num_classes)) {
      throw DatasetError(lineno,
                         "label " + std::to_string(value) + " out of range" +
                             (num_classes ? " [0," + std::to_string(*num_classes) + ")"
                                          : std::string()));
    }
    r.label = static_cast<int>(value);
    r.text_a = required_string("text_a");
    r.text_b = required_string("text_b");
    r.knowledge_a = optional_string("knowledge_a");
    r.knowledge_b = optional_string("knowledge_b");
    r.group = optional_string("group");
    records.push_back(std::move(r));
  }
  return records;
}

std::vector<DatasetRecord> load_dataset(const std::filesystem::path& path,
                                        std::optional<std::size_t> num_classes) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read dataset " + path.string());
  return read_dataset(in, num_classes);
}

}  // namespace kehnn

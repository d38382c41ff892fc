#include "kehnn/checkpoint.h"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace kehnn {

namespace {

constexpr char kMagic[8] = {'K', 'E', 'H', 'N', 'N', 'C', 'K', 'P'};

class Writer {
 public:
  void u32(std::uint32_t v) { le(v, 4); }
  void u64(std::uint64_t v) { le(v, 8); }
  void f64(double v) { le(std::bit_cast<std::uint64_t>(v), 8); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes_ += s;
  }
  void raw(const std::string& s) { bytes_ += s; }
  const std::string& bytes() const { return bytes_; }

 private:
  void le(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) bytes_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  std::string bytes_;
};

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}
  std::uint32_t u32() { return static_cast<std::uint32_t>(le(4)); }
  std::uint64_t u64() { return le(8); }
  double f64() { return std::bit_cast<double>(le(8)); }
  std::string str() { return raw(u32()); }
  std::string raw(std::size_t n) {
    need(n);
    std::string out(bytes_.substr(pos_, n));
    pos_ += n;
    return out;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw CheckpointError("checkpoint: truncated");
  }
  std::uint64_t le(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i]))
           << (8 * i);
    }
    pos_ += static_cast<std::size_t>(n);
    return v;
  }
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

std::string tensor_payload(const Tensor& t) {
  Writer w;
  w.u32(static_cast<std::uint32_t>(t.rank()));
  for (std::size_t d : t.shape()) w.u64(d);
  for (double v : t.values()) w.f64(v);
  return w.bytes();
}

Tensor tensor_from(const std::string& payload, const std::string& name) {
  Reader r(payload);
  Shape shape(r.u32());
  for (auto& d : shape) d = r.u64();
  std::vector<double> values(shape_size(shape));
  for (double& v : values) v = r.f64();
  if (!r.done()) throw CheckpointError("checkpoint: trailing bytes in " + name);
  return Tensor(std::move(shape), std::move(values));
}

}  // namespace

std::string serialize_model(const Model& model) {
  std::vector<std::pair<std::string, std::string>> sections;
  sections.emplace_back("config", to_json(model.config));

  Writer vocab;
  vocab.u32(static_cast<std::uint32_t>(model.vocab.size()));
  for (const auto& t : model.vocab.tokens()) vocab.str(t);
  sections.emplace_back("vocab", vocab.bytes());

  const KnowledgeTable& k = model.params.knowledge;
  Writer keys;
  keys.u32(static_cast<std::uint32_t>(k.size()));
  for (std::size_t i = 0; i < k.size(); ++i) {
    keys.str(k.keys()[i]);
    keys.u32(static_cast<std::uint32_t>(k.words(i).size()));
    for (const auto& w : k.words(i)) keys.str(w);
  }
  sections.emplace_back("knowledge.keys", keys.bytes());

  const auto names = model.params.names();
  const auto tensors = model.params.tensors();
  for (std::size_t i = 0; i < names.size(); ++i) {
    sections.emplace_back("param/" + names[i], tensor_payload(*tensors[i]));
  }

  Writer w;
  w.raw(std::string(kMagic, sizeof kMagic));
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(sections.size()));
  for (const auto& [name, payload] : sections) {
    w.str(name);
    w.u64(payload.size());
    w.raw(payload);
  }
  return w.bytes();
}

void write_model(const Model& model, std::ostream& out) {
  const std::string bytes = serialize_model(model);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError("checkpoint: write failed");
}

Model read_model(std::istream& in) {
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string bytes = ss.str();
  Reader r(bytes);
  if (r.raw(sizeof kMagic) != std::string(kMagic, sizeof kMagic)) {
    throw CheckpointError("checkpoint: bad magic");
  }
  if (auto v = r.u32(); v != kCheckpointVersion) {
    throw CheckpointError("checkpoint: unsupported version " + std::to_string(v));
  }
  std::map<std::string, std::string> sections;
  for (std::uint32_t n = r.u32(); n > 0; --n) {
    std::string name = r.str();
    std::string payload = r.raw(r.u64());
    sections[std::move(name)] = std::move(payload);
  }
  auto section = [&](const std::string& name) -> const std::string& {
    auto it = sections.find(name);
    if (it == sections.end()) {
      throw CheckpointError("checkpoint: missing section " + name);
    }
    return it->second;
  };

  Model model;
  model.config = config_from_json(section("config"));

  Reader vr(section("vocab"));
  const std::uint32_t vocab_size = vr.u32();
  for (std::uint32_t i = 0; i < vocab_size; ++i) {
    std::string token = vr.str();
    if (model.vocab.add(token) != static_cast<TokenId>(i)) {
      throw CheckpointError("checkpoint: vocabulary ids are not dense");
    }
  }
  model.vocab.freeze();

  Reader kr(section("knowledge.keys"));
  const std::uint32_t key_count = kr.u32();
  KnowledgeTable table(model.config.d);
  const Tensor zero({1, model.config.d});
  for (std::uint32_t i = 0; i < key_count; ++i) {
    std::string key = kr.str();
    std::vector<std::string> words(kr.u32());
    for (auto& w : words) w = kr.str();
    table.add(std::move(key), zero, std::move(words));
  }
  model.params.knowledge = std::move(table);

  const auto names = model.params.names();
  auto refs = model.params.refs(model.config);
  for (std::size_t i = 0; i < names.size(); ++i) {
    *refs[i].tensor = tensor_from(section("param/" + names[i]), names[i]);
  }
  try {
    validate_model(model);
  } catch (const ShapeError& e) {
    throw CheckpointError(std::string("checkpoint: ") + e.what());
  }
  return model;
}

void save_model(const Model& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot write checkpoint " + path.string());
  write_model(model, out);
}

Model load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot read checkpoint " + path.string());
  return read_model(in);
}

}  // namespace kehnn

#ifndef KEHNN_CHECKPOINT_H_
#define KEHNN_CHECKPOINT_H_

#include <cstdint>
#include <filesystem>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>

#include "kehnn/matcher.h"

namespace kehnn {

// Binary model file: "KEHNNCKP", a u32 format version, a u32 section count,
// then named sections (u32 name length, name, u64 payload length, payload).
// Sections hold the config as JSON, the vocabulary, the knowledge keys and
// one "param/<name>" section per array (u32 rank, u64 extents, f64 values).
// All integers and floats are little-endian.
inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void write_model(const Model& model, std::ostream& out);
Model read_model(std::istream& in);

void save_model(const Model& model, const std::filesystem::path& path);
Model load_model(const std::filesystem::path& path);

std::string serialize_model(const Model& model);

}  // namespace kehnn

#endif  // KEHNN_CHECKPOINT_H_

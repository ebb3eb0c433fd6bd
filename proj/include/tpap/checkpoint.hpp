#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "tpap/error.hpp"
#include "tpap/nn.hpp"

namespace tpap {

/// Training provenance stored next to the weights. Deliberately free of
/// timestamps so that identical runs produce identical files.
struct CheckpointMeta {
  std::string dataset;
  std::uint64_t seed = 0;
  int epoch = 0;
  std::string tag;         // e.g. "final" or "best"
  std::string train_spec;  // free-form description of the recipe
  std::map<std::string, std::string> extra;

  bool operator==(const CheckpointMeta&) const = default;
};

class CheckpointError : public Error {
 public:
  enum class Kind { io, bad_magic, bad_version, truncated, bad_shape, bad_architecture, bad_metadata, trailing_data };

  CheckpointError(Kind kind, const std::string& message) : Error(message), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

const char* to_string(CheckpointError::Kind kind) noexcept;

/// Binary layout, all integers little-endian:
///   "TPAPCKPT" | u32 version
///   u32 length | architecture text
///   u32 length | metadata JSON
///   u32 tensor count
///   per tensor: u32 name length | name | u32 rank | u64 dims[rank] | f32 payload
/// The file is written to a sibling temporary, fsynced, then renamed.
void save_checkpoint(const Model& model, const CheckpointMeta& meta, const std::filesystem::path& path);

struct LoadedCheckpoint {
  Model model;
  CheckpointMeta meta;
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// A bare named-tensor bundle ("TPAPTENS"), used for stored input batches.
using TensorBundle = std::map<std::string, Tensor>;
void save_tensors(const TensorBundle& tensors, const std::filesystem::path& path);
TensorBundle load_tensors(const std::filesystem::path& path);

}  // namespace tpap

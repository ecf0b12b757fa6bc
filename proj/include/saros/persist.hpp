#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "saros/core.hpp"
#include "saros/ingest.hpp"
#include "saros/train.hpp"

namespace saros {

inline constexpr char kCheckpointMagic[8] = {'S', 'A', 'R', 'O', 'S', 'C', 'K', '1'};
inline constexpr std::uint8_t kCheckpointVersion = 1;

class CheckpointError : public DataError {
 public:
  using DataError::DataError;
};

struct CheckpointMeta {
  TrainerKind trainer = TrainerKind::saros_b;
  std::size_t epoch = 0;
  std::uint64_t seed = 0;
  std::vector<std::string> user_ids;  // raw id per dense UserId
  std::vector<std::string> item_ids;  // raw id per dense ItemId

  bool operator==(const CheckpointMeta&) const = default;
};

struct Checkpoint {
  ModelParams params;
  TrainConfig config;
  CheckpointMeta meta;
};

/// Sidecar path holding the config and metadata: `<path>.json`.
std::filesystem::path sidecar_path(const std::filesystem::path& path);

/// Binary layout (all integers and floats little-endian):
///   magic "SAROSCK1" | version u8 | N u64 | M u64 | k u64 |
///   user embeddings N*k f64 row-major | item embeddings M*k f64 row-major
/// Both files are written to temporaries and renamed into place.
void save_checkpoint(const ModelParams& params, const TrainConfig& config, const CheckpointMeta& meta,
                     const std::filesystem::path& path);

Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace saros

#pragma once

#include <cstdint>
#include <string>

#include "gmerge/gnn.hpp"

namespace gmerge {

struct CheckpointMeta {
  std::uint64_t seed = 0;
  int epochs = 0;
  std::string domain_tag;
};

/// Versioned self-describing text checkpoint: a header with the descriptor
/// and metadata, then named tensors in row-major decimal with 17 significant
/// digits (lossless for doubles).
void save_checkpoint(const std::string& path, GnnModel& model,
                     const CheckpointMeta& meta);

GnnModel load_checkpoint(const std::string& path,
                         CheckpointMeta* meta = nullptr);

}  // namespace gmerge

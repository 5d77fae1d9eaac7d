// Copyright 2026 N-HANS Desk Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Checkpoint layout: a UTF-8 text header terminated by a line "end",
// followed by little-endian float32 parameter data in header order, then
// (when present) the Adam first and second moments in the same order.

#ifndef NHANS_CHECKPOINT_H_
#define NHANS_CHECKPOINT_H_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nhans/model.h"
#include "nhans/nn.h"

namespace nhans {

inline constexpr int kCheckpointVersion = 1;
inline constexpr const char* kCheckpointMagic = "NHANS-CKPT";

struct Checkpoint {
  PmAuxModel model;
  std::int64_t step = 0;
  std::string rng_state;  // textual std::mt19937_64 state, may be empty
  std::optional<nn::AdamState> optimizer;
};

std::vector<unsigned char> serialize_checkpoint(const Checkpoint& cp);

/// Throws kVersionMismatch (bad magic or version), kMalformedHeader,
/// kTruncatedFile or kCorruptPayload (shape or size disagreement).
Checkpoint parse_checkpoint(std::span<const unsigned char> bytes);

/// Writes to a sibling temporary file and renames it into place.
void save_checkpoint(const Checkpoint& cp, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Convenience for inference: only the model part of a checkpoint.
PmAuxModel load_model(const std::filesystem::path& path);

}  // namespace nhans

#endif  // NHANS_CHECKPOINT_H_

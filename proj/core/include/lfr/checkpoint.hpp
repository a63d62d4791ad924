#pragma once

#include <cstdint>
#include <string>

#include <nlohmann/json.hpp>

#include "lfr/pipeline.hpp"

namespace lfr {

/// Checkpoint container format, version 1:
///
///   bytes 0..7   magic "LFRCKPT1"
///   u64 LE       metadata length
///   metadata     UTF-8 JSON: format_version, config echo, tensor directory
///                (name / shape / offset / count), epoch, rng seed,
///                selection record, projector init seeds
///   blob         contiguous little-endian float32 parameters, addressed by
///                the tensor directory
///   u64 LE       FNV-1a digest of every preceding byte
///
/// save(load(file)) reproduces the file byte for byte.
inline constexpr char kCheckpointMagic[8] = {'L', 'F', 'R', 'C', 'K', 'P', 'T', '1'};

struct LoadedCheckpoint {
  TrainConfig cfg;
  nlohmann::json config_echo;  // full effective run config
  TrainState state;
  std::int64_t input_dim = 0;
  std::uint64_t file_digest = 0;
};

void save_checkpoint(const std::string& path, const TrainState& state, const TrainConfig& cfg,
                     const nlohmann::json& config_echo, std::int64_t input_dim);

/// Verifies the magic and content digest; throws DataError on any mismatch.
LoadedCheckpoint load_checkpoint(const std::string& path);

/// Digest stored in the trailer (also the digest of the file content).
std::uint64_t checkpoint_file_digest(const std::string& path);

}  // namespace lfr

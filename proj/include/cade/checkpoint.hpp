#pragma once

// Model checkpoints: the 8-byte magic "CADECKPT", a little-endian uint32
// format version, a uint64 header length, a JSON header (network config,
// tensor names and shapes, free-form metadata) and the float32 parameter
// and buffer data in header order. Writes go to a temporary file that is
// renamed into place.

#include <filesystem>
#include <memory>

#include <nlohmann/json.hpp>

#include "cade/detector.hpp"

namespace cade {

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, RetinaNet3d<float>& net,
                     const nlohmann::json& metadata = nlohmann::json::object());

struct LoadedCheckpoint {
  std::unique_ptr<RetinaNet3d<float>> net;
  nlohmann::json metadata;
};

/// Missing file raises MissingFile; a bad magic, version or layout raises Io.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace cade

#pragma once

#include <filesystem>

#include "amsrc/model.hpp"

namespace amsrc {

// Checkpoint file: magic "AMCK", one version byte, architecture metadata,
// named tensors (name, dtype tag, shape, little-endian f32 payload), and a
// trailing CRC32 over everything before it. Round-trips are bit-exact.

void save_checkpoint(const AmsrcModel<float>& model, const std::filesystem::path& path);
AmsrcModel<float> load_checkpoint(const std::filesystem::path& path);

}  // namespace amsrc

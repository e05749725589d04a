#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "egomesh/model.hpp"
#include "egomesh/training.hpp"

namespace egomesh {

/// Binary "F2MC": config text, every named tensor, the Adam moments of the
/// trainable tensors and the step counter.
std::vector<std::uint8_t> encode_checkpoint(const Model& model, const AdamState& state);
void save_checkpoint(const std::filesystem::path& path, const Model& model,
                     const AdamState& state);

struct LoadedCheckpoint {
  Model model;
  AdamState state;
};

/// Rebuilds the model from the stored config and overwrites its weights.
/// Throws FormatError (with byte offset) on malformed or truncated input.
LoadedCheckpoint decode_checkpoint(std::span<const std::uint8_t> bytes);
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace egomesh

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "egomesh/backbone.hpp"
#include "egomesh/data.hpp"
#include "egomesh/losses.hpp"

namespace egomesh {

enum class EpeSite { kTokens, kPixels };

struct EpeConfig {
  bool enabled = true;  // false keeps zero tables frozen
  std::size_t bins = 64;
  double init_std = 0.02;
  EpeSite site = EpeSite::kTokens;
};

struct TrainConfig {
  std::size_t steps = 500;
  std::size_t batch_size = 8;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t log_every = 1;
  std::size_t checkpoint_every = 0;  // 0 writes only the final checkpoint
};

struct DataConfig {
  std::size_t count = 64;
  std::uint64_t first_seed = 1000;
  PoseRanges ranges;
};

/// Every tunable of a run. Text form is `key = value` lines with `#`
/// comments; see `to_text` for the full key list with defaults.
struct RunConfig {
  std::uint64_t seed = 1;           // weight initialization
  std::uint64_t body_seed = 7;      // toy body construction
  std::size_t joints = 16;
  std::size_t vertices = 400;
  BackboneConfig backbone;          // also fixes the image size
  std::size_t head_hidden = 256;
  EpeConfig epe;
  LossWeights loss;
  TrainConfig train;
  DataConfig data;
  std::string dataset_path;
  std::string out_path;
  std::string checkpoint_path;

  /// Throws ConfigError on any invalid combination.
  void validate() const;
  /// Canonical text form; parse(to_text()) reproduces the config exactly.
  std::string to_text() const;

  /// Throws ConfigError naming the line for unknown keys or bad values.
  static RunConfig parse(const std::string& text);
  static RunConfig load(const std::filesystem::path& path);
};

}  // namespace egomesh

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "egomesh/body.hpp"
#include "egomesh/geometry.hpp"
#include "egomesh/heads.hpp"
#include "egomesh/tensor.hpp"

namespace egomesh {

struct Sample {
  std::uint64_t seed = 0;
  Tensor image;  // [H x W x 3], float32-representable values in [0, 1]
  BodyParams gt_params;
  Tensor gt_joints3d;                 // [(J+1) x 3], body frame (no cam_t)
  Tensor gt_joints2d;                 // [(J+1) x 2], zeros where masked
  std::vector<std::uint8_t> visible;  // [(J+1)], 1 when inside the field of view
};

/// Sampling ranges. Every range at zero yields the rest pose seen from an
/// untilted head camera.
struct PoseRanges {
  double shape_clip = 2.0;   // theta_s ~ N(0, 1) clipped to [-clip, clip]
  double pose_limit = 0.6;   // per axis-angle component, uniform in [-limit, limit]
  double orient_limit = 0.3; // world root orientation, same convention
  double camera_tilt = 0.15; // camera rotation about x and y, uniform
  Vec3 camera_offset{0.0, -0.10, 0.03};  // from the head joint, in the head frame
  std::size_t max_retries = 100;

  void validate() const;
};

/// Body-part index per vertex (argmax of its skin weights).
std::vector<std::size_t> vertex_parts(const BodyModel& model);

/// Splats camera-frame vertices [Nv x 3] as disks onto an H x W x 3 image:
/// normalized inverse depth, part hue (part + 1) / parts, silhouette. The
/// nearest vertex wins every pixel; points outside the view are skipped.
Tensor rasterize_equirect(const Tensor& camera_vertices, std::span<const std::size_t> parts,
                          std::size_t num_parts, const CameraRig& rig);

/// Deterministic sample for `seed`. Resamples when no joint is visible and
/// throws DegenerateError after `ranges.max_retries` attempts.
Sample generate_sample(std::uint64_t seed, const BodyModel& body, const CameraRig& rig,
                       const PoseRanges& ranges);

struct DatasetHeader {
  std::uint32_t version = 1;
  std::uint64_t count = 0;
  std::uint32_t height = 0;
  std::uint32_t width = 0;
  std::uint32_t joints = 0;
  std::uint32_t vertices = 0;
  std::uint64_t body_seed = 0;
  std::uint64_t first_seed = 0;  // samples use seeds first_seed .. first_seed + count - 1
  CameraRig rig;

  static constexpr std::size_t kBytes = 4 + 4 + 8 + 4 * 4 + 8 + 8 + 7 * 8;
  std::size_t sample_bytes() const;
  std::size_t file_bytes() const { return kBytes + count * sample_bytes(); }
};

struct Dataset {
  DatasetHeader header;
  std::vector<Sample> samples;
};

/// Generates `count` samples with seeds first_seed + i.
Dataset generate_dataset(std::size_t count, std::uint64_t first_seed, std::uint64_t body_seed,
                         const BodyModel& body, const CameraRig& rig, const PoseRanges& ranges);

/// Little-endian binary with magic "F2MD". Throws ContractError when the
/// samples disagree with the header dimensions.
void write_dataset(const std::filesystem::path& path, const Dataset& dataset);
std::vector<std::uint8_t> encode_dataset(const Dataset& dataset);

/// Throws FormatError (with the byte offset) for a bad magic or version,
/// truncation or trailing bytes; never returns a partial dataset.
Dataset read_dataset(const std::filesystem::path& path);
Dataset decode_dataset(std::span<const std::uint8_t> bytes);

/// Plain-text key=value echo of generation parameters.
void write_manifest(const std::filesystem::path& path, const DatasetHeader& header,
                    const PoseRanges& ranges);

}  // namespace egomesh

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "egomesh/geometry.hpp"
#include "egomesh/nn.hpp"
#include "egomesh/rng.hpp"
#include "egomesh/tensor.hpp"

namespace egomesh {

struct BinIndex {
  std::size_t x = 0;
  std::size_t y = 0;
  std::size_t z = 0;
  friend bool operator==(const BinIndex&, const BinIndex&) = default;
};

/// Per-axis bin of a sphere point: floor((c + R) / 2R * bins), clamped to
/// [0, bins - 1]. Throws ContractError on non-finite input.
BinIndex discretize_coords(Vec3 c, std::size_t bins, double radius);

/// Learnable egocentric position embedding. The embedding of a point with
/// bins (i, j, k) is table_x[i] + table_y[j] + table_z[k].
class PositionTable {
 public:
  /// Tables drawn from N(0, init_std^2); init_std == 0 gives zero tables.
  PositionTable(std::size_t bins, std::size_t dim, double radius, double init_std, Rng& rng);

  std::size_t bins() const { return bins_; }
  std::size_t dim() const { return dim_; }
  double radius() const { return radius_; }

  const Tensor& table_x() const { return table_x_; }
  const Tensor& table_y() const { return table_y_; }
  const Tensor& table_z() const { return table_z_; }

  /// Bin triples of the sphere points behind each pixel position.
  std::vector<BinIndex> bin_pixels(std::span<const PixelCoord> pixels,
                                   const CameraRig& rig) const;

  /// [n x dim] embedding rows for precomputed bins.
  Tensor lookup(std::span<const BinIndex> bins) const;

  void collect(const std::string& prefix, std::vector<NamedTensor>& out) const;

 private:
  std::size_t bins_;
  std::size_t dim_;
  double radius_;
  Tensor table_x_;
  Tensor table_y_;
  Tensor table_z_;
};

/// tokens + EPE(pixel_centers); additive only.
Tensor embed_tokens(const Tensor& tokens, std::span<const PixelCoord> pixel_centers,
                    const PositionTable& table, const CameraRig& rig);

/// Same as embed_tokens with bins already computed.
Tensor embed_tokens(const Tensor& tokens, std::span<const BinIndex> bins,
                    const PositionTable& table);

}  // namespace egomesh

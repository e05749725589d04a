#include "egomesh/epe.hpp"

#include <cmath>

#include "egomesh/error.hpp"

namespace egomesh {

namespace {

std::size_t bin_axis(double c, std::size_t bins, double radius) {
  const double t = std::floor((c + radius) / (2.0 * radius) * static_cast<double>(bins));
  if (t <= 0.0) return 0;
  if (t >= static_cast<double>(bins - 1)) return bins - 1;
  return static_cast<std::size_t>(t);
}

Tensor init_table(std::size_t bins, std::size_t dim, double stddev, Rng& rng) {
  std::vector<double> values(bins * dim, 0.0);
  if (stddev > 0.0) {
    for (double& v : values) v = rng.normal(0.0, stddev);
  }
  return Tensor({bins, dim}, std::move(values));
}

}  // namespace

BinIndex discretize_coords(Vec3 c, std::size_t bins, double radius) {
  if (!std::isfinite(c.x) || !std::isfinite(c.y) || !std::isfinite(c.z)) {
    throw ContractError("discretize_coords: non-finite coordinate");
  }
  if (bins < 2) throw ContractError("discretize_coords: need at least 2 bins");
  if (!(radius > 0.0)) throw ContractError("discretize_coords: radius must be positive");
  return {bin_axis(c.x, bins, radius), bin_axis(c.y, bins, radius), bin_axis(c.z, bins, radius)};
}

PositionTable::PositionTable(std::size_t bins, std::size_t dim, double radius, double init_std,
                             Rng& rng)
    : bins_(bins), dim_(dim), radius_(radius) {
  if (bins < 2) throw ConfigError("position table needs at least 2 bins per axis");
  if (dim == 0) throw ConfigError("position table width must be positive");
  table_x_ = init_table(bins, dim, init_std, rng);
  table_y_ = init_table(bins, dim, init_std, rng);
  table_z_ = init_table(bins, dim, init_std, rng);
}

std::vector<BinIndex> PositionTable::bin_pixels(std::span<const PixelCoord> pixels,
                                                const CameraRig& rig) const {
  std::vector<BinIndex> out;
  out.reserve(pixels.size());
  for (const PixelCoord& p : pixels) {
    out.push_back(discretize_coords(pixel_to_cart(rig.planar(p), rig.projection), bins_, radius_));
  }
  return out;
}

Tensor PositionTable::lookup(std::span<const BinIndex> bins) const {
  std::vector<std::size_t> ix;
  std::vector<std::size_t> iy;
  std::vector<std::size_t> iz;
  ix.reserve(bins.size());
  iy.reserve(bins.size());
  iz.reserve(bins.size());
  for (const BinIndex& b : bins) {
    ix.push_back(b.x);
    iy.push_back(b.y);
    iz.push_back(b.z);
  }
  return add(add(gather_rows(table_x_, ix), gather_rows(table_y_, iy)), gather_rows(table_z_, iz));
}

void PositionTable::collect(const std::string& prefix, std::vector<NamedTensor>& out) const {
  out.push_back({prefix + ".table_x", table_x_});
  out.push_back({prefix + ".table_y", table_y_});
  out.push_back({prefix + ".table_z", table_z_});
}

Tensor embed_tokens(const Tensor& tokens, std::span<const BinIndex> bins,
                    const PositionTable& table) {
  if (tokens.rank() != 2 || tokens.dim(1) != table.dim()) {
    throw DimensionError("embed_tokens: token shape " + shape_str(tokens.shape()) +
                         " does not match embedding width " + std::to_string(table.dim()));
  }
  if (tokens.dim(0) != bins.size()) {
    throw DimensionError("embed_tokens: " + std::to_string(tokens.dim(0)) + " tokens but " +
                         std::to_string(bins.size()) + " pixel centers");
  }
  return add(tokens, table.lookup(bins));
}

Tensor embed_tokens(const Tensor& tokens, std::span<const PixelCoord> pixel_centers,
                    const PositionTable& table, const CameraRig& rig) {
  if (tokens.rank() != 2 || tokens.dim(1) != table.dim()) {
    throw DimensionError("embed_tokens: token shape " + shape_str(tokens.shape()) +
                         " does not match embedding width " + std::to_string(table.dim()));
  }
  const auto bins = table.bin_pixels(pixel_centers, rig);
  return embed_tokens(tokens, bins, table);
}

}  // namespace egomesh

#pragma once

#include <cstddef>
#include <numbers>

#include "egomesh/linalg3.hpp"

namespace egomesh {

/// Equirectangular projection parameters. `radius` is in pixels of the
/// equirectangular image; angles in radians.
struct ProjectionParams {
  double radius = 128.0 / std::numbers::pi;
  double phi1 = 0.0;
  double lambda0 = std::numbers::pi / 2;
  double phi0 = std::numbers::pi / 2;

  /// Throws ConfigError unless radius > 0, cos(phi1) != 0 and the
  /// reference angles are finite.
  void validate() const;
};

/// Longitude / latitude on the viewing hemisphere, both in (0, pi).
struct SphereCoord {
  double lambda = 0.0;
  double phi = 0.0;
};

/// Planar image coordinates relative to the projection origin.
struct PlanarCoord {
  double x = 0.0;
  double y = 0.0;
};

/// Pixel position (u right, v down), pixel (row r, col c) has center
/// (c + 0.5, r + 0.5).
struct PixelCoord {
  double u = 0.0;
  double v = 0.0;
};

struct CameraRig {
  ProjectionParams projection;
  double focal = 64.0 / (std::numbers::pi / 2);  // equidistant scale, pixels per radian
  double u0 = 64.0;
  double v0 = 64.0;
  std::size_t height = 128;
  std::size_t width = 128;

  /// Rig whose 180 degree image circle is inscribed in an H x W image and
  /// whose equirectangular radius equals the fisheye focal length.
  static CameraRig inscribed(std::size_t height, std::size_t width);

  void validate() const;

  /// Planar coordinates of a pixel position relative to the principal point.
  PlanarCoord planar(PixelCoord p) const { return {p.u - u0, p.v - v0}; }
};

/// Interior margin applied to angles that land exactly on the (0, pi)
/// boundary.
inline constexpr double kBoundaryClamp = 1e-9;

/// lambda = x / (R cos phi1) + lambda0, phi = y / R + phi0. Throws
/// FieldOfViewError if either angle falls outside [0, pi]; boundary values
/// are moved inward by kBoundaryClamp.
SphereCoord pixel_to_sphere(PlanarCoord p, const ProjectionParams& params);

/// x = R (lambda - lambda0) cos phi1, y = R (phi - phi0).
PlanarCoord sphere_to_pixel(SphereCoord s, const ProjectionParams& params);

/// (R sin phi cos lambda, R sin phi sin lambda, R cos phi).
Vec3 sphere_to_cart(SphereCoord s, double radius);

/// Closed-form composition of pixel_to_sphere and sphere_to_cart.
Vec3 pixel_to_cart(PlanarCoord p, const ProjectionParams& params);

/// Angle between a camera-frame point and the optical axis (+z).
double off_axis_angle(Vec3 point);

/// Equidistant fisheye: r = focal * theta along the image-plane direction of
/// the point. Throws DegenerateError for the zero vector and
/// FieldOfViewError when theta > pi / 2.
PixelCoord fisheye_project(Vec3 point, const CameraRig& rig);

/// Unit ray through a pixel position (inverse of fisheye_project).
Vec3 fisheye_unproject(PixelCoord pixel, const CameraRig& rig);

}  // namespace egomesh

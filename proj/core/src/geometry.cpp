#include "egomesh/geometry.hpp"

#include <cmath>
#include <string>

#include "egomesh/error.hpp"

namespace egomesh {

void ProjectionParams::validate() const {
  if (!(radius > 0.0) || !std::isfinite(radius)) {
    throw ConfigError("projection radius must be positive, got " + std::to_string(radius));
  }
  if (!std::isfinite(phi1) || std::cos(phi1) == 0.0 || std::fabs(std::cos(phi1)) < 1e-12) {
    throw ConfigError("cos(phi1) must be nonzero, got phi1 = " + std::to_string(phi1));
  }
  if (!std::isfinite(lambda0) || !std::isfinite(phi0)) {
    throw ConfigError("reference longitude/latitude must be finite");
  }
}

CameraRig CameraRig::inscribed(std::size_t height, std::size_t width) {
  CameraRig rig;
  rig.height = height;
  rig.width = width;
  rig.u0 = static_cast<double>(width) / 2.0;
  rig.v0 = static_cast<double>(height) / 2.0;
  rig.focal = (static_cast<double>(std::min(height, width)) / 2.0) / (std::numbers::pi / 2);
  rig.projection.radius = rig.focal;
  return rig;
}

void CameraRig::validate() const {
  projection.validate();
  if (height == 0 || width == 0) throw ConfigError("image size must be positive");
  if (!(focal > 0.0) || !std::isfinite(focal)) {
    throw ConfigError("fisheye focal must be positive, got " + std::to_string(focal));
  }
  if (!(u0 >= 0.0 && u0 <= static_cast<double>(width) && v0 >= 0.0 &&
        v0 <= static_cast<double>(height))) {
    throw ConfigError("principal point (" + std::to_string(u0) + ", " + std::to_string(v0) +
                      ") outside image bounds");
  }
}

namespace {

double clamp_open(double angle, const char* what, PlanarCoord p) {
  if (!(angle >= 0.0 && angle <= std::numbers::pi)) {
    throw FieldOfViewError(std::string(what) + " " + std::to_string(angle) + " of planar point (" +
                           std::to_string(p.x) + ", " + std::to_string(p.y) +
                           ") lies outside the 180 degree hemisphere");
  }
  if (angle < kBoundaryClamp) return kBoundaryClamp;
  if (angle > std::numbers::pi - kBoundaryClamp) return std::numbers::pi - kBoundaryClamp;
  return angle;
}

}  // namespace

SphereCoord pixel_to_sphere(PlanarCoord p, const ProjectionParams& params) {
  const double lambda = p.x / (params.radius * std::cos(params.phi1)) + params.lambda0;
  const double phi = p.y / params.radius + params.phi0;
  return {clamp_open(lambda, "longitude", p), clamp_open(phi, "latitude", p)};
}

PlanarCoord sphere_to_pixel(SphereCoord s, const ProjectionParams& params) {
  return {params.radius * (s.lambda - params.lambda0) * std::cos(params.phi1),
          params.radius * (s.phi - params.phi0)};
}

Vec3 sphere_to_cart(SphereCoord s, double radius) {
  const double sp = std::sin(s.phi);
  return {radius * sp * std::cos(s.lambda), radius * sp * std::sin(s.lambda),
          radius * std::cos(s.phi)};
}

Vec3 pixel_to_cart(PlanarCoord p, const ProjectionParams& params) {
  // Range check and boundary clamp are shared with pixel_to_sphere; the
  // trigonometric evaluation is the closed form.
  const SphereCoord s = pixel_to_sphere(p, params);
  const double r = params.radius;
  return {r * std::sin(s.phi) * std::cos(s.lambda), r * std::sin(s.phi) * std::sin(s.lambda),
          r * std::cos(s.phi)};
}

double off_axis_angle(Vec3 point) {
  return std::atan2(std::hypot(point.x, point.y), point.z);
}

PixelCoord fisheye_project(Vec3 point, const CameraRig& rig) {
  if (point.x == 0.0 && point.y == 0.0 && point.z == 0.0) {
    throw DegenerateError("fisheye_project of the camera origin");
  }
  const double rho = std::hypot(point.x, point.y);
  const double theta = std::atan2(rho, point.z);
  if (theta > std::numbers::pi / 2) {
    throw FieldOfViewError("point at " + std::to_string(theta) +
                           " rad off-axis lies outside the 180 degree field of view");
  }
  if (rho == 0.0) return {rig.u0, rig.v0};
  const double r = rig.focal * theta;
  return {rig.u0 + r * point.x / rho, rig.v0 + r * point.y / rho};
}

Vec3 fisheye_unproject(PixelCoord pixel, const CameraRig& rig) {
  const double du = pixel.u - rig.u0;
  const double dv = pixel.v - rig.v0;
  const double r = std::hypot(du, dv);
  const double theta = r / rig.focal;
  if (r == 0.0) return {0.0, 0.0, 1.0};
  const double s = std::sin(theta) / r;
  return {s * du, s * dv, std::cos(theta)};
}

}  // namespace egomesh

#include "egomesh/data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <numbers>

#include "egomesh/error.hpp"
#include "egomesh/linalg3.hpp"
#include "egomesh/rng.hpp"

static_assert(std::endian::native == std::endian::little,
              "the dataset codec assumes a little-endian host");

namespace egomesh {

void PoseRanges::validate() const {
  for (double v : {shape_clip, pose_limit, orient_limit, camera_tilt}) {
    if (!std::isfinite(v) || v < 0.0) throw ConfigError("pose ranges must be finite and >= 0");
  }
  if (camera_tilt >= std::numbers::pi / 2) throw ConfigError("camera tilt must be below pi/2");
  if (max_retries == 0) throw ConfigError("max_retries must be positive");
}

std::vector<std::size_t> vertex_parts(const BodyModel& model) {
  const std::size_t nv = model.num_vertices();
  const std::size_t nj = model.parents.size();
  const auto w = model.skin_weights.values();
  std::vector<std::size_t> parts(nv);
  for (std::size_t n = 0; n < nv; ++n) {
    const double* row = w.data() + n * nj;
    parts[n] = static_cast<std::size_t>(std::max_element(row, row + nj) - row);
  }
  return parts;
}

namespace {

constexpr double kNearDepth = 0.1;
constexpr double kSplatScale = 0.03;  // meters of body surface per splat radius

double as_float(double v) { return static_cast<double>(static_cast<float>(v)); }

bool in_view(Vec3 p) {
  if (p.x == 0.0 && p.y == 0.0 && p.z == 0.0) return false;
  return off_axis_angle(p) <= std::numbers::pi / 2;
}

std::vector<Mat3> world_rotations(const BodyModel& body, Vec3 orient,
                                  std::span<const double> theta_p) {
  const std::size_t nj = body.parents.size();
  std::vector<Mat3> rot(nj);
  rot[0] = axis_angle_to_matrix(orient);
  for (std::size_t j = 1; j < nj; ++j) {
    const Vec3 w{theta_p[3 * (j - 1)], theta_p[3 * (j - 1) + 1], theta_p[3 * (j - 1) + 2]};
    rot[j] = rot[static_cast<std::size_t>(body.parents[j])] * axis_angle_to_matrix(w);
  }
  return rot;
}

}  // namespace

Tensor rasterize_equirect(const Tensor& camera_vertices, std::span<const std::size_t> parts,
                          std::size_t num_parts, const CameraRig& rig) {
  if (camera_vertices.rank() != 2 || camera_vertices.dim(1) != 3) {
    throw DimensionError("rasterize expects [Nv x 3] vertices, got " +
                         shape_str(camera_vertices.shape()));
  }
  const std::size_t nv = camera_vertices.dim(0);
  if (parts.size() != nv) {
    throw ContractError("rasterize: " + std::to_string(parts.size()) + " part ids for " +
                        std::to_string(nv) + " vertices");
  }
  if (num_parts == 0) throw ContractError("rasterize: num_parts must be positive");
  const std::size_t h = rig.height;
  const std::size_t w = rig.width;
  std::vector<double> image(h * w * 3, 0.0);
  std::vector<double> depth(h * w, std::numeric_limits<double>::infinity());
  const auto v = camera_vertices.values();
  for (std::size_t n = 0; n < nv; ++n) {
    const Vec3 p{v[3 * n], v[3 * n + 1], v[3 * n + 2]};
    if (!in_view(p)) continue;
    const PixelCoord px = fisheye_project(p, rig);
    const double d = norm(p);
    const double radius = std::clamp(rig.focal * kSplatScale / d, 1.0, 4.0);
    const double r2 = radius * radius;
    const double shade = as_float(std::min(1.0, kNearDepth / d));
    const double hue =
        as_float(static_cast<double>(parts[n] + 1) / static_cast<double>(num_parts));
    const auto lo = [](double x) { return static_cast<long>(std::floor(x)); };
    const long r0 = std::max(0L, lo(px.v - radius - 0.5));
    const long r1 = std::min(static_cast<long>(h) - 1, lo(px.v + radius));
    const long c0 = std::max(0L, lo(px.u - radius - 0.5));
    const long c1 = std::min(static_cast<long>(w) - 1, lo(px.u + radius));
    for (long r = r0; r <= r1; ++r) {
      for (long c = c0; c <= c1; ++c) {
        const double du = static_cast<double>(c) + 0.5 - px.u;
        const double dv = static_cast<double>(r) + 0.5 - px.v;
        if (du * du + dv * dv > r2) continue;
        const std::size_t idx = static_cast<std::size_t>(r) * w + static_cast<std::size_t>(c);
        if (d >= depth[idx]) continue;
        depth[idx] = d;
        image[3 * idx] = shade;
        image[3 * idx + 1] = hue;
        image[3 * idx + 2] = 1.0;
      }
    }
  }
  return Tensor({h, w, 3}, std::move(image));
}

Sample generate_sample(std::uint64_t seed, const BodyModel& body, const CameraRig& rig,
                       const PoseRanges& ranges) {
  ranges.validate();
  const std::size_t joints = body.num_joints();
  const std::size_t nj = joints + 1;
  const std::size_t head = std::min<std::size_t>(4, joints);
  const auto parts = vertex_parts(body);
  Rng rng(seed);
  for (std::size_t attempt = 0; attempt < ranges.max_retries; ++attempt) {
    std::vector<double> shape(kShapeCoeffs);
    for (double& s : shape) {
      s = std::clamp(rng.normal(), -ranges.shape_clip, ranges.shape_clip);
    }
    std::vector<double> pose(3 * joints);
    for (double& p : pose) p = rng.uniform(-ranges.pose_limit, ranges.pose_limit);
    Vec3 orient_world;
    for (std::size_t c = 0; c < 3; ++c) {
      orient_world[c] = rng.uniform(-ranges.orient_limit, ranges.orient_limit);
    }
    const Vec3 tilt{rng.uniform(-ranges.camera_tilt, ranges.camera_tilt),
                    rng.uniform(-ranges.camera_tilt, ranges.camera_tilt), 0.0};

    BodyParams world{Tensor({kShapeCoeffs}, shape), Tensor({joints, 3}, pose),
                     Tensor({3}, {orient_world.x, orient_world.y, orient_world.z}),
                     Tensor::zeros({3})};
    const MeshResult world_mesh = body_forward(body, world);
    const auto rot = world_rotations(body, orient_world, pose);
    const auto wj = world_mesh.joints3d.values();
    const Vec3 head_pos{wj[3 * head], wj[3 * head + 1], wj[3 * head + 2]};
    const Mat3 cam_rot = rot[head] * axis_angle_to_matrix(tilt);  // camera -> world
    const Vec3 center = head_pos + rot[head] * ranges.camera_offset;
    const Mat3 to_cam = cam_rot.transposed();
    const Vec3 orient_cam = matrix_to_axis_angle(to_cam * rot[0]);
    const Vec3 cam_t = -1.0 * (to_cam * center);

    BodyParams gt{Tensor({kShapeCoeffs}, shape), Tensor({joints, 3}, pose),
                  Tensor({3}, {orient_cam.x, orient_cam.y, orient_cam.z}),
                  Tensor({3}, {cam_t.x, cam_t.y, cam_t.z})};
    const MeshResult mesh = body_forward(body, gt);

    const Tensor cam_joints = add(mesh.joints3d, gt.cam_t);
    const auto cj = cam_joints.values();
    std::vector<std::uint8_t> visible(nj, 0);
    bool any = false;
    for (std::size_t j = 0; j < nj; ++j) {
      visible[j] = in_view({cj[3 * j], cj[3 * j + 1], cj[3 * j + 2]}) ? 1 : 0;
      any = any || visible[j];
    }
    if (!any) continue;
    const Tensor projected = project_points(cam_joints, rig);
    std::vector<double> j2d(projected.values().begin(), projected.values().end());
    for (std::size_t j = 0; j < nj; ++j) {
      if (!visible[j]) j2d[2 * j] = j2d[2 * j + 1] = 0.0;
    }

    Sample s;
    s.seed = seed;
    s.image = rasterize_equirect(add(mesh.vertices, gt.cam_t), parts, nj, rig);
    s.gt_params = std::move(gt);
    s.gt_joints3d = mesh.joints3d;
    s.gt_joints2d = Tensor({nj, 2}, std::move(j2d));
    s.visible = std::move(visible);
    return s;
  }
  throw DegenerateError("sample seed " + std::to_string(seed) + ": no joint visible after " +
                        std::to_string(ranges.max_retries) + " attempts");
}

std::size_t DatasetHeader::sample_bytes() const {
  const std::size_t nj = std::size_t{joints} + 1;
  return 8 + std::size_t{height} * width * 3 * 4 + BodyParams::flat_size(joints) * 8 +
         nj * 3 * 8 + nj * 2 * 8 + nj;
}

Dataset generate_dataset(std::size_t count, std::uint64_t first_seed, std::uint64_t body_seed,
                         const BodyModel& body, const CameraRig& rig, const PoseRanges& ranges) {
  Dataset ds;
  ds.header.count = count;
  ds.header.height = static_cast<std::uint32_t>(rig.height);
  ds.header.width = static_cast<std::uint32_t>(rig.width);
  ds.header.joints = static_cast<std::uint32_t>(body.num_joints());
  ds.header.vertices = static_cast<std::uint32_t>(body.num_vertices());
  ds.header.body_seed = body_seed;
  ds.header.first_seed = first_seed;
  ds.header.rig = rig;
  ds.samples.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    ds.samples.push_back(generate_sample(first_seed + i, body, rig, ranges));
  }
  return ds;
}

namespace {

constexpr char kMagic[4] = {'F', '2', 'M', 'D'};
constexpr std::uint32_t kVersion = 1;

class Writer {
 public:
  explicit Writer(std::size_t reserve) { bytes_.reserve(reserve); }
  template <typename T>
  void put(T value) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&value);
    bytes_.insert(bytes_.end(), p, p + sizeof(T));
  }
  void raw(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    bytes_.insert(bytes_.end(), p, p + n);
  }
  std::vector<std::uint8_t> take() { return std::move(bytes_); }

 private:
  std::vector<std::uint8_t> bytes_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}
  template <typename T>
  T get(const char* what) {
    need(sizeof(T), what);
    T value;
    std::memcpy(&value, bytes_.data() + offset_, sizeof(T));
    offset_ += sizeof(T);
    return value;
  }
  void raw(void* out, std::size_t n, const char* what) {
    need(n, what);
    std::memcpy(out, bytes_.data() + offset_, n);
    offset_ += n;
  }
  std::size_t offset() const { return offset_; }

 private:
  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - offset_ < n) {
      throw FormatError("truncated dataset: " + std::string(what) + " needs " + std::to_string(n) +
                        " bytes at byte offset " + std::to_string(offset_) + ", file has " +
                        std::to_string(bytes_.size()));
    }
  }
  std::span<const std::uint8_t> bytes_;
  std::size_t offset_ = 0;
};

void check_sample(const Sample& s, const DatasetHeader& h, std::size_t index) {
  const std::size_t nj = std::size_t{h.joints} + 1;
  auto fail = [&](const std::string& what) {
    throw ContractError("sample " + std::to_string(index) + ": " + what +
                        " disagrees with the dataset header");
  };
  if (s.image.shape() != Shape{h.height, h.width, 3}) fail("image shape");
  if (s.gt_params.theta_p.shape() != Shape{h.joints, 3}) fail("pose size");
  if (s.gt_joints3d.shape() != Shape{nj, 3}) fail("joints3d shape");
  if (s.gt_joints2d.shape() != Shape{nj, 2}) fail("joints2d shape");
  if (s.visible.size() != nj) fail("visibility mask size");
}

}  // namespace

std::vector<std::uint8_t> encode_dataset(const Dataset& ds) {
  DatasetHeader h = ds.header;
  if (h.count != ds.samples.size()) {
    throw ContractError("dataset header count " + std::to_string(h.count) + " but " +
                        std::to_string(ds.samples.size()) + " samples");
  }
  Writer w(h.file_bytes());
  w.raw(kMagic, 4);
  w.put<std::uint32_t>(kVersion);
  w.put<std::uint64_t>(h.count);
  w.put<std::uint32_t>(h.height);
  w.put<std::uint32_t>(h.width);
  w.put<std::uint32_t>(h.joints);
  w.put<std::uint32_t>(h.vertices);
  w.put<std::uint64_t>(h.body_seed);
  w.put<std::uint64_t>(h.first_seed);
  for (double v : {h.rig.projection.radius, h.rig.projection.phi1, h.rig.projection.lambda0,
                   h.rig.projection.phi0, h.rig.focal, h.rig.u0, h.rig.v0}) {
    w.put<double>(v);
  }
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    const Sample& s = ds.samples[i];
    check_sample(s, h, i);
    w.put<std::uint64_t>(s.seed);
    for (double v : s.image.values()) w.put<float>(static_cast<float>(v));
    for (double v : s.gt_params.flat()) w.put<double>(v);
    for (double v : s.gt_joints3d.values()) w.put<double>(v);
    for (double v : s.gt_joints2d.values()) w.put<double>(v);
    w.raw(s.visible.data(), s.visible.size());
  }
  return w.take();
}

void write_dataset(const std::filesystem::path& path, const Dataset& ds) {
  const auto bytes = encode_dataset(ds);
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw InputError("cannot open " + path.string() + " for writing");
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw InputError("failed writing " + path.string());
}

Dataset decode_dataset(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  char magic[4];
  r.raw(magic, 4, "magic");
  if (std::memcmp(magic, kMagic, 4) != 0) {
    throw FormatError("bad dataset magic at byte offset 0 (expected F2MD)");
  }
  Dataset ds;
  DatasetHeader& h = ds.header;
  h.version = r.get<std::uint32_t>("version");
  if (h.version != kVersion) {
    throw FormatError("unsupported dataset version " + std::to_string(h.version) +
                      " at byte offset 4");
  }
  h.count = r.get<std::uint64_t>("sample count");
  h.height = r.get<std::uint32_t>("height");
  h.width = r.get<std::uint32_t>("width");
  h.joints = r.get<std::uint32_t>("joint count");
  h.vertices = r.get<std::uint32_t>("vertex count");
  h.body_seed = r.get<std::uint64_t>("body seed");
  h.first_seed = r.get<std::uint64_t>("first seed");
  h.rig.projection.radius = r.get<double>("rig");
  h.rig.projection.phi1 = r.get<double>("rig");
  h.rig.projection.lambda0 = r.get<double>("rig");
  h.rig.projection.phi0 = r.get<double>("rig");
  h.rig.focal = r.get<double>("rig");
  h.rig.u0 = r.get<double>("rig");
  h.rig.v0 = r.get<double>("rig");
  h.rig.height = h.height;
  h.rig.width = h.width;
  if (h.height == 0 || h.width == 0 || h.joints == 0 || h.vertices == 0) {
    throw FormatError("dataset header has a zero dimension (byte offset 16)");
  }
  const std::size_t per = h.sample_bytes();
  if (h.count > (std::numeric_limits<std::size_t>::max() - DatasetHeader::kBytes) / per) {
    throw FormatError("dataset sample count " + std::to_string(h.count) +
                      " overflows (byte offset 8)");
  }
  const std::size_t expected = h.file_bytes();
  if (bytes.size() < expected) {
    throw FormatError("truncated dataset: header promises " + std::to_string(expected) +
                      " bytes, file ends at byte offset " + std::to_string(bytes.size()));
  }
  if (bytes.size() > expected) {
    throw FormatError("dataset has " + std::to_string(bytes.size() - expected) +
                      " trailing bytes at byte offset " + std::to_string(expected));
  }

  const std::size_t nj = std::size_t{h.joints} + 1;
  const std::size_t npix = std::size_t{h.height} * h.width * 3;
  ds.samples.reserve(h.count);
  std::vector<float> pixels(npix);
  for (std::uint64_t i = 0; i < h.count; ++i) {
    Sample s;
    s.seed = r.get<std::uint64_t>("sample seed");
    r.raw(pixels.data(), npix * sizeof(float), "image");
    std::vector<double> image(pixels.begin(), pixels.end());
    s.image = Tensor({h.height, h.width, 3}, std::move(image));
    std::vector<double> flat(BodyParams::flat_size(h.joints));
    r.raw(flat.data(), flat.size() * sizeof(double), "parameters");
    s.gt_params = BodyParams::from_flat(flat, h.joints);
    std::vector<double> j3(nj * 3);
    r.raw(j3.data(), j3.size() * sizeof(double), "joints3d");
    s.gt_joints3d = Tensor({nj, 3}, std::move(j3));
    std::vector<double> j2(nj * 2);
    r.raw(j2.data(), j2.size() * sizeof(double), "joints2d");
    s.gt_joints2d = Tensor({nj, 2}, std::move(j2));
    const std::size_t mask_at = r.offset();
    s.visible.resize(nj);
    r.raw(s.visible.data(), nj, "visibility mask");
    for (std::size_t j = 0; j < nj; ++j) {
      if (s.visible[j] > 1) {
        throw FormatError("visibility byte " + std::to_string(s.visible[j]) +
                          " at byte offset " + std::to_string(mask_at + j));
      }
    }
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

Dataset read_dataset(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InputError("cannot open dataset " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)),
                                  std::istreambuf_iterator<char>());
  return decode_dataset(bytes);
}

void write_manifest(const std::filesystem::path& path, const DatasetHeader& h,
                    const PoseRanges& ranges) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw InputError("cannot open " + path.string() + " for writing");
  char line[160];
  auto emit_u = [&](const char* key, unsigned long long v) {
    std::snprintf(line, sizeof line, "%s=%llu\n", key, v);
    os << line;
  };
  auto emit_d = [&](const char* key, double v) {
    std::snprintf(line, sizeof line, "%s=%.17g\n", key, v);
    os << line;
  };
  emit_u("version", h.version);
  emit_u("count", h.count);
  emit_u("height", h.height);
  emit_u("width", h.width);
  emit_u("joints", h.joints);
  emit_u("vertices", h.vertices);
  emit_u("body_seed", h.body_seed);
  emit_u("first_seed", h.first_seed);
  emit_u("last_seed", h.count == 0 ? h.first_seed : h.first_seed + h.count - 1);
  emit_d("rig.radius", h.rig.projection.radius);
  emit_d("rig.phi1", h.rig.projection.phi1);
  emit_d("rig.lambda0", h.rig.projection.lambda0);
  emit_d("rig.phi0", h.rig.projection.phi0);
  emit_d("rig.focal", h.rig.focal);
  emit_d("rig.u0", h.rig.u0);
  emit_d("rig.v0", h.rig.v0);
  emit_d("shape_clip", ranges.shape_clip);
  emit_d("pose_limit", ranges.pose_limit);
  emit_d("orient_limit", ranges.orient_limit);
  emit_d("camera_tilt", ranges.camera_tilt);
  emit_d("camera_offset.x", ranges.camera_offset.x);
  emit_d("camera_offset.y", ranges.camera_offset.y);
  emit_d("camera_offset.z", ranges.camera_offset.z);
  emit_u("max_retries", ranges.max_retries);
  if (!os) throw InputError("failed writing " + path.string());
}

}  // namespace egomesh

#include "egomesh/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <vector>

#include "egomesh/body.hpp"
#include "egomesh/error.hpp"

namespace egomesh {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::uint64_t parse_u64(const std::string& s) {
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw ConfigError("expected a nonnegative integer, got '" + s + "'");
  }
  return v;
}

double parse_double(const std::string& s) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) {
    throw ConfigError("expected a finite number, got '" + s + "'");
  }
  return v;
}

bool parse_bool(const std::string& s) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw ConfigError("expected true or false, got '" + s + "'");
}

std::vector<std::size_t> parse_list(const std::string& s) {
  std::vector<std::size_t> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_u64(trim(item)));
  if (out.empty()) throw ConfigError("expected a comma-separated list, got '" + s + "'");
  return out;
}

std::string fmt_list(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(v[i]);
  }
  return out;
}

struct Field {
  const char* key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define EGOMESH_SIZE(key, expr)                                                         \
  Field {                                                                               \
    key, [](RunConfig& c, const std::string& v) { expr = static_cast<std::decay_t<decltype(expr)>>(parse_u64(v)); }, \
        [](const RunConfig& c) { return std::to_string(expr); }                         \
  }
#define EGOMESH_REAL(key, expr)                                                  \
  Field {                                                                        \
    key, [](RunConfig& c, const std::string& v) { expr = parse_double(v); },     \
        [](const RunConfig& c) { return fmt_double(expr); }                      \
  }
#define EGOMESH_TEXT(key, expr)                                      \
  Field {                                                            \
    key, [](RunConfig& c, const std::string& v) { expr = v; },       \
        [](const RunConfig& c) { return expr; }                      \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      EGOMESH_SIZE("seed", c.seed),
      EGOMESH_SIZE("body.seed", c.body_seed),
      EGOMESH_SIZE("body.joints", c.joints),
      EGOMESH_SIZE("body.vertices", c.vertices),
      EGOMESH_SIZE("image.height", c.backbone.height),
      EGOMESH_SIZE("image.width", c.backbone.width),
      EGOMESH_SIZE("backbone.patch", c.backbone.patch),
      EGOMESH_SIZE("backbone.channels", c.backbone.channels),
      Field{"backbone.depths",
            [](RunConfig& c, const std::string& v) { c.backbone.depths = parse_list(v); },
            [](const RunConfig& c) { return fmt_list(c.backbone.depths); }},
      Field{"backbone.heads",
            [](RunConfig& c, const std::string& v) { c.backbone.heads = parse_list(v); },
            [](const RunConfig& c) { return fmt_list(c.backbone.heads); }},
      EGOMESH_SIZE("backbone.window", c.backbone.window),
      EGOMESH_SIZE("heads.hidden", c.head_hidden),
      Field{"epe.enabled",
            [](RunConfig& c, const std::string& v) { c.epe.enabled = parse_bool(v); },
            [](const RunConfig& c) { return std::string(c.epe.enabled ? "true" : "false"); }},
      EGOMESH_SIZE("epe.bins", c.epe.bins),
      EGOMESH_REAL("epe.init_std", c.epe.init_std),
      Field{"epe.site",
            [](RunConfig& c, const std::string& v) {
              if (v == "tokens") {
                c.epe.site = EpeSite::kTokens;
              } else if (v == "pixels") {
                c.epe.site = EpeSite::kPixels;
              } else {
                throw ConfigError("epe.site must be tokens or pixels, got '" + v + "'");
              }
            },
            [](const RunConfig& c) {
              return std::string(c.epe.site == EpeSite::kTokens ? "tokens" : "pixels");
            }},
      EGOMESH_REAL("loss.a", c.loss.a),
      EGOMESH_REAL("loss.b", c.loss.b),
      EGOMESH_REAL("loss.c", c.loss.c),
      EGOMESH_SIZE("train.steps", c.train.steps),
      EGOMESH_SIZE("train.batch_size", c.train.batch_size),
      EGOMESH_REAL("train.lr", c.train.lr),
      EGOMESH_REAL("train.beta1", c.train.beta1),
      EGOMESH_REAL("train.beta2", c.train.beta2),
      EGOMESH_REAL("train.eps", c.train.eps),
      EGOMESH_SIZE("train.log_every", c.train.log_every),
      EGOMESH_SIZE("train.checkpoint_every", c.train.checkpoint_every),
      EGOMESH_SIZE("data.count", c.data.count),
      EGOMESH_SIZE("data.first_seed", c.data.first_seed),
      EGOMESH_REAL("data.shape_clip", c.data.ranges.shape_clip),
      EGOMESH_REAL("data.pose_limit", c.data.ranges.pose_limit),
      EGOMESH_REAL("data.orient_limit", c.data.ranges.orient_limit),
      EGOMESH_REAL("data.camera_tilt", c.data.ranges.camera_tilt),
      EGOMESH_REAL("data.camera_offset_x", c.data.ranges.camera_offset.x),
      EGOMESH_REAL("data.camera_offset_y", c.data.ranges.camera_offset.y),
      EGOMESH_REAL("data.camera_offset_z", c.data.ranges.camera_offset.z),
      EGOMESH_SIZE("data.max_retries", c.data.ranges.max_retries),
      EGOMESH_TEXT("paths.dataset", c.dataset_path),
      EGOMESH_TEXT("paths.out", c.out_path),
      EGOMESH_TEXT("paths.checkpoint", c.checkpoint_path),
  };
  return table;
}

#undef EGOMESH_SIZE
#undef EGOMESH_REAL
#undef EGOMESH_TEXT

}  // namespace

void RunConfig::validate() const {
  backbone.validate();
  if (joints < 1 || joints > kMaxToyJoints) {
    throw ConfigError("body.joints must be in 1.." + std::to_string(kMaxToyJoints) + ", got " +
                      std::to_string(joints));
  }
  if (vertices < joints + 1) throw ConfigError("body.vertices must be at least body.joints + 1");
  if (head_hidden == 0) throw ConfigError("heads.hidden must be positive");
  if (epe.bins < 2) throw ConfigError("epe.bins must be at least 2");
  if (!(epe.init_std >= 0.0)) throw ConfigError("epe.init_std must be nonnegative");
  loss.validate();
  if (train.batch_size == 0) throw ConfigError("train.batch_size must be positive");
  if (!(train.lr > 0.0)) throw ConfigError("train.lr must be positive");
  if (!(train.beta1 >= 0.0 && train.beta1 < 1.0) || !(train.beta2 >= 0.0 && train.beta2 < 1.0)) {
    throw ConfigError("train.beta1 and train.beta2 must lie in [0, 1)");
  }
  if (!(train.eps > 0.0)) throw ConfigError("train.eps must be positive");
  if (train.log_every == 0) throw ConfigError("train.log_every must be positive");
  if (data.count == 0) throw ConfigError("data.count must be positive");
  data.ranges.validate();
}

std::string RunConfig::to_text() const {
  std::string out;
  for (const auto& f : fields()) {
    out += f.key;
    out += " = ";
    out += f.get(*this);
    out += '\n';
  }
  return out;
}

RunConfig RunConfig::parse(const std::string& text) {
  RunConfig cfg;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(number) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const Field* field = nullptr;
    for (const auto& f : fields()) {
      if (key == f.key) field = &f;
    }
    if (field == nullptr) {
      throw ConfigError("config line " + std::to_string(number) + ": unknown key '" + key + "'");
    }
    if (!seen.insert(key).second) {
      throw ConfigError("config line " + std::to_string(number) + ": duplicate key '" + key + "'");
    }
    try {
      field->set(cfg, value);
    } catch (const ConfigError& e) {
      throw ConfigError("config line " + std::to_string(number) + " (" + key + "): " + e.what());
    }
  }
  cfg.validate();
  return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse(ss.str());
}

}  // namespace egomesh

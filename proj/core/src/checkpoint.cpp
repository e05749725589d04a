#include "egomesh/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <string>

#include "egomesh/error.hpp"

static_assert(std::endian::native == std::endian::little,
              "the checkpoint codec assumes a little-endian host");

namespace egomesh {

namespace {

constexpr char kMagic[4] = {'F', '2', 'M', 'C'};
constexpr std::uint32_t kVersion = 1;

struct Out {
  std::vector<std::uint8_t> bytes;
  template <typename T>
  void put(T v) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
    bytes.insert(bytes.end(), p, p + sizeof(T));
  }
  void text(const std::string& s) {
    put<std::uint64_t>(s.size());
    bytes.insert(bytes.end(), s.begin(), s.end());
  }
  void doubles(std::span<const double> v) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(v.data());
    bytes.insert(bytes.end(), p, p + v.size() * sizeof(double));
  }
};

struct In {
  std::span<const std::uint8_t> bytes;
  std::size_t at = 0;

  void need(std::size_t n, const char* what) const {
    if (bytes.size() - at < n) {
      throw FormatError("truncated checkpoint: " + std::string(what) + " needs " +
                        std::to_string(n) + " bytes at byte offset " + std::to_string(at) +
                        ", file has " + std::to_string(bytes.size()));
    }
  }
  template <typename T>
  T get(const char* what) {
    need(sizeof(T), what);
    T v;
    std::memcpy(&v, bytes.data() + at, sizeof(T));
    at += sizeof(T);
    return v;
  }
  std::string text(const char* what) {
    const auto n = get<std::uint64_t>(what);
    need(n, what);
    std::string s(reinterpret_cast<const char*>(bytes.data() + at), n);
    at += n;
    return s;
  }
  void doubles(std::span<double> out, const char* what) {
    if (out.size() > (bytes.size() - at) / sizeof(double)) need(out.size() * sizeof(double), what);
    std::memcpy(out.data(), bytes.data() + at, out.size() * sizeof(double));
    at += out.size() * sizeof(double);
  }
};

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Model& model, const AdamState& state) {
  const auto tensors = model.named_tensors();
  const auto trainable = model.trainable();
  Out o;
  o.bytes.insert(o.bytes.end(), kMagic, kMagic + 4);
  o.put<std::uint32_t>(kVersion);
  o.text(model.config().to_text());
  o.put<std::uint64_t>(state.step);
  o.put<std::uint64_t>(tensors.size());
  for (const auto& t : tensors) {
    o.text(t.name);
    const Shape& s = t.tensor.shape();
    o.put<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    for (std::size_t d : s) o.put<std::uint64_t>(d);
    o.doubles(t.tensor.values());
  }
  const bool has_moments = !state.m.empty();
  if (has_moments && (state.m.size() != trainable.size() || state.v.size() != trainable.size())) {
    throw ContractError("optimizer state does not match the trainable tensors");
  }
  o.put<std::uint64_t>(has_moments ? trainable.size() : 0);
  if (has_moments) {
    for (std::size_t k = 0; k < trainable.size(); ++k) {
      o.text(trainable[k].name);
      o.doubles(state.m[k]);
      o.doubles(state.v[k]);
    }
  }
  return std::move(o.bytes);
}

void save_checkpoint(const std::filesystem::path& path, const Model& model,
                     const AdamState& state) {
  const auto bytes = encode_checkpoint(model, state);
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw InputError("cannot open " + path.string() + " for writing");
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw InputError("failed writing " + path.string());
}

LoadedCheckpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  In in{bytes};
  char magic[4];
  in.need(4, "magic");
  std::memcpy(magic, bytes.data(), 4);
  in.at = 4;
  if (std::memcmp(magic, kMagic, 4) != 0) {
    throw FormatError("bad checkpoint magic at byte offset 0 (expected F2MC)");
  }
  const auto version = in.get<std::uint32_t>("version");
  if (version != kVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version) +
                      " at byte offset 4");
  }
  const std::size_t config_at = in.at;
  RunConfig config;
  try {
    config = RunConfig::parse(in.text("config"));
  } catch (const ConfigError& e) {
    throw FormatError("checkpoint config at byte offset " + std::to_string(config_at) +
                      " is invalid: " + e.what());
  }
  Model model(config);
  AdamState state;
  state.step = in.get<std::uint64_t>("step");

  auto tensors = model.named_tensors();
  const std::size_t count_at = in.at;
  const auto count = in.get<std::uint64_t>("tensor count");
  if (count != tensors.size()) {
    throw FormatError("checkpoint holds " + std::to_string(count) + " tensors at byte offset " +
                      std::to_string(count_at) + ", config implies " +
                      std::to_string(tensors.size()));
  }
  for (auto& t : tensors) {
    const std::size_t name_at = in.at;
    const std::string name = in.text("tensor name");
    if (name != t.name) {
      throw FormatError("expected tensor '" + t.name + "' at byte offset " +
                        std::to_string(name_at) + ", found '" + name + "'");
    }
    const auto rank = in.get<std::uint32_t>("tensor rank");
    Shape shape;
    for (std::uint32_t r = 0; r < rank; ++r) shape.push_back(in.get<std::uint64_t>("tensor dim"));
    if (shape != t.tensor.shape()) {
      throw FormatError("tensor '" + name + "' has shape " + shape_str(shape) + ", config implies " +
                        shape_str(t.tensor.shape()) + " (byte offset " +
                        std::to_string(name_at) + ")");
    }
    in.doubles(t.tensor.mutable_values(), "tensor values");
  }

  const auto trainable = model.trainable();
  const std::size_t moments_at = in.at;
  const auto moments = in.get<std::uint64_t>("moment count");
  if (moments != 0 && moments != trainable.size()) {
    throw FormatError("checkpoint holds " + std::to_string(moments) +
                      " optimizer moments at byte offset " + std::to_string(moments_at) +
                      ", config implies " + std::to_string(trainable.size()));
  }
  for (std::size_t k = 0; k < moments; ++k) {
    const std::size_t name_at = in.at;
    const std::string name = in.text("moment name");
    if (name != trainable[k].name) {
      throw FormatError("expected moments of '" + trainable[k].name + "' at byte offset " +
                        std::to_string(name_at) + ", found '" + name + "'");
    }
    state.m.emplace_back(trainable[k].tensor.numel());
    state.v.emplace_back(trainable[k].tensor.numel());
    in.doubles(state.m.back(), "first moments");
    in.doubles(state.v.back(), "second moments");
  }
  if (in.at != bytes.size()) {
    throw FormatError("checkpoint has " + std::to_string(bytes.size() - in.at) +
                      " trailing bytes at byte offset " + std::to_string(in.at));
  }
  return {std::move(model), std::move(state)};
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InputError("cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)),
                                  std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace egomesh

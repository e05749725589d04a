#include <CLI11.hpp>
#ifdef EGOMESH_VENDORED_JSON
#include <json.hpp>
#else
#include <nlohmann/json.hpp>
#endif

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "egomesh/body.hpp"
#include "egomesh/checkpoint.hpp"
#include "egomesh/config.hpp"
#include "egomesh/data.hpp"
#include "egomesh/error.hpp"
#include "egomesh/model.hpp"
#include "egomesh/selfcheck.hpp"
#include "egomesh/training.hpp"

namespace fs = std::filesystem;
using namespace egomesh;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitCheck = 3;

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string checkpoint;
  std::string dataset;
  std::optional<std::size_t> index;
  std::string image;
  bool no_model = false;
};

RunConfig load_config(const Flags& flags) {
  RunConfig cfg = flags.config.empty() ? RunConfig{} : RunConfig::load(flags.config);
  cfg.validate();
  return cfg;
}

std::string pick(const std::string& flag, const std::string& fallback, const char* what) {
  const std::string path = flag.empty() ? fallback : flag;
  if (path.empty()) throw ConfigError(std::string("no ") + what + " path given");
  return path;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw InputError("cannot open " + path.string() + " for writing");
  return os;
}

Dataset load_dataset_checked(const std::string& path) {
  if (!fs::is_regular_file(path)) throw InputError("dataset not found: " + path);
  return read_dataset(path);
}

const Sample& sample_at(const Dataset& data, std::size_t index) {
  if (index >= data.samples.size()) {
    throw InputError("sample index " + std::to_string(index) + " out of range (dataset has " +
                     std::to_string(data.samples.size()) + " samples)");
  }
  return data.samples[index];
}

Tensor read_raw_image(const fs::path& path, std::size_t height, std::size_t width) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InputError("cannot open image " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  const std::size_t expected = height * width * 3 * sizeof(float);
  if (bytes.size() != expected) {
    throw InputError("image " + path.string() + " has " + std::to_string(bytes.size()) +
                     " bytes; expected " + std::to_string(expected) + " for float32 " +
                     std::to_string(height) + "x" + std::to_string(width) + "x3");
  }
  std::vector<double> values(height * width * 3);
  for (std::size_t i = 0; i < values.size(); ++i) {
    float f;
    std::memcpy(&f, bytes.data() + i * sizeof(float), sizeof f);
    values[i] = f;
  }
  return Tensor({height, width, 3}, std::move(values));
}

std::vector<double> to_vector(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

int cmd_gen_data(const Flags& flags) {
  RunConfig cfg = load_config(flags);
  if (flags.seed) cfg.data.first_seed = *flags.seed;
  const std::string out = pick(flags.out, cfg.dataset_path, "output dataset");
  const BodyModel body = build_toy_body(cfg.body_seed, cfg.joints, cfg.vertices);
  const CameraRig rig = CameraRig::inscribed(cfg.backbone.height, cfg.backbone.width);
  const Dataset data = generate_dataset(cfg.data.count, cfg.data.first_seed, cfg.body_seed, body,
                                        rig, cfg.data.ranges);
  write_dataset(out, data);
  write_manifest(out + ".manifest.txt", data.header, cfg.data.ranges);
  std::cout << "wrote " << data.samples.size() << " samples to " << out << "\n";
  return 0;
}

int cmd_train(const Flags& flags) {
  RunConfig cfg = load_config(flags);
  if (flags.seed) cfg.seed = *flags.seed;
  const std::string data_path = pick(flags.dataset, cfg.dataset_path, "dataset");
  const std::string out = pick(flags.out, cfg.checkpoint_path, "output checkpoint");
  const Dataset data = load_dataset_checked(data_path);

  std::optional<LoadedCheckpoint> resumed;
  if (!flags.checkpoint.empty()) {
    resumed.emplace(load_checkpoint(flags.checkpoint));
    // The stored architecture wins; the run schedule comes from the config.
    RunConfig merged = resumed->model.config();
    merged.train = cfg.train;
    merged.loss = cfg.loss;
    cfg = merged;
  }
  Model model(cfg);
  AdamState state;
  if (resumed) {
    const auto src = resumed->model.named_tensors();
    auto dst = model.named_tensors();
    for (std::size_t i = 0; i < dst.size(); ++i) {
      auto vals = dst[i].tensor.mutable_values();
      std::copy(src[i].tensor.values().begin(), src[i].tensor.values().end(), vals.begin());
    }
    state = resumed->state;
  }
  check_compatible(model, data.header);

  auto log = open_out(out + ".log.csv");
  write_loss_header(log);
  const std::uint64_t every = cfg.train.log_every;
  const std::uint64_t ckpt_every = cfg.train.checkpoint_every;
  train(
      model, state, data,
      [&](const LossRow& row) {
        if (row.step % every == 0 || row.step + 1 == cfg.train.steps) write_loss_row(log, row);
      },
      [&](const AdamState& s) {
        if (ckpt_every != 0 && s.step % ckpt_every == 0 && s.step < cfg.train.steps) {
          save_checkpoint(out + ".step" + std::to_string(s.step), model, s);
        }
      });
  if (state.m.empty()) state = AdamState::zeros(model.trainable());
  save_checkpoint(out, model, state);
  std::cout << "trained to step " << state.step << "; checkpoint " << out << "\n";
  return 0;
}

int cmd_eval(const Flags& flags) {
  if (flags.checkpoint.empty()) throw ConfigError("eval requires --checkpoint");
  const LoadedCheckpoint ckpt = load_checkpoint(flags.checkpoint);
  const std::string data_path = pick(flags.dataset, ckpt.model.config().dataset_path, "dataset");
  const Dataset data = load_dataset_checked(data_path);
  check_compatible(ckpt.model, data.header);
  const auto rows = evaluate(ckpt.model, data);
  if (flags.out.empty()) {
    write_metrics_csv(std::cout, rows);
  } else {
    auto os = open_out(flags.out);
    write_metrics_csv(os, rows);
  }
  return 0;
}

nlohmann::json params_json(const BodyParams& p) {
  nlohmann::json theta_p = nlohmann::json::array();
  const auto pose = p.theta_p.values();
  for (std::size_t j = 0; j < p.joints(); ++j) {
    theta_p.push_back({pose[3 * j], pose[3 * j + 1], pose[3 * j + 2]});
  }
  return {{"theta_s", to_vector(p.theta_s)},
          {"theta_p", theta_p},
          {"orient", to_vector(p.orient)},
          {"cam_t", to_vector(p.cam_t)}};
}

void write_mesh(const fs::path& path, const Tensor& vertices, const BodyModel& body) {
  auto os = open_out(path);
  write_obj(os, vertices, body.faces);
}

int cmd_infer(const Flags& flags) {
  if (flags.checkpoint.empty()) throw ConfigError("infer requires --checkpoint");
  if (flags.out.empty()) throw ConfigError("infer requires --out (output prefix)");
  const LoadedCheckpoint ckpt = load_checkpoint(flags.checkpoint);
  const Model& model = ckpt.model;
  const auto& bb = model.config().backbone;

  Tensor image;
  if (!flags.image.empty()) {
    image = read_raw_image(flags.image, bb.height, bb.width);
  } else {
    if (flags.dataset.empty() || !flags.index) {
      throw ConfigError("infer requires --image or --dataset with --index");
    }
    const Dataset data = load_dataset_checked(flags.dataset);
    check_compatible(model, data.header);
    image = sample_at(data, *flags.index).image;
  }

  NoGradScope no_grad;
  const ModelOutput result = model.forward(image);
  write_mesh(flags.out + ".obj", result.mesh.vertices, model.body());
  auto js = open_out(flags.out + ".json");
  js << params_json(result.params).dump(2) << "\n";
  return 0;
}

int cmd_export_mesh(const Flags& flags) {
  if (flags.out.empty()) throw ConfigError("export-mesh requires --out");
  if (!flags.dataset.empty()) {
    if (!flags.index) throw ConfigError("export-mesh with --dataset requires --index");
    const Dataset data = load_dataset_checked(flags.dataset);
    const auto& h = data.header;
    const BodyModel body = build_toy_body(h.body_seed, h.joints, h.vertices);
    NoGradScope no_grad;
    const MeshResult mesh = body_forward(body, sample_at(data, *flags.index).gt_params);
    write_mesh(flags.out, mesh.vertices, body);
    return 0;
  }
  const RunConfig cfg = load_config(flags);
  const BodyModel body = build_toy_body(cfg.body_seed, cfg.joints, cfg.vertices);
  write_mesh(flags.out, body.template_vertices, body);
  return 0;
}

int cmd_gradcheck(const Flags& flags) {
  SelfCheckOptions options;
  if (flags.seed) options.seed = *flags.seed;
  options.include_model = !flags.no_model;
  const auto reports = run_gradcheck_suite(options);
  std::size_t failed = 0;
  for (const auto& r : reports) {
    std::printf("%-4s %-40s coords=%-6zu max_rel=%.3e tol=%.0e\n", r.passed() ? "ok" : "FAIL",
                r.name.c_str(), r.coords_checked, r.max_rel_error, r.tolerance);
    if (!r.passed()) ++failed;
  }
  std::printf("%zu checks, %zu failed\n", reports.size(), failed);
  return failed == 0 ? 0 : kExitCheck;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Egocentric fisheye human mesh recovery toolkit"};
  app.require_subcommand(1);
  Flags flags;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", flags.config, "key = value configuration file");
    sub->add_option("--seed", flags.seed, "seed override");
  };

  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic fisheye dataset");
  add_common(gen);
  gen->add_option("--out", flags.out, "dataset output path");

  auto* tr = app.add_subcommand("train", "Train a model and write a checkpoint and loss log");
  add_common(tr);
  tr->add_option("--dataset", flags.dataset, "training dataset");
  tr->add_option("--out", flags.out, "checkpoint output path");
  tr->add_option("--checkpoint", flags.checkpoint, "resume from this checkpoint");

  auto* ev = app.add_subcommand("eval", "Write per-sample and mean metrics as CSV");
  ev->add_option("--checkpoint", flags.checkpoint, "trained checkpoint")->required();
  ev->add_option("--dataset", flags.dataset, "evaluation dataset");
  ev->add_option("--out", flags.out, "CSV output path (default stdout)");

  auto* inf = app.add_subcommand("infer", "Regress a mesh from one image");
  inf->add_option("--checkpoint", flags.checkpoint, "trained checkpoint")->required();
  inf->add_option("--out", flags.out, "output prefix for .obj and .json")->required();
  inf->add_option("--dataset", flags.dataset, "dataset holding the input image");
  inf->add_option("--index", flags.index, "sample index within --dataset");
  inf->add_option("--image", flags.image, "raw little-endian float32 H x W x 3 image");

  auto* exp = app.add_subcommand("export-mesh", "Write a ground-truth or template mesh as OBJ");
  exp->add_option("--config", flags.config, "configuration for the template mesh");
  exp->add_option("--dataset", flags.dataset, "dataset holding the sample");
  exp->add_option("--index", flags.index, "sample index within --dataset");
  exp->add_option("--out", flags.out, "OBJ output path")->required();

  auto* gc = app.add_subcommand("gradcheck", "Run the finite-difference gradient suite");
  gc->add_option("--seed", flags.seed, "seed for probes and inputs");
  gc->add_flag("--no-model", flags.no_model, "skip the full-model check");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*gen) return cmd_gen_data(flags);
    if (*tr) return cmd_train(flags);
    if (*ev) return cmd_eval(flags);
    if (*inf) return cmd_infer(flags);
    if (*exp) return cmd_export_mesh(flags);
    if (*gc) return cmd_gradcheck(flags);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}

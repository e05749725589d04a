#include "egomesh/training.hpp"

#include <cmath>
#include <cstdio>

#include "egomesh/error.hpp"
#include "egomesh/metrics.hpp"

namespace egomesh {

AdamState AdamState::zeros(const std::vector<NamedTensor>& params) {
  AdamState s;
  for (const auto& p : params) {
    s.m.emplace_back(p.tensor.numel(), 0.0);
    s.v.emplace_back(p.tensor.numel(), 0.0);
  }
  return s;
}

void adam_step(std::vector<NamedTensor>& params, AdamState& state, const TrainConfig& c) {
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw ContractError("optimizer state tracks " + std::to_string(state.m.size()) +
                        " tensors, model has " + std::to_string(params.size()));
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correct1 = 1.0 - std::pow(c.beta1, t);
  const double correct2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& p = params[k].tensor;
    auto value = p.mutable_values();
    auto grad = p.mutable_grad();
    auto& m = state.m[k];
    auto& v = state.v[k];
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double g = grad[i];
      m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g;
      v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g * g;
      const double mh = m[i] / correct1;
      const double vh = v[i] / correct2;
      value[i] -= c.lr * mh / (std::sqrt(vh) + c.eps);
    }
    p.zero_grad();
  }
}

LossBreakdown sample_losses(const Model& model, const Sample& s) {
  const ModelOutput out = model.forward(s.image);
  const PoseEstimate pred{out.params, out.mesh.joints3d, out.joints2d};
  const PoseEstimate gt{s.gt_params, s.gt_joints3d, s.gt_joints2d};
  LossBreakdown br = component_losses(pred, gt, s.visible);
  br.total = total_loss(br, model.config().loss);
  return br;
}

void check_compatible(const Model& model, const DatasetHeader& h) {
  const RunConfig& c = model.config();
  auto dims = [](std::size_t hh, std::size_t ww, std::size_t j, std::size_t v) {
    return std::to_string(hh) + "x" + std::to_string(ww) + " image, " + std::to_string(j) +
           " joints, " + std::to_string(v) + " vertices";
  };
  const std::string mine = dims(c.backbone.height, c.backbone.width, c.joints, c.vertices);
  const std::string theirs = dims(h.height, h.width, h.joints, h.vertices);
  if (mine != theirs) {
    throw ContractError("checkpoint/config expects " + mine + "; dataset has " + theirs);
  }
  if (h.body_seed != c.body_seed) {
    throw ContractError("checkpoint/config uses body seed " + std::to_string(c.body_seed) +
                        "; dataset was generated with body seed " + std::to_string(h.body_seed));
  }
}

std::vector<LossRow> train(Model& model, AdamState& state, const Dataset& data,
                           const std::function<void(const LossRow&)>& on_row,
                           const std::function<void(const AdamState&)>& after_step) {
  check_compatible(model, data.header);
  if (data.samples.empty()) throw ContractError("training needs at least one sample");
  const TrainConfig& tc = model.config().train;
  auto params = model.trainable();
  if (state.m.empty() && !params.empty()) state = AdamState::zeros(params);
  const std::size_t batch = tc.batch_size;
  const double inv = 1.0 / static_cast<double>(batch);
  std::vector<LossRow> rows;
  for (std::uint64_t step = state.step; step < tc.steps; ++step) {
    LossRow row;
    row.step = step;
    for (std::size_t i = 0; i < batch; ++i) {
      const Sample& s = data.samples[(step * batch + i) % data.samples.size()];
      Tape tape;
      TapeScope scope(tape);
      const LossBreakdown br = sample_losses(model, s);
      tape.backward(scale(br.total, inv));
      row.smpl += br.smpl.item() * inv;
      row.orient += br.orient.item() * inv;
      row.j3d += br.j3d.item() * inv;
      row.j2d += br.j2d.item() * inv;
      row.total += br.total.item() * inv;
    }
    adam_step(params, state, tc);
    rows.push_back(row);
    if (on_row) on_row(row);
    if (after_step) after_step(state);
  }
  return rows;
}

void write_loss_header(std::ostream& os) { os << "step,smpl,orient,j3d,j2d,total\n"; }

void write_loss_row(std::ostream& os, const LossRow& r) {
  char line[256];
  std::snprintf(line, sizeof line, "%llu,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                static_cast<unsigned long long>(r.step), r.smpl, r.orient, r.j3d, r.j2d, r.total);
  os << line;
}

std::vector<SampleMetrics> evaluate(const BodyModel& body, const Dataset& data,
                                    const std::function<MeshResult(const Sample&)>& predict) {
  NoGradScope no_grad;
  std::vector<SampleMetrics> rows;
  rows.reserve(data.samples.size());
  for (std::size_t i = 0; i < data.samples.size(); ++i) {
    const Sample& s = data.samples[i];
    const MeshResult gt = body_forward(body, s.gt_params);
    const MeshResult pred = predict(s);
    const auto pj = to_points(pred.joints3d);
    const auto gj = to_points(gt.joints3d);
    const auto pv = to_points(pred.vertices);
    const auto gv = to_points(gt.vertices);
    rows.push_back({i, mean_point_error(pj, gj), mean_point_error(pv, gv), pa_error(pj, gj),
                    pa_error(pv, gv)});
  }
  return rows;
}

std::vector<SampleMetrics> evaluate(const Model& model, const Dataset& data) {
  check_compatible(model, data.header);
  return evaluate(model.body(), data,
                  [&](const Sample& s) { return model.forward(s.image).mesh; });
}

SampleMetrics mean_metrics(const std::vector<SampleMetrics>& rows) {
  SampleMetrics m;
  if (rows.empty()) return m;
  for (const auto& r : rows) {
    m.mpjpe += r.mpjpe;
    m.mpvpe += r.mpvpe;
    m.pa_mpjpe += r.pa_mpjpe;
    m.pa_mpvpe += r.pa_mpvpe;
  }
  const double inv = 1.0 / static_cast<double>(rows.size());
  m.mpjpe *= inv;
  m.mpvpe *= inv;
  m.pa_mpjpe *= inv;
  m.pa_mpvpe *= inv;
  return m;
}

void write_metrics_csv(std::ostream& os, const std::vector<SampleMetrics>& rows) {
  os << "sample_id,mpjpe,mpvpe,pa_mpjpe,pa_mpvpe\n";
  char line[256];
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%zu,%.6f,%.6f,%.6f,%.6f\n", r.sample_id, r.mpjpe, r.mpvpe,
                  r.pa_mpjpe, r.pa_mpvpe);
    os << line;
  }
  const SampleMetrics m = mean_metrics(rows);
  std::snprintf(line, sizeof line, "mean,%.6f,%.6f,%.6f,%.6f\n", m.mpjpe, m.mpvpe, m.pa_mpjpe,
                m.pa_mpvpe);
  os << line;
}

}  // namespace egomesh

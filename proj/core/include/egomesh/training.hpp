#pragma once

#include <cstdint>
#include <functional>
#include <ostream>
#include <vector>

#include "egomesh/config.hpp"
#include "egomesh/data.hpp"
#include "egomesh/losses.hpp"
#include "egomesh/model.hpp"

namespace egomesh {

/// Adam moments for a list of tensors (bias-corrected update).
struct AdamState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::uint64_t step = 0;

  static AdamState zeros(const std::vector<NamedTensor>& params);
};

/// One Adam update from the accumulated gradients, which are then zeroed.
void adam_step(std::vector<NamedTensor>& params, AdamState& state, const TrainConfig& config);

struct LossRow {
  std::uint64_t step = 0;
  double smpl = 0.0;
  double orient = 0.0;
  double j3d = 0.0;
  double j2d = 0.0;
  double total = 0.0;
};

/// Records the losses of one sample on the active tape.
LossBreakdown sample_losses(const Model& model, const Sample& sample);

/// Throws ContractError naming both sides when the dataset dimensions do not
/// match the model configuration.
void check_compatible(const Model& model, const DatasetHeader& header);

/// Runs optimizer steps `state.step` .. `config.train.steps - 1`. Step s uses
/// samples (s * B + i) mod N. Each row holds the batch-mean losses before the
/// update. `after_step` (optional) sees the state once every update is done.
std::vector<LossRow> train(Model& model, AdamState& state, const Dataset& data,
                           const std::function<void(const LossRow&)>& on_row = {},
                           const std::function<void(const AdamState&)>& after_step = {});

void write_loss_header(std::ostream& os);
void write_loss_row(std::ostream& os, const LossRow& row);

struct SampleMetrics {
  std::size_t sample_id = 0;
  double mpjpe = 0.0;
  double mpvpe = 0.0;
  double pa_mpjpe = 0.0;
  double pa_mpvpe = 0.0;
};

/// Metrics of predicted meshes against the ground truth regenerated from each
/// sample's stored parameters.
std::vector<SampleMetrics> evaluate(const BodyModel& body, const Dataset& data,
                                    const std::function<MeshResult(const Sample&)>& predict);
std::vector<SampleMetrics> evaluate(const Model& model, const Dataset& data);

SampleMetrics mean_metrics(const std::vector<SampleMetrics>& rows);
/// Header, one row per sample, then a "mean" footer row.
void write_metrics_csv(std::ostream& os, const std::vector<SampleMetrics>& rows);

}  // namespace egomesh

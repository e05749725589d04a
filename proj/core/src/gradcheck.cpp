#include "egomesh/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "egomesh/error.hpp"
#include "egomesh/rng.hpp"

namespace egomesh {

namespace {

std::vector<std::vector<double>> analytic_gradients(std::vector<Tensor>& leaves,
                                                    const std::function<Tensor()>& loss_fn) {
  for (auto& leaf : leaves) {
    if (!leaf.is_leaf()) throw ContractError("gradient check input is not a leaf");
    leaf.set_requires_grad(true);
  }
  Tape tape;
  Tensor loss;
  {
    TapeScope scope(tape);
    loss = loss_fn();
  }
  tape.backward(loss);
  std::vector<std::vector<double>> grads;
  grads.reserve(leaves.size());
  for (auto& leaf : leaves) grads.emplace_back(leaf.grad().begin(), leaf.grad().end());
  return grads;
}

double evaluate(const std::function<Tensor()>& loss_fn) {
  NoGradScope no_grad;
  return loss_fn().item();
}

}  // namespace

GradCheckReport check_gradients(std::string name, std::vector<Tensor> leaves,
                                const std::function<Tensor()>& loss_fn,
                                const GradCheckOptions& options) {
  GradCheckReport report{std::move(name), 0, 0.0, options.tolerance};
  const auto grads = analytic_gradients(leaves, loss_fn);
  Rng rng(options.seed);
  const double h = options.step;

  for (std::size_t li = 0; li < leaves.size(); ++li) {
    auto values = leaves[li].mutable_values();
    const auto& g = grads[li];
    double max_abs = 0.0;
    for (double v : g) max_abs = std::max(max_abs, std::fabs(v));

    std::vector<std::size_t> coords(values.size());
    std::iota(coords.begin(), coords.end(), 0);
    if (options.max_coords_per_leaf != 0 && coords.size() > options.max_coords_per_leaf) {
      for (std::size_t i = 0; i < options.max_coords_per_leaf; ++i) {
        const std::size_t j = i + rng.next_u64() % (coords.size() - i);
        std::swap(coords[i], coords[j]);
      }
      coords.resize(options.max_coords_per_leaf);
    }

    for (std::size_t c : coords) {
      const double original = values[c];
      values[c] = original + h;
      const double up = evaluate(loss_fn);
      values[c] = original - h;
      const double down = evaluate(loss_fn);
      values[c] = original;
      const double numeric = (up - down) / (2.0 * h);
      const double den =
          std::max({std::fabs(g[c]), std::fabs(numeric), 1e-3 * max_abs, 1e-10});
      report.max_rel_error = std::max(report.max_rel_error, std::fabs(g[c] - numeric) / den);
      ++report.coords_checked;
    }
  }
  return report;
}

GradCheckReport check_directional(std::string name, std::vector<Tensor> leaves,
                                  const std::function<Tensor()>& loss_fn,
                                  const GradCheckOptions& options) {
  GradCheckReport report{std::move(name), 0, 0.0, options.tolerance};
  const auto grads = analytic_gradients(leaves, loss_fn);
  Rng rng(options.seed);

  std::vector<std::vector<double>> dirs(leaves.size());
  double norm2 = 0.0;
  for (std::size_t li = 0; li < leaves.size(); ++li) {
    dirs[li].resize(leaves[li].numel());
    for (double& d : dirs[li]) {
      d = rng.normal();
      norm2 += d * d;
    }
  }
  const double inv = 1.0 / std::sqrt(norm2);
  double analytic = 0.0;
  for (std::size_t li = 0; li < leaves.size(); ++li) {
    for (std::size_t i = 0; i < dirs[li].size(); ++i) {
      dirs[li][i] *= inv;
      analytic += grads[li][i] * dirs[li][i];
    }
  }

  std::vector<std::vector<double>> originals;
  for (auto& leaf : leaves) originals.emplace_back(leaf.values().begin(), leaf.values().end());
  auto shift = [&](double t) {
    for (std::size_t li = 0; li < leaves.size(); ++li) {
      auto v = leaves[li].mutable_values();
      for (std::size_t i = 0; i < v.size(); ++i) v[i] = originals[li][i] + t * dirs[li][i];
    }
  };
  const double h = options.step;
  shift(h);
  const double up = evaluate(loss_fn);
  shift(-h);
  const double down = evaluate(loss_fn);
  shift(0.0);
  for (std::size_t li = 0; li < leaves.size(); ++li) {
    auto v = leaves[li].mutable_values();
    std::copy(originals[li].begin(), originals[li].end(), v.begin());
  }
  const double numeric = (up - down) / (2.0 * h);
  const double den = std::max({std::fabs(analytic), std::fabs(numeric), 1e-10});
  report.max_rel_error = std::fabs(analytic - numeric) / den;
  report.coords_checked = 1;
  return report;
}

}  // namespace egomesh

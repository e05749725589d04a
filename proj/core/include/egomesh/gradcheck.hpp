#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "egomesh/tensor.hpp"

namespace egomesh {

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  /// Coordinates sampled per leaf; 0 checks every coordinate.
  std::size_t max_coords_per_leaf = 0;
  std::uint64_t seed = 0;
};

struct GradCheckReport {
  std::string name;
  std::size_t coords_checked = 0;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  bool passed() const { return max_rel_error < tolerance; }
};

/// Compares tape gradients of `loss_fn` against central finite differences
/// with respect to every leaf in `leaves`. `loss_fn` must rebuild the loss
/// from the current leaf values on each call.
///
/// Per-coordinate relative error is |a - n| / max(|a|, |n|, 1e-3 * max|a|_leaf,
/// 1e-10), where a is analytic and n numeric; the floor keeps coordinates with
/// vanishing gradient from dominating through round-off alone.
GradCheckReport check_gradients(std::string name, std::vector<Tensor> leaves,
                                const std::function<Tensor()>& loss_fn,
                                const GradCheckOptions& options = {});

/// Directional check over all leaves jointly: compares g . d against
/// (f(x + h d) - f(x - h d)) / 2h for a random unit direction d.
GradCheckReport check_directional(std::string name, std::vector<Tensor> leaves,
                                  const std::function<Tensor()>& loss_fn,
                                  const GradCheckOptions& options = {});

}  // namespace egomesh

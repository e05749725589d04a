#pragma once

#include <cstdint>
#include <vector>

#include "egomesh/config.hpp"
#include "egomesh/gradcheck.hpp"

namespace egomesh {

/// Small configuration used for full-model gradient checks: 16x16 input,
/// patch 2, width 8, two stages with window 2.
RunConfig toy_config();

struct SelfCheckOptions {
  std::uint64_t seed = 1;
  bool include_model = true;
  double op_tolerance = 1e-4;
  double model_tolerance = 1e-3;
};

/// Finite-difference checks of every differentiable op, each module
/// composition and (optionally) the full image-to-loss model.
std::vector<GradCheckReport> run_gradcheck_suite(const SelfCheckOptions& options = {});

}  // namespace egomesh

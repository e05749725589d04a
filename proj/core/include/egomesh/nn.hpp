#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "egomesh/rng.hpp"
#include "egomesh/tensor.hpp"

namespace egomesh {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

/// y = x W (+ b), W stored [in x out].
struct Linear {
  Tensor weight;
  Tensor bias;  // undefined when the layer has no bias

  static Linear init(std::size_t in, std::size_t out, bool with_bias, Rng& rng,
                     double stddev = 0.02);

  std::size_t in_features() const { return weight.dim(0); }
  std::size_t out_features() const { return weight.dim(1); }

  Tensor operator()(const Tensor& x) const;
  void collect(const std::string& prefix, std::vector<NamedTensor>& out) const;
};

struct LayerNormParams {
  Tensor gamma;
  Tensor beta;

  static LayerNormParams init(std::size_t dim);

  Tensor operator()(const Tensor& x) const { return layer_norm(x, gamma, beta, 1e-5); }
  void collect(const std::string& prefix, std::vector<NamedTensor>& out) const;
};

/// Two-layer perceptron with GELU between the layers.
struct Mlp {
  Linear fc1;
  Linear fc2;

  static Mlp init(std::size_t in, std::size_t hidden, std::size_t out, Rng& rng);

  Tensor operator()(const Tensor& x) const { return fc2(gelu(fc1(x))); }
  void collect(const std::string& prefix, std::vector<NamedTensor>& out) const;
};

}  // namespace egomesh

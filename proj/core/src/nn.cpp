#include "egomesh/nn.hpp"

namespace egomesh {

Linear Linear::init(std::size_t in, std::size_t out, bool with_bias, Rng& rng, double stddev) {
  std::vector<double> w(in * out);
  for (double& v : w) v = rng.truncated_normal(stddev);
  Linear layer;
  layer.weight = Tensor({in, out}, std::move(w));
  if (with_bias) layer.bias = Tensor::zeros({out});
  return layer;
}

Tensor Linear::operator()(const Tensor& x) const {
  Tensor y = matmul(x, weight);
  return bias.defined() ? add(y, bias) : y;
}

void Linear::collect(const std::string& prefix, std::vector<NamedTensor>& out) const {
  out.push_back({prefix + ".weight", weight});
  if (bias.defined()) out.push_back({prefix + ".bias", bias});
}

LayerNormParams LayerNormParams::init(std::size_t dim) {
  return {Tensor::ones({dim}), Tensor::zeros({dim})};
}

void LayerNormParams::collect(const std::string& prefix, std::vector<NamedTensor>& out) const {
  out.push_back({prefix + ".gamma", gamma});
  out.push_back({prefix + ".beta", beta});
}

Mlp Mlp::init(std::size_t in, std::size_t hidden, std::size_t out, Rng& rng) {
  return {Linear::init(in, hidden, true, rng), Linear::init(hidden, out, true, rng)};
}

void Mlp::collect(const std::string& prefix, std::vector<NamedTensor>& out) const {
  fc1.collect(prefix + ".fc1", out);
  fc2.collect(prefix + ".fc2", out);
}

}  // namespace egomesh

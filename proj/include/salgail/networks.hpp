#pragma once

#include <random>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "salgail/nn/layers.hpp"

namespace salgail {

struct NetworkShape {
  int obs_channels = 1;
  int obs_size = 84;
  int streams = 30;
};

/// Named views of every trainable and buffered tensor, for checkpoints.
using TensorRefs = std::vector<std::pair<std::string, nn::Tensor*>>;

/// Policy/value network conditioned on the one-hot stream code:
/// Conv(8x8,s4,16) -> LReLU -> Conv(4x4,s2,32) -> LReLU -> Flatten ->
/// Dense(256) -> LReLU -> code-selected heads: policy logits (9) | value (1).
/// The trunk is shared by all streams; each stream owns its head weights.
class GeneratorNet {
 public:
  GeneratorNet() = default;
  GeneratorNet(const NetworkShape& shape, double negative_slope);

  struct Output {
    nn::Tensor logits;  // [N, 9]
    nn::Tensor value;   // [N, 1]
  };

  Output forward(const nn::Tensor& obs, const nn::Tensor& code, bool train);
  Output predict(const nn::Tensor& obs, const nn::Tensor& code) const;
  void backward(const nn::Tensor& grad_logits, const nn::Tensor& grad_value);

  std::vector<nn::Parameter*> parameters();
  void init(std::mt19937_64& rng);
  void zero_grad();
  nlohmann::json spec() const;
  TensorRefs tensors();
  void activation_pattern(std::vector<char>& out) const;
  const NetworkShape& shape() const { return shape_; }

 private:
  NetworkShape shape_;
  nn::Sequential trunk_;
  nn::StreamDense policy_head_;
  nn::StreamDense value_head_;
};

/// Discriminator D and policy selector S sharing one trunk:
/// Conv(8x8,s4,16) -> LReLU -> BN -> Conv(4x4,s2,32) -> LReLU -> BN ->
/// Flatten -> [concat one-hot action] -> Dense(128) -> LReLU, then
/// D logit (1) and S logits (N).
class CriticNet {
 public:
  CriticNet() = default;
  CriticNet(const NetworkShape& shape, double negative_slope, double bn_eps, double bn_momentum);

  struct Output {
    nn::Tensor d_logit;   // [N, 1]
    nn::Tensor s_logits;  // [N, streams]
  };

  Output forward(const nn::Tensor& obs, const nn::Tensor& action, bool train);
  Output predict(const nn::Tensor& obs, const nn::Tensor& action) const;
  void backward(const nn::Tensor& grad_d, const nn::Tensor& grad_s);

  std::vector<nn::Parameter*> parameters();
  std::vector<nn::Parameter*> discriminator_parameters();
  std::vector<nn::Parameter*> selector_parameters();
  void init(std::mt19937_64& rng);
  void zero_grad();
  nlohmann::json spec() const;
  TensorRefs tensors();
  void activation_pattern(std::vector<char>& out) const;
  const NetworkShape& shape() const { return shape_; }

 private:
  NetworkShape shape_;
  nn::Sequential trunk_;
  nn::Concat concat_;
  nn::Sequential hidden_;
  nn::Sequential d_head_;
  nn::Sequential s_head_;
};

/// Spatial extent after the two strided convolutions; throws if too small.
int trunk_extent(int obs_size);

}  // namespace salgail

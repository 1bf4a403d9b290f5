#pragma once

#include <memory>
#include <random>
#include <utility>
#include <vector>

#include <json.hpp>

#include "salgail/nn/tensor.hpp"

namespace salgail::nn {

enum class LayerKind { Conv2d, Dense, LeakyReLU, BatchNorm, Softmax, Flatten, Concat };

const char* to_string(LayerKind kind);

/// A differentiable stage. forward() caches what backward() needs;
/// predict() is the const, eval-mode path safe to share across threads.
class Layer {
 public:
  virtual ~Layer() = default;

  virtual LayerKind kind() const = 0;
  virtual Tensor forward(const Tensor& x, bool train) = 0;
  virtual Tensor predict(const Tensor& x) const = 0;
  /// Accumulates parameter gradients and returns the gradient w.r.t. the input.
  virtual Tensor backward(const Tensor& grad_out) = 0;

  virtual std::vector<Parameter*> parameters() { return {}; }
  /// Non-trainable state saved with checkpoints (BatchNorm running stats).
  virtual std::vector<Tensor*> buffers() { return {}; }
  virtual void init(std::mt19937_64& /*rng*/) {}
  virtual nlohmann::json spec() const = 0;
  virtual std::unique_ptr<Layer> clone() const = 0;
  /// Signs of cached pre-activations at piecewise-linear kinks.
  virtual void activation_pattern(std::vector<char>& /*out*/) const {}
};

/// Valid (unpadded) 2-D convolution.
class Conv2d final : public Layer {
 public:
  Conv2d(int in_channels, int out_channels, int kernel, int stride);

  LayerKind kind() const override { return LayerKind::Conv2d; }
  Tensor forward(const Tensor& x, bool train) override;
  Tensor predict(const Tensor& x) const override;
  Tensor backward(const Tensor& grad_out) override;
  std::vector<Parameter*> parameters() override { return {&weight_, &bias_}; }
  void init(std::mt19937_64& rng) override;
  nlohmann::json spec() const override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Conv2d>(*this); }

  int output_extent(int input_extent) const { return (input_extent - kernel_) / stride_ + 1; }
  Parameter& weight() { return weight_; }
  Parameter& bias() { return bias_; }

 private:
  int in_channels_;
  int out_channels_;
  int kernel_;
  int stride_;
  Parameter weight_;
  Parameter bias_;
  Tensor input_;
  bool cached_ = false;
};

class Dense final : public Layer {
 public:
  Dense(int in_features, int out_features);

  LayerKind kind() const override { return LayerKind::Dense; }
  Tensor forward(const Tensor& x, bool train) override;
  Tensor predict(const Tensor& x) const override;
  Tensor backward(const Tensor& grad_out) override;
  std::vector<Parameter*> parameters() override { return {&weight_, &bias_}; }
  void init(std::mt19937_64& rng) override;
  nlohmann::json spec() const override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Dense>(*this); }

  Parameter& weight() { return weight_; }
  Parameter& bias() { return bias_; }

 private:
  int in_;
  int out_;
  Parameter weight_;  // [out, in]
  Parameter bias_;
  Tensor input_;
  bool cached_ = false;
};

class LeakyReLU final : public Layer {
 public:
  explicit LeakyReLU(double negative_slope) : slope_(negative_slope) {}

  LayerKind kind() const override { return LayerKind::LeakyReLU; }
  Tensor forward(const Tensor& x, bool train) override;
  Tensor predict(const Tensor& x) const override;
  Tensor backward(const Tensor& grad_out) override;
  nlohmann::json spec() const override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<LeakyReLU>(*this); }
  void activation_pattern(std::vector<char>& out) const override;

  double slope() const { return slope_; }

 private:
  double slope_;
  Tensor input_;
  bool cached_ = false;
};

/// Per-channel normalisation over every axis except 1. Training uses batch
/// statistics and updates running estimates with the given momentum.
class BatchNorm final : public Layer {
 public:
  BatchNorm(int channels, double eps, double momentum);

  LayerKind kind() const override { return LayerKind::BatchNorm; }
  Tensor forward(const Tensor& x, bool train) override;
  Tensor predict(const Tensor& x) const override;
  Tensor backward(const Tensor& grad_out) override;
  std::vector<Parameter*> parameters() override { return {&gamma_, &beta_}; }
  std::vector<Tensor*> buffers() override { return {&running_mean_, &running_var_}; }
  void init(std::mt19937_64& rng) override;
  nlohmann::json spec() const override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<BatchNorm>(*this); }

  const Tensor& running_mean() const { return running_mean_; }
  const Tensor& running_var() const { return running_var_; }

 private:
  Tensor normalize(const Tensor& x, const std::vector<double>& mean,
                   const std::vector<double>& invstd, Tensor* xhat) const;

  int channels_;
  double eps_;
  double momentum_;
  Parameter gamma_;
  Parameter beta_;
  Tensor running_mean_;
  Tensor running_var_;
  Tensor xhat_;
  std::vector<double> invstd_;
  bool batch_stats_ = false;
  bool cached_ = false;
};

/// Softmax over the last axis of a [N, F] tensor.
class Softmax final : public Layer {
 public:
  LayerKind kind() const override { return LayerKind::Softmax; }
  Tensor forward(const Tensor& x, bool train) override;
  Tensor predict(const Tensor& x) const override;
  Tensor backward(const Tensor& grad_out) override;
  nlohmann::json spec() const override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Softmax>(*this); }

 private:
  Tensor output_;
  bool cached_ = false;
};

class Flatten final : public Layer {
 public:
  LayerKind kind() const override { return LayerKind::Flatten; }
  Tensor forward(const Tensor& x, bool train) override;
  Tensor predict(const Tensor& x) const override;
  Tensor backward(const Tensor& grad_out) override;
  nlohmann::json spec() const override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Flatten>(*this); }

 private:
  std::vector<int> input_shape_;
  bool cached_ = false;
};

/// Joins two [N, F] tensors along the feature axis.
class Concat {
 public:
  Tensor forward(const Tensor& a, const Tensor& b);
  static Tensor predict(const Tensor& a, const Tensor& b);
  std::pair<Tensor, Tensor> backward(const Tensor& grad_out) const;
  nlohmann::json spec() const;

 private:
  int left_ = 0;
  int right_ = 0;
};

/// Dense layer with one weight matrix and bias per stream. Each row's
/// output is sum_n code[n] * (W_n x + b_n), so a one-hot code selects that
/// stream's head. The code is an input, not differentiated.
class StreamDense {
 public:
  StreamDense() = default;
  StreamDense(int streams, int in_features, int out_features);

  Tensor forward(const Tensor& x, const Tensor& code);
  Tensor predict(const Tensor& x, const Tensor& code) const;
  /// Accumulates parameter gradients and returns the gradient w.r.t. x.
  Tensor backward(const Tensor& grad_out);

  std::vector<Parameter*> parameters() { return {&weight_, &bias_}; }
  void init(std::mt19937_64& rng);
  nlohmann::json spec() const;

  Parameter& weight() { return weight_; }  // [streams, out, in]
  Parameter& bias() { return bias_; }      // [streams, out]

 private:
  int streams_ = 0;
  int in_ = 0;
  int out_ = 0;
  Parameter weight_;
  Parameter bias_;
  Tensor input_;
  Tensor code_;
  bool cached_ = false;
};

class Sequential {
 public:
  Sequential() = default;
  Sequential(const Sequential& other);
  Sequential& operator=(const Sequential& other);
  Sequential(Sequential&&) noexcept = default;
  Sequential& operator=(Sequential&&) noexcept = default;

  template <typename L, typename... Args>
  L& emplace(Args&&... args) {
    auto layer = std::make_unique<L>(std::forward<Args>(args)...);
    L& ref = *layer;
    layers_.push_back(std::move(layer));
    return ref;
  }
  void add(std::unique_ptr<Layer> layer) { layers_.push_back(std::move(layer)); }

  Tensor forward(const Tensor& x, bool train);
  Tensor predict(const Tensor& x) const;
  Tensor backward(const Tensor& grad_out);

  std::vector<Parameter*> parameters();
  std::vector<Tensor*> buffers();
  void init(std::mt19937_64& rng);
  void zero_grad();
  nlohmann::json spec() const;
  void activation_pattern(std::vector<char>& out) const;

  std::size_t size() const { return layers_.size(); }
  Layer& operator[](std::size_t i) { return *layers_[i]; }
  const Layer& operator[](std::size_t i) const { return *layers_[i]; }

 private:
  std::vector<std::unique_ptr<Layer>> layers_;
};

/// Rebuilds a layer from its spec() JSON.
std::unique_ptr<Layer> make_layer(const nlohmann::json& spec);
Sequential make_sequential(const nlohmann::json& specs);

// Loss helpers over [N, F] logits.
Tensor log_softmax(const Tensor& logits);
double sigmoid(double z);
/// log(sigmoid(z)) without overflow.
double log_sigmoid(double z);

}  // namespace salgail::nn

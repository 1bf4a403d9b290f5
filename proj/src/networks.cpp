#include "salgail/networks.hpp"

#include "salgail/env.hpp"
#include "salgail/error.hpp"

namespace salgail {

namespace {

constexpr int kConv1Channels = 16;
constexpr int kConv2Channels = 32;
constexpr int kGeneratorHidden = 256;
constexpr int kCriticHidden = 128;

void collect(nn::Sequential& seq, const std::string& prefix, TensorRefs& out) {
  for (std::size_t i = 0; i < seq.size(); ++i) {
    const std::string base = prefix + "." + std::to_string(i) + ".";
    for (auto* p : seq[i].parameters()) out.emplace_back(base + p->name, &p->value);
    const auto bufs = seq[i].buffers();
    for (std::size_t b = 0; b < bufs.size(); ++b) {
      out.emplace_back(base + (b == 0 ? "running_mean" : "running_var"), bufs[b]);
    }
  }
}

template <typename... Seqs>
std::vector<nn::Parameter*> join(Seqs&... seqs) {
  std::vector<nn::Parameter*> out;
  (
      [&] {
        for (auto* p : seqs.parameters()) out.push_back(p);
      }(),
      ...);
  return out;
}

}  // namespace

int trunk_extent(int obs_size) {
  const int c1 = obs_size >= 8 ? (obs_size - 8) / 4 + 1 : 0;
  const int c2 = c1 >= 4 ? (c1 - 4) / 2 + 1 : 0;
  if (c2 < 1) throw ConfigError("observation size " + std::to_string(obs_size) + " is too small (min 20)");
  return c2;
}

GeneratorNet::GeneratorNet(const NetworkShape& shape, double slope) : shape_(shape) {
  const int e = trunk_extent(shape.obs_size);
  trunk_.emplace<nn::Conv2d>(shape.obs_channels, kConv1Channels, 8, 4);
  trunk_.emplace<nn::LeakyReLU>(slope);
  trunk_.emplace<nn::Conv2d>(kConv1Channels, kConv2Channels, 4, 2);
  trunk_.emplace<nn::LeakyReLU>(slope);
  trunk_.emplace<nn::Flatten>();
  trunk_.emplace<nn::Dense>(kConv2Channels * e * e, kGeneratorHidden);
  trunk_.emplace<nn::LeakyReLU>(slope);
  policy_head_ = nn::StreamDense(shape.streams, kGeneratorHidden, kNumActions);
  value_head_ = nn::StreamDense(shape.streams, kGeneratorHidden, 1);
}

GeneratorNet::Output GeneratorNet::forward(const nn::Tensor& obs, const nn::Tensor& code, bool train) {
  const nn::Tensor h = trunk_.forward(obs, train);
  return {policy_head_.forward(h, code), value_head_.forward(h, code)};
}

GeneratorNet::Output GeneratorNet::predict(const nn::Tensor& obs, const nn::Tensor& code) const {
  const nn::Tensor h = trunk_.predict(obs);
  return {policy_head_.predict(h, code), value_head_.predict(h, code)};
}

void GeneratorNet::backward(const nn::Tensor& grad_logits, const nn::Tensor& grad_value) {
  nn::Tensor gh = policy_head_.backward(grad_logits);
  const nn::Tensor gv = value_head_.backward(grad_value);
  for (std::size_t i = 0; i < gh.size(); ++i) gh[i] += gv[i];
  trunk_.backward(gh);
}

std::vector<nn::Parameter*> GeneratorNet::parameters() { return join(trunk_, policy_head_, value_head_); }

void GeneratorNet::init(std::mt19937_64& rng) {
  trunk_.init(rng);
  policy_head_.init(rng);
  value_head_.init(rng);
}

void GeneratorNet::zero_grad() {
  for (auto* p : parameters()) p->zero_grad();
}

nlohmann::json GeneratorNet::spec() const {
  return {{"trunk", trunk_.spec()},
          {"policy_head", policy_head_.spec()},
          {"value_head", value_head_.spec()}};
}

TensorRefs GeneratorNet::tensors() {
  TensorRefs out;
  collect(trunk_, "generator.trunk", out);
  for (auto* p : policy_head_.parameters()) out.emplace_back("generator.policy." + p->name, &p->value);
  for (auto* p : value_head_.parameters()) out.emplace_back("generator.value." + p->name, &p->value);
  return out;
}

void GeneratorNet::activation_pattern(std::vector<char>& out) const { trunk_.activation_pattern(out); }

CriticNet::CriticNet(const NetworkShape& shape, double slope, double bn_eps, double bn_momentum)
    : shape_(shape) {
  const int e = trunk_extent(shape.obs_size);
  trunk_.emplace<nn::Conv2d>(shape.obs_channels, kConv1Channels, 8, 4);
  trunk_.emplace<nn::LeakyReLU>(slope);
  trunk_.emplace<nn::BatchNorm>(kConv1Channels, bn_eps, bn_momentum);
  trunk_.emplace<nn::Conv2d>(kConv1Channels, kConv2Channels, 4, 2);
  trunk_.emplace<nn::LeakyReLU>(slope);
  trunk_.emplace<nn::BatchNorm>(kConv2Channels, bn_eps, bn_momentum);
  trunk_.emplace<nn::Flatten>();
  hidden_.emplace<nn::Dense>(kConv2Channels * e * e + kNumActions, kCriticHidden);
  hidden_.emplace<nn::LeakyReLU>(slope);
  d_head_.emplace<nn::Dense>(kCriticHidden, 1);
  s_head_.emplace<nn::Dense>(kCriticHidden, shape.streams);
}

CriticNet::Output CriticNet::forward(const nn::Tensor& obs, const nn::Tensor& action, bool train) {
  const nn::Tensor h = hidden_.forward(concat_.forward(trunk_.forward(obs, train), action), train);
  return {d_head_.forward(h, train), s_head_.forward(h, train)};
}

CriticNet::Output CriticNet::predict(const nn::Tensor& obs, const nn::Tensor& action) const {
  const nn::Tensor h = hidden_.predict(nn::Concat::predict(trunk_.predict(obs), action));
  return {d_head_.predict(h), s_head_.predict(h)};
}

void CriticNet::backward(const nn::Tensor& grad_d, const nn::Tensor& grad_s) {
  nn::Tensor gh = d_head_.backward(grad_d);
  const nn::Tensor gs = s_head_.backward(grad_s);
  for (std::size_t i = 0; i < gh.size(); ++i) gh[i] += gs[i];
  trunk_.backward(concat_.backward(hidden_.backward(gh)).first);
}

std::vector<nn::Parameter*> CriticNet::parameters() { return join(trunk_, hidden_, d_head_, s_head_); }
std::vector<nn::Parameter*> CriticNet::discriminator_parameters() { return join(trunk_, hidden_, d_head_); }
std::vector<nn::Parameter*> CriticNet::selector_parameters() { return join(trunk_, hidden_, s_head_); }

void CriticNet::init(std::mt19937_64& rng) {
  trunk_.init(rng);
  hidden_.init(rng);
  d_head_.init(rng);
  s_head_.init(rng);
}

void CriticNet::zero_grad() {
  for (auto* p : parameters()) p->zero_grad();
}

nlohmann::json CriticNet::spec() const {
  return {{"trunk", trunk_.spec()},
          {"hidden", hidden_.spec()},
          {"discriminator_head", d_head_.spec()},
          {"selector_head", s_head_.spec()},
          {"concat", "one-hot action after trunk"}};
}

TensorRefs CriticNet::tensors() {
  TensorRefs out;
  collect(trunk_, "critic.trunk", out);
  collect(hidden_, "critic.hidden", out);
  collect(d_head_, "critic.d", out);
  collect(s_head_, "critic.s", out);
  return out;
}

void CriticNet::activation_pattern(std::vector<char>& out) const {
  trunk_.activation_pattern(out);
  hidden_.activation_pattern(out);
}

}  // namespace salgail

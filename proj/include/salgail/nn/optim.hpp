#pragma once

#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "salgail/nn/tensor.hpp"

namespace salgail::nn {

enum class OptimizerKind { RmsProp, Adam };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::Adam;
  double lr = 2e-4;
  /// L2 term added to the gradient before the moment updates.
  double weight_decay = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double alpha = 0.99;  // RMSprop smoothing
  double eps = 1e-8;
};

nlohmann::json to_json(const OptimizerConfig& c);
OptimizerConfig optimizer_config_from_json(const nlohmann::json& j);

/// Moment buffers are allocated on the first step and matched to the
/// parameter list by position; the list must stay the same afterwards.
struct OptimizerState {
  OptimizerConfig config;
  long steps = 0;
  std::vector<Tensor> first_moment;   // Adam m
  std::vector<Tensor> second_moment;  // Adam v / RMSprop square average
};

/// One update of `params` from their accumulated gradients. Throws
/// NumericalError naming the offending tensor if a gradient is not finite.
/// Rescales all gradients so their joint L2 norm is at most max_norm.
/// Returns the norm before rescaling.
double clip_grad_norm(std::span<Parameter* const> params, double max_norm);

void optimizer_step(OptimizerState& state, std::span<Parameter* const> params);

}  // namespace salgail::nn

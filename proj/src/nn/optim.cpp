#include "salgail/nn/optim.hpp"

#include <cmath>

#include "salgail/error.hpp"

namespace salgail::nn {

nlohmann::json to_json(const OptimizerConfig& c) {
  return {{"kind", c.kind == OptimizerKind::Adam ? "adam" : "rmsprop"},
          {"lr", c.lr},
          {"weight_decay", c.weight_decay},
          {"beta1", c.beta1},
          {"beta2", c.beta2},
          {"alpha", c.alpha},
          {"eps", c.eps}};
}

OptimizerConfig optimizer_config_from_json(const nlohmann::json& j) {
  OptimizerConfig c;
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "adam") {
    c.kind = OptimizerKind::Adam;
  } else if (kind == "rmsprop") {
    c.kind = OptimizerKind::RmsProp;
  } else {
    throw ConfigError("unknown optimizer '" + kind + "'");
  }
  c.lr = j.at("lr").get<double>();
  c.weight_decay = j.at("weight_decay").get<double>();
  c.beta1 = j.at("beta1").get<double>();
  c.beta2 = j.at("beta2").get<double>();
  c.alpha = j.at("alpha").get<double>();
  c.eps = j.at("eps").get<double>();
  return c;
}

double clip_grad_norm(std::span<Parameter* const> params, double max_norm) {
  double sq = 0.0;
  for (const Parameter* p : params) {
    for (double g : p->grad.data) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double scale = max_norm / norm;
    for (Parameter* p : params) {
      for (double& g : p->grad.data) g *= scale;
    }
  }
  return norm;
}

void optimizer_step(OptimizerState& state, std::span<Parameter* const> params) {
  for (const Parameter* p : params) {
    if (p->grad.shape != p->value.shape) {
      throw InputError("optimizer: gradient shape mismatch for " + p->name);
    }
    for (std::size_t i = 0; i < p->grad.size(); ++i) {
      if (!std::isfinite(p->grad[i])) {
        throw NumericalError("optimizer: non-finite gradient in '" + p->name + "' at element " +
                             std::to_string(i) + " (shape " + p->grad.shape_string() + ")");
      }
    }
  }
  if (state.first_moment.empty() && state.second_moment.empty()) {
    for (const Parameter* p : params) {
      state.first_moment.emplace_back(p->value.shape);
      state.second_moment.emplace_back(p->value.shape);
    }
  }
  if (state.second_moment.size() != params.size()) {
    throw InputError("optimizer: parameter list changed between steps");
  }
  const OptimizerConfig& c = state.config;
  state.steps += 1;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.steps));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.steps));

  for (std::size_t k = 0; k < params.size(); ++k) {
    Parameter& p = *params[k];
    Tensor& m = state.first_moment[k];
    Tensor& v = state.second_moment[k];
    if (v.shape != p.value.shape) throw InputError("optimizer: buffer shape mismatch for " + p.name);
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad[i] + c.weight_decay * p.value[i];
      if (c.kind == OptimizerKind::Adam) {
        m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g;
        v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g * g;
        p.value[i] -= c.lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + c.eps);
      } else {
        v[i] = c.alpha * v[i] + (1.0 - c.alpha) * g * g;
        p.value[i] -= c.lr * g / (std::sqrt(v[i]) + c.eps);
      }
    }
    round_to_float(p.value);
    round_to_float(m);
    round_to_float(v);
  }
}

}  // namespace salgail::nn

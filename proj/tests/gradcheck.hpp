#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "salgail/nn/tensor.hpp"

namespace salgail::testing {

using nn::Tensor;

struct GradCheckResult {
  double max_rel_error = 0.0;
  int checked = 0;
  int skipped = 0;  // entries whose perturbation crossed an activation kink
};

/// Central-difference check of analytic gradients.
///  loss():     forward pass returning a scalar (caches activations)
///  backprop(): forward + backward, filling every .grad
///  pattern():  activation signs after the most recent forward
/// Entries whose +/-h perturbation changes the pattern are skipped because
/// the loss is not differentiable across the kink.
struct GradCheck {
  std::function<double()> loss;
  std::function<void()> backprop;
  std::function<std::vector<char>()> pattern;
  double h = 1e-4;
  double floor = 1e-6;
  int max_entries_per_tensor = 24;

  GradCheckResult run(const std::vector<Tensor*>& values, const std::vector<const Tensor*>& grads,
                      std::mt19937_64& rng) const {
    GradCheckResult r;
    backprop();
    std::vector<Tensor> analytic;
    for (const auto* g : grads) analytic.push_back(*g);
    loss();
    const auto base = pattern ? pattern() : std::vector<char>{};
    for (std::size_t t = 0; t < values.size(); ++t) {
      Tensor& v = *values[t];
      std::vector<std::size_t> idx(v.size());
      for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
      std::shuffle(idx.begin(), idx.end(), rng);
      idx.resize(std::min<std::size_t>(idx.size(), static_cast<std::size_t>(max_entries_per_tensor)));
      for (std::size_t i : idx) {
        const double orig = v[i];
        v[i] = orig + h;
        const double lp = loss();
        const bool kink_p = pattern && pattern() != base;
        v[i] = orig - h;
        const double lm = loss();
        const bool kink_m = pattern && pattern() != base;
        v[i] = orig;
        if (kink_p || kink_m) {
          ++r.skipped;
          continue;
        }
        const double numeric = (lp - lm) / (2.0 * h);
        const double a = analytic[t][i];
        const double err = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
        r.max_rel_error = std::max(r.max_rel_error, err);
        ++r.checked;
      }
    }
    loss();
    return r;
  }
};

inline Tensor random_tensor(std::vector<int> shape, std::mt19937_64& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> u(-scale, scale);
  for (auto& x : t.data) x = u(rng);
  return t;
}

inline double dot(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace salgail::testing

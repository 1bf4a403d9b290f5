#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace salgail::nn {

/// Dense row-major tensor. Batched activations are laid out [N, C, H, W] or [N, F].
struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> shape_, double fill = 0.0);

  std::size_t size() const { return data.size(); }
  int rank() const { return static_cast<int>(shape.size()); }
  int dim(int i) const { return shape.at(static_cast<std::size_t>(i)); }
  double& operator[](std::size_t i) { return data[i]; }
  double operator[](std::size_t i) const { return data[i]; }

  void fill(double v);
  std::string shape_string() const;
};

std::size_t shape_size(const std::vector<int>& shape);

/// Rounds every element to the nearest float32 so that checkpoints, which
/// store float32, reload bit-identically.
void round_to_float(Tensor& t);

struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  Parameter() = default;
  Parameter(std::string n, std::vector<int> shape)
      : name(std::move(n)), value(shape), grad(std::move(shape)) {}
  void zero_grad() { grad.fill(0.0); }
};

}  // namespace salgail::nn

#include "salgail/nn/tensor.hpp"

#include <algorithm>
#include <functional>
#include <numeric>

namespace salgail::nn {

std::size_t shape_size(const std::vector<int>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         [](std::size_t a, int b) { return a * static_cast<std::size_t>(b); });
}

Tensor::Tensor(std::vector<int> shape_, double fill)
    : shape(std::move(shape_)), data(shape_size(shape), fill) {}

void Tensor::fill(double v) { std::fill(data.begin(), data.end(), v); }

std::string Tensor::shape_string() const {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

void round_to_float(Tensor& t) {
  for (auto& v : t.data) v = static_cast<double>(static_cast<float>(v));
}

}  // namespace salgail::nn

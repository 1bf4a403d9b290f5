#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "salgail/nn/tensor.hpp"

namespace salgail::nn {

inline constexpr std::string_view kCheckpointMagic = "SGAIL1";

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

/// Layout: magic "SGAIL1", uint64 little-endian header byte count, JSON
/// header, then every tensor as little-endian float32 in header order. The
/// header gains a "tensors" array of {name, shape}.
void save_checkpoint(const std::filesystem::path& path, nlohmann::json header,
                     const std::vector<NamedTensor>& tensors);

struct Checkpoint {
  nlohmann::json header;
  std::vector<NamedTensor> tensors;

  const Tensor& find(std::string_view name) const;
};

Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace salgail::nn

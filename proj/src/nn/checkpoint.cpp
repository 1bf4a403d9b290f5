#include "salgail/nn/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include "salgail/error.hpp"

namespace salgail::nn {

namespace {

void put_u32(std::ofstream& out, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v & 0xFF), static_cast<unsigned char>((v >> 8) & 0xFF),
                              static_cast<unsigned char>((v >> 16) & 0xFF),
                              static_cast<unsigned char>((v >> 24) & 0xFF)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::ifstream& in) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw InputError("checkpoint: truncated tensor data");
  return b[0] | (b[1] << 8) | (b[2] << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, nlohmann::json header,
                     const std::vector<NamedTensor>& tensors) {
  nlohmann::json index = nlohmann::json::array();
  for (const auto& t : tensors) index.push_back({{"name", t.name}, {"shape", t.tensor.shape}});
  header["tensors"] = index;
  const std::string text = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write checkpoint " + path.string());
  out.write(kCheckpointMagic.data(), static_cast<std::streamsize>(kCheckpointMagic.size()));
  const std::uint64_t len = text.size();
  put_u32(out, static_cast<std::uint32_t>(len & 0xFFFFFFFFULL));
  put_u32(out, static_cast<std::uint32_t>(len >> 32));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& t : tensors) {
    for (double v : t.tensor.data) {
      const float f = static_cast<float>(v);
      std::uint32_t bits = 0;
      std::memcpy(&bits, &f, sizeof bits);
      put_u32(out, bits);
    }
  }
}

const Tensor& Checkpoint::find(std::string_view name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return t.tensor;
  }
  throw InputError("checkpoint: missing tensor '" + std::string(name) + "'");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open checkpoint " + path.string());
  std::string magic(kCheckpointMagic.size(), '\0');
  if (!in.read(magic.data(), static_cast<std::streamsize>(magic.size())) || magic != kCheckpointMagic) {
    throw InputError(path.string() + ": not a checkpoint (bad magic)");
  }
  const std::uint64_t lo = get_u32(in);
  const std::uint64_t hi = get_u32(in);
  const std::uint64_t len = lo | (hi << 32);
  if (len > (1ULL << 30)) throw InputError(path.string() + ": implausible header size");
  std::string text(len, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(len))) throw InputError("checkpoint: truncated header");

  Checkpoint ck;
  try {
    ck.header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw InputError(path.string() + ": bad checkpoint header: " + e.what());
  }
  for (const auto& entry : ck.header.at("tensors")) {
    NamedTensor t{entry.at("name").get<std::string>(), Tensor(entry.at("shape").get<std::vector<int>>())};
    for (auto& v : t.tensor.data) {
      const std::uint32_t bits = get_u32(in);
      float f = 0.0F;
      std::memcpy(&f, &bits, sizeof f);
      v = f;
    }
    ck.tensors.push_back(std::move(t));
  }
  return ck;
}

}  // namespace salgail::nn

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

namespace salgail {

/// Dense float image, row-major with interleaved channels. Row 0 is the top
/// of the picture (north for equirectangular content). Values live in [0,1].
struct Image {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<float> pixels;

  Image() = default;
  Image(int w, int h, int c = 1, float fill = 0.0F);

  bool empty() const { return pixels.empty(); }
  float& at(int row, int col, int ch = 0) {
    return pixels[(static_cast<std::size_t>(row) * width + col) * channels + ch];
  }
  float at(int row, int col, int ch = 0) const {
    return pixels[(static_cast<std::size_t>(row) * width + col) * channels + ch];
  }
};

using EquirectImage = Image;
using ImagePatch = Image;

Image to_grayscale(const Image& img);

// Continuous sampling in pixel-center coordinates (u = column, v = row).
// Columns wrap around (longitude seam), rows clamp.
float sample_bilinear(const Image& img, double u, double v, int ch = 0);
float sample_nearest(const Image& img, double u, double v, int ch = 0);

// PNG I/O (8-bit). Reading yields 1 channel for gray input, 3 otherwise.
Image read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Image& img,
               const nlohmann::json& text = nlohmann::json::object());

// Raw little-endian float32 with a JSON sidecar {"width","height","channels"}.
// The sidecar sits next to the blob with its extension replaced by ".json".
std::filesystem::path sidecar_path(const std::filesystem::path& raw);
void write_raw(const std::filesystem::path& path, int width, int height, int channels,
               const std::vector<float>& values,
               const nlohmann::json& extra = nlohmann::json::object());
Image read_raw(const std::filesystem::path& path);

/// Loads either format by extension (.png or .f32).
Image load_image(const std::filesystem::path& path);

}  // namespace salgail

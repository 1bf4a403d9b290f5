#include "salgail/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>

#include "salgail/error.hpp"

namespace salgail {

Image::Image(int w, int h, int c, float fill)
    : width(w), height(h), channels(c),
      pixels(static_cast<std::size_t>(w) * h * c, fill) {}

Image to_grayscale(const Image& img) {
  if (img.channels == 1) return img;
  Image out(img.width, img.height, 1);
  for (int r = 0; r < img.height; ++r) {
    for (int c = 0; c < img.width; ++c) {
      if (img.channels >= 3) {
        out.at(r, c) = 0.299F * img.at(r, c, 0) + 0.587F * img.at(r, c, 1) +
                       0.114F * img.at(r, c, 2);
      } else {
        out.at(r, c) = img.at(r, c, 0);
      }
    }
  }
  return out;
}

namespace {

inline int wrap_index(long i, int n) {
  long m = i % n;
  return static_cast<int>(m < 0 ? m + n : m);
}

}  // namespace

float sample_bilinear(const Image& img, double u, double v, int ch) {
  const double fu = std::floor(u);
  const double fv = std::floor(v);
  const double au = u - fu;
  const double av = v - fv;
  const int c0 = wrap_index(static_cast<long>(fu), img.width);
  const int c1 = wrap_index(static_cast<long>(fu) + 1, img.width);
  const int r0 = std::clamp(static_cast<int>(fv), 0, img.height - 1);
  const int r1 = std::clamp(static_cast<int>(fv) + 1, 0, img.height - 1);
  const double top = (1.0 - au) * img.at(r0, c0, ch) + au * img.at(r0, c1, ch);
  const double bottom = (1.0 - au) * img.at(r1, c0, ch) + au * img.at(r1, c1, ch);
  return static_cast<float>((1.0 - av) * top + av * bottom);
}

float sample_nearest(const Image& img, double u, double v, int ch) {
  const int c = wrap_index(static_cast<long>(std::lround(u)), img.width);
  const int r = std::clamp(static_cast<int>(std::lround(v)), 0, img.height - 1);
  return img.at(r, c, ch);
}

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

Image read_png(const std::filesystem::path& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw InputError("cannot open PNG: " + path.string());
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw InputError("malformed PNG: " + path.string());
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);
  const int w = static_cast<int>(png_get_image_width(png, info));
  const int h = static_cast<int>(png_get_image_height(png, info));
  const int color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);
  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);
  const int channels = png_get_channels(png, info);
  std::vector<png_byte> buf(static_cast<std::size_t>(w) * h * channels);
  std::vector<png_bytep> rows(h);
  for (int r = 0; r < h; ++r) rows[r] = buf.data() + static_cast<std::size_t>(r) * w * channels;
  png_read_image(png, rows.data());
  png_destroy_read_struct(&png, &info, nullptr);

  Image img(w, h, channels == 1 ? 1 : 3);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      for (int ch = 0; ch < img.channels; ++ch) {
        img.at(r, c, ch) = buf[(static_cast<std::size_t>(r) * w + c) * channels + ch] / 255.0F;
      }
    }
  }
  return img;
}

void write_png(const std::filesystem::path& path, const Image& img, const nlohmann::json& text) {
  if (img.channels != 1 && img.channels != 3) throw InputError("write_png: 1 or 3 channels only");
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw InputError("cannot write PNG: " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw InputError("failed writing PNG: " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, img.width, img.height, 8,
               img.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  std::vector<std::string> keys;
  std::vector<std::string> values;
  for (const auto& [k, v] : text.items()) {
    keys.push_back(k);
    values.push_back(v.is_string() ? v.get<std::string>() : v.dump());
  }
  std::vector<png_text> chunks(keys.size());
  for (std::size_t i = 0; i < keys.size(); ++i) {
    chunks[i].compression = PNG_TEXT_COMPRESSION_NONE;
    chunks[i].key = keys[i].data();
    chunks[i].text = values[i].data();
    chunks[i].text_length = values[i].size();
  }
  if (!chunks.empty()) png_set_text(png, info, chunks.data(), static_cast<int>(chunks.size()));
  png_write_info(png, info);
  std::vector<png_byte> row(static_cast<std::size_t>(img.width) * img.channels);
  for (int r = 0; r < img.height; ++r) {
    for (int c = 0; c < img.width; ++c) {
      for (int ch = 0; ch < img.channels; ++ch) {
        const float v = std::clamp(img.at(r, c, ch), 0.0F, 1.0F);
        row[static_cast<std::size_t>(c) * img.channels + ch] =
            static_cast<png_byte>(std::lround(v * 255.0F));
      }
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

std::filesystem::path sidecar_path(const std::filesystem::path& raw) {
  auto p = raw;
  p.replace_extension(".json");
  return p;
}

void write_raw(const std::filesystem::path& path, int width, int height, int channels,
               const std::vector<float>& values, const nlohmann::json& extra) {
  if (values.size() != static_cast<std::size_t>(width) * height * channels) {
    throw InputError("write_raw: value count does not match dimensions");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  for (float f : values) {
    std::uint32_t bits = 0;
    std::memcpy(&bits, &f, sizeof bits);
    const unsigned char b[4] = {static_cast<unsigned char>(bits & 0xFF),
                                static_cast<unsigned char>((bits >> 8) & 0xFF),
                                static_cast<unsigned char>((bits >> 16) & 0xFF),
                                static_cast<unsigned char>((bits >> 24) & 0xFF)};
    out.write(reinterpret_cast<const char*>(b), 4);
  }
  nlohmann::json side = extra;
  side["width"] = width;
  side["height"] = height;
  side["channels"] = channels;
  std::ofstream js(sidecar_path(path));
  js << side.dump(2) << "\n";
}

Image read_raw(const std::filesystem::path& path) {
  std::ifstream js(sidecar_path(path));
  if (!js) throw InputError("missing sidecar for " + path.string());
  nlohmann::json side;
  try {
    js >> side;
  } catch (const nlohmann::json::exception& e) {
    throw InputError("bad sidecar for " + path.string() + ": " + e.what());
  }
  const int w = side.value("width", 0);
  const int h = side.value("height", 0);
  const int c = side.value("channels", 1);
  if (w < 1 || h < 1 || c < 1) throw InputError("bad dimensions in sidecar of " + path.string());
  Image img(w, h, c);
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  for (auto& f : img.pixels) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) throw InputError("truncated raw file " + path.string());
    const std::uint32_t bits = b[0] | (b[1] << 8) | (b[2] << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
    std::memcpy(&f, &bits, sizeof f);
  }
  return img;
}

Image load_image(const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  if (ext == ".png" || ext == ".PNG") return read_png(path);
  if (ext == ".f32") return read_raw(path);
  throw InputError("unsupported image format: " + path.string());
}

}  // namespace salgail

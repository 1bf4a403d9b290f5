#include "salgail/salmap.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "salgail/error.hpp"

namespace salgail {

double SaliencyMap::max() const {
  return values.empty() ? 0.0 : *std::max_element(values.begin(), values.end());
}

double kernel_sigma_reference() { return kKernelFwhmPx / (2.0 * std::sqrt(2.0 * std::log(2.0))); }

double kernel_sigma_px(int width) {
  return kernel_sigma_reference() * static_cast<double>(width) / kKernelReferenceWidth;
}

SaliencyMap max_normalized(SaliencyMap m) {
  const double mx = m.max();
  if (mx > 0.0) {
    for (auto& v : m.values) v /= mx;
  }
  return m;
}

SaliencyMap render_saliency(std::span<const SpherePoint> fixations, int width, int height,
                            const RenderOptions& opts) {
  if (width < 1 || height < 1) throw InputError("render_saliency: map size must be >= 1");
  SaliencyMap map(width, height);
  if (fixations.empty()) return map;

  // Fixed splat order keeps the floating-point sum independent of input order.
  std::vector<SpherePoint> sorted(fixations.begin(), fixations.end());
  std::sort(sorted.begin(), sorted.end(), [](const SpherePoint& a, const SpherePoint& b) {
    return a.lat != b.lat ? a.lat < b.lat : a.lon < b.lon;
  });

  const double sigma = opts.sigma_px > 0.0 ? opts.sigma_px : kernel_sigma_px(width);
  const double norm = 1.0 / (2.0 * kPi * sigma * sigma);
  const double inv2s2 = 1.0 / (2.0 * sigma * sigma);
  const double radius = opts.truncate_sigmas * sigma;
  const double deg_per_px = 360.0 / width;
  const int reach_x = std::min(width / 2, static_cast<int>(std::ceil(radius)) + 1);
  const int reach_y = static_cast<int>(std::ceil(radius)) + 1;

  for (const SpherePoint& f : sorted) {
    const PixelCoord p = to_equirect(f, width, height);
    // Pixel-center coordinates: column u = x - 0.5, row v = H - y - 0.5.
    const double u = p.x - 0.5;
    const double v = (height - p.y) - 0.5;
    const int cu = static_cast<int>(std::lround(u));
    const int cv = static_cast<int>(std::lround(v));
    const int r0 = std::max(0, cv - reach_y);
    const int r1 = std::min(height - 1, cv + reach_y);
    const bool full_row = 2 * reach_x + 1 >= width;
    const int c0 = full_row ? 0 : cu - reach_x;
    const int c1 = full_row ? width - 1 : cu + reach_x;
    for (int r = r0; r <= r1; ++r) {
      const double dy = r - v;
      for (int cc = c0; cc <= c1; ++cc) {
        const int col = ((cc % width) + width) % width;
        double dx = col - u;
        dx -= width * std::round(dx / width);
        double d2 = 0.0;
        if (opts.sphere_aware) {
          const SpherePoint q = from_equirect({col + 0.5, height - r - 0.5}, width, height);
          const double d = angular_distance_deg(f, q) / deg_per_px;
          d2 = d * d;
        } else {
          d2 = dx * dx + dy * dy;
        }
        if (d2 > radius * radius) continue;
        map.at(r, col) += norm * std::exp(-d2 * inv2s2);
      }
    }
  }
  return max_normalized(std::move(map));
}

SaliencyMap build_fcb(int width, int height, const FcbParams& params) {
  if (width < 1 || height < 1) throw InputError("build_fcb: map size must be >= 1");
  if (!(params.sigma_lon_deg > 0.0 && params.sigma_lat_deg > 0.0)) {
    throw InputError("build_fcb: sigmas must be positive");
  }
  if (!(params.weight >= 0.0)) throw InputError("build_fcb: weight must be non-negative");
  SaliencyMap map(width, height);
  if (params.weight == 0.0) return map;
  const double a = 1.0 / (2.0 * params.sigma_lon_deg * params.sigma_lon_deg);
  const double b = 1.0 / (2.0 * params.sigma_lat_deg * params.sigma_lat_deg);
  for (int r = 0; r < height; ++r) {
    const double lat = ((height - r - 0.5) / height - 0.5) * 180.0;
    const double gy = std::exp(-lat * lat * b);
    for (int c = 0; c < width; ++c) {
      const double lon = wrap_longitude(((c + 0.5) / width - 0.5) * 360.0);
      map.at(r, c) = gy * std::exp(-lon * lon * a);
    }
  }
  map = max_normalized(std::move(map));
  for (auto& v : map.values) v *= params.weight;
  return map;
}

SaliencyMap fuse_fcb(const SaliencyMap& s_tilde, const SaliencyMap& c) {
  if (s_tilde.width != c.width || s_tilde.height != c.height) {
    throw InputError("fuse_fcb: dimension mismatch");
  }
  SaliencyMap out(s_tilde.width, s_tilde.height);
  for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] = s_tilde.values[i] + c.values[i];
  return max_normalized(std::move(out));
}

FcbParams fit_fcb(std::span<const SpherePoint> fixations) {
  if (fixations.size() < 10) throw InputError("fit_fcb: need at least 10 fixations");
  double mean_cos = 0.0;
  double lat2 = 0.0;
  for (const auto& f : fixations) {
    mean_cos += std::cos(f.lon * kDegToRad);
    lat2 += f.lat * f.lat;
  }
  mean_cos /= static_cast<double>(fixations.size());
  lat2 /= static_cast<double>(fixations.size());
  double sigma_lon = kFcbSigmaCapDeg;
  if (mean_cos > 0.0) {
    sigma_lon = std::sqrt(std::max(0.0, -2.0 * std::log(std::min(mean_cos, 1.0)))) * kRadToDeg;
  }
  FcbParams p;
  p.sigma_lon_deg = std::clamp(sigma_lon, kFcbSigmaFloorDeg, kFcbSigmaCapDeg);
  p.sigma_lat_deg = std::clamp(std::sqrt(lat2), kFcbSigmaFloorDeg, kFcbSigmaCapDeg);
  p.weight = 1.0;
  return p;
}

void write_map_raw(const std::filesystem::path& path, const SaliencyMap& m,
                   const nlohmann::json& extra) {
  std::vector<float> v(m.values.begin(), m.values.end());
  write_raw(path, m.width, m.height, 1, v, extra);
}

SaliencyMap read_map_raw(const std::filesystem::path& path) {
  const Image img = read_raw(path);
  if (img.channels != 1) throw InputError(path.string() + ": saliency maps have one channel");
  SaliencyMap m(img.width, img.height);
  std::copy(img.pixels.begin(), img.pixels.end(), m.values.begin());
  return m;
}

void write_map_png(const std::filesystem::path& path, const SaliencyMap& m,
                   const nlohmann::json& text) {
  Image img(m.width, m.height, 1);
  for (std::size_t i = 0; i < m.values.size(); ++i) img.pixels[i] = static_cast<float>(m.values[i]);
  write_png(path, img, text);
}

Image heatmap(const SaliencyMap& m) {
  Image img(m.width, m.height, 3);
  const double mx = m.max();
  for (int r = 0; r < m.height; ++r) {
    for (int c = 0; c < m.width; ++c) {
      const double t = mx > 0.0 ? std::clamp(m.at(r, c) / mx, 0.0, 1.0) : 0.0;
      // Piecewise-linear jet.
      const double red = std::clamp(1.5 - std::abs(4.0 * t - 3.0), 0.0, 1.0);
      const double green = std::clamp(1.5 - std::abs(4.0 * t - 2.0), 0.0, 1.0);
      const double blue = std::clamp(1.5 - std::abs(4.0 * t - 1.0), 0.0, 1.0);
      img.at(r, c, 0) = static_cast<float>(red);
      img.at(r, c, 1) = static_cast<float>(green);
      img.at(r, c, 2) = static_cast<float>(blue);
    }
  }
  return img;
}

}  // namespace salgail

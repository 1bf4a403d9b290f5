#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include <json.hpp>

#include "salgail/image.hpp"
#include "salgail/sphere.hpp"

namespace salgail {

/// Dense equirectangular map, row-major, row 0 at the top (north).
struct SaliencyMap {
  int width = 0;
  int height = 0;
  std::vector<double> values;

  SaliencyMap() = default;
  SaliencyMap(int w, int h, double fill = 0.0)
      : width(w), height(h), values(static_cast<std::size_t>(w) * h, fill) {}

  double& at(int row, int col) { return values[static_cast<std::size_t>(row) * width + col]; }
  double at(int row, int col) const { return values[static_cast<std::size_t>(row) * width + col]; }
  double max() const;
};

/// FWHM of the fixation kernel in pixels at the reference width.
inline constexpr double kKernelFwhmPx = 90.0;
/// Equirectangular width the 90 px kernel refers to; maps rendered at other
/// widths scale the kernel proportionally so its angular size is fixed.
inline constexpr double kKernelReferenceWidth = 4000.0;

/// sigma = FWHM / (2 sqrt(2 ln 2)) at the reference width (~38.22 px).
double kernel_sigma_reference();
double kernel_sigma_px(int width);

struct RenderOptions {
  /// Truncation radius in sigmas. 3 sigma drops < 1.2% of the peak.
  double truncate_sigmas = 3.0;
  /// Measures kernel distance on the sphere instead of the image plane.
  bool sphere_aware = false;
  /// Overrides kernel_sigma_px(width) when > 0.
  double sigma_px = 0.0;
};

/// Splats a Gaussian kernel at each fixation (wrapping across the left/right
/// seam) and max-normalises. No fixations gives the zero map.
SaliencyMap render_saliency(std::span<const SpherePoint> fixations, int width, int height,
                            const RenderOptions& opts = {});

struct FcbParams {
  double sigma_lon_deg = 30.0;
  double sigma_lat_deg = 15.0;
  double weight = 1.0;
};

inline constexpr double kDefaultFcbWeight = 0.3;
inline constexpr double kFcbSigmaFloorDeg = 1.0;
inline constexpr double kFcbSigmaCapDeg = 180.0;

/// Separable Gaussian centred at (0,0) whose maximum equals params.weight.
SaliencyMap build_fcb(int width, int height, const FcbParams& params);

/// Norm(C + S~): element-wise sum followed by max-normalisation.
SaliencyMap fuse_fcb(const SaliencyMap& s_tilde, const SaliencyMap& c);

/// Moment-matched FCB widths with unit weight. Longitude uses the wrapped
/// normal relation E[cos lon] = exp(-sigma^2 / 2).
FcbParams fit_fcb(std::span<const SpherePoint> fixations);

SaliencyMap max_normalized(SaliencyMap m);

// I/O
void write_map_raw(const std::filesystem::path& path, const SaliencyMap& m,
                   const nlohmann::json& extra = nlohmann::json::object());
SaliencyMap read_map_raw(const std::filesystem::path& path);
/// Linear 8-bit quantisation of [0,1] values.
void write_map_png(const std::filesystem::path& path, const SaliencyMap& m,
                   const nlohmann::json& text = nlohmann::json::object());
/// Jet-coloured rendering for figures.
Image heatmap(const SaliencyMap& m);

}  // namespace salgail

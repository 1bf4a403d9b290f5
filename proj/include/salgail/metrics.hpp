#pragma once

#include <span>
#include <vector>

#include "salgail/salmap.hpp"
#include "salgail/sphere.hpp"

namespace salgail {

inline constexpr double kKlEpsilon = 1e-7;

struct MetricReport {
  double cc = 0.0;
  double kl = 0.0;
  double nss = 0.0;
  double auc = 0.0;
};

/// Pearson correlation over pixels. Throws when either map is constant.
double cc(const SaliencyMap& pred, const SaliencyMap& gt);

/// KL(gt || pred) after sum-normalising both maps:
/// sum g * log((g + eps) / (p + eps)).
double kl(const SaliencyMap& pred, const SaliencyMap& gt, double eps = kKlEpsilon);

/// Mean z-scored prediction at fixation pixels.
double nss(const SaliencyMap& pred, std::span<const PixelCoord> fixations);

/// AUC-Judd: fixation pixels are positives, every other pixel a negative;
/// ties count one half.
double auc_judd(const SaliencyMap& pred, std::span<const PixelCoord> fixations);

MetricReport evaluate(const SaliencyMap& pred, const SaliencyMap& gt,
                      std::span<const PixelCoord> fixations);

/// Pixel index (row-major, row 0 at the top) holding a lower-left-origin coordinate.
std::size_t pixel_index(const PixelCoord& p, int width, int height);

std::vector<PixelCoord> fixation_pixels(std::span<const SpherePoint> fixations, int width,
                                        int height);

}  // namespace salgail

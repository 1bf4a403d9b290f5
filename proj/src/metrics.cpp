#include "salgail/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "salgail/error.hpp"

namespace salgail {

namespace {

void require_same_shape(const SaliencyMap& a, const SaliencyMap& b, const char* who) {
  if (a.width != b.width || a.height != b.height || a.values.empty()) {
    throw InputError(std::string(who) + ": maps must be non-empty with equal dimensions");
  }
}

struct Moments {
  double mean = 0.0;
  double stddev = 0.0;
};

Moments moments(const std::vector<double>& v) {
  const double n = static_cast<double>(v.size());
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / n)};
}

}  // namespace

double cc(const SaliencyMap& pred, const SaliencyMap& gt) {
  require_same_shape(pred, gt, "cc");
  const Moments mp = moments(pred.values);
  const Moments mg = moments(gt.values);
  if (mp.stddev == 0.0 || mg.stddev == 0.0) throw NumericalError("cc: undefined for a constant map");
  double cov = 0.0;
  for (std::size_t i = 0; i < pred.values.size(); ++i) {
    cov += (pred.values[i] - mp.mean) * (gt.values[i] - mg.mean);
  }
  cov /= static_cast<double>(pred.values.size());
  return std::clamp(cov / (mp.stddev * mg.stddev), -1.0, 1.0);
}

double kl(const SaliencyMap& pred, const SaliencyMap& gt, double eps) {
  require_same_shape(pred, gt, "kl");
  const double sp = std::accumulate(pred.values.begin(), pred.values.end(), 0.0);
  const double sg = std::accumulate(gt.values.begin(), gt.values.end(), 0.0);
  if (!(sg > 0.0)) throw NumericalError("kl: ground-truth map has no mass");
  double total = 0.0;
  for (std::size_t i = 0; i < gt.values.size(); ++i) {
    const double g = gt.values[i] / sg;
    const double p = sp > 0.0 ? pred.values[i] / sp : 0.0;
    if (g > 0.0) total += g * std::log((g + eps) / (p + eps));
  }
  return total;
}

std::size_t pixel_index(const PixelCoord& p, int width, int height) {
  const int col = std::clamp(static_cast<int>(std::floor(p.x)), 0, width - 1);
  const int row = std::clamp(height - 1 - static_cast<int>(std::floor(p.y)), 0, height - 1);
  return static_cast<std::size_t>(row) * width + col;
}

std::vector<PixelCoord> fixation_pixels(std::span<const SpherePoint> fixations, int width,
                                        int height) {
  std::vector<PixelCoord> out;
  out.reserve(fixations.size());
  for (const auto& f : fixations) out.push_back(to_equirect(f, width, height));
  return out;
}

double nss(const SaliencyMap& pred, std::span<const PixelCoord> fixations) {
  if (fixations.empty()) throw InputError("nss: need at least one fixation");
  if (pred.values.empty()) throw InputError("nss: empty map");
  const Moments m = moments(pred.values);
  if (m.stddev == 0.0) throw NumericalError("nss: undefined for a constant prediction");
  double total = 0.0;
  for (const auto& f : fixations) {
    total += (pred.values[pixel_index(f, pred.width, pred.height)] - m.mean) / m.stddev;
  }
  return total / static_cast<double>(fixations.size());
}

double auc_judd(const SaliencyMap& pred, std::span<const PixelCoord> fixations) {
  if (fixations.empty()) throw InputError("auc: need at least one fixation");
  const std::size_t n = pred.values.size();
  std::vector<char> positive(n, 0);
  for (const auto& f : fixations) positive[pixel_index(f, pred.width, pred.height)] = 1;
  const double n_pos = static_cast<double>(std::count(positive.begin(), positive.end(), 1));
  const double n_neg = static_cast<double>(n) - n_pos;
  if (n_neg == 0.0) return 1.0;

  // Mann-Whitney statistic over value groups, which equals the trapezoidal
  // area under the ROC traced by every distinct threshold.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return pred.values[a] < pred.values[b]; });
  double neg_below = 0.0;
  double wins = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    double pos_here = 0.0;
    double neg_here = 0.0;
    while (j < n && pred.values[order[j]] == pred.values[order[i]]) {
      (positive[order[j]] ? pos_here : neg_here) += 1.0;
      ++j;
    }
    wins += pos_here * (neg_below + 0.5 * neg_here);
    neg_below += neg_here;
    i = j;
  }
  return wins / (n_pos * n_neg);
}

MetricReport evaluate(const SaliencyMap& pred, const SaliencyMap& gt,
                      std::span<const PixelCoord> fixations) {
  return {cc(pred, gt), kl(pred, gt), nss(pred, fixations), auc_judd(pred, fixations)};
}

}  // namespace salgail

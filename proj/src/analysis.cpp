#include "salgail/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "salgail/error.hpp"
#include "salgail/io.hpp"
#include "salgail/metrics.hpp"
#include "salgail/salmap.hpp"

namespace salgail {

namespace {

SpherePoint uniform_point(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_real_distribution<double> lon(-180.0, 180.0);
  return canonicalize({std::asin(u(rng)) * kRadToDeg, lon(rng)});
}

std::vector<SpherePoint> pooled(const std::vector<std::vector<SpherePoint>>& subjects,
                                std::span<const int> order, std::size_t from, std::size_t count) {
  std::vector<SpherePoint> out;
  for (std::size_t i = from; i < from + count; ++i) {
    const auto& s = subjects[order[i]];
    out.insert(out.end(), s.begin(), s.end());
  }
  return out;
}

bool non_constant(const SaliencyMap& m) {
  return std::any_of(m.values.begin(), m.values.end(), [&](double v) { return v != m.values.front(); });
}

}  // namespace

SplitHalfCurve split_half_cc(const FixationCorpus& corpus, const SplitHalfOptions& opt, std::mt19937_64& rng) {
  if (corpus.fixations.empty()) throw InputError("empty fixation corpus");
  if (opt.reps < 1) throw ConfigError("reps must be >= 1");
  std::size_t min_subjects = corpus.fixations.front().size();
  for (const auto& img : corpus.fixations) min_subjects = std::min(min_subjects, img.size());
  if (min_subjects < 2) throw InputError("split-half analysis needs at least 2 subjects per image");
  const int kmax = static_cast<int>(min_subjects / 2);

  SplitHalfCurve c;
  c.reps = opt.reps;
  for (int k = 1; k <= kmax; ++k) {
    double sum = 0.0;
    double control = 0.0;
    long count = 0;
    long control_count = 0;
    for (const auto& subjects : corpus.fixations) {
      std::vector<int> order(subjects.size());
      std::iota(order.begin(), order.end(), 0);
      for (int rep = 0; rep < opt.reps; ++rep) {
        std::shuffle(order.begin(), order.end(), rng);
        const auto a = pooled(subjects, order, 0, static_cast<std::size_t>(k));
        const auto b = pooled(subjects, order, order.size() / 2, static_cast<std::size_t>(k));
        std::vector<SpherePoint> rnd(b.size());
        for (auto& p : rnd) p = uniform_point(rng);
        const SaliencyMap ma = render_saliency(a, opt.width, opt.height);
        const SaliencyMap mb = render_saliency(b, opt.width, opt.height);
        const SaliencyMap mr = render_saliency(rnd, opt.width, opt.height);
        if (!non_constant(ma)) continue;
        if (non_constant(mb)) {
          sum += cc(ma, mb);
          ++count;
        }
        if (non_constant(mr)) {
          control += cc(ma, mr);
          ++control_count;
        }
      }
    }
    c.k.push_back(k);
    c.mean_cc.push_back(count ? sum / count : 0.0);
    c.control_cc.push_back(control_count ? control / control_count : 0.0);
  }
  return c;
}

FixationHistograms fixation_histograms(std::span<const SpherePoint> fixations) {
  FixationHistograms h;
  h.lon.assign(kHistogramBins, 0);
  h.lat.assign(kHistogramBins, 0);
  h.grid.assign(static_cast<std::size_t>(kHistogramBins) * kHistogramBins, 0);
  for (const auto& raw : fixations) {
    const SpherePoint p = canonicalize(raw);
    const int lon_bin = std::clamp(static_cast<int>(std::floor((p.lon + 180.0) / kLonBinDeg)), 0, kHistogramBins - 1);
    const int lat_bin = std::clamp(static_cast<int>(std::floor((p.lat + 90.0) / kLatBinDeg)), 0, kHistogramBins - 1);
    ++h.lon[lon_bin];
    ++h.lat[lat_bin];
    ++h.grid[static_cast<std::size_t>(lat_bin) * kHistogramBins + lon_bin];
    ++h.total;
  }
  return h;
}

FixationHistograms fixation_histograms(const FixationCorpus& corpus) {
  std::vector<SpherePoint> all;
  for (const auto& img : corpus.fixations) {
    for (const auto& s : img) all.insert(all.end(), s.begin(), s.end());
  }
  return fixation_histograms(all);
}

double lon_bin_center(int bin) { return -180.0 + (bin + 0.5) * kLonBinDeg; }
double lat_bin_center(int bin) { return -90.0 + (bin + 0.5) * kLatBinDeg; }

double quantile(std::vector<double> xs, double q) {
  if (xs.empty()) throw InputError("quantile of an empty sample");
  std::sort(xs.begin(), xs.end());
  const double pos = std::clamp(q, 0.0, 1.0) * static_cast<double>(xs.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, xs.size() - 1);
  return xs[lo] + (pos - static_cast<double>(lo)) * (xs[hi] - xs[lo]);
}

std::vector<MagnitudeStats> magnitude_distribution(std::span<const LabeledTrajectory> trajs, double bin_deg) {
  if (bin_deg <= 0.0) throw ConfigError("histogram bin width must be > 0");
  std::map<int, MagnitudeStats> by_subject;
  for (const auto& t : trajs) {
    if (t.samples.size() < 2) throw InputError("trajectory of subject " + std::to_string(t.subject_id) +
                                               " has fewer than 2 samples");
    auto& s = by_subject[t.subject_id];
    s.subject_id = t.subject_id;
    for (std::size_t i = 1; i < t.samples.size(); ++i) {
      s.magnitudes_deg.push_back(angular_distance_deg(t.samples[i - 1].sample.pos, t.samples[i].sample.pos));
    }
  }
  std::vector<MagnitudeStats> out;
  for (auto& [id, s] : by_subject) {
    s.bin_deg = bin_deg;
    const double mx = *std::max_element(s.magnitudes_deg.begin(), s.magnitudes_deg.end());
    s.histogram.assign(static_cast<std::size_t>(std::floor(mx / bin_deg)) + 1, 0);
    for (double m : s.magnitudes_deg) ++s.histogram[static_cast<std::size_t>(std::floor(m / bin_deg))];
    s.lo95 = quantile(s.magnitudes_deg, 0.025);
    s.hi95 = quantile(s.magnitudes_deg, 0.975);
    s.mean = std::accumulate(s.magnitudes_deg.begin(), s.magnitudes_deg.end(), 0.0) /
             static_cast<double>(s.magnitudes_deg.size());
    out.push_back(std::move(s));
  }
  return out;
}

double ks_distance(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw InputError("KS distance needs two nonempty samples");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::size_t i = 0;
  std::size_t j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= x) ++i;
    while (j < b.size() && b[j] <= x) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / a.size() - static_cast<double>(j) / b.size()));
  }
  return d;
}

namespace {

std::vector<double> ranks(std::span<const double> x) {
  std::vector<std::size_t> idx(x.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> r(x.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && x[idx[j + 1]] == x[idx[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
    i = j + 1;
  }
  return r;
}

}  // namespace

double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw InputError("spearman needs two samples of equal length >= 2");
  const auto rx = ranks(x);
  const auto ry = ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0;
  double sxx = 0.0;
  double syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) throw NumericalError("spearman undefined for a constant sample");
  return sxy / std::sqrt(sxx * syy);
}

void write_split_half_csv(const std::filesystem::path& path, const SplitHalfCurve& c,
                          const nlohmann::json& provenance) {
  std::vector<std::vector<std::string>> rows;
  for (std::size_t i = 0; i < c.k.size(); ++i) {
    rows.push_back({std::to_string(c.k[i]), format_number(c.mean_cc[i]), format_number(c.control_cc[i])});
  }
  write_csv(path, {"k", "mean_cc", "control_cc"}, rows, provenance);
}

void write_histogram_csv(const std::filesystem::path& path, std::span<const double> centers,
                         std::span<const long> counts, const nlohmann::json& provenance) {
  if (centers.size() != counts.size()) throw InputError("histogram centers and counts differ in length");
  std::vector<std::vector<std::string>> rows;
  for (std::size_t i = 0; i < centers.size(); ++i) rows.push_back({format_number(centers[i]), std::to_string(counts[i])});
  write_csv(path, {"bin_center", "count"}, rows, provenance);
}

}  // namespace salgail

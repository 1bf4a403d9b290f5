#pragma once

#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "salgail/sphere.hpp"
#include "salgail/trajectory.hpp"

namespace salgail {

/// Fixations grouped per image, then per subject.
struct FixationCorpus {
  std::vector<std::string> image_ids;
  std::vector<std::vector<std::vector<SpherePoint>>> fixations;  // [image][subject]
};

struct SplitHalfOptions {
  int reps = 20;
  int width = 360;
  int height = 180;
};

struct SplitHalfCurve {
  std::vector<int> k;               // subjects per group, 1..n/2
  std::vector<double> mean_cc;      // group A vs group B
  std::vector<double> control_cc;   // group A vs uniform-on-sphere fixations of the same count
  int reps = 0;
};

/// Consistency between two disjoint random groups of k subjects as k grows.
SplitHalfCurve split_half_cc(const FixationCorpus& corpus, const SplitHalfOptions& opt, std::mt19937_64& rng);

inline constexpr int kHistogramBins = 80;
inline constexpr double kLonBinDeg = 4.5;
inline constexpr double kLatBinDeg = 2.25;

struct FixationHistograms {
  std::vector<long> lon;   // kHistogramBins bins over [-180, 180)
  std::vector<long> lat;   // kHistogramBins bins over [-90, 90]; +90 falls in the last bin
  std::vector<long> grid;  // [lat_bin * kHistogramBins + lon_bin]
  long total = 0;
};

FixationHistograms fixation_histograms(std::span<const SpherePoint> fixations);
FixationHistograms fixation_histograms(const FixationCorpus& corpus);
double lon_bin_center(int bin);
double lat_bin_center(int bin);

struct MagnitudeStats {
  int subject_id = 0;
  std::vector<double> magnitudes_deg;  // every consecutive-sample step
  std::vector<long> histogram;         // bins of width bin_deg from 0
  double bin_deg = 0.5;
  double lo95 = 0.0;                   // central 95% interval
  double hi95 = 0.0;
  double mean = 0.0;
};

/// Per-subject step-magnitude distributions, in ascending subject order.
std::vector<MagnitudeStats> magnitude_distribution(std::span<const LabeledTrajectory> trajs, double bin_deg = 0.5);

/// Linear-interpolation quantile of an unsorted sample.
double quantile(std::vector<double> xs, double q);
/// Two-sample Kolmogorov-Smirnov statistic.
double ks_distance(std::vector<double> a, std::vector<double> b);
/// Rank correlation with average ranks for ties.
double spearman(std::span<const double> x, std::span<const double> y);

void write_split_half_csv(const std::filesystem::path& path, const SplitHalfCurve& c,
                          const nlohmann::json& provenance = nullptr);
void write_histogram_csv(const std::filesystem::path& path, std::span<const double> centers,
                         std::span<const long> counts, const nlohmann::json& provenance = nullptr);

}  // namespace salgail

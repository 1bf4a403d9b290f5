#pragma once

#include <random>
#include <vector>

#include "salgail/analysis.hpp"
#include "salgail/env.hpp"
#include "salgail/gail.hpp"
#include "salgail/image.hpp"
#include "salgail/trajectory.hpp"

// Synthetic data sources standing in for recorded head-movement datasets.
namespace salgail::synth {

SpherePoint uniform_on_sphere(std::mt19937_64& rng);
std::vector<SpherePoint> uniform_fixations(int count, std::mt19937_64& rng);
/// Wrapped-normal longitude, clamped-normal latitude around the front centre.
std::vector<SpherePoint> fcb_cloud(int count, double sigma_lon_deg, double sigma_lat_deg, std::mt19937_64& rng);

struct AttractorSpec {
  int attractors = 3;
  double spread_deg = 8.0;
  /// Probability that a fixation lands near an attractor instead of anywhere.
  double attract_prob = 0.7;
};

/// Every subject on an image draws fixations around the same attractors.
FixationCorpus shared_attractor_corpus(int images, int subjects, int fixations_per_subject,
                                       const AttractorSpec& spec, std::mt19937_64& rng);

std::vector<HmSample> constant_step_trajectory(int steps, double step_deg, double dt_ms, double bearing_deg,
                                               SpherePoint start = {});
/// Random walk with log-normal step sizes (median `median_deg`) and a
/// slowly turning bearing.
std::vector<HmSample> magnitude_trajectory(int steps, double median_deg, double log_sigma, double dt_ms,
                                           std::mt19937_64& rng);

struct LabeledTrace {
  std::vector<HmSample> samples;
  std::vector<SampleLabel> labels;  // ground truth, First for sample 0
};

/// Alternating dwell (0-10 deg/s) and sweep (25-60 deg/s) segments.
LabeledTrace ivt_trace(int segments, int min_len, int max_len, double dt_ms, std::mt19937_64& rng);

/// Smooth random texture: bilinear upsampling of a coarse random grid that
/// wraps in longitude.
Image noise_image(int width, int height, std::mt19937_64& rng, int cells = 16);
Image uniform_image(int width, int height, float value);

struct BlobImage {
  Image image;
  SpherePoint center;
};

/// A bright Gaussian blob on a dark noisy background, placed off the front
/// centre by 12-35 degrees within |lat| <= 20, |lon| <= 30.
BlobImage blob_image(int width, int height, std::mt19937_64& rng, double sigma_deg = 6.0);
/// Same, with a given centre.
Image blob_image_at(int width, int height, SpherePoint center, std::mt19937_64& rng, double sigma_deg = 6.0);

enum class ExpertKind { East, Stay, Blob, BlobLatFirst };

const char* to_string(ExpertKind k);

/// Scripted demo of env.steps steps from the front centre. Blob moves with
/// the action that lands closest to `target`; BlobLatFirst first matches the
/// target's latitude, then does the same.
Rollout scripted_expert(ExpertKind kind, const EnvConfig& env, SpherePoint target = {});

/// Stream n imitates East when n is even and Stay when n is odd.
TrainingSet east_stay_task(int images, int streams, const EnvConfig& env, int width, int height,
                           std::mt19937_64& rng);

struct BlobTask {
  TrainingSet set;
  std::vector<SpherePoint> centers;  // per image
};

/// Every stream's expert fixates the blob: even streams head straight for it,
/// odd streams take the latitude-first route.
BlobTask blob_task(int images, int streams, const EnvConfig& env, int width, int height, std::mt19937_64& rng);

}  // namespace salgail::synth

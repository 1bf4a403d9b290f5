#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "salgail/sphere.hpp"

namespace salgail {

inline constexpr double kIvtThresholdDegPerSec = 18.0;

struct HmSample {
  double t_ms = 0.0;
  SpherePoint pos;
};

enum class SampleLabel { First, Fixation, Saccade };

const char* to_string(SampleLabel label);
SampleLabel parse_label(const std::string& s);

struct LabeledSample {
  HmSample sample;
  SampleLabel label = SampleLabel::First;
  double velocity_degps = 0.0;
};

struct LabeledTrajectory {
  int subject_id = 0;
  std::string image_id;
  std::vector<LabeledSample> samples;
};

/// Angular head velocity in degrees per second between two samples. The
/// sphere radius cancels, so only the great-circle angle is used.
double velocity(const HmSample& prev, const HmSample& cur);

/// I-VT: a sample is a fixation iff its velocity is strictly below the
/// threshold. The first sample has no predecessor and is labelled First.
LabeledTrajectory ivt_classify(std::span<const HmSample> traj,
                               double threshold = kIvtThresholdDegPerSec);

std::vector<SpherePoint> fixations_of(const LabeledTrajectory& traj);

/// `<image_id>__s<subject_id>.csv`
struct TrajectoryName {
  std::string image_id;
  int subject_id = 0;
};
std::optional<TrajectoryName> parse_trajectory_filename(const std::filesystem::path& path);
std::string trajectory_filename(const std::string& image_id, int subject_id);

/// Raw log: header `t_ms,pitch_deg,yaw_deg`.
std::vector<HmSample> read_trajectory_csv(const std::filesystem::path& path);
void write_trajectory_csv(const std::filesystem::path& path, std::span<const HmSample> samples,
                          const nlohmann::json& provenance = nullptr);

/// Labelled log: raw columns plus `v_degps,label`.
void write_labeled_csv(const std::filesystem::path& path, const LabeledTrajectory& traj,
                       const nlohmann::json& provenance = nullptr);
LabeledTrajectory read_labeled_csv(const std::filesystem::path& path);

/// Fixation points from any supported per-subject file: labelled logs keep
/// Fixation rows, raw logs are classified with I-VT first, and plain
/// `lat,lon` lists are taken as-is.
std::vector<SpherePoint> read_fixations_file(const std::filesystem::path& path,
                                             double threshold = kIvtThresholdDegPerSec);

}  // namespace salgail

#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include <json.hpp>

#include "salgail/image.hpp"
#include "salgail/sphere.hpp"
#include "salgail/trajectory.hpp"

namespace salgail {

inline constexpr int kNumActions = 9;

/// 0 = stay; k in 1..8 moves towards direction (k-1)*45 degrees, where 0 is
/// +longitude (east) and 90 is +latitude (north).
class ActionId {
 public:
  constexpr ActionId() = default;
  explicit ActionId(int id);

  int id() const { return id_; }
  bool is_stay() const { return id_ == 0; }
  double direction_deg() const { return (id_ - 1) * 45.0; }
  friend bool operator==(ActionId, ActionId) = default;

 private:
  int id_ = 0;
};

inline const ActionId kStay{};

struct EnvConfig {
  double step_mag_deg = 4.0;
  int steps = 210;
  ViewportSpec viewport{90.0, 90.0, 84, 84, Interp::Bilinear};
  /// Keep colour observations; otherwise RGB inputs are reduced to luma.
  bool rgb = false;
};

void validate(const EnvConfig& cfg);
int observation_channels(const EquirectImage& image, const EnvConfig& cfg);

struct EnvState {
  SpherePoint pos;
  int t = 0;
  ImagePatch obs;
};

SpherePoint apply_action(SpherePoint pos, ActionId a, double step_mag_deg);
ImagePatch observe(const EquirectImage& image, SpherePoint pos, const EnvConfig& cfg);

/// Head starts at the front centre (0, 0).
EnvState reset(const EquirectImage& image, const EnvConfig& cfg);
/// Throws once t reaches cfg.steps.
EnvState step(const EquirectImage& image, const EnvState& state, ActionId a, const EnvConfig& cfg);

/// Mean great-circle step (degrees) over every consecutive sample pair.
double mean_step_magnitude(std::span<const LabeledTrajectory> trajs);

/// Action whose fixed-magnitude step lands closest to `to`.
ActionId nearest_action(SpherePoint from, SpherePoint to, double step_mag_deg);

struct Rollout {
  int stream = 0;
  /// positions[0] is the initial position, positions[t] the one after action t-1.
  std::vector<SpherePoint> positions;
  std::vector<ActionId> actions;
};

enum class FixationMode { AllSteps, StayOnly };

std::vector<SpherePoint> trajectory_to_fixations(const Rollout& rollout, FixationMode mode);

/// Dump format `stream,step,action,lat,lon`; the step-0 row holds the
/// initial position with action -1.
void write_rollouts_csv(const std::filesystem::path& path, std::span<const Rollout> rollouts,
                        const nlohmann::json& provenance = nullptr);
std::vector<Rollout> read_rollouts_csv(const std::filesystem::path& path);

/// Converts a recorded head trajectory into the fixed-step action sequence
/// that best follows it; the environment replays it from the first sample.
Rollout rollout_from_trajectory(std::span<const HmSample> samples, double step_mag_deg);

}  // namespace salgail

#include "salgail/env.hpp"

#include <limits>
#include <map>

#include "salgail/error.hpp"
#include "salgail/io.hpp"

namespace salgail {

ActionId::ActionId(int id) : id_(id) {
  if (id < 0 || id >= kNumActions) throw InputError("action id out of range: " + std::to_string(id));
}

void validate(const EnvConfig& cfg) {
  if (!(cfg.step_mag_deg > 0.0)) throw ConfigError("env: step magnitude must be positive");
  if (cfg.steps < 1) throw ConfigError("env: steps per trajectory must be >= 1");
  validate(cfg.viewport);
}

int observation_channels(const EquirectImage& image, const EnvConfig& cfg) {
  return (cfg.rgb && image.channels == 3) ? 3 : 1;
}

SpherePoint apply_action(SpherePoint pos, ActionId a, double step_mag_deg) {
  if (a.is_stay()) return pos;
  return move_along(pos, a.direction_deg(), step_mag_deg);
}

ImagePatch observe(const EquirectImage& image, SpherePoint pos, const EnvConfig& cfg) {
  ImagePatch patch = extract_viewport(image, pos, cfg.viewport);
  if (patch.channels != 1 && !(cfg.rgb && patch.channels == 3)) patch = to_grayscale(patch);
  return patch;
}

EnvState reset(const EquirectImage& image, const EnvConfig& cfg) {
  validate(cfg);
  EnvState s;
  s.pos = {0.0, 0.0};
  s.t = 0;
  s.obs = observe(image, s.pos, cfg);
  return s;
}

EnvState step(const EquirectImage& image, const EnvState& state, ActionId a, const EnvConfig& cfg) {
  if (state.t >= cfg.steps) throw InputError("env: step after the end of the episode");
  EnvState next;
  next.pos = apply_action(state.pos, a, cfg.step_mag_deg);
  next.t = state.t + 1;
  next.obs = a.is_stay() ? state.obs : observe(image, next.pos, cfg);
  return next;
}

double mean_step_magnitude(std::span<const LabeledTrajectory> trajs) {
  double total = 0.0;
  std::size_t count = 0;
  for (const auto& t : trajs) {
    for (std::size_t i = 1; i < t.samples.size(); ++i) {
      total += angular_distance_deg(t.samples[i - 1].sample.pos, t.samples[i].sample.pos);
      ++count;
    }
  }
  if (count == 0) throw InputError("mean_step_magnitude: no consecutive samples");
  return total / static_cast<double>(count);
}

ActionId nearest_action(SpherePoint from, SpherePoint to, double step_mag_deg) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (int k = 0; k < kNumActions; ++k) {
    const double d = spherical_delta(apply_action(from, ActionId(k), step_mag_deg), to);
    if (d < best_d) {
      best_d = d;
      best = k;
    }
  }
  return ActionId(best);
}

std::vector<SpherePoint> trajectory_to_fixations(const Rollout& rollout, FixationMode mode) {
  if (rollout.positions.empty()) throw InputError("trajectory_to_fixations: empty rollout");
  std::vector<SpherePoint> out;
  for (std::size_t t = 0; t < rollout.actions.size() && t + 1 < rollout.positions.size(); ++t) {
    if (mode == FixationMode::AllSteps || rollout.actions[t].is_stay()) {
      out.push_back(rollout.positions[t + 1]);
    }
  }
  return out;
}

void write_rollouts_csv(const std::filesystem::path& path, std::span<const Rollout> rollouts,
                        const nlohmann::json& provenance) {
  std::vector<std::vector<std::string>> rows;
  for (const auto& r : rollouts) {
    for (std::size_t t = 0; t < r.positions.size(); ++t) {
      const int action = t == 0 ? -1 : r.actions[t - 1].id();
      rows.push_back({std::to_string(r.stream), std::to_string(t), std::to_string(action),
                      format_number(r.positions[t].lat), format_number(r.positions[t].lon)});
    }
  }
  write_csv(path, {"stream", "step", "action", "lat", "lon"}, rows, provenance);
}

std::vector<Rollout> read_rollouts_csv(const std::filesystem::path& path) {
  const CsvTable t = read_csv(path);
  const int cs = t.require_column("stream");
  const int ct = t.require_column("step");
  const int ca = t.require_column("action");
  const int cl = t.require_column("lat");
  const int co = t.require_column("lon");
  std::map<int, Rollout> by_stream;
  for (const auto& row : t.rows) {
    const int stream = static_cast<int>(parse_integer(row[cs]));
    const long step = parse_integer(row[ct]);
    const int action = static_cast<int>(parse_integer(row[ca]));
    Rollout& r = by_stream[stream];
    r.stream = stream;
    if (step != static_cast<long>(r.positions.size())) {
      throw InputError(path.string() + ": rollout steps must be consecutive from 0");
    }
    r.positions.push_back({parse_number(row[cl]), parse_number(row[co])});
    if (step > 0) r.actions.emplace_back(action);
  }
  std::vector<Rollout> out;
  for (auto& [k, r] : by_stream) out.push_back(std::move(r));
  return out;
}

Rollout rollout_from_trajectory(std::span<const HmSample> samples, double step_mag_deg) {
  if (samples.empty()) throw InputError("rollout_from_trajectory: empty trajectory");
  Rollout r;
  SpherePoint pos = samples.front().pos;
  r.positions.push_back(pos);
  for (std::size_t i = 1; i < samples.size(); ++i) {
    const ActionId a = nearest_action(pos, samples[i].pos, step_mag_deg);
    pos = apply_action(pos, a, step_mag_deg);
    r.actions.push_back(a);
    r.positions.push_back(pos);
  }
  return r;
}

}  // namespace salgail

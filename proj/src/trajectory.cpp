#include "salgail/trajectory.hpp"

#include <regex>

#include "salgail/error.hpp"
#include "salgail/io.hpp"

namespace salgail {

const char* to_string(SampleLabel label) {
  switch (label) {
    case SampleLabel::First: return "first";
    case SampleLabel::Fixation: return "fixation";
    case SampleLabel::Saccade: return "saccade";
  }
  return "?";
}

SampleLabel parse_label(const std::string& s) {
  if (s == "first") return SampleLabel::First;
  if (s == "fixation") return SampleLabel::Fixation;
  if (s == "saccade") return SampleLabel::Saccade;
  throw InputError("unknown sample label '" + s + "'");
}

double velocity(const HmSample& prev, const HmSample& cur) {
  const double dt_ms = cur.t_ms - prev.t_ms;
  if (!(dt_ms > 0.0)) throw InputError("velocity: timestamps must be strictly increasing");
  return angular_distance_deg(prev.pos, cur.pos) / (dt_ms / 1000.0);
}

LabeledTrajectory ivt_classify(std::span<const HmSample> traj, double threshold) {
  if (traj.size() < 2) throw InputError("ivt_classify: need at least 2 samples");
  LabeledTrajectory out;
  out.samples.reserve(traj.size());
  out.samples.push_back({traj[0], SampleLabel::First, 0.0});
  for (std::size_t i = 1; i < traj.size(); ++i) {
    const double v = velocity(traj[i - 1], traj[i]);
    out.samples.push_back({traj[i], v < threshold ? SampleLabel::Fixation : SampleLabel::Saccade, v});
  }
  return out;
}

std::vector<SpherePoint> fixations_of(const LabeledTrajectory& traj) {
  std::vector<SpherePoint> out;
  for (const auto& s : traj.samples) {
    if (s.label == SampleLabel::Fixation) out.push_back(s.sample.pos);
  }
  return out;
}

std::optional<TrajectoryName> parse_trajectory_filename(const std::filesystem::path& path) {
  static const std::regex re(R"((.+)__s(\d+)\.csv)");
  std::smatch m;
  const std::string name = path.filename().string();
  if (!std::regex_match(name, m, re)) return std::nullopt;
  return TrajectoryName{m[1].str(), std::stoi(m[2].str())};
}

std::string trajectory_filename(const std::string& image_id, int subject_id) {
  return image_id + "__s" + std::to_string(subject_id) + ".csv";
}

std::vector<HmSample> read_trajectory_csv(const std::filesystem::path& path) {
  const CsvTable t = read_csv(path);
  const int ct = t.require_column("t_ms");
  const int cp = t.require_column("pitch_deg");
  const int cy = t.require_column("yaw_deg");
  std::vector<HmSample> out;
  out.reserve(t.rows.size());
  for (const auto& r : t.rows) {
    HmSample s{parse_number(r[ct]), canonicalize({parse_number(r[cp]), parse_number(r[cy])})};
    if (!out.empty() && !(s.t_ms > out.back().t_ms)) {
      throw InputError(path.string() + ": timestamps not strictly increasing");
    }
    out.push_back(s);
  }
  return out;
}

void write_trajectory_csv(const std::filesystem::path& path, std::span<const HmSample> samples,
                          const nlohmann::json& provenance) {
  std::vector<std::vector<std::string>> rows;
  rows.reserve(samples.size());
  for (const auto& s : samples) {
    rows.push_back({format_number(s.t_ms), format_number(s.pos.lat), format_number(s.pos.lon)});
  }
  write_csv(path, {"t_ms", "pitch_deg", "yaw_deg"}, rows, provenance);
}

void write_labeled_csv(const std::filesystem::path& path, const LabeledTrajectory& traj,
                       const nlohmann::json& provenance) {
  std::vector<std::vector<std::string>> rows;
  rows.reserve(traj.samples.size());
  for (const auto& s : traj.samples) {
    rows.push_back({format_number(s.sample.t_ms), format_number(s.sample.pos.lat),
                    format_number(s.sample.pos.lon), format_number(s.velocity_degps),
                    to_string(s.label)});
  }
  write_csv(path, {"t_ms", "pitch_deg", "yaw_deg", "v_degps", "label"}, rows, provenance);
}

LabeledTrajectory read_labeled_csv(const std::filesystem::path& path) {
  const CsvTable t = read_csv(path);
  const int ct = t.require_column("t_ms");
  const int cp = t.require_column("pitch_deg");
  const int cy = t.require_column("yaw_deg");
  const int cv = t.require_column("v_degps");
  const int cl = t.require_column("label");
  LabeledTrajectory out;
  if (auto name = parse_trajectory_filename(path)) {
    out.image_id = name->image_id;
    out.subject_id = name->subject_id;
  }
  for (const auto& r : t.rows) {
    out.samples.push_back({{parse_number(r[ct]), {parse_number(r[cp]), parse_number(r[cy])}},
                           parse_label(r[cl]),
                           parse_number(r[cv])});
  }
  return out;
}

std::vector<SpherePoint> read_fixations_file(const std::filesystem::path& path, double threshold) {
  const CsvTable t = read_csv(path);
  if (t.column("label") >= 0) return fixations_of(read_labeled_csv(path));
  if (t.column("t_ms") >= 0) {
    const auto samples = read_trajectory_csv(path);
    return fixations_of(ivt_classify(samples, threshold));
  }
  const int cl = t.require_column("lat");
  const int co = t.require_column("lon");
  std::vector<SpherePoint> out;
  for (const auto& r : t.rows) out.push_back(canonicalize({parse_number(r[cl]), parse_number(r[co])}));
  return out;
}

}  // namespace salgail

#include "salgail/synth.hpp"

#include <algorithm>
#include <cmath>

#include "salgail/error.hpp"

namespace salgail::synth {

SpherePoint uniform_on_sphere(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> z(-1.0, 1.0);
  std::uniform_real_distribution<double> lon(-180.0, 180.0);
  return canonicalize({std::asin(z(rng)) * kRadToDeg, lon(rng)});
}

std::vector<SpherePoint> uniform_fixations(int count, std::mt19937_64& rng) {
  std::vector<SpherePoint> out(static_cast<std::size_t>(std::max(count, 0)));
  for (auto& p : out) p = uniform_on_sphere(rng);
  return out;
}

std::vector<SpherePoint> fcb_cloud(int count, double sigma_lon_deg, double sigma_lat_deg, std::mt19937_64& rng) {
  std::normal_distribution<double> lon(0.0, sigma_lon_deg);
  std::normal_distribution<double> lat(0.0, sigma_lat_deg);
  std::vector<SpherePoint> out;
  out.reserve(static_cast<std::size_t>(std::max(count, 0)));
  for (int i = 0; i < count; ++i) out.push_back({std::clamp(lat(rng), -90.0, 90.0), wrap_longitude(lon(rng))});
  return out;
}

FixationCorpus shared_attractor_corpus(int images, int subjects, int fixations_per_subject,
                                       const AttractorSpec& spec, std::mt19937_64& rng) {
  if (images < 1 || subjects < 1 || fixations_per_subject < 1 || spec.attractors < 1) {
    throw ConfigError("corpus sizes must be positive");
  }
  FixationCorpus c;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_real_distribution<double> dir(0.0, 360.0);
  std::normal_distribution<double> spread(0.0, spec.spread_deg);
  std::uniform_real_distribution<double> lat(-60.0, 60.0);
  std::uniform_real_distribution<double> lon(-180.0, 180.0);
  for (int i = 0; i < images; ++i) {
    c.image_ids.push_back("attractor" + std::to_string(i));
    std::vector<SpherePoint> centers;
    for (int a = 0; a < spec.attractors; ++a) centers.push_back({lat(rng), lon(rng)});
    std::uniform_int_distribution<int> pick(0, spec.attractors - 1);
    std::vector<std::vector<SpherePoint>> per_subject;
    for (int s = 0; s < subjects; ++s) {
      std::vector<SpherePoint> fix;
      for (int f = 0; f < fixations_per_subject; ++f) {
        if (u(rng) < spec.attract_prob) {
          fix.push_back(move_along(centers[pick(rng)], dir(rng), std::abs(spread(rng))));
        } else {
          fix.push_back(uniform_on_sphere(rng));
        }
      }
      per_subject.push_back(std::move(fix));
    }
    c.fixations.push_back(std::move(per_subject));
  }
  return c;
}

std::vector<HmSample> constant_step_trajectory(int steps, double step_deg, double dt_ms, double bearing_deg,
                                               SpherePoint start) {
  std::vector<HmSample> out{{0.0, canonicalize(start)}};
  for (int i = 0; i < steps; ++i) {
    out.push_back({out.back().t_ms + dt_ms, move_along(out.back().pos, bearing_deg, step_deg)});
  }
  return out;
}

std::vector<HmSample> magnitude_trajectory(int steps, double median_deg, double log_sigma, double dt_ms,
                                           std::mt19937_64& rng) {
  std::lognormal_distribution<double> mag(std::log(median_deg), log_sigma);
  std::normal_distribution<double> turn(0.0, 30.0);
  std::uniform_real_distribution<double> start(0.0, 360.0);
  double bearing = start(rng);
  std::vector<HmSample> out{{0.0, {0.0, 0.0}}};
  for (int i = 0; i < steps; ++i) {
    bearing += turn(rng);
    // Turn back towards the equator to keep the walk away from the poles.
    const double step = mag(rng);
    SpherePoint next = move_along(out.back().pos, bearing, step);
    if (std::abs(next.lat) > 60.0) {
      bearing = -bearing;
      next = move_along(out.back().pos, bearing, step);
    }
    out.push_back({out.back().t_ms + dt_ms, next});
  }
  return out;
}

LabeledTrace ivt_trace(int segments, int min_len, int max_len, double dt_ms, std::mt19937_64& rng) {
  if (segments < 1 || min_len < 1 || max_len < min_len || dt_ms <= 0.0) throw ConfigError("invalid trace shape");
  std::uniform_int_distribution<int> len(min_len, max_len);
  std::uniform_real_distribution<double> dwell(0.0, 10.0);
  std::uniform_real_distribution<double> sweep(25.0, 60.0);
  std::uniform_real_distribution<double> dir(0.0, 360.0);
  LabeledTrace tr;
  tr.samples.push_back({0.0, {0.0, 0.0}});
  tr.labels.push_back(SampleLabel::First);
  for (int s = 0; s < segments; ++s) {
    const bool is_dwell = s % 2 == 0;
    const int n = len(rng);
    double bearing = dir(rng);
    for (int i = 0; i < n; ++i) {
      const double v = is_dwell ? dwell(rng) : sweep(rng);
      const SpherePoint prev = tr.samples.back().pos;
      SpherePoint next = move_along(prev, bearing, v * dt_ms / 1000.0);
      if (std::abs(next.lat) > 70.0) {
        bearing += 180.0;
        next = move_along(prev, bearing, v * dt_ms / 1000.0);
      }
      tr.samples.push_back({tr.samples.back().t_ms + dt_ms, next});
      tr.labels.push_back(is_dwell ? SampleLabel::Fixation : SampleLabel::Saccade);
    }
  }
  return tr;
}

Image noise_image(int width, int height, std::mt19937_64& rng, int cells) {
  if (width < 1 || height < 1 || cells < 1) throw ConfigError("invalid noise image size");
  const int gw = cells;
  const int gh = std::max(2, cells / 2);
  std::uniform_real_distribution<float> u(0.0F, 1.0F);
  Image grid(gw, gh);
  for (auto& v : grid.pixels) v = u(rng);
  Image out(width, height);
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) {
      const double gu = (c + 0.5) * gw / width - 0.5;
      const double gv = (r + 0.5) * gh / height - 0.5;
      out.at(r, c) = sample_bilinear(grid, gu, gv);
    }
  }
  return out;
}

Image uniform_image(int width, int height, float value) { return Image(width, height, 1, value); }

Image blob_image_at(int width, int height, SpherePoint center, std::mt19937_64& rng, double sigma_deg) {
  Image bg = noise_image(width, height, rng, 24);
  Image out(width, height);
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) {
      const SpherePoint p{90.0 - (r + 0.5) * 180.0 / height, -180.0 + (c + 0.5) * 360.0 / width};
      const double d = angular_distance_deg(p, center);
      const double g = std::exp(-d * d / (2.0 * sigma_deg * sigma_deg));
      out.at(r, c) = static_cast<float>(std::clamp(0.05 + 0.15 * bg.at(r, c) + 0.8 * g, 0.0, 1.0));
    }
  }
  return out;
}

BlobImage blob_image(int width, int height, std::mt19937_64& rng, double sigma_deg) {
  std::uniform_real_distribution<double> lat(-20.0, 20.0);
  std::uniform_real_distribution<double> lon(-30.0, 30.0);
  SpherePoint c;
  do {
    c = {lat(rng), lon(rng)};
  } while (angular_distance_deg(c, {0.0, 0.0}) < 12.0 || angular_distance_deg(c, {0.0, 0.0}) > 35.0);
  return {blob_image_at(width, height, c, rng, sigma_deg), c};
}

const char* to_string(ExpertKind k) {
  switch (k) {
    case ExpertKind::East: return "east";
    case ExpertKind::Stay: return "stay";
    case ExpertKind::Blob: return "blob";
    case ExpertKind::BlobLatFirst: return "blob-lat-first";
  }
  return "stay";
}

Rollout scripted_expert(ExpertKind kind, const EnvConfig& env, SpherePoint target) {
  Rollout r;
  r.positions.push_back({0.0, 0.0});
  for (int t = 0; t < env.steps; ++t) {
    const SpherePoint cur = r.positions.back();
    ActionId a = kStay;
    if (kind == ExpertKind::East) a = ActionId(1);
    if (kind == ExpertKind::Blob) a = nearest_action(cur, target, env.step_mag_deg);
    if (kind == ExpertKind::BlobLatFirst) {
      const bool lat_done = std::abs(cur.lat - target.lat) <= env.step_mag_deg / 2;
      a = nearest_action(cur, lat_done ? target : SpherePoint{target.lat, cur.lon}, env.step_mag_deg);
    }
    r.actions.push_back(a);
    r.positions.push_back(apply_action(cur, a, env.step_mag_deg));
  }
  return r;
}

TrainingSet east_stay_task(int images, int streams, const EnvConfig& env, int width, int height,
                           std::mt19937_64& rng) {
  TrainingSet set;
  set.demos.resize(static_cast<std::size_t>(streams));
  for (int i = 0; i < images; ++i) {
    set.images.push_back(noise_image(width, height, rng));
    set.image_ids.push_back("noise" + std::to_string(i));
    for (int n = 0; n < streams; ++n) {
      Demo d{static_cast<std::size_t>(i), scripted_expert(n % 2 == 0 ? ExpertKind::East : ExpertKind::Stay, env)};
      d.rollout.stream = n;
      set.demos[n].push_back(std::move(d));
    }
  }
  return set;
}

BlobTask blob_task(int images, int streams, const EnvConfig& env, int width, int height, std::mt19937_64& rng) {
  BlobTask task;
  task.set.demos.resize(static_cast<std::size_t>(streams));
  for (int i = 0; i < images; ++i) {
    auto b = blob_image(width, height, rng);
    task.set.images.push_back(std::move(b.image));
    task.set.image_ids.push_back("blob" + std::to_string(i));
    task.centers.push_back(b.center);
    for (int n = 0; n < streams; ++n) {
      const ExpertKind kind = n % 2 == 0 ? ExpertKind::Blob : ExpertKind::BlobLatFirst;
      Demo d{static_cast<std::size_t>(i), scripted_expert(kind, env, b.center)};
      d.rollout.stream = n;
      task.set.demos[n].push_back(std::move(d));
    }
  }
  return task;
}

}  // namespace salgail::synth

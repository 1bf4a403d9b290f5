#include "salgail/sphere.hpp"

#include <algorithm>
#include <cmath>

#include "salgail/error.hpp"

namespace salgail {

double wrap_longitude(double lon) {
  double w = lon - 360.0 * std::floor((lon + 180.0) / 360.0);
  if (w >= 180.0) w -= 360.0;
  if (w < -180.0) w += 360.0;
  return w;
}

SpherePoint canonicalize(SpherePoint p) {
  // Bring latitude into [-180, 180) first, then reflect across the poles.
  double lat = p.lat - 360.0 * std::floor((p.lat + 180.0) / 360.0);
  double lon = p.lon;
  if (lat > 90.0) {
    lat = 180.0 - lat;
    lon += 180.0;
  } else if (lat < -90.0) {
    lat = -180.0 - lat;
    lon += 180.0;
  }
  return {std::clamp(lat, -90.0, 90.0), wrap_longitude(lon)};
}

double spherical_delta(SpherePoint a, SpherePoint b) {
  const double lat1 = a.lat * kDegToRad;
  const double lat2 = b.lat * kDegToRad;
  const double s_lat = std::sin((lat2 - lat1) / 2.0);
  const double s_lon = std::sin((b.lon - a.lon) * kDegToRad / 2.0);
  const double h = s_lat * s_lat + std::cos(lat1) * std::cos(lat2) * s_lon * s_lon;
  return 2.0 * std::asin(std::sqrt(std::clamp(h, 0.0, 1.0)));
}

double orthodromic_distance(SpherePoint a, SpherePoint b, double radius) {
  if (!(radius > 0.0)) throw InputError("orthodromic_distance: radius must be positive");
  return radius * spherical_delta(a, b);
}

PixelCoord to_equirect(SpherePoint p, int width, int height) {
  return {(p.lon / 360.0 + 0.5) * width, (p.lat / 180.0 + 0.5) * height};
}

SpherePoint from_equirect(PixelCoord px, int width, int height) {
  if (width < 1 || height < 1) throw InputError("from_equirect: empty image size");
  if (!(px.x >= 0.0 && px.x <= width && px.y >= 0.0 && px.y <= height)) {
    throw InputError("from_equirect: pixel out of bounds");
  }
  return {(px.y / height - 0.5) * 180.0, (px.x / width - 0.5) * 360.0};
}

Vec3 to_unit_vector(SpherePoint p) {
  const double lat = p.lat * kDegToRad;
  const double lon = p.lon * kDegToRad;
  return {std::cos(lat) * std::cos(lon), std::cos(lat) * std::sin(lon), std::sin(lat)};
}

SpherePoint from_unit_vector(Vec3 v) {
  const double n = std::sqrt(v.x * v.x + v.y * v.y + v.z * v.z);
  const double lat = std::asin(std::clamp(v.z / n, -1.0, 1.0)) * kRadToDeg;
  const double lon = std::atan2(v.y, v.x) * kRadToDeg;
  return {lat, wrap_longitude(lon)};
}

void tangent_frame(SpherePoint p, Vec3& east, Vec3& north) {
  const double lat = p.lat * kDegToRad;
  const double lon = p.lon * kDegToRad;
  east = {-std::sin(lon), std::cos(lon), 0.0};
  north = {-std::sin(lat) * std::cos(lon), -std::sin(lat) * std::sin(lon), std::cos(lat)};
}

SpherePoint move_along(SpherePoint p, double direction_deg, double arc_deg) {
  Vec3 east;
  Vec3 north;
  tangent_frame(p, east, north);
  const Vec3 o = to_unit_vector(p);
  const double dir = direction_deg * kDegToRad;
  const double arc = arc_deg * kDegToRad;
  const double ce = std::cos(dir);
  const double cn = std::sin(dir);
  const double ca = std::cos(arc);
  const double sa = std::sin(arc);
  const Vec3 t{ce * east.x + cn * north.x, ce * east.y + cn * north.y, ce * east.z + cn * north.z};
  return canonicalize(
      from_unit_vector({ca * o.x + sa * t.x, ca * o.y + sa * t.y, ca * o.z + sa * t.z}));
}

void validate(const ViewportSpec& spec) {
  if (!(spec.fov_h_deg > 0.0 && spec.fov_h_deg < 180.0) ||
      !(spec.fov_v_deg > 0.0 && spec.fov_v_deg < 180.0)) {
    throw ConfigError("viewport: field of view must lie in (0, 180) degrees");
  }
  if (spec.out_w < 1 || spec.out_h < 1) throw ConfigError("viewport: output size must be >= 1");
}

void sphere_to_sample_coords(SpherePoint p, int width, int height, double& u, double& v) {
  const PixelCoord px = to_equirect(p, width, height);
  u = px.x - 0.5;
  v = (height - px.y) - 0.5;
}

ImagePatch extract_viewport(const EquirectImage& image, SpherePoint center,
                            const ViewportSpec& spec) {
  validate(spec);
  if (image.empty()) throw InputError("extract_viewport: empty image");

  Vec3 east;
  Vec3 north;
  tangent_frame(center, east, north);
  const Vec3 f = to_unit_vector(center);
  const double th = std::tan(spec.fov_h_deg * kDegToRad / 2.0);
  const double tv = std::tan(spec.fov_v_deg * kDegToRad / 2.0);

  ImagePatch out(spec.out_w, spec.out_h, image.channels);
  for (int row = 0; row < spec.out_h; ++row) {
    const double py = (1.0 - 2.0 * (row + 0.5) / spec.out_h) * tv;
    for (int col = 0; col < spec.out_w; ++col) {
      const double px = (2.0 * (col + 0.5) / spec.out_w - 1.0) * th;
      const Vec3 d{f.x + px * east.x + py * north.x, f.y + px * east.y + py * north.y,
                   f.z + px * east.z + py * north.z};
      const SpherePoint s = from_unit_vector(d);
      double u = 0.0;
      double v = 0.0;
      sphere_to_sample_coords(s, image.width, image.height, u, v);
      for (int ch = 0; ch < image.channels; ++ch) {
        out.at(row, col, ch) = spec.interp == Interp::Bilinear
                                   ? sample_bilinear(image, u, v, ch)
                                   : sample_nearest(image, u, v, ch);
      }
    }
  }
  return out;
}

}  // namespace salgail
